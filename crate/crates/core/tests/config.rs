use cfuqc_core::config::PipelineConfig;

#[test]
fn documented_example_is_the_default() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/pipeline.example.toml");
    let cfg = PipelineConfig::load(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn round_trip_and_partial_files() {
    let cfg = PipelineConfig::default();
    assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let partial = PipelineConfig::from_toml("delta = 0.1\n[counter_a]\nthreshold = 150\n").unwrap();
    assert_eq!((partial.delta, partial.counter_a.threshold, partial.counter_a.min_area), (0.1, 150, 12));
    assert!(PipelineConfig::from_toml("delta = -0.5").is_err());
    assert!(PipelineConfig::from_toml("latency_budget_ms = 0").is_err());
}
