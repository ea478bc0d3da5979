mod common;

use cfuqc_core::agents::*;
use cfuqc_core::synthgen::ArtifactKind;
use cfuqc_core::{Error, PlateImage};
use common::*;

#[test]
fn pristine_plates_pass_screening() {
    for seed in 0..10 {
        let (img, _) = clean(seed);
        let v = screen("p", &img, &ScreenerConfig::default()).unwrap();
        assert_eq!(v.quality, Quality::Valid, "seed {seed}");
        assert_eq!(v.count, 0);
        assert_eq!(v.reason, REASON_CLEAR);
    }
}

#[test]
fn each_defect_is_named() {
    let cases = [
        (ArtifactKind::Glare, "glare"),
        (ArtifactKind::Blur, "blur"),
        (ArtifactKind::Condensation, "condensation"),
        (ArtifactKind::Contamination, "low-contrast"),
    ];
    for (kind, reason) in cases {
        for seed in 0..4 {
            let (img, gt) = with_artifact(seed, kind, 0.8);
            assert!(!gt.valid);
            let v = screen("p", &img, &ScreenerConfig::default()).unwrap();
            assert_eq!((v.quality, v.reason.as_str()), (Quality::Invalid, reason), "{kind:?} seed {seed}");
            v.validate().unwrap();
        }
    }
}

#[test]
fn saturated_frame_is_glare() {
    let v = screen("p", &PlateImage::new(128, 128, 255), &ScreenerConfig::default()).unwrap();
    assert_eq!((v.quality, v.reason.as_str()), (Quality::Invalid, "glare"));
}

#[test]
fn more_artifact_never_rescues_a_plate() {
    let cfg = ScreenerConfig::default();
    for kind in ArtifactKind::DEFECTS {
        for seed in 0..3 {
            let mut failed = false;
            for step in 0..=10 {
                let (img, _) = with_artifact(seed, kind, step as f64 / 10.0);
                let invalid = screen("p", &img, &cfg).unwrap().quality == Quality::Invalid;
                assert!(!(failed && !invalid), "{kind:?} seed {seed} flipped back at {step}");
                failed |= invalid;
            }
            assert!(failed, "{kind:?} seed {seed} never failed");
        }
    }
}

#[test]
fn empty_plate_counts_zero() {
    let (img, _) = colonies_at(3, &[]);
    let (a, boxes) = count_primary(&img, &clearance("e"), &CounterAConfig::default(), None).unwrap();
    let b = count_secondary(&img, &clearance("e"), &CounterBConfig::default()).unwrap();
    assert_eq!((a.count, b.count), (0, 0));
    assert!(boxes.is_empty());
}

#[test]
fn nine_separated_colonies() {
    let (img, gt) = nine_grid(5);
    let (a, boxes) = count_primary(&img, &clearance("n"), &CounterAConfig::default(), None).unwrap();
    let b = count_secondary(&img, &clearance("n"), &CounterBConfig::default()).unwrap();
    assert_eq!((a.count, b.count), (9, 9));
    assert_eq!(b.reason, "dt-peaks h=3");
    for bx in &boxes {
        let (cx, cy) = bx.center();
        assert!((cx - 256.0).hypot(cy - 256.0) < 230.0);
    }
    assert_eq!(gt.true_count, 9);
}

#[test]
fn fused_pair_is_split() {
    for seed in 0..4 {
        let (img, gt) = colonies_at(seed, &[(249.0, 256.0, 10.0), (263.0, 256.0, 10.0)]);
        let (a, boxes) = count_primary(&img, &clearance("f"), &CounterAConfig::default(), None).unwrap();
        assert_eq!(a.count, gt.true_count, "seed {seed}");
        assert_eq!(boxes.len(), 2);
    }
}

#[test]
fn counters_refuse_unscreened_or_invalid_plates() {
    let (img, _) = clean(1);
    let mut not_screener = clearance("x");
    not_screener.agent = AgentKind::CounterB;
    let mut invalid = clearance("x");
    invalid.quality = Quality::Invalid;
    invalid.reason = "glare".into();
    for bad in [not_screener, invalid] {
        let r = count_primary(&img, &bad, &CounterAConfig::default(), None);
        assert!(matches!(r, Err(Error::ContractViolation(_))));
        let r = count_secondary(&img, &bad, &CounterBConfig::default());
        assert!(matches!(r, Err(Error::ContractViolation(_))));
    }
}

#[test]
fn agents_are_stateless() {
    let (img, _) = clean(9);
    let s1 = screen("p", &img, &ScreenerConfig::default()).unwrap();
    let s2 = screen("p", &img, &ScreenerConfig::default()).unwrap();
    assert!(s1.same_outcome(&s2));
    let (a1, b1) = count_primary(&img, &s1, &CounterAConfig::default(), None).unwrap();
    let (a2, b2) = count_primary(&img, &s1, &CounterAConfig::default(), None).unwrap();
    assert!(a1.same_outcome(&a2));
    assert_eq!(b1, b2);
    let c1 = count_secondary(&img, &s1, &CounterBConfig::default()).unwrap();
    let c2 = count_secondary(&img, &s1, &CounterBConfig::default()).unwrap();
    assert!(c1.same_outcome(&c2));
}

#[test]
fn blurred_but_valid_plate_still_yields_verdicts() {
    for seed in 0..3 {
        let (img, gt) = with_artifact(seed, ArtifactKind::Blur, 0.25);
        assert!(gt.valid);
        let (a, _) = count_primary(&img, &clearance("b"), &CounterAConfig::default(), None).unwrap();
        let b = count_secondary(&img, &clearance("b"), &CounterBConfig::default()).unwrap();
        a.validate().unwrap();
        b.validate().unwrap();
        assert_eq!((a.agent, b.agent), (AgentKind::CounterA, AgentKind::CounterB));
    }
}

#[test]
fn verdict_json_shape() {
    let (img, _) = clean(2);
    let v = screen("plate-7", &img, &ScreenerConfig::default()).unwrap();
    let json = serde_json::to_value(&v).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["agent", "count", "elapsed_ms", "plate_id", "quality", "reason"]);
    assert_eq!(json["quality"], "valid");
    assert_eq!(json["agent"], "screener");
}
