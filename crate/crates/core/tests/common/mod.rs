#![allow(dead_code)]

use cfuqc_core::agents::{AgentKind, AgentVerdict, Quality};
use cfuqc_core::config::PipelineConfig;
use cfuqc_core::orchestrator::{Orchestrator, Submission};
use cfuqc_core::synthgen::{generate_plate, render_plate, ArtifactKind, ArtifactSpec, Colony, GroundTruth, SceneSpec};
use cfuqc_core::{ColonyClass, PlateImage};

pub fn clean(seed: u64) -> (PlateImage, GroundTruth) {
    generate_plate(&SceneSpec::with_seed(seed)).unwrap()
}

pub fn with_artifact(seed: u64, kind: ArtifactKind, intensity: f64) -> (PlateImage, GroundTruth) {
    let spec = SceneSpec {
        artifact: ArtifactSpec::new(kind, intensity),
        ..SceneSpec::with_seed(seed)
    };
    generate_plate(&spec).unwrap()
}

/// Bacteria at the given centers and radius on an otherwise empty dish.
pub fn colonies_at(seed: u64, discs: &[(f64, f64, f64)]) -> (PlateImage, GroundTruth) {
    let spec = SceneSpec {
        overlap_allowed: true,
        ..SceneSpec::with_seed(seed)
    };
    let cols = discs
        .iter()
        .map(|&(x, y, r)| Colony {
            center: (x, y),
            radius: r,
            class: ColonyClass::Bacteria,
        })
        .collect();
    render_plate(&spec, cols).unwrap()
}

/// Nine well-separated colonies on a 3x3 grid.
pub fn nine_grid(seed: u64) -> (PlateImage, GroundTruth) {
    let mut discs = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            discs.push((176.0 + 80.0 * i as f64, 176.0 + 80.0 * j as f64, 12.0));
        }
    }
    colonies_at(seed, &discs)
}

pub fn png(img: &PlateImage) -> Vec<u8> {
    img.to_png().unwrap()
}

pub fn clearance(plate_id: &str) -> AgentVerdict {
    AgentVerdict {
        plate_id: plate_id.into(),
        quality: Quality::Valid,
        count: 0,
        reason: "clear".into(),
        agent: AgentKind::Screener,
        elapsed_ms: 0.0,
    }
}

pub fn orchestrator(dir: &std::path::Path) -> Orchestrator {
    Orchestrator::open(dir, PipelineConfig::default()).unwrap()
}

pub fn submit(o: &Orchestrator, img: &PlateImage, gt: Option<GroundTruth>, run: &str) -> String {
    let sub = Submission {
        run_id: Some(run.into()),
        label: None,
        ground_truth: gt,
    };
    o.submit_plate(&png(img), sub).unwrap().0.plate_id
}
