//! Batch generation to disk: PNG per plate, JSON sidecar per plate, one manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_plate, stream, ArtifactKind, ArtifactSpec, GroundTruth, SceneSpec};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub plate_id: String,
    pub spec: SceneSpec,
}

/// Per-plate JSON sidecar: the scene that produced the image and its truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub plate_id: String,
    pub spec: SceneSpec,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub plate_id: String,
    /// Paths relative to the manifest's directory.
    pub image: String,
    pub ground_truth: String,
    pub valid: bool,
    pub true_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn invalid_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.valid).count()
    }

    pub fn resolve(&self, manifest_path: &Path, relative: &str) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(relative)
    }
}

/// Writes every plate of `entries` into `out_dir` and returns the manifest.
///
/// An empty batch writes only an empty manifest.
pub fn generate_batch(entries: &[BatchEntry], out_dir: &Path) -> Result<Manifest> {
    let mut seen = BTreeSet::new();
    for e in entries {
        if e.plate_id.is_empty() || e.plate_id.contains(['/', '\\']) {
            return Err(Error::validation("plate_id", format!("unusable id {:?}", e.plate_id)));
        }
        if !seen.insert(e.plate_id.as_str()) {
            return Err(Error::Conflict(format!("duplicate plate_id {}", e.plate_id)));
        }
        e.spec.validate()?;
    }
    fs::create_dir_all(out_dir)?;

    let written: Vec<ManifestEntry> = entries
        .par_iter()
        .map(|e| -> Result<ManifestEntry> {
            let (image, truth) = generate_plate(&e.spec)?;
            let image_name = format!("{}.png", e.plate_id);
            let truth_name = format!("{}.json", e.plate_id);
            fs::write(out_dir.join(&image_name), image.to_png()?)?;
            let sidecar = Sidecar {
                plate_id: e.plate_id.clone(),
                spec: e.spec.clone(),
                ground_truth: truth.clone(),
            };
            fs::write(out_dir.join(&truth_name), serde_json::to_vec_pretty(&sidecar)?)?;
            Ok(ManifestEntry {
                plate_id: e.plate_id.clone(),
                image: image_name,
                ground_truth: truth_name,
                valid: truth.valid,
                true_count: truth.true_count,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        entries: written,
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Knobs for [`plan_batch`].
#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub seed: u64,
    pub count: usize,
    /// Exactly `round(count * invalid_frac)` plates get a disqualifying artifact.
    pub invalid_frac: f64,
    pub base: SceneSpec,
    /// Intensity range for disqualifying artifacts.
    pub invalid_intensity: [f64; 2],
}

impl BatchPlan {
    pub fn new(seed: u64, count: usize, invalid_frac: f64) -> Self {
        BatchPlan {
            seed,
            count,
            invalid_frac,
            base: SceneSpec::default(),
            invalid_intensity: [0.45, 1.0],
        }
    }
}

/// Derives per-plate scene specs. Valid plates are artifact-free.
pub fn plan_batch(plan: &BatchPlan) -> Result<Vec<BatchEntry>> {
    if !(0.0..=1.0).contains(&plan.invalid_frac) {
        return Err(Error::validation("invalid_frac", "must lie in [0, 1]"));
    }
    let [lo, hi] = plan.invalid_intensity;
    if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
        return Err(Error::validation("invalid_intensity", "need 0 <= lo <= hi <= 1"));
    }
    let mut rng = stream(plan.seed, 7);
    let n_invalid = (plan.count as f64 * plan.invalid_frac).round() as usize;
    let mut order: Vec<usize> = (0..plan.count).collect();
    order.shuffle(&mut rng);
    let mut invalid = vec![false; plan.count];
    for &i in &order[..n_invalid] {
        invalid[i] = true;
    }

    let width = (plan.count.max(1) as f64).log10().floor() as usize + 1;
    let mut entries = Vec::with_capacity(plan.count);
    for (i, &bad) in invalid.iter().enumerate() {
        let mut spec = plan.base.clone();
        spec.seed = rng.random();
        spec.artifact = if bad {
            let kind = ArtifactKind::DEFECTS[rng.random_range(0..4)];
            let floor = kind.invalid_at().unwrap_or(0.0).max(lo);
            let intensity = floor + (hi.max(floor) - floor) * rng.random::<f64>();
            ArtifactSpec::new(kind, intensity)
        } else {
            ArtifactSpec::NONE
        };
        entries.push(BatchEntry {
            plate_id: format!("plate-{:0width$}", i + 1, width = width.max(4)),
            spec,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SceneSpec {
        SceneSpec {
            seed,
            image_side: 128,
            plate_radius: 60.0,
            colony_count_mean: 3.0,
            colony_radius_range: [5.0, 10.0],
            ..SceneSpec::default()
        }
    }

    #[test]
    fn three_specs_three_entries() {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<_> = (0..3)
            .map(|i| BatchEntry {
                plate_id: format!("p{i}"),
                spec: small(i),
            })
            .collect();
        let m = generate_batch(&entries, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 3);
        for e in &m.entries {
            assert!(dir.path().join(&e.image).exists());
            assert!(dir.path().join(&e.ground_truth).exists());
        }
        let reread = Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(reread, m);
    }

    #[test]
    fn glare_plate_is_the_only_invalid_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut glare = small(9);
        glare.artifact = ArtifactSpec::new(ArtifactKind::Glare, 0.8);
        let entries = vec![
            BatchEntry { plate_id: "a".into(), spec: small(1) },
            BatchEntry { plate_id: "b".into(), spec: small(2) },
            BatchEntry { plate_id: "c".into(), spec: glare },
        ];
        let m = generate_batch(&entries, dir.path()).unwrap();
        assert_eq!(m.invalid_count(), 1);
        assert!(!m.entries[2].valid);
    }

    #[test]
    fn empty_batch_writes_no_plate_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_batch(&[], dir.path()).unwrap();
        assert!(m.entries.is_empty());
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec![MANIFEST_FILE.to_string()]);
    }

    #[test]
    fn duplicate_ids_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            BatchEntry { plate_id: "x".into(), spec: small(1) },
            BatchEntry { plate_id: "x".into(), spec: small(2) },
        ];
        assert!(matches!(generate_batch(&entries, dir.path()), Err(Error::Conflict(_))));
    }

    #[test]
    fn unwritable_destination_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let entries = vec![BatchEntry { plate_id: "x".into(), spec: small(1) }];
        assert!(matches!(generate_batch(&entries, &blocker.join("sub")), Err(Error::Io(_))));
    }

    #[test]
    fn plan_hits_the_exact_invalid_count() {
        let entries = plan_batch(&BatchPlan::new(1, 50, 0.2)).unwrap();
        assert_eq!(entries.len(), 50);
        let bad = entries.iter().filter(|e| !e.spec.artifact.is_valid_plate()).count();
        assert_eq!(bad, 10);
        assert_eq!(entries, plan_batch(&BatchPlan::new(1, 50, 0.2)).unwrap());
    }
}
