//! Deterministic synthetic Petri-dish plates with exact ground truth.
//!
//! Every random draw comes from ChaCha8 (`rand_chacha`) seeded with
//! `SceneSpec::seed`. Independent streams are used for colony placement,
//! colony texture, sensor noise and the artifact so that changing one
//! aspect of a scene does not reshuffle the others. Gaussian variates are
//! Irwin-Hall sums of uniforms and Poisson counts use Knuth's product
//! method, which keeps the draw sequence free of platform math routines.

mod artifacts;
mod batch;

pub use batch::{generate_batch, plan_batch, BatchEntry, BatchPlan, Manifest, ManifestEntry, Sidecar, MANIFEST_FILE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classes::ColonyClass;
use crate::error::{Error, Result};
use crate::raster::PlateImage;

/// Intensity outside the dish.
pub const OUTSIDE_LEVEL: f32 = 24.0;
/// Clean agar intensity.
pub const AGAR_LEVEL: f32 = 200.0;
/// Sensor noise standard deviation, applied everywhere.
pub const NOISE_SIGMA: f32 = 2.5;
/// Poisson draws are truncated here.
pub const MAX_COLONIES: u32 = 200;
/// Colonies stay this far inside the dish wall.
pub const RIM_MARGIN: f64 = 6.0;
/// Extra clearance between colony edges when overlap is off.
pub const MIN_EDGE_GAP: f64 = 3.0;

const PLACEMENT_ATTEMPTS: usize = 400;

const STREAM_PLACEMENT: u64 = 0;
const STREAM_TEXTURE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_ARTIFACT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    None,
    Glare,
    Blur,
    Condensation,
    Contamination,
}

impl ArtifactKind {
    pub const DEFECTS: [ArtifactKind; 4] = [
        ArtifactKind::Glare,
        ArtifactKind::Blur,
        ArtifactKind::Condensation,
        ArtifactKind::Contamination,
    ];

    /// Intensity at or above which a plate is labeled invalid.
    pub fn invalid_at(self) -> Option<f64> {
        match self {
            ArtifactKind::None => None,
            ArtifactKind::Glare | ArtifactKind::Blur | ArtifactKind::Condensation => Some(0.3),
            ArtifactKind::Contamination => Some(0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    pub kind: ArtifactKind,
    pub intensity: f64,
}

impl ArtifactSpec {
    pub const NONE: ArtifactSpec = ArtifactSpec {
        kind: ArtifactKind::None,
        intensity: 0.0,
    };

    pub fn new(kind: ArtifactKind, intensity: f64) -> Self {
        ArtifactSpec { kind, intensity }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::validation("artifact.intensity", "must lie in [0, 1]"));
        }
        if self.kind == ArtifactKind::None && self.intensity != 0.0 {
            return Err(Error::validation(
                "artifact.intensity",
                "must be 0 when kind is none",
            ));
        }
        Ok(())
    }

    /// Validity label. Depends only on `(kind, intensity)`.
    pub fn is_valid_plate(&self) -> bool {
        match self.kind.invalid_at() {
            None => true,
            Some(cut) => self.intensity < cut,
        }
    }
}

impl Default for ArtifactSpec {
    fn default() -> Self {
        ArtifactSpec::NONE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub image_side: u32,
    pub plate_radius: f64,
    /// Poisson mean of the colony count.
    pub colony_count_mean: f64,
    pub colony_radius_range: [f64; 2],
    /// Probability that a colony is mold rather than bacteria.
    pub class_mix: f64,
    pub overlap_allowed: bool,
    pub artifact: ArtifactSpec,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            image_side: 512,
            plate_radius: 230.0,
            colony_count_mean: 12.0,
            colony_radius_range: [5.0, 30.0],
            class_mix: 0.3,
            overlap_allowed: false,
            artifact: ArtifactSpec::NONE,
        }
    }
}

impl SceneSpec {
    pub fn with_seed(seed: u64) -> Self {
        SceneSpec {
            seed,
            ..SceneSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_side < crate::raster::MIN_SIDE {
            return Err(Error::validation(
                "image_side",
                format!("must be at least {}", crate::raster::MIN_SIDE),
            ));
        }
        let side = self.image_side as f64;
        let [lo, hi] = self.colony_radius_range;
        if !(lo.is_finite() && hi.is_finite()) || lo < 2.0 || hi > side / 8.0 {
            return Err(Error::validation(
                "colony_radius_range",
                format!("must lie within [2, {}]", side / 8.0),
            ));
        }
        if lo > hi {
            return Err(Error::validation("colony_radius_range", "min exceeds max"));
        }
        if !(self.plate_radius.is_finite() && self.plate_radius > 0.0 && self.plate_radius < side / 2.0) {
            return Err(Error::validation(
                "plate_radius",
                format!("must lie in (0, {})", side / 2.0),
            ));
        }
        if !(self.colony_count_mean.is_finite() && self.colony_count_mean >= 0.0) {
            return Err(Error::validation("colony_count_mean", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.class_mix) {
            return Err(Error::validation("class_mix", "must lie in [0, 1]"));
        }
        self.artifact.validate()
    }

    pub fn center(&self) -> (f64, f64) {
        let c = self.image_side as f64 / 2.0;
        (c, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Colony {
    pub center: (f64, f64),
    pub radius: f64,
    pub class: ColonyClass,
}

impl Colony {
    /// Axis-aligned extent of the colony disc.
    pub fn bbox(&self) -> crate::vision::BBox {
        crate::vision::BBox::new(
            self.center.0 - self.radius,
            self.center.1 - self.radius,
            self.center.0 + self.radius,
            self.center.1 + self.radius,
        )
        .with_class(self.class.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub colonies: Vec<Colony>,
    pub valid: bool,
    pub true_count: u32,
}

impl GroundTruth {
    pub fn class_counts(&self) -> crate::classes::ClassCounts {
        let mut counts = crate::classes::ClassCounts::default();
        for c in &self.colonies {
            counts.add(c.class.into());
        }
        counts
    }
}

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Approximately standard normal: sum of 12 uniforms minus 6.
pub(crate) fn std_normal(rng: &mut impl Rng) -> f32 {
    let s: f64 = (0..12).map(|_| rng.random::<f64>()).sum();
    (s - 6.0) as f32
}

/// Knuth's multiplicative Poisson sampler, truncated at `cap`.
pub(crate) fn poisson(rng: &mut impl Rng, mean: f64, cap: u32) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    // Far past the cap the truncated draw is the cap with certainty, and
    // exp(-mean) would underflow.
    if mean > 600.0 {
        return cap;
    }
    let limit = (-mean).exp();
    let mut k = 0u32;
    let mut p = 1.0f64;
    loop {
        p *= rng.random::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
        if k >= cap {
            return cap;
        }
    }
}

/// Uniform point in a disc, by rejection from the bounding square.
pub(crate) fn point_in_disc(rng: &mut impl Rng, cx: f64, cy: f64, radius: f64) -> (f64, f64) {
    loop {
        let u = rng.random::<f64>() * 2.0 - 1.0;
        let v = rng.random::<f64>() * 2.0 - 1.0;
        if u * u + v * v <= 1.0 {
            return (cx + u * radius, cy + v * radius);
        }
    }
}

/// Samples colony count, sizes, classes and positions for a scene.
pub fn sample_colonies(spec: &SceneSpec) -> Vec<Colony> {
    let mut rng = stream(spec.seed, STREAM_PLACEMENT);
    let n = poisson(&mut rng, spec.colony_count_mean, MAX_COLONIES);
    let (cx, cy) = spec.center();
    let [lo, hi] = spec.colony_radius_range;
    let mut colonies: Vec<Colony> = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let radius = lo + (hi - lo) * rng.random::<f64>();
        let class = if rng.random::<f64>() < spec.class_mix {
            ColonyClass::Mold
        } else {
            ColonyClass::Bacteria
        };
        let reach = spec.plate_radius - radius - RIM_MARGIN;
        if reach <= 0.0 {
            continue;
        }
        for _ in 0..PLACEMENT_ATTEMPTS {
            let center = point_in_disc(&mut rng, cx, cy, reach);
            let clear = spec.overlap_allowed
                || colonies.iter().all(|o| {
                    let d = ((o.center.0 - center.0).powi(2) + (o.center.1 - center.1).powi(2)).sqrt();
                    d > o.radius + radius + MIN_EDGE_GAP
                });
            if clear {
                colonies.push(Colony { center, radius, class });
                break;
            }
        }
    }
    colonies
}

/// Generates one plate image and its ground truth.
pub fn generate_plate(spec: &SceneSpec) -> Result<(PlateImage, GroundTruth)> {
    spec.validate()?;
    let colonies = sample_colonies(spec);
    render_plate(spec, colonies)
}

/// Renders caller-supplied colonies with the scene's dish, noise and artifact.
///
/// Used for constructed fixtures (fused pairs, lobed blobs); colonies must
/// lie inside the dish.
pub fn render_plate(spec: &SceneSpec, colonies: Vec<Colony>) -> Result<(PlateImage, GroundTruth)> {
    spec.validate()?;
    let (cx, cy) = spec.center();
    for (i, c) in colonies.iter().enumerate() {
        let d = ((c.center.0 - cx).powi(2) + (c.center.1 - cy).powi(2)).sqrt();
        if d + c.radius > spec.plate_radius {
            return Err(Error::validation(
                "colonies",
                format!("colony {i} extends outside the plate disc"),
            ));
        }
    }

    let side = spec.image_side as usize;
    let mut plane = vec![OUTSIDE_LEVEL; side * side];
    let r2 = spec.plate_radius * spec.plate_radius;
    for y in 0..side {
        for x in 0..side {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r2 {
                plane[y * side + x] = AGAR_LEVEL;
            }
        }
    }

    let mut texture = stream(spec.seed, STREAM_TEXTURE);
    for c in &colonies {
        paint_colony(&mut plane, side, c, &mut texture);
    }

    let mut noise = stream(spec.seed, STREAM_NOISE);
    for v in plane.iter_mut() {
        *v += NOISE_SIGMA * std_normal(&mut noise);
    }

    let mut art_rng = stream(spec.seed, STREAM_ARTIFACT);
    artifacts::apply(&mut plane, side, spec, &mut art_rng);

    let pixels = plane
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    let image = PlateImage::from_raw(spec.image_side, spec.image_side, pixels)?;
    let truth = GroundTruth {
        true_count: colonies.len() as u32,
        valid: spec.artifact.is_valid_plate(),
        colonies,
    };
    Ok((image, truth))
}

/// Radially shaded disc: darkest at the center, darker pixel wins on overlap.
fn paint_colony(plane: &mut [f32], side: usize, c: &Colony, texture: &mut ChaCha8Rng) {
    let (x0, y0) = (c.center.0 - c.radius, c.center.1 - c.radius);
    let (x1, y1) = (c.center.0 + c.radius, c.center.1 + c.radius);
    let xs = (x0.floor().max(0.0) as usize)..=(x1.ceil().min(side as f64 - 1.0) as usize);
    let ys = (y0.floor().max(0.0) as usize)..=(y1.ceil().min(side as f64 - 1.0) as usize);
    let r2 = c.radius * c.radius;
    for y in ys {
        for x in xs.clone() {
            let dx = x as f64 + 0.5 - c.center.0;
            let dy = y as f64 + 0.5 - c.center.1;
            let d2 = dx * dx + dy * dy;
            if d2 > r2 {
                continue;
            }
            let t = (d2 / r2) as f32;
            let v = match c.class {
                ColonyClass::Bacteria => 80.0 + 60.0 * t,
                ColonyClass::Mold => {
                    // Fuzzy, mottled body with a faint concentric ring.
                    let ring = 8.0 * (1.0 - 4.0 * (t - 0.5) * (t - 0.5));
                    let speck = 9.0 * std_normal(texture);
                    (96.0 + 50.0 * t - ring + speck).min(158.0)
                }
            };
            let px = &mut plane[y * side + x];
            if v < *px {
                *px = v;
            }
        }
    }
}
