use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ms_since, AgentKind, AgentVerdict, Quality};
use crate::error::{Error, Result};
use crate::raster::PlateImage;
use crate::vision::{quality_stats, QualityStats};

pub const REASON_CLEAR: &str = "clear";

/// Screening thresholds. A plate fails as soon as one statistic crosses its limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreenerConfig {
    /// Laplacian variance below this reads as "blur".
    pub min_blur_metric: f64,
    /// Saturated share above this reads as "glare".
    pub max_glare_fraction: f64,
    /// Band energy above this reads as "condensation".
    pub max_speckle_energy: f64,
    /// Percentile spread below this reads as "low-contrast".
    pub min_contrast: f64,
}

impl Default for ScreenerConfig {
    fn default() -> Self {
        ScreenerConfig {
            min_blur_metric: 15.0,
            max_glare_fraction: 0.05,
            max_speckle_energy: 150.0,
            min_contrast: 20.0,
        }
    }
}

impl ScreenerConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("min_blur_metric", self.min_blur_metric),
            ("max_glare_fraction", self.max_glare_fraction),
            ("max_speckle_energy", self.max_speckle_energy),
            ("min_contrast", self.min_contrast),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("screener.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// The failing metric, if any.
    ///
    /// Checked in an order where each defect is named by the statistic it
    /// moves most: a washed-out frame also loses its Laplacian energy, so
    /// contrast is consulted before blur.
    pub fn failing_metric(&self, s: &QualityStats) -> Option<&'static str> {
        if s.glare_fraction > self.max_glare_fraction {
            Some("glare")
        } else if s.contrast < self.min_contrast {
            Some("low-contrast")
        } else if s.speckle_energy > self.max_speckle_energy {
            Some("condensation")
        } else if s.blur_metric < self.min_blur_metric {
            Some("blur")
        } else {
            None
        }
    }
}

/// Valid/invalid decision for one plate.
pub fn screen(plate_id: &str, image: &PlateImage, cfg: &ScreenerConfig) -> Result<AgentVerdict> {
    screen_stats(plate_id, image, cfg).map(|(v, _)| v)
}

/// Like [`screen`], also returning the statistics behind the decision.
pub fn screen_stats(plate_id: &str, image: &PlateImage, cfg: &ScreenerConfig) -> Result<(AgentVerdict, QualityStats)> {
    let start = Instant::now();
    cfg.validate()?;
    let stats = quality_stats(image)?;
    let (quality, reason) = match cfg.failing_metric(&stats) {
        Some(metric) => (Quality::Invalid, metric.to_string()),
        None => (Quality::Valid, REASON_CLEAR.to_string()),
    };
    let verdict = AgentVerdict {
        plate_id: plate_id.to_string(),
        quality,
        count: 0,
        reason,
        agent: AgentKind::Screener,
        elapsed_ms: ms_since(start),
    };
    Ok((verdict, stats))
}
