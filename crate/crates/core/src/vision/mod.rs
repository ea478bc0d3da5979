//! Low-level image and box operations shared by the agents and the metrics.

pub mod components;
pub mod distance;
pub mod filters;
mod nms;
mod quality;
pub mod watershed;

pub use components::{segment_components, segment_components_in, Component, Region};
pub use nms::{iou, soft_nms, DEFAULT_SCORE_FLOOR, DEFAULT_SOFT_NMS_IOU};
pub use quality::{quality_stats, QualityStats, GLARE_CUTOFF};
pub use watershed::{watershed_split, WatershedParams};

use serde::{Deserialize, Serialize};

use crate::classes::BoxClass;
use crate::error::{Error, Result};

/// Axis-aligned detection box in pixel coordinates, `max` edges exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub score: f64,
    #[serde(default)]
    pub class: BoxClass,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
            score: 1.0,
            class: BoxClass::Unknown,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn with_class(mut self, class: BoxClass) -> Self {
        self.class = class;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::validation(
                "box",
                format!(
                    "degenerate extent ({}, {}, {}, {})",
                    self.x_min, self.y_min, self.x_max, self.y_max
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::validation("box.score", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }
}
