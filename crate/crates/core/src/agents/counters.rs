use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ms_since, require_clearance, AgentKind, AgentVerdict, Quality};
use crate::classes::BoxClass;
use crate::error::{Error, Result};
use crate::raster::PlateImage;
use crate::registry::{ColonyFeatures, Model};
use crate::vision::distance::squared_edt;
use crate::vision::watershed::watershed_split_with;
use crate::vision::{segment_components_in, soft_nms, BBox, Region, WatershedParams};

/// Component pipeline settings for the primary counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterAConfig {
    /// Pixels darker than this are colony candidates.
    pub threshold: u8,
    /// Components and split parts smaller than this are noise.
    pub min_area: usize,
    pub watershed_nms_radius: f64,
    pub watershed_min_persistence: f64,
    pub soft_nms_iou: f64,
    pub score_floor: f64,
}

impl Default for CounterAConfig {
    fn default() -> Self {
        CounterAConfig {
            threshold: 170,
            min_area: 12,
            watershed_nms_radius: 3.0,
            watershed_min_persistence: 1.0,
            soft_nms_iou: 0.4,
            score_floor: 0.05,
        }
    }
}

/// Distance-peak settings for the secondary counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterBConfig {
    pub threshold: u8,
    /// Minimum distance-to-background, in pixels, for a peak to count.
    pub peak_height: f64,
    /// Peaks closer than this to a stronger peak are the same colony.
    pub nms_radius: f64,
}

impl Default for CounterBConfig {
    fn default() -> Self {
        CounterBConfig {
            threshold: 170,
            peak_height: 3.0,
            nms_radius: 3.0,
        }
    }
}

impl CounterAConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.soft_nms_iou) {
            return Err(Error::validation("counter_a.soft_nms_iou", "must lie in [0, 1]"));
        }
        if !(self.score_floor.is_finite() && self.score_floor >= 0.0) {
            return Err(Error::validation("counter_a.score_floor", "must be finite and >= 0"));
        }
        if !(self.watershed_nms_radius >= 0.0 && self.watershed_min_persistence >= 0.0) {
            return Err(Error::validation("counter_a.watershed", "radius and persistence must be >= 0"));
        }
        Ok(())
    }
}

impl CounterBConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_height.is_finite() && self.peak_height > 0.0) {
            return Err(Error::validation("counter_b.peak_height", "must be finite and > 0"));
        }
        if !(self.nms_radius.is_finite() && self.nms_radius >= 0.0) {
            return Err(Error::validation("counter_b.nms_radius", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Median intensity inside the region, taken as the agar level.
fn background_level(image: &PlateImage, region: &Region) -> f64 {
    let mut hist = [0usize; 256];
    let mut n = 0usize;
    let w = image.width();
    for (i, &v) in image.pixels().iter().enumerate() {
        let (x, y) = (i as u32 % w, i as u32 / w);
        if region.contains(x, y) {
            hist[v as usize] += 1;
            n += 1;
        }
    }
    let half = n.div_ceil(2).max(1);
    let mut acc = 0;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc >= half {
            return v as f64;
        }
    }
    255.0
}

/// Threshold, label, split, score, classify, soft-NMS.
///
/// Returns the verdict and the surviving boxes. Each box is scored by how
/// much darker than the agar its pixels are on average.
pub fn count_primary(
    image: &PlateImage,
    clearance: &AgentVerdict,
    cfg: &CounterAConfig,
    classifier: Option<&Model>,
) -> Result<(AgentVerdict, Vec<BBox>)> {
    let start = Instant::now();
    require_clearance(clearance)?;
    cfg.validate()?;
    image.ensure_analyzable()?;

    let region = Region::estimate(image);
    let agar = background_level(image, &region).max(1.0);
    let params = WatershedParams {
        nms_radius: cfg.watershed_nms_radius,
        min_persistence: cfg.watershed_min_persistence,
    };
    let px = image.pixels();
    let w = image.width() as usize;

    let mut boxes = Vec::new();
    for comp in segment_components_in(image, cfg.threshold, &region) {
        if comp.area() < cfg.min_area {
            continue;
        }
        for part in watershed_split_with(&comp, params) {
            if part.area() < cfg.min_area {
                continue;
            }
            let mean = part.pixels.iter().map(|&(x, y)| px[y as usize * w + x as usize] as f64).sum::<f64>()
                / part.area() as f64;
            let score = ((agar - mean) / agar).clamp(0.0, 1.0);
            let class = match classifier {
                Some(model) => model.classify(&ColonyFeatures::extract(image, &part)).into(),
                None => BoxClass::Unknown,
            };
            boxes.push(part.bbox.with_score(score).with_class(class));
        }
    }
    let kept = soft_nms(&boxes, cfg.soft_nms_iou, cfg.score_floor)?;

    let verdict = AgentVerdict {
        plate_id: clearance.plate_id.clone(),
        quality: Quality::Valid,
        count: kept.len() as u32,
        reason: format!(
            "components t={} min_area={} watershed r={} h={} soft-nms iou={} floor={} classifier={}",
            cfg.threshold,
            cfg.min_area,
            cfg.watershed_nms_radius,
            cfg.watershed_min_persistence,
            cfg.soft_nms_iou,
            cfg.score_floor,
            classifier.map_or("none", |m| m.id()),
        ),
        agent: AgentKind::CounterA,
        elapsed_ms: ms_since(start),
    };
    Ok((verdict, kept))
}

/// Counts distance-transform peaks of the dark mask.
///
/// No connected components and no box suppression: a pixel is a peak when
/// its distance to the background is at least `peak_height` and no
/// 8-neighbor is farther. Peaks are taken tallest first; a weaker peak
/// within `max(nms_radius, height)` of a kept one falls inside that peak's
/// inscribed circle and is the same colony.
pub fn count_secondary(image: &PlateImage, clearance: &AgentVerdict, cfg: &CounterBConfig) -> Result<AgentVerdict> {
    let start = Instant::now();
    require_clearance(clearance)?;
    cfg.validate()?;
    image.ensure_analyzable()?;

    let region = Region::estimate(image);
    let (w, h) = (image.width() as usize, image.height() as usize);
    let inside = region.mask(w as u32, h as u32);
    let fg: Vec<bool> = image
        .pixels()
        .iter()
        .zip(&inside)
        .map(|(&v, &m)| m && v < cfg.threshold)
        .collect();
    let dist = squared_edt(&fg, w, h);

    let floor = cfg.peak_height * cfg.peak_height;
    let mut peaks: Vec<usize> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = dist[i];
            if (d as f64) < floor {
                continue;
            }
            let mut top = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if (dx != 0 || dy != 0)
                        && nx >= 0
                        && ny >= 0
                        && (nx as usize) < w
                        && (ny as usize) < h
                        && dist[ny as usize * w + nx as usize] > d
                    {
                        top = false;
                        break 'nb;
                    }
                }
            }
            if top {
                peaks.push(i);
            }
        }
    }
    peaks.sort_by(|&a, &b| dist[b].cmp(&dist[a]).then(a.cmp(&b)));

    let mut kept: Vec<(f64, f64, f64)> = Vec::new();
    for p in peaks {
        let (px, py) = ((p % w) as f64, (p / w) as f64);
        let same = kept.iter().any(|&(kx, ky, kh)| {
            let r = cfg.nms_radius.max(kh);
            (kx - px).powi(2) + (ky - py).powi(2) <= r * r
        });
        if !same {
            kept.push((px, py, (dist[p] as f64).sqrt()));
        }
    }

    Ok(AgentVerdict {
        plate_id: clearance.plate_id.clone(),
        quality: Quality::Valid,
        count: kept.len() as u32,
        reason: format!("dt-peaks h={}", cfg.peak_height),
        agent: AgentKind::CounterB,
        elapsed_ms: ms_since(start),
    })
}
