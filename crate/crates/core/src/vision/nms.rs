use super::BBox;
use crate::error::{Error, Result};

pub const DEFAULT_SOFT_NMS_IOU: f64 = 0.4;
pub const DEFAULT_SCORE_FLOOR: f64 = 0.05;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Linear-decay soft-NMS gated at `iou_threshold`.
///
/// Repeatedly takes the highest-scoring remaining box; every other
/// remaining box overlapping it by more than the threshold has its score
/// multiplied by `1 - IoU`. Boxes that end below `score_floor` are dropped.
/// Output is in selection order.
pub fn soft_nms(boxes: &[BBox], iou_threshold: f64, score_floor: f64) -> Result<Vec<BBox>> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::validation("iou_threshold", "must lie in [0, 1]"));
    }
    if !score_floor.is_finite() {
        return Err(Error::validation("score_floor", "must be finite"));
    }
    for b in boxes {
        b.validate()?;
    }
    let mut pending: Vec<BBox> = boxes.to_vec();
    let mut kept = Vec::with_capacity(boxes.len());
    while !pending.is_empty() {
        // Highest score; earliest index wins ties so the result is order-stable.
        let best = pending
            .iter()
            .enumerate()
            .fold(0, |bi, (i, b)| if b.score > pending[bi].score { i } else { bi });
        let top = pending.remove(best);
        for other in pending.iter_mut() {
            let o = iou(&top, other);
            if o > iou_threshold {
                other.score *= 1.0 - o;
            }
        }
        kept.push(top);
    }
    kept.retain(|b| b.score >= score_floor);
    Ok(kept)
}
