use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vision::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    /// Class-agnostic all-point average precision.
    pub map: f64,
    /// Over the full detection set.
    pub precision: f64,
    pub recall: f64,
    pub true_positives: u64,
    pub detections: u64,
    pub truths: u64,
}

/// Average precision at `iou_cut` over a set of images.
///
/// Detections from every image are ranked together by score (ties keep
/// image order, then input order). Each detection claims the unmatched
/// truth in its image with the highest IoU at or above the cut, lowest
/// index on ties. AP is the exact area under the precision-recall curve
/// after making precision non-increasing in recall.
///
/// Degenerate inputs: with no truths and no detections everything is 1;
/// with no truths but some detections everything is 0; with truths but no
/// detections AP and recall are 0 and precision is 0.
pub fn map_at_iou(detections: &[Vec<BBox>], truths: &[Vec<BBox>], iou_cut: f64) -> Result<DetectionSummary> {
    if detections.len() != truths.len() {
        return Err(Error::validation(
            "detections",
            format!("{} images of detections for {} images of truth", detections.len(), truths.len()),
        ));
    }
    if !(0.0..=1.0).contains(&iou_cut) {
        return Err(Error::validation("iou_cut", "must lie in [0, 1]"));
    }
    for b in detections.iter().flatten() {
        b.validate()?;
    }

    let n_truth: usize = truths.iter().map(Vec::len).sum();
    let mut ranked: Vec<(usize, usize)> = detections
        .iter()
        .enumerate()
        .flat_map(|(img, ds)| (0..ds.len()).map(move |d| (img, d)))
        .collect();
    ranked.sort_by(|&(ia, da), &(ib, db)| {
        detections[ib][db]
            .score
            .total_cmp(&detections[ia][da].score)
            .then(ia.cmp(&ib))
            .then(da.cmp(&db))
    });

    let mut taken: Vec<Vec<bool>> = truths.iter().map(|t| vec![false; t.len()]).collect();
    let mut hits = Vec::with_capacity(ranked.len());
    for &(img, d) in &ranked {
        let det = &detections[img][d];
        let mut best: Option<(usize, f64)> = None;
        for (t, truth) in truths[img].iter().enumerate() {
            if taken[img][t] {
                continue;
            }
            let o = iou(det, truth);
            if o >= iou_cut && best.is_none_or(|(_, bo)| o > bo) {
                best = Some((t, o));
            }
        }
        if let Some((t, _)) = best {
            taken[img][t] = true;
        }
        hits.push(best.is_some());
    }

    let tp = hits.iter().filter(|&&h| h).count();
    let n_det = hits.len();
    if n_truth == 0 {
        let v = if n_det == 0 { 1.0 } else { 0.0 };
        return Ok(DetectionSummary {
            map: v,
            precision: v,
            recall: v,
            true_positives: 0,
            detections: n_det as u64,
            truths: 0,
        });
    }

    let mut precision = Vec::with_capacity(n_det);
    let mut recall = Vec::with_capacity(n_det);
    let mut cum = 0usize;
    for (k, &h) in hits.iter().enumerate() {
        cum += h as usize;
        precision.push(cum as f64 / (k + 1) as f64);
        recall.push(cum as f64 / n_truth as f64);
    }
    // Interpolated precision: best precision at this recall or beyond.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..n_det {
        if recall[k] > prev_recall {
            ap += (recall[k] - prev_recall) * precision[k];
            prev_recall = recall[k];
        }
    }

    Ok(DetectionSummary {
        map: ap,
        precision: if n_det == 0 { 0.0 } else { tp as f64 / n_det as f64 },
        recall: tp as f64 / n_truth as f64,
        true_positives: tp as u64,
        detections: n_det as u64,
        truths: n_truth as u64,
    })
}
