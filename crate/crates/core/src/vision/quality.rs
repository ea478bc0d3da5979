use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::PlateImage;

/// Pixels at or above this value count as glare.
pub const GLARE_CUTOFF: u8 = 250;

/// Image statistics along the axes that make a plate unreadable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityStats {
    /// Variance of the 4-neighbor discrete Laplacian over interior pixels.
    pub blur_metric: f64,
    /// Share of pixels at or above [`GLARE_CUTOFF`].
    pub glare_fraction: f64,
    /// Mean squared difference-of-box-means (3x3 minus 7x7).
    pub speckle_energy: f64,
    /// 95th minus 5th intensity percentile.
    pub contrast: f64,
}

pub fn quality_stats(image: &PlateImage) -> Result<QualityStats> {
    image.ensure_analyzable()?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let px = image.pixels();

    let mut n = 0.0f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = px[y * w + x] as i32;
            let lap = px[(y - 1) * w + x] as i32
                + px[(y + 1) * w + x] as i32
                + px[y * w + x - 1] as i32
                + px[y * w + x + 1] as i32
                - 4 * c;
            let l = lap as f64;
            n += 1.0;
            sum += l;
            sum_sq += l * l;
        }
    }
    let mean = sum / n;
    let blur_metric = (sum_sq / n - mean * mean).max(0.0);

    let glare = px.iter().filter(|&&v| v >= GLARE_CUTOFF).count();
    let glare_fraction = glare as f64 / px.len() as f64;

    // Integral image keeps the box means exact.
    let stride = w + 1;
    let mut integral = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += px[y * w + x] as u64;
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let window = |x: usize, y: usize, r: usize| -> f64 {
        let (x0, y0, x1, y1) = (x - r, y - r, x + r + 1, y + r + 1);
        let s = integral[y1 * stride + x1] + integral[y0 * stride + x0]
            - integral[y0 * stride + x1]
            - integral[y1 * stride + x0];
        s as f64 / ((2 * r + 1) * (2 * r + 1)) as f64
    };
    let mut band = 0.0f64;
    let mut count = 0.0f64;
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let d = window(x, y, 1) - window(x, y, 3);
            band += d * d;
            count += 1.0;
        }
    }
    let speckle_energy = band / count;

    let mut hist = [0usize; 256];
    for &v in px {
        hist[v as usize] += 1;
    }
    let contrast = (percentile(&hist, px.len(), 0.95) - percentile(&hist, px.len(), 0.05)) as f64;

    Ok(QualityStats {
        blur_metric,
        glare_fraction,
        speckle_energy,
        contrast,
    })
}

/// Nearest-rank percentile from a 256-bin histogram.
fn percentile(hist: &[usize; 256], total: usize, q: f64) -> i32 {
    let rank = ((q * total as f64).ceil() as usize).clamp(1, total);
    let mut acc = 0;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc >= rank {
            return v as i32;
        }
    }
    255
}
