use serde::{Deserialize, Serialize};

use crate::classes::ColonyClass;
use crate::raster::PlateImage;
use crate::vision::Component;

pub const FEATURE_COUNT: usize = 5;

/// Shape and texture descriptors of one segmented colony.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColonyFeatures {
    /// Pixel count.
    pub area: f64,
    /// `4 pi area / perimeter^2`, about 1 for a disc, capped at 1.2.
    pub circularity: f64,
    pub mean_intensity: f64,
    pub intensity_variance: f64,
    /// Mean absolute 4-neighbor Laplacian over interior pixels.
    pub edge_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub features: ColonyFeatures,
    pub label: ColonyClass,
}

impl ColonyFeatures {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.area,
            self.circularity,
            self.mean_intensity,
            self.intensity_variance,
            self.edge_density,
        ]
    }

    pub fn extract(image: &PlateImage, comp: &Component) -> ColonyFeatures {
        let b = comp.bbox;
        let (ox, oy) = (b.x_min as i64, b.y_min as i64);
        let w = (b.x_max - b.x_min) as i64;
        let h = (b.y_max - b.y_min) as i64;
        let mut mask = vec![false; (w * h) as usize];
        for &(x, y) in &comp.pixels {
            mask[((y as i64 - oy) * w + (x as i64 - ox)) as usize] = true;
        }
        let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask[(y * w + x) as usize];
        let (iw, ih) = (image.width() as i64, image.height() as i64);
        let px = |x: i64, y: i64| image.get(x.clamp(0, iw - 1) as u32, y.clamp(0, ih - 1) as u32) as f64;

        let mut exposed = 0usize;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        let (mut lap_sum, mut lap_n) = (0.0, 0usize);
        for &(x, y) in &comp.pixels {
            let (lx, ly) = (x as i64 - ox, y as i64 - oy);
            let mut interior = true;
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if !inside(lx + dx, ly + dy) {
                    exposed += 1;
                    interior = false;
                }
            }
            let (gx, gy) = (x as i64, y as i64);
            let v = px(gx, gy);
            sum += v;
            sum_sq += v * v;
            if interior {
                let lap = px(gx + 1, gy) + px(gx - 1, gy) + px(gx, gy + 1) + px(gx, gy - 1) - 4.0 * v;
                lap_sum += lap.abs();
                lap_n += 1;
            }
        }
        let area = comp.area() as f64;
        // Exposed edge count overestimates a smooth boundary by 4/pi on average.
        let perimeter = exposed as f64 * std::f64::consts::FRAC_PI_4;
        let circularity = (4.0 * std::f64::consts::PI * area / (perimeter * perimeter)).min(1.2);
        let mean = sum / area;
        ColonyFeatures {
            area,
            circularity,
            mean_intensity: mean,
            intensity_variance: (sum_sq / area - mean * mean).max(0.0),
            edge_density: if lap_n == 0 { 0.0 } else { lap_sum / lap_n as f64 },
        }
    }
}
