//! Dish localization and 8-connected labeling of dark pixels.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::BBox;
use crate::raster::PlateImage;

/// Minimum brightness step between the image border and the dish.
pub const DISH_STEP: f64 = 30.0;
/// Pixels this close to the estimated dish wall are ignored.
pub const WALL_MARGIN: f64 = 5.0;

/// Pixels eligible for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Disc { cx: f64, cy: f64, radius: f64 },
    Whole,
}

impl Region {
    /// Locates the dish as the set of pixels noticeably brighter than the
    /// image border; falls back to the whole frame when no dish stands out.
    pub fn estimate(image: &PlateImage) -> Region {
        let (w, h) = (image.width(), image.height());
        let mut border = 0.0f64;
        let mut n = 0.0f64;
        for x in 0..w {
            for y in [0, 1, h - 2, h - 1] {
                border += image.get(x, y) as f64;
                n += 1.0;
            }
        }
        for y in 2..h - 2 {
            for x in [0, 1, w - 2, w - 1] {
                border += image.get(x, y) as f64;
                n += 1.0;
            }
        }
        let cut = border / n + DISH_STEP;
        let (mut count, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
        for y in 0..h {
            for x in 0..w {
                if image.get(x, y) as f64 > cut {
                    count += 1.0;
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                }
            }
        }
        if count < 0.1 * (w as f64 * h as f64) {
            return Region::Whole;
        }
        let radius = (count / std::f64::consts::PI).sqrt() - WALL_MARGIN;
        if radius <= 0.0 {
            return Region::Whole;
        }
        Region::Disc {
            cx: sx / count,
            cy: sy / count,
            radius,
        }
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        match *self {
            Region::Whole => true,
            Region::Disc { cx, cy, radius } => {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                dx * dx + dy * dy <= radius * radius
            }
        }
    }

    pub fn mask(&self, width: u32, height: u32) -> Vec<bool> {
        let mut m = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                m.push(self.contains(x, y));
            }
        }
        m
    }
}

/// A connected set of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Pixel coordinates in scan order.
    pub pixels: Vec<(u32, u32)>,
    pub centroid: (f64, f64),
    pub bbox: BBox,
}

impl Component {
    pub fn from_pixels(mut pixels: Vec<(u32, u32)>) -> Component {
        assert!(!pixels.is_empty(), "component needs at least one pixel");
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        let (mut sx, mut sy) = (0.0, 0.0);
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for &(x, y) in &pixels {
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let n = pixels.len() as f64;
        Component {
            centroid: (sx / n, sy / n),
            bbox: BBox::new(x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0),
            pixels,
        }
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

const NEIGHBORS_8: [(i32, i32); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// 8-connected components of pixels darker than `threshold` inside the dish.
pub fn segment_components(image: &PlateImage, threshold: u8) -> Vec<Component> {
    segment_components_in(image, threshold, &Region::estimate(image))
}

pub fn segment_components_in(image: &PlateImage, threshold: u8, region: &Region) -> Vec<Component> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let px = image.pixels();
    let inside = region.mask(w as u32, h as u32);
    let fg: Vec<bool> = (0..w * h).map(|i| inside[i] && px[i] < threshold).collect();
    label(&fg, w, h)
}

/// Breadth-first 8-connected labeling of a boolean mask.
pub fn label(fg: &[bool], w: usize, h: usize) -> Vec<Component> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !fg[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i32, (i / w) as i32);
            pixels.push((x as u32, y as u32));
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if fg[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        out.push(Component::from_pixels(pixels));
    }
    out
}
