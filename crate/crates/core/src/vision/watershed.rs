//! Splits fused blobs along distance-transform ridge lines.
//!
//! Seeds are local maxima of the exact distance transform. A maximum only
//! becomes a seed if it rises at least `min_persistence` pixels above the
//! saddle where it joins a higher peak, and seeds closer than `nms_radius`
//! to a stronger seed are suppressed. Every pixel of the blob is then
//! flooded from the seeds in order of decreasing distance.

use std::collections::BinaryHeap;

use super::components::Component;
use super::distance::squared_edt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WatershedParams {
    pub nms_radius: f64,
    pub min_persistence: f64,
}

impl Default for WatershedParams {
    fn default() -> Self {
        WatershedParams {
            nms_radius: 3.0,
            min_persistence: 1.0,
        }
    }
}

pub fn watershed_split(component: &Component) -> Vec<Component> {
    watershed_split_with(component, WatershedParams::default())
}

pub fn watershed_split_with(component: &Component, params: WatershedParams) -> Vec<Component> {
    let b = component.bbox;
    let (ox, oy) = (b.x_min as u32, b.y_min as u32);
    let w = (b.x_max - b.x_min) as usize;
    let h = (b.y_max - b.y_min) as usize;
    let mut fg = vec![false; w * h];
    for &(x, y) in &component.pixels {
        fg[(y - oy) as usize * w + (x - ox) as usize] = true;
    }
    let dist = squared_edt(&fg, w, h);
    let seeds = select_seeds(&fg, &dist, w, h, params);
    if seeds.len() <= 1 {
        return vec![component.clone()];
    }

    let labels = flood(&fg, &dist, w, h, &seeds);
    let mut groups: Vec<Vec<(u32, u32)>> = vec![Vec::new(); seeds.len()];
    for (i, &l) in labels.iter().enumerate() {
        if fg[i] {
            groups[l as usize].push(((i % w) as u32 + ox, (i / w) as u32 + oy));
        }
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(Component::from_pixels)
        .collect()
}

fn neighbors(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((i % w) as i64, (i / w) as i64);
    (-1i64..=1)
        .flat_map(move |dy| (-1i64..=1).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx != 0 || dy != 0)
        .filter_map(move |(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64).then(|| ny as usize * w + nx as usize)
        })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Persistence-filtered maxima followed by radius suppression.
/// Returned in decreasing height, ties broken by scan order.
pub(crate) fn select_seeds(fg: &[bool], dist: &[u32], w: usize, h: usize, params: WatershedParams) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w * h).filter(|&i| fg[i]).collect();
    order.sort_by(|&a, &b| dist[b].cmp(&dist[a]).then(a.cmp(&b)));

    let mut parent: Vec<usize> = (0..w * h).collect();
    let peak: Vec<usize> = (0..w * h).collect();
    let mut added = vec![false; w * h];
    let mut significant = Vec::new();
    let height = |i: usize| (dist[i] as f64).sqrt();

    for &p in &order {
        added[p] = true;
        let mut roots: Vec<usize> = neighbors(p, w, h)
            .filter(|&n| added[n])
            .map(|n| find(&mut parent, n))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        if roots.is_empty() {
            continue;
        }
        // The root whose peak is highest (earliest in processing order) absorbs the rest.
        let rank = |r: usize| (std::cmp::Reverse(dist[peak[r]]), peak[r]);
        let winner = *roots.iter().min_by_key(|&&r| rank(r)).unwrap();
        let level = height(p);
        for &r in &roots {
            if r != winner {
                if height(peak[r]) - level >= params.min_persistence {
                    significant.push(peak[r]);
                }
                parent[r] = winner;
            }
        }
        parent[p] = winner;
    }
    for &p in &order {
        if find(&mut parent, p) == p {
            significant.push(peak[p]);
        }
    }

    significant.sort_by(|&a, &b| dist[b].cmp(&dist[a]).then(a.cmp(&b)));
    let r2 = params.nms_radius * params.nms_radius;
    let mut kept: Vec<usize> = Vec::new();
    for s in significant {
        let (sx, sy) = ((s % w) as f64, (s / w) as f64);
        let close = kept.iter().any(|&k| {
            let (kx, ky) = ((k % w) as f64, (k / w) as f64);
            (kx - sx).powi(2) + (ky - sy).powi(2) <= r2
        });
        if !close {
            kept.push(s);
        }
    }
    kept
}

/// Marker-controlled flood over decreasing distance. Returns a label per pixel.
fn flood(fg: &[bool], dist: &[u32], w: usize, h: usize, seeds: &[usize]) -> Vec<u32> {
    const UNLABELED: u32 = u32::MAX;
    let mut labels = vec![UNLABELED; w * h];
    // (height, tie-break counter, pixel); max-heap pops highest first, FIFO on ties.
    let mut heap = BinaryHeap::new();
    let mut tick = 0u64;
    for (l, &s) in seeds.iter().enumerate() {
        labels[s] = l as u32;
        heap.push((dist[s], std::cmp::Reverse(tick), s));
        tick += 1;
    }
    while let Some((_, _, p)) = heap.pop() {
        let label = labels[p];
        for n in neighbors(p, w, h) {
            if fg[n] && labels[n] == UNLABELED {
                labels[n] = label;
                heap.push((dist[n], std::cmp::Reverse(tick), n));
                tick += 1;
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::components::label;

    fn blob(w: usize, h: usize, discs: &[(f64, f64, f64)]) -> Component {
        let mut fg = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                if discs.iter().any(|&(cx, cy, r)| (fx - cx).powi(2) + (fy - cy).powi(2) <= r * r) {
                    fg[y * w + x] = true;
                }
            }
        }
        let mut comps = label(&fg, w, h);
        assert_eq!(comps.len(), 1, "fixture must be a single blob");
        comps.remove(0)
    }

    fn assert_partition(parent: &Component, parts: &[Component]) {
        let total: usize = parts.iter().map(|p| p.area()).sum();
        assert_eq!(total, parent.area());
        let mut all: Vec<_> = parts.iter().flat_map(|p| p.pixels.iter().copied()).collect();
        all.sort_unstable_by_key(|&(x, y)| (y, x));
        all.dedup();
        assert_eq!(all, parent.pixels);
    }

    #[test]
    fn single_disc_passes_through() {
        for r in [5.0, 9.5, 17.0, 30.0] {
            let c = blob(80, 80, &[(40.2, 39.7, r)]);
            let parts = watershed_split(&c);
            assert_eq!(parts.len(), 1, "radius {r}");
            assert_eq!(parts[0], c);
        }
    }

    #[test]
    fn fused_pair_splits_in_two() {
        let c = blob(60, 40, &[(20.0, 20.0, 10.0), (34.0, 20.0, 10.0)]);
        let parts = watershed_split(&c);
        assert_eq!(parts.len(), 2);
        assert_partition(&c, &parts);
    }

    #[test]
    fn three_lobes_split_in_three() {
        // Lobe centers 12 px from the middle, about 20.8 px apart.
        let m = (40.0, 40.0);
        let lobes = [
            (m.0 + 12.0, m.1, 10.0),
            (m.0 - 6.0, m.1 + 10.392, 10.0),
            (m.0 - 6.0, m.1 - 10.392, 10.0),
        ];
        let c = blob(80, 80, &lobes);
        let parts = watershed_split(&c);
        assert_eq!(parts.len(), 3);
        assert_partition(&c, &parts);
    }

    #[test]
    fn one_pixel_component() {
        let c = Component::from_pixels(vec![(3, 4)]);
        assert_eq!(watershed_split(&c), vec![c]);
    }
}
