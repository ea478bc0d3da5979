//! Exact Euclidean distance transform (Felzenszwalb-Huttenlocher).
//!
//! Distances are measured from each foreground pixel to the nearest
//! background pixel; everything beyond the image border counts as
//! background. Results are squared distances, which are exact integers.

/// Squared distance to the nearest background pixel, zero on background.
pub fn squared_edt(foreground: &[bool], width: usize, height: usize) -> Vec<u32> {
    assert_eq!(foreground.len(), width * height);
    // One pixel of background padding on every side.
    let (pw, ph) = (width + 2, height + 2);
    let inf = f64::INFINITY;
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..height {
        for x in 0..width {
            if foreground[y * width + x] {
                grid[(y + 1) * pw + x + 1] = inf;
            }
        }
    }

    let mut line = Vec::new();
    let mut out = Vec::new();
    let mut scratch = Envelope::default();
    for x in 0..pw {
        line.clear();
        line.extend((0..ph).map(|y| grid[y * pw + x]));
        transform_1d(&line, &mut out, &mut scratch);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        line.clear();
        line.extend_from_slice(&grid[y * pw..(y + 1) * pw]);
        transform_1d(&line, &mut out, &mut scratch);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&out);
    }

    let mut result = vec![0u32; width * height];
    for y in 0..height {
        for x in 0..width {
            result[y * width + x] = grid[(y + 1) * pw + x + 1] as u32;
        }
    }
    result
}

pub fn edt(foreground: &[bool], width: usize, height: usize) -> Vec<f32> {
    squared_edt(foreground, width, height)
        .into_iter()
        .map(|d| (d as f32).sqrt())
        .collect()
}

#[derive(Default)]
struct Envelope {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

/// Lower envelope of parabolas rooted at the finite samples of `f`.
fn transform_1d(f: &[f64], out: &mut Vec<f64>, env: &mut Envelope) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    env.vertices.clear();
    env.bounds.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match env.vertices.last() {
                None => {
                    env.vertices.push(q);
                    env.bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&v) => {
                    let s = ((f[q] + (q * q) as f64) - (f[v] + (v * v) as f64)) / (2.0 * (q as f64 - v as f64));
                    if s <= *env.bounds.last().unwrap() {
                        env.vertices.pop();
                        env.bounds.pop();
                    } else {
                        env.vertices.push(q);
                        env.bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    if env.vertices.is_empty() {
        return;
    }
    let mut k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        while k + 1 < env.vertices.len() && env.bounds[k + 1] < q as f64 {
            k += 1;
        }
        let v = env.vertices[k];
        let d = q as f64 - v as f64;
        *slot = d * d + f[v];
    }
}
