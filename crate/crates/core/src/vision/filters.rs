//! Separable smoothing filters over `f32` planes, clamp-to-edge borders.

/// Normalized 1-D Gaussian taps, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i32;
    let two_s2 = 2.0 * sigma * sigma;
    let mut taps: Vec<f32> = (-radius..=radius)
        .map(|i| (-((i * i) as f32) / two_s2).exp())
        .collect();
    let sum: f32 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Convolves rows then columns with the same symmetric kernel.
pub fn separable(plane: &[f32], width: usize, height: usize, taps: &[f32]) -> Vec<f32> {
    debug_assert_eq!(plane.len(), width * height);
    let radius = (taps.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut rows = vec![0.0f32; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[clamp(x as isize + k as isize - radius, width)];
            }
            rows[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0f32; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * rows[clamp(y as isize + k as isize - radius, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

pub fn gaussian_blur(plane: &[f32], width: usize, height: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    separable(plane, width, height, &gaussian_kernel(sigma))
}

/// Mean over a `(2r+1)^2` window.
pub fn box_blur(plane: &[f32], width: usize, height: usize, radius: usize) -> Vec<f32> {
    let n = 2 * radius + 1;
    let taps = vec![1.0 / n as f32; n];
    separable(plane, width, height, &taps)
}
