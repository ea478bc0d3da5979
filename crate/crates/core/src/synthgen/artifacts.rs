//! Imaging defects. Each one moves a different image statistic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{point_in_disc, std_normal, ArtifactKind, SceneSpec};
use crate::vision::filters;

/// Fraction of the image area covered by saturated glare at intensity 1.
pub const GLARE_AREA_AT_FULL: f64 = 0.18;
/// Blur sigma in pixels at intensity 1.
pub const BLUR_SIGMA_AT_FULL: f32 = 6.0;
/// Multiplicative speckle amplitude at intensity 1.
pub const SPECKLE_AMPLITUDE_AT_FULL: f32 = 0.53;
/// Intensity at which the contamination film covers the whole frame.
pub const CONTAMINATION_FULL_COVER_AT: f64 = 0.2;
const CONTAMINATION_OPACITY: f32 = 0.95;
const CONTAMINATION_GRAY: f32 = 120.0;
const CONTAMINATION_MOTTLE: f32 = 3.0;

pub(super) fn apply(plane: &mut [f32], side: usize, spec: &SceneSpec, rng: &mut ChaCha8Rng) {
    let intensity = spec.artifact.intensity;
    if intensity <= 0.0 {
        return;
    }
    match spec.artifact.kind {
        ArtifactKind::None => {}
        ArtifactKind::Glare => glare(plane, side, spec, intensity, rng),
        ArtifactKind::Blur => {
            let sigma = BLUR_SIGMA_AT_FULL * intensity as f32;
            let out = filters::gaussian_blur(plane, side, side, sigma);
            plane.copy_from_slice(&out);
        }
        ArtifactKind::Condensation => condensation(plane, side, spec, intensity as f32, rng),
        ArtifactKind::Contamination => contamination(plane, side, intensity, rng),
    }
}

/// Saturated ellipse plus a soft halo that stays below the saturation cut.
fn glare(plane: &mut [f32], side: usize, spec: &SceneSpec, intensity: f64, rng: &mut ChaCha8Rng) {
    let (cx, cy) = spec.center();
    let (ex, ey) = point_in_disc(rng, cx, cy, 0.5 * spec.plate_radius);
    let aspect = 1.0 + rng.random::<f64>();
    let area = GLARE_AREA_AT_FULL * intensity * (side * side) as f64;
    let minor = (area / (std::f64::consts::PI * aspect)).sqrt();
    let major = aspect * minor;
    // Random orientation as a unit vector, no trig needed.
    let (ux, uy) = loop {
        let u = rng.random::<f64>() * 2.0 - 1.0;
        let v = rng.random::<f64>() * 2.0 - 1.0;
        let n2 = u * u + v * v;
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            break (u / n, v / n);
        }
    };
    for y in 0..side {
        for x in 0..side {
            let dx = x as f64 + 0.5 - ex;
            let dy = y as f64 + 0.5 - ey;
            let along = dx * ux + dy * uy;
            let across = -dx * uy + dy * ux;
            let rho = ((along / major).powi(2) + (across / minor).powi(2)).sqrt();
            let px = &mut plane[y * side + x];
            if rho <= 1.0 {
                *px = 255.0;
            } else if rho < 1.6 {
                let w = (1.6 - rho) / 0.6;
                let halo = *px + (240.0 - *px) * w as f32;
                *px = px.max(halo.min(240.0));
            }
        }
    }
}

fn inside_dish(spec: &SceneSpec, x: usize, y: usize) -> bool {
    let (cx, cy) = spec.center();
    let dx = x as f64 + 0.5 - cx;
    let dy = y as f64 + 0.5 - cy;
    dx * dx + dy * dy <= spec.plate_radius * spec.plate_radius
}

/// Unit-variance noise field with short spatial correlation.
fn grain(side: usize, sigma: f32, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let raw: Vec<f32> = (0..side * side).map(|_| std_normal(rng)).collect();
    let mut field = filters::gaussian_blur(&raw, side, side, sigma);
    let var = field.iter().map(|v| v * v).sum::<f32>() / field.len() as f32;
    let scale = 1.0 / var.sqrt().max(1e-6);
    field.iter_mut().for_each(|v| *v *= scale);
    field
}

const DROPLET_CEILING: f32 = 244.0;

/// Droplet speckle: fine-grained multiplicative modulation over the dish.
fn condensation(plane: &mut [f32], side: usize, spec: &SceneSpec, intensity: f32, rng: &mut ChaCha8Rng) {
    let field = grain(side, 1.0, rng);
    let amp = SPECKLE_AMPLITUDE_AT_FULL * intensity;
    for y in 0..side {
        for x in 0..side {
            if inside_dish(spec, x, y) {
                let i = y * side + x;
                // Droplets scatter light but never blow out the sensor.
                let v = plane[i] * (1.0 + amp * field[i]).max(0.0);
                plane[i] = v.min(plane[i].max(DROPLET_CEILING));
            }
        }
    }
}

/// Irregular murky film. Its footprint follows the low values of a smooth
/// random field, so the boundary is ragged; coverage grows linearly with
/// intensity until the film swallows the whole frame. Inside the film the
/// scene is washed toward a flat gray with faint mottling.
fn contamination(plane: &mut [f32], side: usize, intensity: f64, rng: &mut ChaCha8Rng) {
    let coverage = (intensity / CONTAMINATION_FULL_COVER_AT).min(1.0);
    let shape = grain(side, 24.0, rng);
    let mottle = grain(side, 2.0, rng);
    let cut = if coverage >= 1.0 {
        f32::INFINITY
    } else {
        let mut sorted = shape.clone();
        sorted.sort_by(f32::total_cmp);
        sorted[((coverage * sorted.len() as f64) as usize).min(sorted.len() - 1)]
    };
    for (i, px) in plane.iter_mut().enumerate() {
        if shape[i] < cut {
            let murk = CONTAMINATION_GRAY + CONTAMINATION_MOTTLE * mottle[i];
            *px = *px * (1.0 - CONTAMINATION_OPACITY) + murk * CONTAMINATION_OPACITY;
        }
    }
}
