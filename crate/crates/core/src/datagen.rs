//! Synthetic phantoms, Poisson diffraction data, beam-stop masking and raw import.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::constraints::{IntensityData, SupportMask};
use crate::container::{read_container, Role};
use crate::error::{Error, Result};
use crate::field::{dft_forward, ComplexField, Shape};

/// Largest support area fraction that still oversamples by more than two.
pub const MAX_SUPPORT_FRACTION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    DiscBlobs,
    Annulus,
    TextLike,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 3] = [PhantomKind::DiscBlobs, PhantomKind::Annulus, PhantomKind::TextLike];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::DiscBlobs => "disc-blobs",
            PhantomKind::Annulus => "annulus",
            PhantomKind::TextLike => "text-like",
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PhantomKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown phantom `{s}`")))
    }
}

/// Side of the centred square support for an area fraction, with the
/// parity of `window` so the support sits symmetrically.
pub fn support_side(window: usize, support_fraction: f64) -> Result<usize> {
    if !(support_fraction > 0.0) {
        return Err(Error::InvalidConfig(format!("support fraction must be positive, got {support_fraction}")));
    }
    if support_fraction > MAX_SUPPORT_FRACTION {
        return Err(Error::Oversampling { fraction: support_fraction });
    }
    let mut side = (window as f64 * support_fraction.sqrt()).round() as usize;
    if (window - side) % 2 == 1 {
        side -= 1;
    }
    if side < 2 {
        return Err(Error::InvalidConfig(format!("support fraction {support_fraction} leaves no pixels in a {window} window")));
    }
    Ok(side)
}

/// Smooth 0→1 edge of roughly one pixel width; `d` is the signed distance
/// (positive inside) in pixels.
fn soft(d: f64) -> f64 {
    0.5 * (1.0 + (d / 0.75).tanh())
}

/// Features in support-relative coordinates `u, v ∈ [−1, 1]`; `px` is the
/// length of one pixel in those units.
fn feature_amplitude(kind: PhantomKind, u: f64, v: f64, px: f64) -> f64 {
    let disc = |cx: f64, cy: f64, r: f64| soft((r - ((u - cx).powi(2) + (v - cy).powi(2)).sqrt()) / px);
    let bar = |x0: f64, y0: f64, x1: f64, y1: f64| {
        let dx = (u - x0).min(x1 - u);
        let dy = (v - y0).min(y1 - v);
        soft(dx.min(dy) / px)
    };
    match kind {
        PhantomKind::DiscBlobs => {
            let blobs = [
                (-0.45, -0.40, 0.30, 1.0),
                (0.40, -0.35, 0.22, 0.75),
                (0.10, 0.45, 0.35, 0.9),
                (-0.55, 0.55, 0.15, 0.6),
                (0.60, 0.30, 0.12, 0.5),
            ];
            blobs.iter().map(|&(cx, cy, r, a)| a * disc(cx, cy, r)).fold(0.0, f64::max)
        }
        PhantomKind::Annulus => {
            let r = (u * u + v * v).sqrt();
            let ring = soft((0.75 - r) / px) * soft((r - 0.45) / px);
            let dot = 0.7 * disc(0.0, 0.0, 0.18);
            ring.max(dot)
        }
        PhantomKind::TextLike => {
            let strokes = [
                // "C"
                (-0.85, -0.60, -0.65, 0.60),
                (-0.85, -0.60, -0.20, -0.40),
                (-0.85, 0.40, -0.20, 0.60),
                // "G"
                (0.00, -0.60, 0.20, 0.60),
                (0.00, -0.60, 0.80, -0.40),
                (0.00, 0.40, 0.80, 0.60),
                (0.60, 0.00, 0.80, 0.60),
                (0.35, 0.00, 0.80, 0.15),
            ];
            strokes.iter().map(|&(x0, y0, x1, y1)| bar(x0, y0, x1, y1)).fold(0.0, f64::max)
        }
    }
}

fn phase(kind: PhantomKind, u: f64, v: f64) -> f64 {
    let bump = (-(u * u + v * v) / 0.6).exp();
    match kind {
        PhantomKind::DiscBlobs => 0.8 * PI * bump + 0.3 * u,
        PhantomKind::Annulus => 0.6 * PI * (u * v) + 0.5 * PI * bump,
        PhantomKind::TextLike => 0.4 * PI * (v - 0.5 * u) + 0.3 * PI * bump,
    }
}

/// Granules per support pixel.
const GRANULE_DENSITY: f64 = 0.0375;

/// Small soft discs `(cx, cy, radius, amplitude)` in support pixel
/// coordinates, drawn from a fixed stream per kind.
fn granules(kind: PhantomKind, side: usize) -> Vec<(f64, f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_616e + kind as u64);
    let n = (GRANULE_DENSITY * (side * side) as f64).round() as usize;
    (0..n)
        .map(|_| {
            let cx = rng.random::<f64>() * side as f64;
            let cy = rng.random::<f64>() * side as f64;
            let r = 1.5 + 4.0 * rng.random::<f64>();
            let a = 0.3 + 0.7 * rng.random::<f64>();
            (cx, cy, r, a)
        })
        .collect()
}

/// Phantom filling a centred `side × side` support: a 0.2 background plate
/// carrying soft-edged features and granules up to amplitude 1, with a
/// smooth phase.
pub fn make_phantom_with_side(kind: PhantomKind, window: usize, side: usize) -> Result<(ComplexField, SupportMask)> {
    let shape = Shape::square(window)?;
    let fraction = (side * side) as f64 / shape.len() as f64;
    if fraction > MAX_SUPPORT_FRACTION {
        return Err(Error::Oversampling { fraction });
    }
    let support = SupportMask::centered_rect(shape, side, side)?;
    let x0 = (window - side) / 2;
    let half = side as f64 / 2.0;
    let px = 1.0 / half;
    let grains = granules(kind, side);
    let field = ComplexField::from_fn(shape, |x, y| {
        let inside = (x0..x0 + side).contains(&x) && (x0..x0 + side).contains(&y);
        if !inside {
            return Complex64::new(0.0, 0.0);
        }
        let (lx, ly) = ((x - x0) as f64 + 0.5, (y - x0) as f64 + 0.5);
        let (u, v) = (lx / half - 1.0, ly / half - 1.0);
        let grain = grains
            .iter()
            .map(|&(cx, cy, r, a)| a * soft(r - ((lx - cx).powi(2) + (ly - cy).powi(2)).sqrt()))
            .fold(0.0, f64::max);
        let amplitude = 0.2 + 0.8 * feature_amplitude(kind, u, v, px).max(grain);
        Complex64::from_polar(amplitude, phase(kind, u, v))
    })?;
    Ok((field, support))
}

/// Phantom whose square support covers `support_fraction` of the window area.
pub fn make_phantom(kind: PhantomKind, window: usize, support_fraction: f64) -> Result<(ComplexField, SupportMask)> {
    make_phantom_with_side(kind, window, support_side(window, support_fraction)?)
}

/// Noiseless `|ρ̂|²` scaled so its mean over all pixels is `mean_photons`.
pub fn expected_intensity(field: &ComplexField, mean_photons: f64) -> Result<Vec<f64>> {
    if !(mean_photons > 0.0 && mean_photons.is_finite()) {
        return Err(Error::InvalidConfig(format!("mean photon count must be positive, got {mean_photons}")));
    }
    field.check_finite("simulated field")?;
    let intensity = dft_forward(field)?.intensity();
    let total: f64 = intensity.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroNorm("field to simulate"));
    }
    let scale = mean_photons * intensity.len() as f64 / total;
    Ok(intensity.into_iter().map(|i| i * scale).collect())
}

/// Poisson-noisy diffraction counts with the given mean photons per pixel.
pub fn simulate_intensity(field: &ComplexField, mean_photons: f64, seed: u64) -> Result<IntensityData> {
    let expected = expected_intensity(field, mean_photons)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = expected
        .iter()
        .map(|&lambda| if lambda > 0.0 { Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(lambda.round()) } else { 0.0 })
        .collect();
    IntensityData::new(field.shape(), counts)
}

/// Pixels whose centred radius is below `radius`, in FFT layout.
pub fn beamstop_mask(shape: Shape, radius: f64) -> Vec<bool> {
    let mut mask = vec![false; shape.len()];
    for n in 0..shape.height {
        let fy = Shape::signed_index(n, shape.height) as f64;
        for m in 0..shape.width {
            let fx = Shape::signed_index(m, shape.width) as f64;
            mask[shape.index(m, n)] = (fx * fx + fy * fy).sqrt() < radius;
        }
    }
    mask
}

/// Blocks a centred disc of the given radius (in pixels). Counts are kept.
pub fn apply_beamstop(data: &IntensityData, radius: f64) -> Result<IntensityData> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidConfig(format!("beam-stop radius must be non-negative, got {radius}")));
    }
    let mask = beamstop_mask(data.shape(), radius);
    if mask.iter().all(|&b| b) {
        return Err(Error::InvalidConfig(format!("beam-stop radius {radius} covers the whole frame")));
    }
    data.clone().with_blocked(&mask)
}

/// Reads an intensity container and a mask container. Mask-false pixels
/// are blocked; measured pixels are those with a true mask and positive counts.
pub fn import_raw(intensity_path: &Path, mask_path: &Path, shape: Shape) -> Result<IntensityData> {
    let intensity = read_container(intensity_path)?;
    let mask = read_container(mask_path)?;
    let counts = intensity.by_role(Role::Intensity)?;
    let allowed = mask.by_role(Role::Mask)?;
    shape.ensure_eq(counts.shape)?;
    shape.ensure_eq(allowed.shape)?;
    let blocked: Vec<bool> = allowed.as_bool()?.iter().map(|&m| !m).collect();
    IntensityData::new(shape, counts.as_real()?.to_vec())?.with_blocked(&blocked)
}
