//! The complexity functional ζ: a sum of squared central-difference gradients,
//! its spectral form through modified wavenumbers, its functional gradient,
//! and the region-restricted reduction sub-iterations.
//!
//! With periodic central differences `∇ₓρ(x) = (ρ(x+1) − ρ(x−1)) / (2Δx)` the
//! spatial sum equals `(1/WH) Σ [sin²(2πfₓΔx)/Δx² + sin²(2πf_yΔy)/Δy²]·|ρ̂|²`
//! exactly, so ζ₀ can be evaluated from raw counts.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constraints::{IntensityData, SupportMask};
use crate::error::{Error, Result};
use crate::field::{ComplexField, Shape};

/// Guard for relative comparisons.
pub const EPS: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplexityBudget {
    pub zeta0: f64,
    /// Relative matching band for ζ against ζ₀.
    pub tolerance: f64,
    /// Sub-iteration step size.
    pub tau: f64,
    /// Number of past ζ_out values used for the outside target.
    pub window: usize,
    pub max_out_subiters: usize,
    pub max_in_subiters: usize,
}

impl Default for ComplexityBudget {
    fn default() -> Self {
        ComplexityBudget {
            zeta0: 0.0,
            tolerance: 0.005,
            tau: 5e-3,
            window: 20,
            max_out_subiters: 50,
            max_in_subiters: 200,
        }
    }
}

impl ComplexityBudget {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.zeta0.is_finite() && self.zeta0 >= 0.0) {
            return bad(format!("zeta0 must be finite and non-negative, got {}", self.zeta0));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad(format!("tolerance must lie in (0, 1), got {}", self.tolerance));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.window < 2 {
            return bad(format!("window must be at least 2, got {}", self.window));
        }
        if self.max_out_subiters == 0 || self.max_in_subiters == 0 {
            return bad("sub-iteration caps must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub zeta: f64,
    pub zeta_in: f64,
    pub zeta_out: f64,
    pub zeta0: f64,
    pub out_subiters: usize,
    pub in_subiters: usize,
    /// The inside reduction stopped at its cap before reaching the band.
    pub cap_hit: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexityTrace {
    pub records: Vec<TraceRecord>,
}

impl ComplexityTrace {
    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(
            (record.zeta - (record.zeta_in + record.zeta_out)).abs() <= 1e-10 * record.zeta.abs().max(EPS)
        );
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iter,zeta,zeta_in,zeta_out,zeta0,out_sub,in_sub")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{},{}",
                r.iteration, r.zeta, r.zeta_in, r.zeta_out, r.zeta0, r.out_subiters, r.in_subiters
            )?;
        }
        Ok(())
    }
}

#[inline]
fn neighbours(i: usize, n: usize, step: usize) -> (usize, usize) {
    let step = step % n;
    ((i + step) % n, (i + n - step) % n)
}

/// Per-pixel `|∇ₓρ|² + |∇_yρ|²` handed to `sink(index, term)`.
fn for_each_term(field: &ComplexField, mut sink: impl FnMut(usize, f64)) {
    let Shape { width, height } = field.shape();
    let v = field.values();
    let (ax, ay) = (1.0 / (2.0 * field.dx()), 1.0 / (2.0 * field.dy()));
    for y in 0..height {
        let (yp, ym) = neighbours(y, height, 1);
        let (row, row_p, row_m) = (y * width, yp * width, ym * width);
        for x in 0..width {
            let (xp, xm) = neighbours(x, width, 1);
            let gx = (v[row + xp] - v[row + xm]) * ax;
            let gy = (v[row_p + x] - v[row_m + x]) * ay;
            sink(row + x, gx.norm_sqr() + gy.norm_sqr());
        }
    }
}

/// Central differences `(∇ₓρ, ∇_yρ)` for every pixel.
fn central_differences(field: &ComplexField, dx_out: &mut [Complex64], dy_out: &mut [Complex64]) {
    let Shape { width, height } = field.shape();
    let v = field.values();
    let (ax, ay) = (1.0 / (2.0 * field.dx()), 1.0 / (2.0 * field.dy()));
    for y in 0..height {
        let (yp, ym) = neighbours(y, height, 1);
        let (row, row_p, row_m) = (y * width, yp * width, ym * width);
        for x in 0..width {
            let (xp, xm) = neighbours(x, width, 1);
            dx_out[row + x] = (v[row + xp] - v[row + xm]) * ax;
            dy_out[row + x] = (v[row_p + x] - v[row_m + x]) * ay;
        }
    }
}

/// ζ over the whole field, over `S` (`inside = true`) or over its complement.
/// Gradients always use the full field.
pub fn complexity_spatial(field: &ComplexField, region: Option<&SupportMask>, inside: bool) -> Result<f64> {
    match region {
        None => {
            let mut total = 0.0;
            for_each_term(field, |_, t| total += t);
            Ok(total)
        }
        Some(support) => {
            let (zin, zout) = complexity_split(field, support)?;
            Ok(if inside { zin } else { zout })
        }
    }
}

/// `(ζ_in, ζ_out)` in one pass.
pub fn complexity_split(field: &ComplexField, support: &SupportMask) -> Result<(f64, f64)> {
    support.shape().ensure_eq(field.shape())?;
    Ok(split_unchecked(field, support.mask()))
}

pub(crate) fn split_unchecked(field: &ComplexField, mask: &[bool]) -> (f64, f64) {
    let (mut zin, mut zout) = (0.0, 0.0);
    for_each_term(field, |i, t| if mask[i] { zin += t } else { zout += t });
    (zin, zout)
}

fn wavenumber_weights(n: usize, spacing: f64) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let s = (2.0 * PI * m as f64 / n as f64).sin();
            s * s / (spacing * spacing)
        })
        .collect()
}

/// ζ from an intensity raster in FFT layout (`2πf_mΔ = 2πm/N`).
pub fn complexity_of_intensity(shape: Shape, intensity: &[f64], dx: f64, dy: f64) -> f64 {
    debug_assert_eq!(intensity.len(), shape.len());
    let wx = wavenumber_weights(shape.width, dx);
    let wy = wavenumber_weights(shape.height, dy);
    let mut total = 0.0;
    for (n, row) in intensity.chunks_exact(shape.width).enumerate() {
        for (m, &i) in row.iter().enumerate() {
            total += (wx[m] + wy[n]) * i;
        }
    }
    total / shape.len() as f64
}

/// ζ₀ computed from recorded counts; blocked pixels contribute whatever
/// counts they hold.
pub fn complexity_spectral(data: &IntensityData, shape: Shape, dx: f64, dy: f64) -> Result<f64> {
    data.shape().ensure_eq(shape)?;
    if !(dx > 0.0 && dy > 0.0) {
        return Err(Error::InvalidConfig(format!("grid spacing must be positive, got {dx}, {dy}")));
    }
    Ok(complexity_of_intensity(shape, data.counts(), dx, dy))
}

/// `∂ζ/∂ρ*`: the stride-2 negative Laplacian that is the exact adjoint of
/// the central-difference scheme.
pub fn complexity_gradient(field: &ComplexField) -> ComplexField {
    let mut out = vec![Complex64::new(0.0, 0.0); field.shape().len()];
    gradient_into(field, &mut out);
    field.like(out)
}

fn gradient_into(field: &ComplexField, out: &mut [Complex64]) {
    let Shape { width, height } = field.shape();
    let v = field.values();
    let (ax, ay) = (1.0 / (4.0 * field.dx() * field.dx()), 1.0 / (4.0 * field.dy() * field.dy()));
    for y in 0..height {
        let (yp, ym) = neighbours(y, height, 2);
        let (row, row_p, row_m) = (y * width, yp * width, ym * width);
        for x in 0..width {
            let (xp, xm) = neighbours(x, width, 2);
            let c = v[row + x];
            let lx = v[row + xp] - c * 2.0 + v[row + xm];
            let ly = v[row_p + x] - c * 2.0 + v[row_m + x];
            out[row + x] = -(lx * ax + ly * ay);
        }
    }
}

/// What a descent run measures and stops on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Measure {
    /// ζ summed over the active region only.
    Region,
    /// ζ over the whole field.
    Total,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct DescentOutcome {
    pub iters: usize,
    pub cap_hit: bool,
    pub value: f64,
}

/// Scratch buffers for repeated descents on one raster size.
#[derive(Clone, Debug)]
pub(crate) struct Descent {
    grad: Vec<Complex64>,
    dir: Vec<Complex64>,
    drho_x: Vec<Complex64>,
    drho_y: Vec<Complex64>,
    ddir_x: Vec<Complex64>,
    ddir_y: Vec<Complex64>,
}

impl Descent {
    pub fn new(shape: Shape) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); shape.len()];
        Descent {
            grad: z.clone(),
            dir: z.clone(),
            drho_x: z.clone(),
            drho_y: z.clone(),
            ddir_x: z.clone(),
            ddir_y: z,
        }
    }

    fn measure_value(&self, field: &ComplexField, active: &[bool], measure: Measure) -> f64 {
        let mut total = 0.0;
        for_each_term(field, |i, t| {
            if measure == Measure::Total || active[i] {
                total += t
            }
        });
        total
    }

    /// Sub-iterations `ρ_R ← ρ_R − t·û` on the `active` pixels, where `û` is
    /// the full-field gradient masked to the region and normalized there.
    /// The nominal step is `t = τ‖ρ_R‖₂`; because ζ is quadratic along `û`,
    /// the step is shortened to the line minimum (so every sub-iteration
    /// descends) and to the point where the measure reaches `land_at`.
    /// Stops once the measure is `≤ stop_at`, the cap is hit, or no descent
    /// direction remains.
    pub fn run(
        &mut self,
        field: &mut ComplexField,
        active: &[bool],
        measure: Measure,
        tau: f64,
        max_iters: usize,
        stop_at: f64,
        land_at: f64,
    ) -> DescentOutcome {
        let mut value = self.measure_value(field, active, measure);
        let mut iters = 0;
        while value > stop_at {
            if iters == max_iters {
                return DescentOutcome { iters, cap_hit: true, value };
            }
            gradient_into(field, &mut self.grad);
            let mut grad_norm_sq = 0.0;
            let mut rho_norm_sq = 0.0;
            for (i, &a) in active.iter().enumerate() {
                if a {
                    grad_norm_sq += self.grad[i].norm_sqr();
                    rho_norm_sq += field.values()[i].norm_sqr();
                }
            }
            let grad_norm = grad_norm_sq.sqrt();
            let nominal = tau * rho_norm_sq.sqrt();
            if grad_norm <= EPS || nominal <= 0.0 || !grad_norm.is_finite() {
                break;
            }
            let inv = 1.0 / grad_norm;
            for (i, &a) in active.iter().enumerate() {
                self.dir[i] = if a { self.grad[i] * inv } else { Complex64::new(0.0, 0.0) };
            }

            central_differences(field, &mut self.drho_x, &mut self.drho_y);
            let dir_field = field.like(std::mem::take(&mut self.dir));
            central_differences(&dir_field, &mut self.ddir_x, &mut self.ddir_y);
            self.dir = dir_field.into_values();

            // measure(t) = value − 2·t·slope + t²·curv
            let (mut slope, mut curv) = (0.0, 0.0);
            for i in 0..active.len() {
                if measure == Measure::Total || active[i] {
                    slope += (self.drho_x[i].conj() * self.ddir_x[i]).re + (self.drho_y[i].conj() * self.ddir_y[i]).re;
                    curv += self.ddir_x[i].norm_sqr() + self.ddir_y[i].norm_sqr();
                }
            }
            if slope <= 0.0 {
                break;
            }
            let mut step = nominal;
            if curv > 0.0 {
                step = step.min(slope / curv);
            }
            let excess = value - land_at;
            let mut landed = false;
            if excess > 0.0 {
                let disc = slope * slope - curv * excess;
                if disc >= 0.0 {
                    let hit = excess / (slope + disc.sqrt());
                    if hit <= step {
                        step = hit;
                        landed = true;
                    }
                }
            }
            if step <= 0.0 {
                break;
            }
            let values = field.values_mut();
            for (i, &a) in active.iter().enumerate() {
                if a {
                    values[i] -= self.dir[i] * step;
                }
            }
            iters += 1;
            value = if landed { land_at } else { value - 2.0 * step * slope + step * step * curv };
            if landed {
                break;
            }
        }
        // Re-evaluate directly so rounding in the quadratic bookkeeping never leaks out.
        let value = self.measure_value(field, active, measure);
        DescentOutcome { iters, cap_hit: false, value }
    }
}

/// Drives the region's ζ (inside or outside `S`) down to `target_zeta`.
/// Pixels outside the region are never modified. Returns the new field and
/// the number of sub-iterations used.
pub fn reduce_complexity_region(
    field: &ComplexField,
    support: &SupportMask,
    inside: bool,
    budget: &ComplexityBudget,
    target_zeta: f64,
) -> Result<(ComplexField, usize)> {
    support.shape().ensure_eq(field.shape())?;
    budget.validate()?;
    if !(target_zeta.is_finite() && target_zeta >= 0.0) {
        return Err(Error::InvalidConfig(format!("target ζ must be non-negative, got {target_zeta}")));
    }
    let active: Vec<bool> = if inside { support.mask().to_vec() } else { support.complement() };
    let cap = if inside { budget.max_in_subiters } else { budget.max_out_subiters };
    let mut out = field.clone();
    let outcome =
        Descent::new(field.shape()).run(&mut out, &active, Measure::Region, budget.tau, cap, target_zeta, target_zeta);
    Ok((out, outcome.iters))
}
