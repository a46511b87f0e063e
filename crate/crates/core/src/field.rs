//! Complex rasters and the 2-D discrete Fourier transform.
//!
//! Convention: the forward transform is unnormalized and the inverse carries
//! the `1/(W·H)` factor, so `Σ|ρ|² = Σ|ρ̂|² / (W·H)`. Spectra use the standard
//! FFT layout with DC at index `(0, 0)`; the frequency of column `m` is
//! `m / (W·dx)` for `m < W/2` and `(m - W) / (W·dx)` above.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidField(format!(
                "raster must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(Shape { width, height })
    }

    pub fn square(side: usize) -> Result<Self> {
        Shape::new(side, side)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Signed frequency index of column `m` (or row) in FFT layout.
    #[inline]
    pub fn signed_index(m: usize, n: usize) -> isize {
        if m < n.div_ceil(2) {
            m as isize
        } else {
            m as isize - n as isize
        }
    }

    /// `ShapeMismatch` unless the two shapes agree.
    pub fn ensure_eq(&self, other: Shape) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected: *self, found: other })
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

fn check_spacing(dx: f64, dy: f64) -> Result<()> {
    if !(dx.is_finite() && dx > 0.0 && dy.is_finite() && dy > 0.0) {
        return Err(Error::InvalidField(format!("grid spacing must be positive, got dx={dx}, dy={dy}")));
    }
    Ok(())
}

pub(crate) fn first_non_finite(values: &[Complex64]) -> Option<usize> {
    values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite()))
}

/// A complex object-plane raster, row-major, with grid spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    shape: Shape,
    dx: f64,
    dy: f64,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(width: usize, height: usize, values: Vec<Complex64>) -> Result<Self> {
        Self::from_values(Shape::new(width, height)?, values)
    }

    pub fn from_values(shape: Shape, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::InvalidField(format!(
                "{} values supplied for a {shape} raster",
                values.len()
            )));
        }
        if let Some(index) = first_non_finite(&values) {
            return Err(Error::NonFinite { index, context: "field construction" });
        }
        Ok(ComplexField { shape, dx: 1.0, dy: 1.0, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        ComplexField { shape, dx: 1.0, dy: 1.0, values: vec![Complex64::new(0.0, 0.0); shape.len()] }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                values.push(f(x, y));
            }
        }
        Self::from_values(shape, values)
    }

    pub fn with_spacing(mut self, dx: f64, dy: f64) -> Result<Self> {
        check_spacing(dx, dy)?;
        self.dx = dx;
        self.dy = dy;
        Ok(self)
    }

    /// Builds a field sharing this field's shape and spacing. Crate-internal:
    /// callers are responsible for finiteness.
    pub(crate) fn like(&self, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), self.shape.len());
        ComplexField { shape: self.shape, dx: self.dx, dy: self.dy, values }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.shape.width
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.shape.height
    }
    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }
    #[inline]
    pub fn dy(&self) -> f64 {
        self.dy
    }
    #[inline]
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    #[inline]
    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[self.shape.index(x, y)]
    }

    /// Σ|ρ|².
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        match first_non_finite(&self.values) {
            Some(index) => Err(Error::NonFinite { index, context }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        self.like(self.values.iter().map(|v| v * factor).collect())
    }

    /// The twin image `ρ*(−r)`, with coordinates inverted about the window
    /// centre (`x → W−1−x`), so a centred support maps onto itself.
    pub fn twin(&self) -> Self {
        let Shape { width, height } = self.shape;
        let mut out = Vec::with_capacity(self.values.len());
        for y in 0..height {
            for x in 0..width {
                out.push(self.get(width - 1 - x, height - 1 - y).conj());
            }
        }
        self.like(out)
    }

    /// Cyclic shift: `out(x, y) = ρ(x + sx, y + sy)` (indices modulo the shape).
    pub fn shifted(&self, sx: isize, sy: isize) -> Self {
        let Shape { width, height } = self.shape;
        let mut out = Vec::with_capacity(self.values.len());
        for y in 0..height {
            let ys = (y as isize + sy).rem_euclid(height as isize) as usize;
            for x in 0..width {
                let xs = (x as isize + sx).rem_euclid(width as isize) as usize;
                out.push(self.get(xs, ys));
            }
        }
        self.like(out)
    }
}

/// Fourier coefficients of a [`ComplexField`], DC at `(0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    shape: Shape,
    dx: f64,
    dy: f64,
    values: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_values(shape: Shape, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::InvalidField(format!(
                "{} coefficients supplied for a {shape} spectrum",
                values.len()
            )));
        }
        if let Some(index) = first_non_finite(&values) {
            return Err(Error::NonFinite { index, context: "spectrum construction" });
        }
        Ok(Spectrum { shape, dx: 1.0, dy: 1.0, values })
    }

    pub fn with_spacing(mut self, dx: f64, dy: f64) -> Result<Self> {
        check_spacing(dx, dy)?;
        self.dx = dx;
        self.dy = dy;
        Ok(self)
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }
    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }
    #[inline]
    pub fn dy(&self) -> f64 {
        self.dy
    }
    #[inline]
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.values[self.shape.index(m, n)]
    }

    /// `|ρ̂|²` per coefficient.
    pub fn intensity(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Spatial frequency `(f_x, f_y)` of coefficient `(m, n)` in cycles per unit length.
    pub fn frequency(&self, m: usize, n: usize) -> (f64, f64) {
        let Shape { width, height } = self.shape;
        (
            Shape::signed_index(m, width) as f64 / (width as f64 * self.dx),
            Shape::signed_index(n, height) as f64 / (height as f64 * self.dy),
        )
    }
}

/// Cached row/column plans for one raster shape.
pub struct Fft2 {
    shape: Shape,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("shape", &self.shape).finish_non_exhaustive()
    }
}

impl Clone for Fft2 {
    fn clone(&self) -> Self {
        Fft2 {
            shape: self.shape,
            row_fwd: Arc::clone(&self.row_fwd),
            row_inv: Arc::clone(&self.row_inv),
            col_fwd: Arc::clone(&self.col_fwd),
            col_inv: Arc::clone(&self.col_inv),
            scratch: self.scratch.clone(),
            transposed: self.transposed.clone(),
        }
    }
}

impl Fft2 {
    pub fn new(shape: Shape) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(shape.width);
        let row_inv = planner.plan_fft_inverse(shape.width);
        let col_fwd = planner.plan_fft_forward(shape.height);
        let col_inv = planner.plan_fft_inverse(shape.height);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Fft2 {
            shape,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            transposed: vec![Complex64::new(0.0, 0.0); shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Unnormalized forward transform in place.
    pub fn forward_in_place(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Inverse transform in place, including the `1/(W·H)` factor.
    pub fn inverse_in_place(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
        let norm = 1.0 / self.shape.len() as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.shape.len(), "buffer length does not match FFT shape");
        let Shape { width, height } = self.shape;
        let (rows, cols) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        rows.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.transposed, width, height);
        cols.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, data, height, width);
    }

    pub fn forward(&mut self, field: &ComplexField) -> Spectrum {
        self.shape.ensure_eq(field.shape()).expect("field shape does not match FFT plan");
        let mut values = field.values.clone();
        self.forward_in_place(&mut values);
        Spectrum { shape: field.shape, dx: field.dx, dy: field.dy, values }
    }

    pub fn inverse(&mut self, spectrum: &Spectrum) -> ComplexField {
        self.shape.ensure_eq(spectrum.shape()).expect("spectrum shape does not match FFT plan");
        let mut values = spectrum.values.clone();
        self.inverse_in_place(&mut values);
        ComplexField { shape: spectrum.shape, dx: spectrum.dx, dy: spectrum.dy, values }
    }
}

/// `dst` (cols × rows) ← transpose of `src` (rows × cols, row length `cols`).
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const BLOCK: usize = 32;
    for yb in (0..rows).step_by(BLOCK) {
        for xb in (0..cols).step_by(BLOCK) {
            for y in yb..(yb + BLOCK).min(rows) {
                for x in xb..(xb + BLOCK).min(cols) {
                    dst[x * rows + y] = src[y * cols + x];
                }
            }
        }
    }
}

pub fn dft_forward(field: &ComplexField) -> Result<Spectrum> {
    field.check_finite("dft_forward input")?;
    Ok(Fft2::new(field.shape()).forward(field))
}

pub fn dft_inverse(spectrum: &Spectrum) -> Result<ComplexField> {
    if let Some(index) = first_non_finite(spectrum.values()) {
        return Err(Error::NonFinite { index, context: "dft_inverse input" });
    }
    Ok(Fft2::new(spectrum.shape()).inverse(spectrum))
}
