//! Object- and Fourier-domain constraint sets with their projections and
//! reflections.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Fft2, Shape};

/// Photon counts `I(u)` in FFT layout plus the set of pixels on which the
/// Fourier modulus constraint applies.
///
/// A pixel is unmeasured (in `Z`) when it recorded zero photons or when it is
/// blocked by the detector mask / beam stop. Blocked pixels keep their counts
/// for reference only.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityData {
    shape: Shape,
    counts: Vec<f64>,
    sqrt_counts: Vec<f64>,
    measured: Vec<bool>,
    blocked: Vec<bool>,
}

impl IntensityData {
    pub fn new(shape: Shape, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != shape.len() {
            return Err(Error::InvalidData(format!("{} counts supplied for a {shape} frame", counts.len())));
        }
        if let Some((i, v)) = counts.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidData(format!("count {v} at pixel {i} is negative or non-finite")));
        }
        let sqrt_counts = counts.iter().map(|c| c.sqrt()).collect();
        let measured = counts.iter().map(|&c| c > 0.0).collect();
        Ok(IntensityData { shape, counts, sqrt_counts, measured, blocked: vec![false; shape.len()] })
    }

    /// Marks additional pixels as blocked. Blocked pixels are never measured.
    pub fn with_blocked(mut self, blocked: &[bool]) -> Result<Self> {
        if blocked.len() != self.shape.len() {
            return Err(Error::InvalidData(format!("blocked mask has {} pixels, frame {}", blocked.len(), self.shape)));
        }
        for (i, &b) in blocked.iter().enumerate() {
            if b {
                self.blocked[i] = true;
                self.measured[i] = false;
            }
        }
        Ok(self)
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }
    #[inline]
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
    #[inline]
    pub fn sqrt_counts(&self) -> &[f64] {
        &self.sqrt_counts
    }
    #[inline]
    pub fn measured(&self) -> &[bool] {
        &self.measured
    }
    #[inline]
    pub fn blocked(&self) -> &[bool] {
        &self.blocked
    }

    pub fn has_blocked(&self) -> bool {
        self.blocked.iter().any(|&b| b)
    }

    pub fn measured_count(&self) -> usize {
        self.measured.iter().filter(|&&m| m).count()
    }

    /// Fraction of pixels in `Z` (zero counts or blocked).
    pub fn unmeasured_fraction(&self) -> f64 {
        1.0 - self.measured_count() as f64 / self.shape.len() as f64
    }

    pub fn zero_count_fraction(&self) -> f64 {
        self.counts.iter().filter(|&&c| c == 0.0).count() as f64 / self.shape.len() as f64
    }

    /// Intensity with blocked pixels replaced by `current` (typically the
    /// iterate's `|ρ̂|²`); all other pixels keep the recorded counts.
    pub fn filled_intensity(&self, current: &[f64]) -> Vec<f64> {
        debug_assert_eq!(current.len(), self.counts.len());
        self.counts
            .iter()
            .zip(&self.blocked)
            .zip(current)
            .map(|((&c, &b), &cur)| if b { cur } else { c })
            .collect()
    }

    /// Applies the Fourier modulus constraint to a spectrum in place.
    /// Unmeasured coefficients pass through untouched; a measured coefficient
    /// of zero modulus becomes `√I` with phase 0.
    pub fn project_spectrum(&self, spectrum: &mut [Complex64]) {
        debug_assert_eq!(spectrum.len(), self.counts.len());
        for ((v, &amp), &m) in spectrum.iter_mut().zip(&self.sqrt_counts).zip(&self.measured) {
            if m {
                let modulus = v.norm();
                *v = if modulus > 0.0 { *v * (amp / modulus) } else { Complex64::new(amp, 0.0) };
            }
        }
    }
}

/// The object support `S`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportMask {
    shape: Shape,
    mask: Vec<bool>,
}

impl SupportMask {
    pub fn new(shape: Shape, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != shape.len() {
            return Err(Error::InvalidSupport(format!("{} pixels supplied for a {shape} mask", mask.len())));
        }
        let inside = mask.iter().filter(|&&m| m).count();
        if inside == 0 {
            return Err(Error::InvalidSupport("support is empty".into()));
        }
        if inside == mask.len() {
            return Err(Error::InvalidSupport("support covers the whole window".into()));
        }
        Ok(SupportMask { shape, mask })
    }

    /// A `width × height` rectangle centred so that the window flip
    /// `x → W−1−x` maps it onto itself (requires matching parity).
    pub fn centered_rect(shape: Shape, width: usize, height: usize) -> Result<Self> {
        if width > shape.width || height > shape.height {
            return Err(Error::InvalidSupport(format!("{width}x{height} support exceeds {shape} window")));
        }
        let x0 = (shape.width - width) / 2;
        let y0 = (shape.height - height) / 2;
        let mut mask = vec![false; shape.len()];
        for y in y0..y0 + height {
            for x in x0..x0 + width {
                mask[shape.index(x, y)] = true;
            }
        }
        SupportMask::new(shape, mask)
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }
    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.shape.len() as f64
    }

    pub fn complement(&self) -> Vec<bool> {
        self.mask.iter().map(|m| !m).collect()
    }
}

/// Reusable projector pair bound to one data set and support.
#[derive(Debug, Clone)]
pub struct Projectors<'a> {
    data: &'a IntensityData,
    support: &'a SupportMask,
    fft: Fft2,
}

impl<'a> Projectors<'a> {
    pub fn new(data: &'a IntensityData, support: &'a SupportMask) -> Result<Self> {
        data.shape().ensure_eq(support.shape())?;
        Ok(Projectors { data, support, fft: Fft2::new(data.shape()), })
    }

    pub fn data(&self) -> &'a IntensityData {
        self.data
    }

    pub fn support_mask(&self) -> &'a SupportMask {
        self.support
    }

    pub fn fft(&mut self) -> &mut Fft2 {
        &mut self.fft
    }

    /// `P_M ρ`.
    pub fn magnitude(&mut self, field: &ComplexField) -> ComplexField {
        let mut values = field.values().to_vec();
        self.fft.forward_in_place(&mut values);
        self.data.project_spectrum(&mut values);
        self.fft.inverse_in_place(&mut values);
        field.like(values)
    }

    /// `P_S ρ`.
    pub fn support(&self, field: &ComplexField) -> ComplexField {
        support_projection(field, self.support)
    }

    /// `|ρ̂|²` of a field.
    pub fn intensity_of(&mut self, field: &ComplexField) -> Vec<f64> {
        let mut values = field.values().to_vec();
        self.fft.forward_in_place(&mut values);
        values.iter().map(|v| v.norm_sqr()).collect()
    }
}

fn support_projection(field: &ComplexField, support: &SupportMask) -> ComplexField {
    let zero = Complex64::new(0.0, 0.0);
    field.like(field.values().iter().zip(support.mask()).map(|(&v, &s)| if s { v } else { zero }).collect())
}

pub fn project_magnitude(field: &ComplexField, data: &IntensityData) -> Result<ComplexField> {
    data.shape().ensure_eq(field.shape())?;
    let mut fft = Fft2::new(field.shape());
    let mut values = field.values().to_vec();
    fft.forward_in_place(&mut values);
    data.project_spectrum(&mut values);
    fft.inverse_in_place(&mut values);
    Ok(field.like(values))
}

pub fn project_support(field: &ComplexField, support: &SupportMask) -> Result<ComplexField> {
    support.shape().ensure_eq(field.shape())?;
    Ok(support_projection(field, support))
}

/// `2·P(ρ) − ρ`, given `P(ρ)` and `ρ`.
pub fn reflect(projected: &ComplexField, input: &ComplexField) -> Result<ComplexField> {
    relaxed_reflect(projected, input, 1.0)
}

/// `(1+γ)·P(ρ) − γ·ρ`, given `P(ρ)` and `ρ`.
pub fn relaxed_reflect(projected: &ComplexField, input: &ComplexField, gamma: f64) -> Result<ComplexField> {
    projected.shape().ensure_eq(input.shape())?;
    if !gamma.is_finite() {
        return Err(Error::InvalidConfig(format!("relaxation γ = {gamma} is not finite")));
    }
    Ok(relaxed_unchecked(projected, input, gamma))
}

pub(crate) fn relaxed_unchecked(projected: &ComplexField, input: &ComplexField, gamma: f64) -> ComplexField {
    let a = 1.0 + gamma;
    projected.like(projected.values().iter().zip(input.values()).map(|(p, r)| p * a - r * gamma).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::test_support::random_field;
    use crate::field::{dft_forward, Spectrum};
    use crate::field::dft_inverse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(shape: Shape, seed: u64, zero_prob: f64) -> IntensityData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = (0..shape.len())
            .map(|_| if rng.random::<f64>() < zero_prob { 0.0 } else { rng.random_range(0.1..50.0) })
            .collect();
        IntensityData::new(shape, counts).unwrap()
    }

    fn random_support(shape: Shape, seed: u64) -> SupportMask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask: Vec<bool> = (0..shape.len()).map(|_| rng.random::<bool>()).collect();
        mask[0] = true;
        mask[1] = false;
        SupportMask::new(shape, mask).unwrap()
    }

    #[test]
    fn intensity_validation_and_masks() {
        let shape = Shape::new(2, 2).unwrap();
        let err = IntensityData::new(shape, vec![1.0, -2.0, 0.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("pixel 1"));
        let data = IntensityData::new(shape, vec![4.0, 0.0, 9.0, 1.0]).unwrap();
        assert_eq!(data.measured(), &[true, false, true, true]);
        assert_eq!(data.sqrt_counts(), &[2.0, 0.0, 3.0, 1.0]);
        let blocked = data.with_blocked(&[false, false, true, false]).unwrap();
        assert_eq!(blocked.measured(), &[true, false, false, true]);
        assert_eq!(blocked.counts()[2], 9.0);
        assert!(blocked.has_blocked());
        assert_eq!(blocked.filled_intensity(&[7.0; 4]), vec![4.0, 0.0, 7.0, 1.0]);
    }

    #[test]
    fn sqrt_counts_square_back() {
        let data = random_data(Shape::new(9, 7).unwrap(), 1, 0.2);
        for (s, c) in data.sqrt_counts().iter().zip(data.counts()) {
            assert!((s * s - c).abs() <= 1e-12 * c.max(1.0));
        }
    }

    #[test]
    fn support_mask_must_be_strict_subset() {
        let shape = Shape::new(4, 4).unwrap();
        assert!(SupportMask::new(shape, vec![false; 16]).is_err());
        assert!(SupportMask::new(shape, vec![true; 16]).is_err());
        let s = SupportMask::centered_rect(Shape::new(10, 8).unwrap(), 4, 2).unwrap();
        assert_eq!(s.count(), 8);
        assert!(s.contains(3 * 10 + 3) && s.contains(4 * 10 + 6));
        assert!(!s.contains(3 * 10 + 7));
    }

    #[test]
    fn magnitude_projection_fixed_point() {
        let field = random_field(8, 8, 2);
        let exact = dft_forward(&field).unwrap().intensity();
        let data = IntensityData::new(field.shape(), exact).unwrap();
        let out = project_magnitude(&field, &data).unwrap();
        let scale = field.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in out.values().iter().zip(field.values()) {
            assert!((a - b).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_field_gets_zero_phase() {
        let shape = Shape::new(4, 4).unwrap();
        let data = IntensityData::new(shape, vec![1.0; 16]).unwrap();
        let out = project_magnitude(&ComplexField::zeros(shape), &data).unwrap();
        let spec = dft_forward(&out).unwrap();
        for v in spec.values() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn magnitude_projection_per_pixel_oracle() {
        let field = random_field(8, 8, 4);
        let data = random_data(field.shape(), 5, 0.3);
        let mut spectrum = dft_forward(&field).unwrap().values().to_vec();
        let original = spectrum.clone();
        data.project_spectrum(&mut spectrum);
        for i in 0..64 {
            if data.measured()[i] {
                let expected = original[i] / original[i].norm() * data.counts()[i].sqrt();
                assert!((spectrum[i] - expected).norm() <= 1e-12 * expected.norm());
                assert!((spectrum[i].norm() - data.sqrt_counts()[i]).abs() <= 1e-12 * data.sqrt_counts()[i]);
            } else {
                assert_eq!(spectrum[i].re.to_bits(), original[i].re.to_bits());
                assert_eq!(spectrum[i].im.to_bits(), original[i].im.to_bits());
            }
        }
        // Same thing through the public object-space operator.
        let out = project_magnitude(&field, &data).unwrap();
        let expected = dft_inverse(&Spectrum::from_values(field.shape(), spectrum).unwrap()).unwrap();
        for (a, b) in out.values().iter().zip(expected.values()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn magnitude_projection_idempotent_and_energy_preserving() {
        let field = random_field(12, 10, 8);
        let data = random_data(field.shape(), 9, 0.25);
        let once = project_magnitude(&field, &data).unwrap();
        let twice = project_magnitude(&once, &data).unwrap();
        let s1 = dft_forward(&once).unwrap();
        let s2 = dft_forward(&twice).unwrap();
        let mut energy = 0.0;
        let mut target = 0.0;
        for i in 0..field.shape().len() {
            if data.measured()[i] {
                assert!((s1.values()[i].norm() - s2.values()[i].norm()).abs() <= 1e-10 * data.sqrt_counts()[i]);
                energy += s1.values()[i].norm_sqr();
                target += data.counts()[i];
            }
        }
        assert!((energy - target).abs() <= 1e-10 * target);
    }

    #[test]
    fn support_projection_properties() {
        let field = random_field(8, 8, 10);
        let support = random_support(field.shape(), 11);
        let once = project_support(&field, &support).unwrap();
        assert_eq!(project_support(&once, &support).unwrap(), once);
        let outside: f64 = once
            .values()
            .iter()
            .zip(support.mask())
            .filter(|(_, &s)| !s)
            .map(|(v, _)| v.norm_sqr())
            .sum();
        assert_eq!(outside, 0.0);
        // Field already confined to S is unchanged.
        assert_eq!(project_support(&once, &support).unwrap(), once);
    }

    #[test]
    fn reflections() {
        let field = random_field(8, 8, 12);
        let support = random_support(field.shape(), 13);
        let ps = project_support(&field, &support).unwrap();
        let r = reflect(&ps, &field).unwrap();
        for ((a, p), f) in r.values().iter().zip(ps.values()).zip(field.values()) {
            assert!((a - (2.0 * p - f)).norm() < 1e-14);
        }
        let rr = reflect(&project_support(&r, &support).unwrap(), &r).unwrap();
        assert_eq!(rr, field);

        // At a fixed point of P the reflection is the identity.
        let fixed = reflect(&ps, &ps).unwrap();
        assert_eq!(fixed, ps);
    }

    #[test]
    fn relaxed_reflection_limits() {
        let field = random_field(6, 6, 14);
        let data = random_data(field.shape(), 15, 0.1);
        let pm = project_magnitude(&field, &data).unwrap();
        assert_eq!(relaxed_reflect(&pm, &field, 1.0).unwrap(), reflect(&pm, &field).unwrap());
        assert_eq!(relaxed_reflect(&pm, &field, 0.0).unwrap(), pm);
        let g = relaxed_reflect(&pm, &field, 2.5).unwrap();
        for ((a, p), f) in g.values().iter().zip(pm.values()).zip(field.values()) {
            let expected = Complex64::new(3.5 * p.re - 2.5 * f.re, 3.5 * p.im - 2.5 * f.im);
            assert!((a - expected).norm() < 1e-14);
        }
        assert!(relaxed_reflect(&pm, &field, f64::NAN).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = random_field(4, 4, 1);
        let b = random_field(4, 6, 1);
        let data = random_data(b.shape(), 2, 0.0);
        assert!(matches!(project_magnitude(&a, &data), Err(Error::ShapeMismatch { .. })));
        assert!(reflect(&a, &b).is_err());
    }
}
