//! Reconstruction quality: PRTF maps and radial curves, 1/e resolution,
//! and the real- and Fourier-space error metrics.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constraints::IntensityData;
use crate::error::{Error, Result};
use crate::field::{dft_forward, ComplexField, Shape};

/// PRTF level that defines the resolution cut-off.
pub const PRTF_THRESHOLD: f64 = 1.0 / std::f64::consts::E;

/// Per-pixel PRTF in FFT layout with its validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PrtfMap {
    pub shape: Shape,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Radially averaged PRTF. `values[k]` is `None` for empty bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrtfCurve {
    /// Bin centres in cycles per pixel.
    pub bins: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl PrtfCurve {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// `bin_freq,prtf,count`; gap bins leave the `prtf` column empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_freq,prtf,count")?;
        for ((f, v), n) in self.bins.iter().zip(&self.values).zip(&self.counts) {
            match v {
                Some(v) => writeln!(out, "{f:.17e},{v:.17e},{n}")?,
                None => writeln!(out, "{f:.17e},,{n}")?,
            }
        }
        Ok(())
    }
}

/// Experimental geometry for converting pixels to physical length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub wavelength: f64,
    pub distance: f64,
    pub detector_pixel: f64,
    /// Detector pixels across the frame.
    pub pixels: usize,
}

impl Geometry {
    /// Real-space pixel size `λz / (Δx_det N)`.
    pub fn object_pixel(&self) -> f64 {
        self.wavelength * self.distance / (self.detector_pixel * self.pixels as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub pixels: f64,
    /// Crossing frequency in cycles per pixel; `None` when the curve stays above 1/e.
    pub frequency: Option<f64>,
    pub no_crossing: bool,
    /// `pixels` in the geometry's length unit.
    pub physical: Option<f64>,
}

/// `|ρ̂_avg| / √I` on measured pixels with non-zero counts.
pub fn prtf_map(average: &ComplexField, data: &IntensityData) -> Result<PrtfMap> {
    data.shape().ensure_eq(average.shape())?;
    let spectrum = dft_forward(average)?;
    let mut values = vec![0.0; data.shape().len()];
    let mut valid = vec![false; data.shape().len()];
    for (i, v) in spectrum.values().iter().enumerate() {
        let s = data.sqrt_counts()[i];
        if data.measured()[i] && s > 0.0 {
            values[i] = v.norm() / s;
            valid[i] = true;
        }
    }
    Ok(PrtfMap { shape: data.shape(), values, valid })
}

/// Radial bin of FFT-layout pixel `(m, n)`: the rounded distance from DC
/// measured in units of `1/max(W, H)` cycles per pixel.
pub fn radial_bin(shape: Shape, m: usize, n: usize) -> usize {
    let scale = shape.width.max(shape.height) as f64;
    let fx = Shape::signed_index(m, shape.width) as f64 / shape.width as f64;
    let fy = Shape::signed_index(n, shape.height) as f64 / shape.height as f64;
    ((fx * fx + fy * fy).sqrt() * scale).round() as usize
}

pub fn prtf_radial(map: &PrtfMap) -> PrtfCurve {
    let shape = map.shape;
    let scale = shape.width.max(shape.height) as f64;
    let n_bins = radial_bin(shape, shape.width / 2, shape.height / 2) + 1;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for n in 0..shape.height {
        for m in 0..shape.width {
            let i = shape.index(m, n);
            if map.valid[i] {
                let k = radial_bin(shape, m, n);
                sums[k] += map.values[i];
                counts[k] += 1;
            }
        }
    }
    PrtfCurve {
        bins: (0..n_bins).map(|k| k as f64 / scale).collect(),
        values: sums.iter().zip(&counts).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect(),
        counts,
    }
}

/// Lowest frequency at which the curve drops below 1/e, interpolating
/// linearly between adjacent non-empty bins. A curve that starts below the
/// threshold crosses at its first non-empty bin.
pub fn resolution_from_prtf(curve: &PrtfCurve, geometry: Option<&Geometry>) -> Result<Resolution> {
    let points: Vec<(f64, f64)> = curve.bins.iter().zip(&curve.values).filter_map(|(&f, v)| v.map(|v| (f, v))).collect();
    if points.is_empty() {
        return Err(Error::InvalidData("PRTF curve has no populated bins".into()));
    }
    let mut crossing = None;
    if points[0].1 < PRTF_THRESHOLD {
        crossing = Some(points[0].0);
    } else {
        for pair in points.windows(2) {
            let ((f0, v0), (f1, v1)) = (pair[0], pair[1]);
            if v1 < PRTF_THRESHOLD {
                crossing = Some(f0 + (v0 - PRTF_THRESHOLD) / (v0 - v1) * (f1 - f0));
                break;
            }
        }
    }
    // Crossings beyond the axial band limit (0.5 cycles/pixel) are reported
    // at the band limit, same as a curve that never crosses.
    let pixels = match crossing {
        Some(f) => (1.0 / f).max(2.0),
        None => 2.0,
    };
    Ok(Resolution {
        pixels,
        frequency: crossing,
        no_crossing: crossing.is_none(),
        physical: geometry.map(|g| pixels * g.object_pixel()),
    })
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

/// `‖ρ − c·est‖² / ‖ρ‖²` with the optimal complex scale `c`.
fn relative_residual(est: &[Complex64], truth: &[Complex64], truth_norm: f64) -> f64 {
    let est_norm = norm_sqr(est);
    if est_norm == 0.0 {
        return 1.0;
    }
    let c = inner(est, truth) / est_norm;
    est.iter().zip(truth).map(|(e, t)| (t - e * c).norm_sqr()).sum::<f64>() / truth_norm
}

/// Real-space error: the smaller of the estimate's and its twin's relative
/// residual after optimal scaling and global phase, square-rooted.
pub fn error_real(estimate: &ComplexField, truth: &ComplexField) -> Result<f64> {
    truth.shape().ensure_eq(estimate.shape())?;
    let truth_norm = truth.energy();
    if truth_norm == 0.0 {
        return Err(Error::ZeroNorm("ground-truth field"));
    }
    let direct = relative_residual(estimate.values(), truth.values(), truth_norm);
    let twin = relative_residual(estimate.twin().values(), truth.values(), truth_norm);
    Ok(direct.min(twin).sqrt())
}

/// `‖√I − |ρ̂|‖ / ‖√I‖` over measured pixels, from the estimate's `|ρ̂|²`.
pub fn fourier_error_from_intensity(intensity: &[f64], data: &IntensityData) -> Result<f64> {
    if intensity.len() != data.shape().len() {
        return Err(Error::InvalidData(format!("{} intensities for a {} frame", intensity.len(), data.shape())));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((&cur, &s), &m) in intensity.iter().zip(data.sqrt_counts()).zip(data.measured()) {
        if m {
            num += (s - cur.sqrt()).powi(2);
            den += s * s;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroNorm("no measured pixels"));
    }
    Ok((num / den).sqrt())
}

pub fn error_fourier(estimate: &ComplexField, data: &IntensityData) -> Result<f64> {
    data.shape().ensure_eq(estimate.shape())?;
    fourier_error_from_intensity(&dft_forward(estimate)?.intensity(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::test_support::random_field;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact_data(field: &ComplexField) -> IntensityData {
        IntensityData::new(field.shape(), dft_forward(field).unwrap().intensity()).unwrap()
    }

    fn curve(bins: &[f64], values: &[f64]) -> PrtfCurve {
        PrtfCurve { bins: bins.to_vec(), values: values.iter().map(|&v| Some(v)).collect(), counts: vec![1; bins.len()] }
    }

    #[test]
    fn prtf_of_constraint_satisfying_average_is_one() {
        let field = random_field(12, 10, 1);
        let data = exact_data(&field);
        let map = prtf_map(&field, &data).unwrap();
        for (v, &ok) in map.values.iter().zip(&map.valid) {
            assert!(ok);
            assert!((v - 1.0).abs() < 1e-12);
        }
        let half = prtf_map(&field.scaled(Complex64::new(0.5, 0.0)), &data).unwrap();
        assert!(half.values.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn prtf_map_matches_per_pixel_division() {
        let avg = random_field(9, 9, 2);
        let other = random_field(9, 9, 3);
        let mut counts = dft_forward(&other).unwrap().intensity();
        counts[5] = 0.0;
        let data = IntensityData::new(avg.shape(), counts.clone()).unwrap();
        let map = prtf_map(&avg, &data).unwrap();
        let spec = dft_forward(&avg).unwrap();
        for i in 0..81 {
            if i == 5 {
                assert!(!map.valid[i]);
            } else {
                let expected = spec.values()[i].norm() / counts[i].sqrt();
                assert!((map.values[i] - expected).abs() <= 1e-14 * expected.max(1.0));
            }
        }
    }

    #[test]
    fn radial_bins_on_constant_and_step_maps() {
        let shape = Shape::square(64).unwrap();
        let ones = PrtfMap { shape, values: vec![1.0; 4096], valid: vec![true; 4096] };
        let c = prtf_radial(&ones);
        assert_eq!(c.bins.len(), 46);
        assert!(c.values.iter().flatten().all(|&v| v == 1.0));
        assert!(c.bins.windows(2).all(|w| w[1] > w[0]));
        assert!(*c.bins.last().unwrap() + 0.5 / 64.0 >= 0.5 * 2f64.sqrt());
        assert_eq!(c.counts.iter().sum::<usize>(), 4096);

        let step = PrtfMap {
            shape,
            values: (0..4096)
                .map(|i| {
                    let (m, n) = (i % 64, i / 64);
                    let r = ((Shape::signed_index(m, 64).pow(2) + Shape::signed_index(n, 64).pow(2)) as f64).sqrt();
                    if r < 10.0 { 1.0 } else { 0.0 }
                })
                .collect(),
            valid: vec![true; 4096],
        };
        let s = prtf_radial(&step);
        for k in 0..s.len() {
            let v = s.values[k].unwrap();
            match k {
                0..=9 => assert_eq!(v, 1.0, "bin {k}"),
                10 => assert!(v > 0.0 && v < 1.0),
                _ => assert_eq!(v, 0.0, "bin {k}"),
            }
        }
    }

    #[test]
    fn radial_binning_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = Shape::new(20, 14).unwrap();
        let values: Vec<f64> = (0..shape.len()).map(|_| rng.random()).collect();
        let valid: Vec<bool> = (0..shape.len()).map(|_| rng.random::<f64>() > 0.2).collect();
        let map = PrtfMap { shape, values: values.clone(), valid: valid.clone() };
        let curve = prtf_radial(&map);
        for (k, &f) in curve.bins.iter().enumerate() {
            let members: Vec<f64> = (0..shape.len())
                .filter(|&i| {
                    let (m, n) = (i % 20, i / 20);
                    let fx = if m < 10 { m as f64 } else { m as f64 - 20.0 } / 20.0;
                    let fy = if n < 7 { n as f64 } else { n as f64 - 14.0 } / 14.0;
                    valid[i] && ((fx * fx + fy * fy).sqrt() * 20.0).round() as usize == k
                })
                .map(|i| values[i])
                .collect();
            assert!((f - k as f64 / 20.0).abs() < 1e-15);
            assert_eq!(curve.counts[k], members.len());
            match curve.values[k] {
                None => assert!(members.is_empty()),
                Some(v) => assert!((v - members.iter().sum::<f64>() / members.len() as f64).abs() < 1e-12),
            }
        }
    }

    #[test]
    fn resolution_rules() {
        let flat = curve(&[0.0, 0.1, 0.2, 0.3], &[1.0; 4]);
        let r = resolution_from_prtf(&flat, None).unwrap();
        assert!(r.no_crossing);
        assert_eq!(r.pixels, 2.0);

        // Linear from 1 at f=0.2 to 0 at f=0.3 hits 1/e at f = 0.3 - 0.1/e.
        let lin = curve(&[0.1, 0.2, 0.3], &[1.0, 1.0, 0.0]);
        let r = resolution_from_prtf(&lin, None).unwrap();
        let f = 0.3 - 0.1 * PRTF_THRESHOLD;
        assert!((r.frequency.unwrap() - f).abs() < 1e-12);
        assert!((r.pixels - 1.0 / f).abs() < 1e-12);

        let at = |f0: f64| {
            let t = PRTF_THRESHOLD;
            curve(&[f0 - 0.01, f0 + 0.01], &[t + 0.1, t - 0.1])
        };
        let r = resolution_from_prtf(&at(0.22), None).unwrap();
        assert!((r.pixels - 4.545_454_545_454_545).abs() < 1e-9);
        assert!((r.pixels - 4.54).abs() < 0.01);

        let g = Geometry { wavelength: 0.5e-6, distance: 0.1, detector_pixel: 10e-6, pixels: 500 };
        let r = resolution_from_prtf(&at(0.25), Some(&g)).unwrap();
        assert!((r.physical.unwrap() - 4.0 * 1e-5).abs() < 1e-15);

        let empty = PrtfCurve { bins: vec![0.0], values: vec![None], counts: vec![0] };
        assert!(resolution_from_prtf(&empty, None).is_err());
    }

    #[test]
    fn gaps_are_skipped_when_interpolating() {
        let mut c = curve(&[0.1, 0.2, 0.3, 0.4], &[1.0, 0.5, 0.0, 0.0]);
        c.values[1] = None;
        let r = resolution_from_prtf(&c, None).unwrap();
        let f = 0.1 + (1.0 - PRTF_THRESHOLD) * 0.2;
        assert!((r.frequency.unwrap() - f).abs() < 1e-12);
    }

    #[test]
    fn error_real_basics() {
        let truth = random_field(10, 10, 5);
        assert!(error_real(&truth, &truth).unwrap() < 1e-12);
        assert!(error_real(&truth.twin(), &truth).unwrap() < 1e-12);
        let rotated = truth.scaled(Complex64::from_polar(2.5, 1.1));
        assert!(error_real(&rotated, &truth).unwrap() < 1e-12);
        let zero = ComplexField::zeros(truth.shape());
        assert_eq!(error_real(&zero, &truth).unwrap(), 1.0);
        assert!(matches!(error_real(&truth, &zero), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn error_fourier_basics() {
        let field = random_field(8, 8, 6);
        let data = exact_data(&field);
        assert!(error_fourier(&field, &data).unwrap() < 1e-14);
        assert_eq!(error_fourier(&ComplexField::zeros(field.shape()), &data).unwrap(), 1.0);
        let empty = IntensityData::new(field.shape(), vec![0.0; 64]).unwrap();
        assert!(error_fourier(&field, &empty).is_err());
    }

    #[test]
    fn error_fourier_matches_direct_formula_and_ignores_unmeasured() {
        let est = random_field(8, 6, 7);
        let other = random_field(8, 6, 8);
        let mut counts = dft_forward(&other).unwrap().intensity();
        counts[0] = 0.0;
        let mut blocked = vec![false; 48];
        blocked[3] = true;
        let data = IntensityData::new(est.shape(), counts.clone()).unwrap().with_blocked(&blocked).unwrap();
        let spec = dft_forward(&est).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 1..48 {
            if i != 3 {
                num += (counts[i].sqrt() - spec.values()[i].norm()).powi(2);
                den += counts[i];
            }
        }
        let expected = (num / den).sqrt();
        assert!((error_fourier(&est, &data).unwrap() - expected).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn error_real_invariant_under_phase_and_twin(seed in any::<u64>(), other in any::<u64>(), theta in 0.0..std::f64::consts::TAU) {
            let truth = random_field(7, 9, seed);
            let est = random_field(7, 9, other);
            let base = error_real(&est, &truth).unwrap();
            let rotated = error_real(&est.scaled(Complex64::from_polar(1.0, theta)), &truth).unwrap();
            let twinned = error_real(&est.twin(), &truth).unwrap();
            prop_assert!((base - rotated).abs() < 1e-12);
            prop_assert!((base - twinned).abs() < 1e-12);
        }

        #[test]
        fn error_fourier_invariant_under_phase(seed in any::<u64>(), theta in 0.0..std::f64::consts::TAU) {
            let est = random_field(6, 6, seed);
            let data = exact_data(&random_field(6, 6, seed ^ 1));
            let a = error_fourier(&est, &data).unwrap();
            let b = error_fourier(&est.scaled(Complex64::from_polar(1.0, theta)), &data).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn resolution_is_monotone(values in proptest::collection::vec(0.0..1.2f64, 2..30),
                                  drops in proptest::collection::vec(0.0..0.5f64, 30)) {
            let bins: Vec<f64> = (0..values.len()).map(|k| (k + 1) as f64 / 64.0).collect();
            let lower: Vec<f64> = values.iter().zip(&drops).map(|(v, d)| (v - d).max(0.0)).collect();
            let hi = resolution_from_prtf(&curve(&bins, &values), None).unwrap();
            let lo = resolution_from_prtf(&curve(&bins, &lower), None).unwrap();
            if !lo.no_crossing {
                prop_assert!(hi.no_crossing || lo.pixels >= hi.pixels - 1e-12);
            } else {
                prop_assert!(hi.no_crossing);
            }
        }
    }
}
