//! Seeded trial batches, alignment to a reference, correlation-based
//! selection and coherent averaging.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constraints::{IntensityData, SupportMask};
use crate::error::{Error, Result};
use crate::field::{ComplexField, Fft2};
use crate::metrics::{self, PrtfCurve, Resolution};
use crate::solvers::{self, SolverConfig, TrialSolution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_trials: usize,
    pub correlation_threshold: f64,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    pub base_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { n_trials: 10, correlation_threshold: 0.96, jobs: 0, base_seed: 0 }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("an ensemble needs at least one trial".into()));
        }
        if !(self.correlation_threshold >= 0.0 && self.correlation_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "correlation threshold must lie in [0, 1], got {}",
                self.correlation_threshold
            )));
        }
        Ok(())
    }
}

/// A trial's outcome: its seed and either the solution or the abort reason.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub index: usize,
    pub seed: u64,
    pub result: std::result::Result<TrialSolution, String>,
}

/// Runs `n_trials` independent solver runs with seeds `base_seed + t`.
/// Results are in trial order whatever the scheduling.
pub fn run_trials(
    data: &IntensityData,
    support: &SupportMask,
    solver: &SolverConfig,
    config: &EnsembleConfig,
) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    solver.validate()?;
    data.shape().ensure_eq(support.shape())?;
    let one = |index: usize| {
        let seed = config.base_seed.wrapping_add(index as u64);
        let trial_config = SolverConfig { seed, ..solver.clone() };
        TrialOutcome { index, seed, result: solvers::run(data, support, &trial_config).map_err(|e| e.to_string()) }
    };
    Ok(map_trials(config.n_trials, config.jobs, one))
}

#[cfg(feature = "parallel")]
fn map_trials<F>(n: usize, jobs: usize, f: F) -> Vec<TrialOutcome>
where
    F: Fn(usize) -> TrialOutcome + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect();
    if jobs == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => (0..n).map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_trials<F>(n: usize, _jobs: usize, f: F) -> Vec<TrialOutcome>
where
    F: Fn(usize) -> TrialOutcome,
{
    (0..n).map(f).collect()
}

fn masked_inner(a: &ComplexField, b: &ComplexField, support: &SupportMask) -> (Complex64, f64, f64) {
    let mut dot = Complex64::new(0.0, 0.0);
    let (mut na, mut nb) = (0.0, 0.0);
    for ((x, y), &s) in a.values().iter().zip(b.values()).zip(support.mask()) {
        if s {
            dot += x.conj() * y;
            na += x.norm_sqr();
            nb += y.norm_sqr();
        }
    }
    (dot, na, nb)
}

/// `|Σ_S a*·b| / (‖a‖_S ‖b‖_S)`.
pub fn correlation(a: &ComplexField, b: &ComplexField, support: &SupportMask) -> Result<f64> {
    a.shape().ensure_eq(b.shape())?;
    support.shape().ensure_eq(a.shape())?;
    let (dot, na, nb) = masked_inner(a, b, support);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("field vanishes on the support"));
    }
    Ok((dot.norm() / (na * nb).sqrt()).min(1.0))
}

/// Reference restricted to the support, pre-transformed for repeated alignment.
pub struct AlignmentReference<'a> {
    reference: &'a ComplexField,
    support: &'a SupportMask,
    spectrum_conj: Vec<Complex64>,
    fft: Fft2,
}

impl<'a> AlignmentReference<'a> {
    pub fn new(reference: &'a ComplexField, support: &'a SupportMask) -> Result<Self> {
        support.shape().ensure_eq(reference.shape())?;
        let mut masked: Vec<Complex64> = reference
            .values()
            .iter()
            .zip(support.mask())
            .map(|(&v, &s)| if s { v } else { Complex64::new(0.0, 0.0) })
            .collect();
        if masked.iter().all(|v| v.norm_sqr() == 0.0) {
            return Err(Error::ZeroNorm("alignment reference vanishes on the support"));
        }
        let mut fft = Fft2::new(reference.shape());
        fft.forward_in_place(&mut masked);
        masked.iter_mut().for_each(|v| *v = v.conj());
        Ok(AlignmentReference { reference, support, spectrum_conj: masked, fft })
    }

    /// Shift maximizing `|Σ_S ref*(r)·cand(r + s)|`.
    fn best_shift(&mut self, candidate: &ComplexField) -> (isize, isize) {
        let shape = candidate.shape();
        let mut xc = candidate.values().to_vec();
        self.fft.forward_in_place(&mut xc);
        for (v, r) in xc.iter_mut().zip(&self.spectrum_conj) {
            *v *= r;
        }
        self.fft.inverse_in_place(&mut xc);
        let mut best = 0;
        for (i, v) in xc.iter().enumerate() {
            if v.norm_sqr() > xc[best].norm_sqr() {
                best = i;
            }
        }
        let (sx, sy) = (best % shape.width, best / shape.width);
        let wrap = |s: usize, n: usize| if s > n / 2 { s as isize - n as isize } else { s as isize };
        (wrap(sx, shape.width), wrap(sy, shape.height))
    }

    fn phase_matched(&self, candidate: ComplexField) -> (ComplexField, f64) {
        let (dot, na, nb) = masked_inner(self.reference, &candidate, self.support);
        if nb == 0.0 {
            return (candidate, 0.0);
        }
        let corr = dot.norm() / (na * nb).sqrt();
        let rotation = if dot.norm() > 0.0 { dot.conj() / dot.norm() } else { Complex64::new(1.0, 0.0) };
        (candidate.scaled(rotation), corr)
    }

    /// Aligns a trial (or its twin, whichever correlates better) by integer
    /// cyclic shift and global phase. Returns the aligned field and its correlation.
    pub fn align(&mut self, trial: &ComplexField) -> Result<(ComplexField, f64)> {
        trial.shape().ensure_eq(self.reference.shape())?;
        let mut best: Option<(ComplexField, f64)> = None;
        for candidate in [trial.clone(), trial.twin()] {
            let (sx, sy) = self.best_shift(&candidate);
            let shifted = if (sx, sy) == (0, 0) { candidate } else { candidate.shifted(sx, sy) };
            let (aligned, corr) = self.phase_matched(shifted);
            if best.as_ref().is_none_or(|(_, c)| corr > *c) {
                best = Some((aligned, corr));
            }
        }
        Ok(best.expect("two candidates"))
    }
}

pub fn align_trial(trial: &ComplexField, reference: &ComplexField, support: &SupportMask) -> Result<ComplexField> {
    Ok(AlignmentReference::new(reference, support)?.align(trial)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub index: usize,
    pub seed: u64,
    pub e_fourier: Option<f64>,
    pub correlation: Option<f64>,
    pub selected: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub total_count: usize,
    pub selected_count: usize,
    pub correlation_threshold: f64,
    pub reference_index: Option<usize>,
    pub trials: Vec<TrialSummary>,
    pub e_fourier_average: Option<f64>,
    pub prtf: Option<PrtfCurve>,
    pub resolution: Option<Resolution>,
    #[serde(skip)]
    pub averaged_field: Option<ComplexField>,
}

/// Aligns every successful trial to the least-E_F trial, keeps those with
/// correlation at or above the threshold, and averages them coherently.
/// The reference's global phase is normalized so `Σ_S ρ_ref` is real and
/// positive, which makes the output independent of the trials' phases.
pub fn select_and_average(
    trials: &[TrialOutcome],
    data: &IntensityData,
    support: &SupportMask,
    config: &EnsembleConfig,
) -> Result<EnsembleReport> {
    config.validate()?;
    if trials.is_empty() {
        return Err(Error::InvalidConfig("no trials to average".into()));
    }
    let mut summaries: Vec<TrialSummary> = trials
        .iter()
        .map(|t| TrialSummary {
            index: t.index,
            seed: t.seed,
            e_fourier: t.result.as_ref().ok().map(|s| s.e_fourier),
            correlation: None,
            selected: false,
            error: t.result.as_ref().err().cloned(),
        })
        .collect();

    let reference_index = trials
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.result.as_ref().ok().filter(|s| s.e_fourier.is_finite()).map(|s| (i, s.e_fourier)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);

    let mut report = EnsembleReport {
        total_count: trials.len(),
        selected_count: 0,
        correlation_threshold: config.correlation_threshold,
        reference_index: reference_index.map(|i| trials[i].index),
        trials: Vec::new(),
        e_fourier_average: None,
        prtf: None,
        resolution: None,
        averaged_field: None,
    };
    let Some(reference_index) = reference_index else {
        report.trials = summaries;
        return Ok(report);
    };

    let raw_reference = &trials[reference_index].result.as_ref().expect("successful reference").field;
    let anchor: Complex64 = raw_reference.values().iter().zip(support.mask()).filter(|(_, &s)| s).map(|(v, _)| v).sum();
    let reference =
        if anchor.norm() > 0.0 { raw_reference.scaled(anchor.conj() / anchor.norm()) } else { raw_reference.clone() };
    let mut aligner = AlignmentReference::new(&reference, support)?;

    let mut sum = vec![Complex64::new(0.0, 0.0); reference.shape().len()];
    for (trial, summary) in trials.iter().zip(summaries.iter_mut()) {
        let Ok(solution) = &trial.result else { continue };
        let (aligned, corr) = aligner.align(&solution.field)?;
        summary.correlation = Some(corr);
        if corr >= config.correlation_threshold {
            summary.selected = true;
            report.selected_count += 1;
            for (s, v) in sum.iter_mut().zip(aligned.values()) {
                *s += v;
            }
        }
    }
    report.trials = summaries;
    if report.selected_count > 0 {
        let inv = 1.0 / report.selected_count as f64;
        let average = reference.like(sum.into_iter().map(|v| v * inv).collect());
        let map = metrics::prtf_map(&average, data)?;
        let curve = metrics::prtf_radial(&map);
        report.resolution = metrics::resolution_from_prtf(&curve, None).ok();
        report.prtf = Some(curve);
        report.e_fourier_average = Some(metrics::error_fourier(&average, data)?);
        report.averaged_field = Some(average);
    }
    Ok(report)
}

impl EnsembleReport {
    /// Per-trial table: `index,seed,e_fourier,correlation,selected,error`.
    pub fn write_trials_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,seed,e_fourier,correlation,selected,error")?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.17e}")).unwrap_or_default();
        for t in &self.trials {
            let error = t.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
            writeln!(out, "{},{},{},{},{},{}", t.index, t.seed, opt(t.e_fourier), opt(t.correlation), t.selected, error)?;
        }
        Ok(())
    }
}
