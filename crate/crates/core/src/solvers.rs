//! Iteration engines: ER, HIO, DM, RAAR, RAAR concluded by ER, and CG-RAAR.
//!
//! A [`Session`] owns one run: the iterate, cached FFT plans, and the
//! complexity trace. It advances one scheduled iteration per [`Session::step`]
//! so callers can observe or render intermediate iterates; [`run`] drives a
//! session to completion.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complexity::{self, ComplexityBudget, ComplexityTrace, Descent, Measure, TraceRecord};
use crate::constraints::{relaxed_unchecked, IntensityData, Projectors, SupportMask};
use crate::error::{Error, Result};
use crate::field::{first_non_finite, ComplexField, Shape};
use crate::metrics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Er,
    Hio,
    Dm,
    Raar,
    RaarEr,
    CgRaar,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] =
        [Algorithm::Er, Algorithm::Hio, Algorithm::Dm, Algorithm::Raar, Algorithm::RaarEr, Algorithm::CgRaar];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Er => "er",
            Algorithm::Hio => "hio",
            Algorithm::Dm => "dm",
            Algorithm::Raar => "raar",
            Algorithm::RaarEr => "raar-er",
            Algorithm::CgRaar => "cg-raar",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Relaxation / feedback parameter β.
    pub beta: f64,
    /// DM relaxation for the magnitude map; `1/β` when unset.
    pub gamma_m: Option<f64>,
    /// DM relaxation for the support map; `−1/β` when unset.
    pub gamma_s: Option<f64>,
    /// Main iterations of ER/HIO/DM/RAAR (RAAR for `raar-er`).
    pub n_main: usize,
    /// Concluding ER iterations.
    pub n_er: usize,
    /// Plain RAAR iterations before complexity guidance (`cg-raar`).
    pub n_warmup: usize,
    /// Guided RAAR iterations (`cg-raar`).
    pub n_guided: usize,
    pub budget: ComplexityBudget,
    pub seed: u64,
    /// Re-estimate ζ₀ every iteration with blocked pixels filled from the
    /// iterate. `None` enables it exactly when the data has blocked pixels.
    pub refresh_zeta0: Option<bool>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::RaarEr,
            beta: 0.9,
            gamma_m: None,
            gamma_s: None,
            n_main: 1000,
            n_er: 100,
            n_warmup: 500,
            n_guided: 500,
            budget: ComplexityBudget::default(),
            seed: 0,
            refresh_zeta0: None,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        let mut config = SolverConfig { algorithm, ..Default::default() };
        if algorithm != Algorithm::RaarEr {
            config.n_er = 0;
        }
        config
    }

    pub fn gamma_m(&self) -> f64 {
        self.gamma_m.unwrap_or(1.0 / self.beta)
    }

    pub fn gamma_s(&self) -> f64 {
        self.gamma_s.unwrap_or(-1.0 / self.beta)
    }

    pub fn total_iterations(&self) -> usize {
        match self.algorithm {
            Algorithm::CgRaar => self.n_warmup + self.n_guided,
            _ => self.n_main + self.n_er,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.gamma_m().is_finite() && self.gamma_s().is_finite()) {
            return Err(Error::InvalidConfig("DM relaxations must be finite".into()));
        }
        self.budget.validate()
    }
}

/// One converged (or schedule-complete) reconstruction.
#[derive(Clone, Debug)]
pub struct TrialSolution {
    pub field: ComplexField,
    pub seed: u64,
    pub e_fourier: f64,
    pub trace: ComplexityTrace,
    pub iterations_run: usize,
}

/// Random start: inside `S` amplitude ~ U[0,1) and phase ~ U[0,2π) from a
/// ChaCha8 stream keyed by `seed`, zero outside.
pub fn init_random(shape: Shape, support: &SupportMask, seed: u64) -> Result<ComplexField> {
    support.shape().ensure_eq(shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = support
        .mask()
        .iter()
        .map(|&inside| {
            if inside {
                let amplitude: f64 = rng.random();
                let phase: f64 = rng.random::<f64>() * TAU;
                Complex64::from_polar(amplitude, phase)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    ComplexField::from_values(shape, values)
}

fn er_step(ops: &mut Projectors, rho: &ComplexField) -> ComplexField {
    let pm = ops.magnitude(rho);
    ops.support(&pm)
}

fn hio_step(ops: &mut Projectors, rho: &ComplexField, beta: f64) -> ComplexField {
    let pm = ops.magnitude(rho);
    let mask = ops.support_mask().mask();
    rho.like(
        pm.values()
            .iter()
            .zip(rho.values())
            .zip(mask)
            .map(|((&p, &r), &s)| if s { p } else { r - p * beta })
            .collect(),
    )
}

fn dm_step(ops: &mut Projectors, rho: &ComplexField, beta: f64, gamma_m: f64, gamma_s: f64) -> ComplexField {
    let pm = ops.magnitude(rho);
    let toward_support = ops.support(&relaxed_unchecked(&pm, rho, gamma_m));
    let ps = ops.support(rho);
    let toward_magnitude = ops.magnitude(&relaxed_unchecked(&ps, rho, gamma_s));
    rho.like(
        rho.values()
            .iter()
            .zip(toward_support.values())
            .zip(toward_magnitude.values())
            .map(|((&r, &a), &b)| r + (a - b) * beta)
            .collect(),
    )
}

/// `[β/2 (R_S R_M + 1) + (1−β) P_M] ρ`, which reduces per pixel to `P_M ρ`
/// inside `S` and `βρ + (1−2β) P_M ρ` outside.
fn raar_step(ops: &mut Projectors, rho: &ComplexField, beta: f64) -> ComplexField {
    let pm = ops.magnitude(rho);
    let mask = ops.support_mask().mask();
    let outside_pm = 1.0 - 2.0 * beta;
    rho.like(
        pm.values()
            .iter()
            .zip(rho.values())
            .zip(mask)
            .map(|((&p, &r), &s)| if s { p } else { r * beta + p * outside_pm })
            .collect(),
    )
}

fn check_inputs(rho: &ComplexField, data: &IntensityData, support: &SupportMask) -> Result<()> {
    data.shape().ensure_eq(rho.shape())?;
    support.shape().ensure_eq(rho.shape())
}

/// `P_S P_M ρ`.
pub fn er_iterate(rho: &ComplexField, data: &IntensityData, support: &SupportMask) -> Result<ComplexField> {
    check_inputs(rho, data, support)?;
    Ok(er_step(&mut Projectors::new(data, support)?, rho))
}

/// `P_M ρ` inside `S`, `ρ − β P_M ρ` outside.
pub fn hio_iterate(rho: &ComplexField, data: &IntensityData, support: &SupportMask, beta: f64) -> Result<ComplexField> {
    check_inputs(rho, data, support)?;
    Ok(hio_step(&mut Projectors::new(data, support)?, rho, beta))
}

/// `ρ + β(P_S R_M^{γ_M} − P_M R_S^{γ_S}) ρ`.
pub fn dm_iterate(
    rho: &ComplexField,
    data: &IntensityData,
    support: &SupportMask,
    beta: f64,
    gamma_m: f64,
    gamma_s: f64,
) -> Result<ComplexField> {
    check_inputs(rho, data, support)?;
    Ok(dm_step(&mut Projectors::new(data, support)?, rho, beta, gamma_m, gamma_s))
}

/// `[β/2 (R_S R_M + 1) + (1−β) P_M] ρ`.
pub fn raar_iterate(rho: &ComplexField, data: &IntensityData, support: &SupportMask, beta: f64) -> Result<ComplexField> {
    check_inputs(rho, data, support)?;
    Ok(raar_step(&mut Projectors::new(data, support)?, rho, beta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Main,
    ErTail,
    Warmup,
    Guided,
    Done,
}

/// Owned state of a suspended [`Session`].
#[derive(Clone, Debug)]
pub struct Checkpoint {
    config: SolverConfig,
    rho: ComplexField,
    trace: ComplexityTrace,
    completed: usize,
    zeta0: f64,
    refresh: bool,
    out_history: VecDeque<f64>,
}

impl Checkpoint {
    pub fn iterate(&self) -> &ComplexField {
        &self.rho
    }

    pub fn trace(&self) -> &ComplexityTrace {
        &self.trace
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }
}

/// A single solver run, advanced one iteration at a time.
pub struct Session<'a> {
    ops: Projectors<'a>,
    config: SolverConfig,
    rho: ComplexField,
    outside: Vec<bool>,
    trace: ComplexityTrace,
    completed: usize,
    zeta0: f64,
    refresh: bool,
    out_history: VecDeque<f64>,
    descent: Descent,
}

impl<'a> Session<'a> {
    pub fn new(data: &'a IntensityData, support: &'a SupportMask, config: SolverConfig) -> Result<Self> {
        let start = init_random(data.shape(), support, config.seed)?;
        Self::with_start(data, support, config, start)
    }

    pub fn with_start(
        data: &'a IntensityData,
        support: &'a SupportMask,
        config: SolverConfig,
        start: ComplexField,
    ) -> Result<Self> {
        config.validate()?;
        check_inputs(&start, data, support)?;
        start.check_finite("initial guess")?;
        let mut ops = Projectors::new(data, support)?;
        let refresh = config.refresh_zeta0.unwrap_or_else(|| data.has_blocked());
        let mut zeta0 = if config.budget.zeta0 > 0.0 {
            config.budget.zeta0
        } else {
            complexity::complexity_of_intensity(data.shape(), data.counts(), start.dx(), start.dy())
        };
        if refresh {
            zeta0 = filled_zeta0(&mut ops, &start);
        }
        Ok(Session {
            ops,
            outside: support.complement(),
            descent: Descent::new(data.shape()),
            config,
            rho: start,
            trace: ComplexityTrace::default(),
            completed: 0,
            zeta0,
            refresh,
            out_history: VecDeque::new(),
        })
    }

    /// Detaches the run from its borrowed inputs so it can be stored and
    /// continued later with [`Session::resume`].
    pub fn suspend(self) -> Checkpoint {
        Checkpoint {
            config: self.config,
            rho: self.rho,
            trace: self.trace,
            completed: self.completed,
            zeta0: self.zeta0,
            refresh: self.refresh,
            out_history: self.out_history,
        }
    }

    /// Continues a suspended run. Stepping the result is identical to having
    /// kept the original session, provided the same data and support are given.
    pub fn resume(data: &'a IntensityData, support: &'a SupportMask, checkpoint: Checkpoint) -> Result<Self> {
        check_inputs(&checkpoint.rho, data, support)?;
        Ok(Session {
            ops: Projectors::new(data, support)?,
            outside: support.complement(),
            descent: Descent::new(data.shape()),
            config: checkpoint.config,
            rho: checkpoint.rho,
            trace: checkpoint.trace,
            completed: checkpoint.completed,
            zeta0: checkpoint.zeta0,
            refresh: checkpoint.refresh,
            out_history: checkpoint.out_history,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn iterate(&self) -> &ComplexField {
        &self.rho
    }

    pub fn trace(&self) -> &ComplexityTrace {
        &self.trace
    }

    /// Current ζ₀ estimate.
    pub fn zeta0(&self) -> f64 {
        self.zeta0
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn total_iterations(&self) -> usize {
        self.config.total_iterations()
    }

    pub fn is_finished(&self) -> bool {
        self.completed >= self.total_iterations()
    }

    /// Phase of the next iteration to run.
    pub fn phase(&self) -> Phase {
        let c = &self.config;
        let k = self.completed;
        if k >= c.total_iterations() {
            return Phase::Done;
        }
        match c.algorithm {
            Algorithm::CgRaar if k < c.n_warmup => Phase::Warmup,
            Algorithm::CgRaar => Phase::Guided,
            _ if k < c.n_main => Phase::Main,
            _ => Phase::ErTail,
        }
    }

    /// Runs the next scheduled iteration; returns `None` once the schedule is done.
    pub fn step(&mut self) -> Result<Option<TraceRecord>> {
        let phase = self.phase();
        let beta = self.config.beta;
        let mut out_sub = 0;
        let mut in_sub = 0;
        let mut cap_hit = false;
        let next = match phase {
            Phase::Done => return Ok(None),
            Phase::ErTail => er_step(&mut self.ops, &self.rho),
            Phase::Warmup => raar_step(&mut self.ops, &self.rho, beta),
            Phase::Guided => raar_step(&mut self.ops, &self.rho, beta),
            Phase::Main => match self.config.algorithm {
                Algorithm::Er => er_step(&mut self.ops, &self.rho),
                Algorithm::Hio => hio_step(&mut self.ops, &self.rho, beta),
                Algorithm::Dm => {
                    let (gm, gs) = (self.config.gamma_m(), self.config.gamma_s());
                    dm_step(&mut self.ops, &self.rho, beta, gm, gs)
                }
                Algorithm::Raar | Algorithm::RaarEr | Algorithm::CgRaar => raar_step(&mut self.ops, &self.rho, beta),
            },
        };
        self.rho = next;
        let iteration = self.completed + 1;
        if let Some(index) = first_non_finite(self.rho.values()) {
            return Err(Error::Diverged { iteration, index });
        }
        if self.refresh {
            self.zeta0 = filled_zeta0(&mut self.ops, &self.rho);
        }

        if phase == Phase::Guided {
            let (o, i, hit) = self.guide();
            out_sub = o;
            in_sub = i;
            cap_hit = hit;
            if let Some(index) = first_non_finite(self.rho.values()) {
                return Err(Error::Diverged { iteration, index });
            }
        }

        let (zeta_in, zeta_out) = complexity::split_unchecked(&self.rho, self.ops.support_mask().mask());
        if !(zeta_in + zeta_out).is_finite() {
            let index = largest_pixel(&self.rho);
            return Err(Error::Diverged { iteration, index });
        }
        let record = TraceRecord {
            iteration,
            zeta: zeta_in + zeta_out,
            zeta_in,
            zeta_out,
            zeta0: self.zeta0,
            out_subiters: out_sub,
            in_subiters: in_sub,
            cap_hit,
        };
        self.trace.push(record);
        self.completed = iteration;
        Ok(Some(record))
    }

    /// Complexity guidance applied to the freshly computed RAAR iterate:
    /// outside reduction toward the windowed target, then inside reduction
    /// until the total sits within the band around ζ₀. Both reductions act
    /// on disjoint pixel sets of the same field, which is the recombination.
    fn guide(&mut self) -> (usize, usize, bool) {
        let budget = self.config.budget;
        let support = self.ops.support_mask();
        let (_, zeta_out) = complexity::split_unchecked(&self.rho, support.mask());

        let mut out_sub = 0;
        if self.out_history.len() == budget.window {
            let n = budget.window as f64;
            let mean = self.out_history.iter().sum::<f64>() / n;
            let var = self.out_history.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n;
            let target = (mean - var.sqrt()).max(0.0);
            if zeta_out > target {
                out_sub = self
                    .descent
                    .run(
                        &mut self.rho,
                        &self.outside,
                        Measure::Region,
                        budget.tau,
                        budget.max_out_subiters,
                        target,
                        target,
                    )
                    .iters;
            }
        }
        self.out_history.push_back(zeta_out);
        if self.out_history.len() > budget.window {
            self.out_history.pop_front();
        }

        let upper = (1.0 + budget.tolerance) * self.zeta0;
        let outcome = self.descent.run(
            &mut self.rho,
            support.mask(),
            Measure::Total,
            budget.tau,
            budget.max_in_subiters,
            upper,
            self.zeta0,
        );
        (out_sub, outcome.iters, outcome.cap_hit)
    }

    /// Runs the remaining schedule.
    pub fn run_to_end(&mut self) -> Result<()> {
        while self.step()?.is_some() {}
        Ok(())
    }

    pub fn finish(self) -> TrialSolution {
        let e_fourier = {
            let mut ops = self.ops;
            let intensity = ops.intensity_of(&self.rho);
            metrics::fourier_error_from_intensity(&intensity, ops.data()).unwrap_or(f64::NAN)
        };
        TrialSolution {
            field: self.rho,
            seed: self.config.seed,
            e_fourier,
            trace: self.trace,
            iterations_run: self.completed,
        }
    }
}

fn largest_pixel(field: &ComplexField) -> usize {
    let mut best = 0;
    for (i, v) in field.values().iter().enumerate() {
        if v.norm_sqr() > field.values()[best].norm_sqr() {
            best = i;
        }
    }
    best
}

fn filled_zeta0(ops: &mut Projectors, rho: &ComplexField) -> f64 {
    let current = ops.intensity_of(rho);
    let filled = ops.data().filled_intensity(&current);
    complexity::complexity_of_intensity(rho.shape(), &filled, rho.dx(), rho.dy())
}

/// Runs any configured algorithm to completion from its seeded random start.
pub fn run(data: &IntensityData, support: &SupportMask, config: &SolverConfig) -> Result<TrialSolution> {
    let mut session = Session::new(data, support, config.clone())?;
    session.run_to_end()?;
    Ok(session.finish())
}

/// `n_main` RAAR iterations concluded by `n_er` ER iterations.
pub fn run_raar_er(data: &IntensityData, support: &SupportMask, config: &SolverConfig) -> Result<TrialSolution> {
    if config.algorithm != Algorithm::RaarEr {
        return Err(Error::InvalidConfig(format!("run_raar_er called with algorithm {}", config.algorithm)));
    }
    run(data, support, config)
}

/// `n_warmup` RAAR iterations followed by `n_guided` complexity-guided ones.
pub fn run_cg_raar(data: &IntensityData, support: &SupportMask, config: &SolverConfig) -> Result<TrialSolution> {
    if config.algorithm != Algorithm::CgRaar {
        return Err(Error::InvalidConfig(format!("run_cg_raar called with algorithm {}", config.algorithm)));
    }
    run(data, support, config)
}
