//! Browser demo. [`DemoState`] holds everything and is plain Rust so it can
//! be tested natively; [`Demo`] is its thin JavaScript face.
//!
//! Three operations: simulate a noisy diffraction frame, step a RAAR-family
//! reconstruction while watching ζ against ζ₀, and evaluate the current
//! iterate (PRTF curve, 1/e resolution, E_F and E_R).

use cgraar::datagen::{apply_beamstop, make_phantom_with_side, simulate_intensity};
use cgraar::metrics::{self, PrtfCurve, Resolution};
use cgraar::{Algorithm, Checkpoint, ComplexField, IntensityData, PhantomKind, Session, SolverConfig, SupportMask};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Demo frames are kept small enough to iterate at interactive rates.
pub const MAX_WINDOW: usize = 256;

#[derive(Clone, Debug, Serialize)]
pub struct FrameSummary {
    pub window: usize,
    pub support: usize,
    pub zero_count_fraction: f64,
    pub unmeasured_fraction: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepSummary {
    pub completed: usize,
    pub total: usize,
    pub phase: cgraar::solvers::Phase,
    pub zeta: f64,
    pub zeta0: f64,
    pub e_fourier: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub e_fourier: f64,
    pub e_real: f64,
    pub prtf: PrtfCurve,
    pub resolution: Option<Resolution>,
}

pub struct DemoState {
    truth: ComplexField,
    support: SupportMask,
    data: IntensityData,
    side: usize,
    run: Option<Checkpoint>,
}

impl DemoState {
    pub fn simulate(
        phantom: PhantomKind,
        window: usize,
        support: usize,
        photons: f64,
        beamstop_radius: f64,
        seed: u64,
    ) -> cgraar::Result<Self> {
        if window > MAX_WINDOW {
            return Err(cgraar::Error::InvalidConfig(format!("the demo is limited to {MAX_WINDOW} px frames")));
        }
        if !(photons.is_finite() && photons > 0.0) {
            return Err(cgraar::Error::InvalidConfig(format!("photons per pixel must be positive, got {photons}")));
        }
        let (truth, mask) = make_phantom_with_side(phantom, window, support)?;
        let mut data = simulate_intensity(&truth, photons, seed)?;
        if beamstop_radius > 0.0 {
            data = apply_beamstop(&data, beamstop_radius)?;
        }
        Ok(DemoState { truth, support: mask, data, side: support, run: None })
    }

    pub fn summary(&self) -> FrameSummary {
        FrameSummary {
            window: self.width(),
            support: self.side,
            zero_count_fraction: self.data.zero_count_fraction(),
            unmeasured_fraction: self.data.unmeasured_fraction(),
        }
    }

    pub fn width(&self) -> usize {
        self.data.shape().width
    }

    /// `counts^0.1` with the zero frequency centred; blocked pixels are shown dark.
    pub fn diffraction_image(&self) -> Vec<u8> {
        let shape = self.data.shape();
        let (w, h) = (shape.width, shape.height);
        let levels: Vec<f64> = self
            .data
            .counts()
            .iter()
            .zip(self.data.blocked())
            .map(|(&c, &b)| if b { 0.0 } else { c.powf(0.1) })
            .collect();
        let peak = levels.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut centred = vec![0.0; levels.len()];
        for y in 0..h {
            for x in 0..w {
                centred[((y + h / 2) % h) * w + (x + w / 2) % w] = levels[y * w + x] / peak;
            }
        }
        rgba(&centred)
    }

    pub fn phantom_image(&self) -> Vec<u8> {
        rgba(&self.truth.magnitudes())
    }

    /// Starts a fresh run. `main` is the RAAR (or warmup) length and `guided`
    /// the guided length for `cg-raar`; `raar-er` adds a 100-step ER tail.
    pub fn start(&mut self, algorithm: Algorithm, beta: f64, main: usize, guided: usize, seed: u64) -> cgraar::Result<()> {
        let mut config = SolverConfig { beta, seed, ..SolverConfig::new(algorithm) };
        match algorithm {
            Algorithm::CgRaar => {
                config.n_warmup = main;
                config.n_guided = guided;
            }
            _ => config.n_main = main,
        }
        self.run = Some(Session::new(&self.data, &self.support, config)?.suspend());
        Ok(())
    }

    /// Advances the current run by up to `n` iterations.
    pub fn step(&mut self, n: usize) -> cgraar::Result<StepSummary> {
        let checkpoint = self.run.take().ok_or_else(|| cgraar::Error::InvalidConfig("no run started".into()))?;
        let mut session = Session::resume(&self.data, &self.support, checkpoint)?;
        let mut outcome = Ok(());
        for _ in 0..n {
            match session.step() {
                Ok(Some(_)) => {}
                Ok(None) => break,
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        let phase = session.phase();
        let summary = StepSummary {
            completed: session.completed(),
            total: session.total_iterations(),
            phase,
            zeta: session.trace().last().map_or(f64::NAN, |r| r.zeta),
            zeta0: session.zeta0(),
            e_fourier: metrics::error_fourier(session.iterate(), &self.data).unwrap_or(f64::NAN),
        };
        self.run = Some(session.suspend());
        outcome.map(|_| summary)
    }

    /// Flattened `(iteration, ζ, ζ₀, ζ_in, ζ_out)` rows of the current run.
    pub fn trace(&self) -> Vec<f64> {
        let Some(run) = &self.run else { return Vec::new() };
        run.trace()
            .records
            .iter()
            .flat_map(|r| [r.iteration as f64, r.zeta, r.zeta0, r.zeta_in, r.zeta_out])
            .collect()
    }

    pub fn iterate(&self) -> Option<&ComplexField> {
        self.run.as_ref().map(Checkpoint::iterate)
    }

    /// Magnitude of the current iterate clamped to [0, 1].
    pub fn iterate_image(&self) -> Vec<u8> {
        self.iterate().map(|f| rgba(&f.magnitudes())).unwrap_or_default()
    }

    /// Scores the current iterate against the data and the phantom.
    pub fn evaluate(&self) -> cgraar::Result<Evaluation> {
        let field = self.iterate().ok_or_else(|| cgraar::Error::InvalidConfig("no run started".into()))?;
        let prtf = metrics::prtf_radial(&metrics::prtf_map(field, &self.data)?);
        Ok(Evaluation {
            e_fourier: metrics::error_fourier(field, &self.data)?,
            e_real: metrics::error_real(field, &self.truth)?,
            resolution: metrics::resolution_from_prtf(&prtf, None).ok(),
            prtf,
        })
    }
}

fn rgba(levels: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * levels.len());
    for &v in levels {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        out.extend_from_slice(&[g, g, g, 255]);
    }
    out
}

fn js_error(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(js_error)
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(phantom: &str, window: usize, support: usize, photons: f64, beamstop_radius: f64, seed: u64) -> Result<Demo, JsError> {
        let phantom: PhantomKind = phantom.parse().map_err(js_error)?;
        let state = DemoState::simulate(phantom, window, support, photons, beamstop_radius, seed).map_err(js_error)?;
        Ok(Demo { state })
    }

    pub fn width(&self) -> usize {
        self.state.width()
    }

    /// JSON frame summary.
    pub fn summary(&self) -> Result<String, JsError> {
        to_json(&self.state.summary())
    }

    #[wasm_bindgen(js_name = diffractionImage)]
    pub fn diffraction_image(&self) -> Vec<u8> {
        self.state.diffraction_image()
    }

    #[wasm_bindgen(js_name = phantomImage)]
    pub fn phantom_image(&self) -> Vec<u8> {
        self.state.phantom_image()
    }

    pub fn start(&mut self, algorithm: &str, beta: f64, main: usize, guided: usize, seed: u64) -> Result<(), JsError> {
        let algorithm: Algorithm = algorithm.parse().map_err(js_error)?;
        self.state.start(algorithm, beta, main, guided, seed).map_err(js_error)
    }

    /// Runs up to `n` iterations and returns a JSON step summary.
    pub fn step(&mut self, n: usize) -> Result<String, JsError> {
        to_json(&self.state.step(n).map_err(js_error)?)
    }

    pub fn trace(&self) -> Vec<f64> {
        self.state.trace()
    }

    #[wasm_bindgen(js_name = iterateImage)]
    pub fn iterate_image(&self) -> Vec<u8> {
        self.state.iterate_image()
    }

    /// JSON with E_F, E_R, the PRTF curve and the 1/e resolution.
    pub fn evaluate(&self) -> Result<String, JsError> {
        to_json(&self.state.evaluate().map_err(js_error)?)
    }
}
