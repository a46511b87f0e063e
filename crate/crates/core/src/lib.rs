//! Iterative phase retrieval for coherent diffraction imaging: the classical
//! ER, HIO, DM and RAAR iterations, RAAR concluded by ER, and complexity-guided
//! RAAR (CG-RAAR), which keeps the total gradient energy ζ of the iterate
//! matched to the value ζ₀ predicted from the measured intensity.
//!
//! Supporting modules simulate Poisson-noisy oversampled diffraction data,
//! run and coherently average seeded trial ensembles, and estimate resolution
//! from the phase retrieval transfer function (PRTF).

pub mod complexity;
pub mod constraints;
pub mod container;
pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod metrics;
pub mod solvers;

pub use complexity::{ComplexityBudget, ComplexityTrace, TraceRecord};
pub use constraints::{IntensityData, SupportMask};
pub use datagen::PhantomKind;
pub use ensemble::{EnsembleConfig, EnsembleReport};
pub use error::{Error, Result};
pub use field::{ComplexField, Shape, Spectrum};
pub use metrics::{PrtfCurve, Resolution};
pub use solvers::{Algorithm, Checkpoint, Session, SolverConfig, TrialSolution};
pub use num_complex::Complex64;
