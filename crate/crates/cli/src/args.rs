//! Flags and the matching TOML tables. Every flag is optional at parse time
//! so a config file can supply it; flags win over file values.

use std::path::{Path, PathBuf};

use cgraar::{Algorithm, PhantomKind};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cgraar", version, about = "Phase retrieval with complexity-guided RAAR and classical baselines")]
pub struct Cli {
    /// TOML file with `[simulate]`, `[run]`, `[ensemble]` and `[evaluate]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Make a phantom and its noisy diffraction frame.
    Simulate(SimulateArgs),
    /// Run one reconstruction.
    Reconstruct(RunArgs),
    /// Run seeded trials, align, select and average them.
    Ensemble(EnsembleArgs),
    /// PRTF, resolution and error metrics for a saved field.
    Evaluate(EvaluateArgs),
}

macro_rules! overlay {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $ty {
            /// Fills every unset flag from `file`.
            pub fn overlay(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// disc-blobs, annulus or text-like.
    #[arg(long)]
    pub phantom: Option<PhantomKind>,
    /// Frame side in pixels.
    #[arg(long)]
    pub window: Option<usize>,
    /// Side of the centred square support in pixels.
    #[arg(long)]
    pub support: Option<usize>,
    /// Mean photons per pixel over the whole frame.
    #[arg(long)]
    pub photons: Option<f64>,
    /// Radius of the central beam stop in pixels.
    #[arg(long)]
    pub beamstop_radius: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(SimulateArgs { phantom, window, support, photons, beamstop_radius, seed, out });

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// er, hio, dm, raar, raar-er or cg-raar.
    #[arg(long)]
    pub algo: Option<Algorithm>,
    /// Intensity container.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Optional mask container; false pixels are treated as blocked.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Support container.
    #[arg(long)]
    pub support: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Main iterations (not cg-raar).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Concluding ER iterations (raar-er only).
    #[arg(long)]
    pub er_tail: Option<usize>,
    /// Unguided RAAR iterations (cg-raar only).
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Guided RAAR iterations (cg-raar only).
    #[arg(long)]
    pub guided: Option<usize>,
    /// Relative band for ζ around ζ₀ (cg-raar only).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Seed of the random start; the base seed for ensembles.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(RunArgs { algo, data, mask, support, beta, iters, er_tail, warmup, guided, tolerance, seed, out });

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EnsembleOnly {
    #[arg(long)]
    pub trials: Option<usize>,
    /// Minimum correlation with the reference for a trial to be averaged.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, env = "CGRAAR_JOBS")]
    pub jobs: Option<usize>,
}
overlay!(EnsembleOnly { trials, threshold, jobs });

#[derive(Args, Clone, Debug, Default)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub ensemble: EnsembleOnly,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateArgs {
    /// Field container to evaluate.
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Ground-truth field; enables E_R.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Wavelength, detector distance and detector pixel pitch (same length
    /// unit) convert the resolution to physical units.
    #[arg(long)]
    pub wavelength: Option<f64>,
    #[arg(long)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub detector_pixel: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(EvaluateArgs { field, data, mask, truth, wavelength, distance, detector_pixel, out });

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub simulate: SimulateArgs,
    pub run: RunArgs,
    pub ensemble: EnsembleOnly,
    pub evaluate: EvaluateArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

pub(crate) fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing --{flag} (flag or config file)")))
}
