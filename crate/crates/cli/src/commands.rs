use std::path::PathBuf;
use std::time::Instant;

use cgraar::container::{write_container, Container, Role};
use cgraar::datagen::{make_phantom_with_side, simulate_intensity, apply_beamstop};
use cgraar::ensemble::{run_trials, select_and_average};
use cgraar::metrics::{self, Geometry, PrtfCurve, Resolution};
use cgraar::{Algorithm, EnsembleConfig, EnsembleReport, IntensityData, PhantomKind, SolverConfig, SupportMask};
use serde::Serialize;

use crate::args::{required, EnsembleOnly, EvaluateArgs, RunArgs, SimulateArgs};
use crate::error::CliError;
use crate::output::{centred, create_dir, load_field, load_intensity, load_support, write_json, write_pgm, write_with};

/// E_F sums over measured pixels only; reports say so explicitly.
const E_FOURIER_PIXELS: &str = "measured";

#[derive(Serialize)]
struct SimulateReport<'a> {
    phantom: PhantomKind,
    window: usize,
    support: usize,
    support_fraction: f64,
    photons: f64,
    beamstop_radius: f64,
    seed: u64,
    zero_count_fraction: f64,
    unmeasured_fraction: f64,
    files: [&'a str; 4],
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let out = required(args.out, "out")?;
    let phantom = args.phantom.unwrap_or(PhantomKind::DiscBlobs);
    let window = args.window.unwrap_or(512);
    let side = args.support.unwrap_or(160);
    let photons = args.photons.unwrap_or(1000.0);
    let radius = args.beamstop_radius.unwrap_or(0.0);
    let seed = args.seed.unwrap_or(0);
    if !(photons.is_finite() && photons > 0.0) {
        return Err(CliError::Usage(format!("--photons must be positive, got {photons}")));
    }

    let (field, support) = make_phantom_with_side(phantom, window, side)?;
    let mut data = simulate_intensity(&field, photons, seed)?;
    if radius != 0.0 {
        data = apply_beamstop(&data, radius)?;
    }

    create_dir(&out)?;
    let shape = field.shape();
    let mut c = Container::new().with_meta("phantom", phantom).with_meta("window", window).with_meta("support", side);
    c.push_field("phantom", &field)?;
    write_container(out.join("phantom.cgr"), &c)?;

    let mut c = Container::new().with_meta("support", side);
    c.push_mask("support", Role::Support, shape, support.mask().to_vec())?;
    write_container(out.join("support.cgr"), &c)?;

    let mut c = Container::new().with_meta("photons", photons).with_meta("seed", seed).with_meta("beamstop_radius", radius);
    c.push_real("counts", Role::Intensity, shape, data.counts().to_vec())?;
    c.push_mask("detector", Role::Mask, shape, data.blocked().iter().map(|&b| !b).collect())?;
    write_container(out.join("intensity.cgr"), &c)?;

    let display: Vec<f64> = data.counts().iter().map(|&v| v.powf(0.1)).collect();
    let peak = display.iter().cloned().fold(0.0, f64::max);
    let display: Vec<f64> = display.iter().map(|v| if peak > 0.0 { v / peak } else { 0.0 }).collect();
    write_pgm(&out.join("intensity.pgm"), shape, &centred(shape, &display))?;

    let report = SimulateReport {
        phantom,
        window,
        support: side,
        support_fraction: support.fraction(),
        photons,
        beamstop_radius: radius,
        seed,
        zero_count_fraction: data.zero_count_fraction(),
        unmeasured_fraction: data.unmeasured_fraction(),
        files: ["phantom.cgr", "support.cgr", "intensity.cgr", "intensity.pgm"],
    };
    write_json(&out.join("simulate.json"), &report)?;
    eprintln!(
        "simulated {phantom} {window}x{window}: {:.1}% zero-count pixels, {:.1}% unmeasured",
        100.0 * report.zero_count_fraction,
        100.0 * report.unmeasured_fraction
    );
    Ok(())
}

/// Builds the solver settings, rejecting flags that do not apply to the algorithm.
fn solver_config(args: &RunArgs) -> Result<SolverConfig, CliError> {
    let algo = args.algo.unwrap_or(Algorithm::RaarEr);
    let misuse = |flag: &str, what: &str| Err(CliError::Usage(format!("--{flag} applies only to {what}, not {algo}")));
    if algo != Algorithm::CgRaar {
        if args.warmup.is_some() {
            return misuse("warmup", "cg-raar");
        }
        if args.guided.is_some() {
            return misuse("guided", "cg-raar");
        }
        if args.tolerance.is_some() {
            return misuse("tolerance", "cg-raar");
        }
    } else if args.iters.is_some() {
        return misuse("iters", "the unguided algorithms (use --warmup and --guided)");
    }
    if algo != Algorithm::RaarEr && args.er_tail.is_some() {
        return misuse("er-tail", "raar-er");
    }

    let mut config = SolverConfig::new(algo);
    if let Some(beta) = args.beta {
        config.beta = beta;
    }
    config.n_main = args.iters.unwrap_or(config.n_main);
    config.n_er = args.er_tail.unwrap_or(config.n_er);
    config.n_warmup = args.warmup.unwrap_or(config.n_warmup);
    config.n_guided = args.guided.unwrap_or(config.n_guided);
    if let Some(tolerance) = args.tolerance {
        config.budget.tolerance = tolerance;
    }
    config.seed = args.seed.unwrap_or(0);
    config.validate()?;
    if config.total_iterations() == 0 {
        eprintln!("warning: empty schedule, the output is the random initial guess");
    }
    Ok(config)
}

fn load_problem(args: &RunArgs) -> Result<(IntensityData, SupportMask), CliError> {
    let data = load_intensity(&required(args.data.clone(), "data")?, args.mask.as_deref())?;
    let support = load_support(&required(args.support.clone(), "support")?)?;
    data.shape().ensure_eq(support.shape())?;
    Ok((data, support))
}

#[derive(Serialize)]
struct Inputs {
    data: Option<PathBuf>,
    mask: Option<PathBuf>,
    support: Option<PathBuf>,
}

impl Inputs {
    fn of(args: &RunArgs) -> Self {
        Inputs { data: args.data.clone(), mask: args.mask.clone(), support: args.support.clone() }
    }
}

#[derive(Serialize)]
struct Timings {
    total_seconds: f64,
    per_iteration_ms: Option<f64>,
}

#[derive(Serialize)]
struct ReconstructReport {
    config: SolverConfig,
    e_fourier_pixels: &'static str,
    inputs: Inputs,
    iterations_run: usize,
    e_fourier: f64,
    final_zeta: Option<cgraar::TraceRecord>,
    zeta_mismatch: Option<f64>,
    timings: Timings,
}

pub fn reconstruct(args: RunArgs) -> Result<(), CliError> {
    let out = required(args.out.clone(), "out")?;
    let config = solver_config(&args)?;
    let (data, support) = load_problem(&args)?;

    let start = Instant::now();
    let solution = cgraar::solvers::run(&data, &support, &config)?;
    let seconds = start.elapsed().as_secs_f64();

    create_dir(&out)?;
    let mut c = Container::new().with_meta("algorithm", config.algorithm).with_meta("seed", config.seed);
    c.push_field("reconstruction", &solution.field)?;
    write_container(out.join("field.cgr"), &c)?;
    write_with(&out.join("trace.csv"), |w| solution.trace.write_csv(w))?;

    let last = solution.trace.last().copied();
    let report = ReconstructReport {
        config,
        e_fourier_pixels: E_FOURIER_PIXELS,
        inputs: Inputs::of(&args),
        iterations_run: solution.iterations_run,
        e_fourier: solution.e_fourier,
        final_zeta: last,
        zeta_mismatch: last.map(|r| (r.zeta - r.zeta0).abs() / r.zeta0),
        timings: Timings {
            total_seconds: seconds,
            per_iteration_ms: (solution.iterations_run > 0).then(|| 1e3 * seconds / solution.iterations_run as f64),
        },
    };
    write_json(&out.join("report.json"), &report)?;
    eprintln!("{}: {} iterations in {seconds:.2} s, E_F = {:.4e}", report.config.algorithm, report.iterations_run, report.e_fourier);
    Ok(())
}

#[derive(Serialize)]
struct EnsembleSettings {
    trials: usize,
    threshold: f64,
    base_seed: u64,
}

/// Everything here is independent of `--jobs` and of wall time, so reruns
/// with different worker counts give identical bytes.
#[derive(Serialize)]
struct EnsembleFile<'a> {
    config: &'a SolverConfig,
    ensemble: EnsembleSettings,
    inputs: Inputs,
    e_fourier_pixels: &'static str,
    report: &'a EnsembleReport,
}

#[derive(Serialize)]
struct ResolutionFile<'a> {
    resolution: Option<&'a Resolution>,
    e_fourier: Option<f64>,
    selected: usize,
    total: usize,
}

pub fn ensemble(args: RunArgs, extra: EnsembleOnly) -> Result<(), CliError> {
    let out = required(args.out.clone(), "out")?;
    let solver = solver_config(&args)?;
    let config = EnsembleConfig {
        n_trials: extra.trials.unwrap_or(10),
        correlation_threshold: extra.threshold.unwrap_or(0.96),
        jobs: extra.jobs.unwrap_or(0),
        base_seed: solver.seed,
    };
    config.validate()?;
    let (data, support) = load_problem(&args)?;

    let start = Instant::now();
    let trials = run_trials(&data, &support, &solver, &config)?;
    let report = select_and_average(&trials, &data, &support, &config)?;
    let seconds = start.elapsed().as_secs_f64();

    create_dir(&out)?;
    write_with(&out.join("trials.csv"), |w| report.write_trials_csv(w))?;
    let file = EnsembleFile {
        config: &solver,
        ensemble: EnsembleSettings { trials: config.n_trials, threshold: config.correlation_threshold, base_seed: config.base_seed },
        inputs: Inputs::of(&args),
        e_fourier_pixels: E_FOURIER_PIXELS,
        report: &report,
    };
    let report_path = out.join("report.json");
    write_json(&report_path, &file)?;
    write_json(
        &out.join("resolution.json"),
        &ResolutionFile {
            resolution: report.resolution.as_ref(),
            e_fourier: report.e_fourier_average,
            selected: report.selected_count,
            total: report.total_count,
        },
    )?;
    let Some(average) = &report.averaged_field else {
        return Err(CliError::EmptySelection(report_path));
    };
    if let Some(curve) = &report.prtf {
        write_with(&out.join("prtf.csv"), |w| curve.write_csv(w))?;
    }
    let mut c = Container::new().with_meta("algorithm", solver.algorithm).with_meta("selected", report.selected_count);
    c.push_field("average", average)?;
    write_container(out.join("average.cgr"), &c)?;
    write_pgm(&out.join("average.pgm"), average.shape(), &average.magnitudes())?;

    eprintln!(
        "{}: {}/{} trials selected in {seconds:.1} s, resolution {}",
        solver.algorithm,
        report.selected_count,
        report.total_count,
        describe(report.resolution.as_ref())
    );
    Ok(())
}

fn describe(resolution: Option<&Resolution>) -> String {
    match resolution {
        Some(r) if r.no_crossing => format!("{:.2} px (PRTF never drops below 1/e)", r.pixels),
        Some(r) => format!("{:.2} px", r.pixels),
        None => "undefined".into(),
    }
}

#[derive(Serialize)]
struct Evaluation {
    field: PathBuf,
    data: PathBuf,
    truth: Option<PathBuf>,
    e_fourier_pixels: &'static str,
    e_fourier: f64,
    e_real: Option<f64>,
    resolution: Option<Resolution>,
    prtf: PrtfCurve,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let out = required(args.out, "out")?;
    let field_path = required(args.field, "field")?;
    let data_path = required(args.data, "data")?;
    let geometry = match (args.wavelength, args.distance, args.detector_pixel) {
        (None, None, None) => None,
        (Some(wavelength), Some(distance), Some(detector_pixel)) => Some((wavelength, distance, detector_pixel)),
        _ => return Err(CliError::Usage("--wavelength, --distance and --detector-pixel go together".into())),
    };

    let field = load_field(&field_path)?;
    let data = load_intensity(&data_path, args.mask.as_deref())?;
    field.shape().ensure_eq(data.shape())?;
    let e_real = match &args.truth {
        Some(path) => Some(metrics::error_real(&field, &load_field(path)?)?),
        None => None,
    };
    let geometry = geometry.map(|(wavelength, distance, detector_pixel)| Geometry {
        wavelength,
        distance,
        detector_pixel,
        pixels: field.width().max(field.height()),
    });

    let curve = metrics::prtf_radial(&metrics::prtf_map(&field, &data)?);
    let resolution = metrics::resolution_from_prtf(&curve, geometry.as_ref()).ok();
    let evaluation = Evaluation {
        field: field_path,
        data: data_path,
        truth: args.truth,
        e_fourier_pixels: E_FOURIER_PIXELS,
        e_fourier: metrics::error_fourier(&field, &data)?,
        e_real,
        resolution,
        prtf: curve,
    };
    create_dir(&out)?;
    write_with(&out.join("prtf.csv"), |w| evaluation.prtf.write_csv(w))?;
    write_json(&out.join("evaluation.json"), &evaluation)?;
    println!("E_F        {:.6e}", evaluation.e_fourier);
    if let Some(e) = evaluation.e_real {
        println!("E_R        {e:.6e}");
    }
    println!("resolution {}", describe(evaluation.resolution.as_ref()));
    Ok(())
}

