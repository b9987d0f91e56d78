//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when a numerical
//! step fails or a solver reports failure (outputs are still written when
//! possible).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::altproj::{fienup_solve, gs_solve, oss_solve, AltProjConfig, FienupVariant, RealSpaceConstraint};
use crate::bench::{
    gen_circle_image, gen_phantom, gen_sparse_vector, resolve_threads, run_experiment, write_reports,
    CircleImageParams, ExperimentSpec,
};
use crate::diagnostics::{coherence_mu, collision_free_check, complement_property_check, rip_delta, MetricReport};
use crate::error::{PhaseError, Result};
use crate::forward::{
    add_poisson_noise, apply_missing_center, intensity, read_observation_bin, read_observation_csv,
    write_observation_bin, MeasurementModel, Observation,
};
use crate::greedy::{gespar_solve, sparse_fienup_solve, Dictionary, GesparConfig, QuadraticSystem, SparseFienupConfig};
use crate::io::{read_signal, read_signal_csv, write_signal};
use crate::lifted::{cprl_solve, extract_rank1, phaselift_solve, qcs_solve, LiftedConfig, LiftedProblem};
use crate::signal::{Signal, SupportMask};

#[derive(Debug, Parser)]
#[command(name = "phasekit", version, about = "Phase retrieval toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a scene, its support and its Fourier intensity.
    Generate(GenerateArgs),
    /// Run one solver on one observation.
    Solve(SolveArgs),
    /// Run a Monte-Carlo experiment spec.
    Bench(BenchArgs),
    /// Uniqueness and conditioning checks.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SceneKind {
    Sparse,
    Phantom,
    Circles,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    scene: SceneKind,
    /// Length of a sparse signal.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Nonzeros (sparse) or active circles (circles).
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Phantom side length.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Measurement grid per axis (defaults to twice the scene).
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long)]
    photon_budget: Option<f64>,
    #[arg(long, default_value_t = 0)]
    missing_center: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Hio,
    Oss,
    Er,
    Io,
    Oo,
    Gs,
    Gespar,
    SparseFienup,
    Phaselift,
    Cprl,
    Qcs,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    alg: SolverKind,
    /// Observation (`.bin` or `.csv`), measured on the oversampled grid.
    #[arg(long)]
    obs: PathBuf,
    /// Support mask on the grid (nonzero samples are inside).
    #[arg(long)]
    support: Option<PathBuf>,
    /// Known real-space modulus for `gs`.
    #[arg(long)]
    magnitude: Option<PathBuf>,
    /// Ground truth for the error metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Dictionary atoms (with an optional `.json` sidecar next to them).
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Signal shape for the sparse and lifted solvers (defaults to half the grid).
    #[arg(long, value_delimiter = ',')]
    signal_shape: Option<Vec<usize>>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    nonnegative: bool,
    #[arg(long)]
    real: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker count (overrides PHASEKIT_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Matrix whose columns are atoms or measurement vectors (2D signal file).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// 1D signal for the collision check.
    #[arg(long)]
    signal: Option<PathBuf>,
    #[arg(long)]
    coherence: bool,
    /// Restricted isometry constant of this order.
    #[arg(long)]
    rip: Option<usize>,
    #[arg(long)]
    complement: bool,
    #[arg(long)]
    collision_free: bool,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<PhaseError> for Failure {
    fn from(e: PhaseError) -> Self {
        let code = match e {
            PhaseError::NonFinite(_) | PhaseError::ZeroNorm(_) | PhaseError::GuardExceeded(_) | PhaseError::Singular(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn load_signal(path: &Path) -> Result<Signal> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_signal_csv(path)
    } else {
        read_signal(path)
    }
}

fn load_observation(path: &Path) -> Result<Observation> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_observation_csv(path)
    } else {
        read_observation_bin(path)
    }
}

fn mask_signal(mask: &SupportMask) -> Result<Signal> {
    let values: Vec<f64> = mask.as_slice().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Signal::from_real(mask.shape(), &values)
}

fn load_mask(path: &Path) -> Result<SupportMask> {
    SupportMask::from_signal(&load_signal(path)?, 0.0)
}

fn generate(a: &GenerateArgs) -> std::result::Result<i32, Failure> {
    let (truth, dict) = match a.scene {
        SceneKind::Sparse => (gen_sparse_vector(a.n, a.k, a.seed)?, None),
        SceneKind::Phantom => (gen_phantom(a.size, a.seed)?, None),
        SceneKind::Circles => {
            let params = CircleImageParams {
                sparsity: a.k,
                ..CircleImageParams::default()
            };
            let (img, dict, _) = gen_circle_image(&params, a.seed)?;
            (img, Some(dict))
        }
    };
    let grid = a
        .m
        .clone()
        .unwrap_or_else(|| truth.shape().iter().map(|&n| 2 * n).collect());
    let mut obs = intensity(&truth, &MeasurementModel::OversampledFourier { m: grid.clone() })?;
    if let Some(budget) = a.photon_budget {
        obs = add_poisson_noise(&obs, budget, a.seed)?;
    }
    obs = apply_missing_center(&obs, a.missing_center)?;
    fs::create_dir_all(&a.out).map_err(PhaseError::from)?;
    write_signal(a.out.join("truth.bin"), &truth)?;
    write_observation_bin(a.out.join("obs.bin"), &obs)?;
    let support = SupportMask::from_signal(&truth, 0.0)?.zero_pad(&grid)?;
    write_signal(a.out.join("support.bin"), &mask_signal(&support)?)?;
    if let Some(d) = dict {
        let sidecar = a.out.join("dictionary.json");
        d.save(a.out.join("dictionary.bin"), Some(sidecar.as_path()))?;
    }
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn sidecar_for(atoms: &Path) -> Option<PathBuf> {
    let side = atoms.with_extension("json");
    side.exists().then_some(side)
}

fn solve(a: &SolveArgs) -> std::result::Result<i32, Failure> {
    let obs = load_observation(&a.obs)?;
    let grid = obs.shape().to_vec();
    let model = MeasurementModel::OversampledFourier { m: grid.clone() };
    let signal_shape = a
        .signal_shape
        .clone()
        .unwrap_or_else(|| grid.iter().map(|&m| m.div_ceil(2)).collect());
    let mut altproj = AltProjConfig { seed: a.seed, ..AltProjConfig::default() };
    if let Some(it) = a.iters {
        altproj.max_iters = it;
    }
    if let Some(b) = a.beta {
        altproj.beta = b;
    }
    let constraint = || -> Result<RealSpaceConstraint> {
        Ok(RealSpaceConstraint {
            support: a.support.as_deref().map(load_mask).transpose()?,
            nonnegative: a.nonnegative,
            real_valued: a.real || a.nonnegative,
            known_magnitude: None,
        })
    };
    let need_sparsity = || a.sparsity.ok_or_else(|| usage("--sparsity is required for this solver"));
    let mut solver_ok = true;
    let recon = match a.alg {
        SolverKind::Hio | SolverKind::Er | SolverKind::Io | SolverKind::Oo | SolverKind::Oss => {
            let c = constraint()?;
            let trace = match a.alg {
                SolverKind::Oss => oss_solve(&obs, &c, &altproj)?,
                SolverKind::Er => fienup_solve(&obs, &c, &altproj, FienupVariant::ErrorReduction)?,
                SolverKind::Io => fienup_solve(&obs, &c, &altproj, FienupVariant::InputOutput)?,
                SolverKind::Oo => fienup_solve(&obs, &c, &altproj, FienupVariant::OutputOutput)?,
                _ => fienup_solve(&obs, &c, &altproj, FienupVariant::Hio)?,
            };
            trace.reconstruction
        }
        SolverKind::Gs => {
            let path = a.magnitude.as_deref().ok_or_else(|| usage("--magnitude is required for gs"))?;
            gs_solve(&obs, &load_signal(path)?, &altproj)?.reconstruction
        }
        SolverKind::Gespar => {
            let k = need_sparsity()?;
            let (sys, dict) = match &a.dictionary {
                Some(p) => {
                    let d = Dictionary::load(p, sidecar_for(p).as_deref())?;
                    (QuadraticSystem::from_fourier_dictionary(&d, &grid, &obs)?, Some(d))
                }
                None => (QuadraticSystem::from_model(&model, &signal_shape, &obs, true)?, None),
            };
            let mut cfg = GesparConfig {
                sparsity: k,
                seed: a.seed,
                ..GesparConfig::default()
            };
            if let Some(r) = a.restarts {
                cfg.max_restarts = Some(r);
            }
            let rep = gespar_solve(&sys, &cfg)?;
            solver_ok = rep.converged;
            let x = match dict {
                Some(d) => d.synthesize(rep.x.data())?,
                None => Signal::new(&signal_shape, rep.x.into_data())?,
            };
            x.zero_pad(&grid)?
        }
        SolverKind::SparseFienup => {
            let k = need_sparsity()?;
            let dict = match &a.dictionary {
                Some(p) => Dictionary::load(p, sidecar_for(p).as_deref())?,
                None => Dictionary::identity(&signal_shape)?,
            };
            let mut cfg = SparseFienupConfig {
                seed: a.seed,
                real_valued: a.real || a.nonnegative || SparseFienupConfig::default().real_valued,
                ..SparseFienupConfig::default()
            };
            if let Some(it) = a.iters {
                cfg.max_iters = it;
            }
            if let Some(r) = a.restarts {
                cfg.restarts = r;
            }
            sparse_fienup_solve(&obs, &dict, k, &cfg)?.x.zero_pad(&grid)?
        }
        SolverKind::Phaselift | SolverKind::Cprl | SolverKind::Qcs => {
            if signal_shape.len() != 1 {
                return Err(usage("lifted solvers take 1D signals"));
            }
            let mut cfg = LiftedConfig { seed: a.seed, ..LiftedConfig::default() };
            if let Some(l) = a.lambda {
                cfg.lambda = l;
            }
            if let Some(e) = a.eta {
                cfg.eta = e;
            }
            if let Some(it) = a.iters {
                cfg.inner_iters = it;
            }
            cfg.validate()?;
            let problem = LiftedProblem::<Complex64>::from_observation(&obs, &model, signal_shape[0])?;
            let sol = match a.alg {
                SolverKind::Cprl => cprl_solve(&problem, &cfg)?,
                SolverKind::Qcs => qcs_solve(&problem, &cfg)?,
                _ => phaselift_solve(&problem, &cfg)?,
            };
            solver_ok = sol.feasible;
            extract_rank1(&sol.matrix).zero_pad(&grid)?
        }
    };
    let truth = match &a.truth {
        Some(p) => Some(load_signal(p)?.zero_pad(&grid)?),
        None => None,
    };
    fs::create_dir_all(&a.out).map_err(PhaseError::from)?;
    write_signal(a.out.join("recon.bin"), &recon)?;
    let finite = recon.data().iter().all(|v| v.re.is_finite() && v.im.is_finite());
    if !finite {
        eprintln!("reconstruction is not finite");
        return Ok(2);
    }
    let report = MetricReport::compute(&recon, &obs, truth.as_ref())?;
    report.write_json(a.out.join("metrics.json"))?;
    println!("{}", serde_json::to_string(&report).map_err(PhaseError::from)?);
    if !solver_ok {
        eprintln!("solver did not meet its success criterion");
        return Ok(2);
    }
    Ok(0)
}

fn bench(a: &BenchArgs) -> std::result::Result<i32, Failure> {
    let spec = ExperimentSpec::load(&a.spec)?;
    let result = run_experiment(&spec, resolve_threads(a.threads))?;
    write_reports(&a.out, &result)?;
    println!("solver,k,trials,successes,rate,ci_lo,ci_hi");
    for r in &result.summary {
        println!(
            "{},{},{},{},{:.6},{:.6},{:.6}",
            r.solver, r.k, r.trials, r.successes, r.rate, r.ci_lo, r.ci_hi
        );
    }
    let failed = result.trials.iter().filter(|t| t.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} trial(s) failed; see trials.csv");
    }
    Ok(0)
}

fn matrix_of(signal: &Signal) -> Result<DMatrix<f64>> {
    match *signal.shape() {
        [rows, cols] => Ok(DMatrix::from_row_iterator(rows, cols, signal.data().iter().map(|v| v.re))),
        [rows] => Ok(DMatrix::from_iterator(rows, 1, signal.data().iter().map(|v| v.re))),
        _ => Err(PhaseError::ShapeMismatch("matrix input must be 1D or 2D".into())),
    }
}

fn diagnose(a: &DiagnoseArgs) -> std::result::Result<i32, Failure> {
    if !(a.coherence || a.rip.is_some() || a.complement || a.collision_free) {
        return Err(usage("choose at least one of --coherence, --rip, --complement, --collision-free"));
    }
    let matrix = || -> std::result::Result<DMatrix<f64>, Failure> {
        let p = a.matrix.as_deref().ok_or_else(|| usage("--matrix is required"))?;
        Ok(matrix_of(&load_signal(p)?)?)
    };
    if a.coherence {
        println!("coherence_mu: {}", coherence_mu(&matrix()?)?);
    }
    if let Some(k) = a.rip {
        println!("rip_delta[{k}]: {}", rip_delta(&matrix()?, k)?);
    }
    if a.complement {
        let m = matrix()?;
        let vectors: Vec<DVector<f64>> = m.column_iter().map(|c| c.into_owned()).collect();
        let res = complement_property_check(&vectors)?;
        println!("complement_property: {}", res.holds);
        if let Some(w) = res.witness {
            let list: Vec<String> = w.iter().map(|i| i.to_string()).collect();
            println!("witness: {}", list.join(","));
        }
    }
    if a.collision_free {
        let p = a.signal.as_deref().ok_or_else(|| usage("--signal is required"))?;
        let res = collision_free_check(&load_signal(p)?)?;
        println!("collision_free: {}", res.collision_free);
        if let Some([i, j, k, l]) = res.witness {
            println!("witness: {i},{j},{k},{l}");
        }
    }
    Ok(0)
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
