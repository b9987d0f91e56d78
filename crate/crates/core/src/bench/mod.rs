//! Scene generators and the Monte-Carlo experiment runner.
//!
//! An [`ExperimentSpec`] names a scene family, a measurement model, a noise
//! model and a list of solvers. Every `(sweep point, trial)` pair draws one
//! scene and one observation, which all solvers then share; each solver gets
//! its own seed stream derived from `(base_seed, solver id, k, trial)`.

mod scenes;

pub use scenes::{gen_circle_image, gen_phantom, gen_sparse_vector, CircleImageParams};

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::altproj::{fienup_solve, oss_solve, AltProjConfig, FienupVariant, RealSpaceConstraint};
use crate::diagnostics::{recovery_error_e, MetricReport};
use crate::error::{invalid, PhaseError, Result};
use crate::forward::{add_poisson_noise, apply_missing_center, intensity, MeasurementModel, Observation};
use crate::greedy::{gespar_solve, sparse_fienup_solve, Dictionary, GesparConfig, QuadraticSystem, SparseFienupConfig};
use crate::lifted::{cprl_solve, extract_rank1, phaselift_solve, qcs_solve, LiftedConfig, LiftedProblem};
use crate::signal::{align_to_reference, Signal, SupportMask};

/// First line of every summary file.
pub const SUMMARY_VERSION_LINE: &str = "# phasekit summary v1";
pub const SUMMARY_HEADER: [&str; 7] = ["solver", "k", "trials", "successes", "rate", "ci_lo", "ci_hi"];

/// Ground-truth family. `k` lists the sweep points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSpec {
    SparseVector {
        n: usize,
        k: Vec<usize>,
    },
    Circles {
        #[serde(default = "default_grid_points")]
        grid_points: usize,
        #[serde(default = "default_image_size")]
        image_size: usize,
        #[serde(default = "default_circle_diameter")]
        circle_diameter: f64,
        k: Vec<usize>,
    },
    /// Single sweep point, reported as `k = 0`.
    Phantom { size: usize },
}

fn default_grid_points() -> usize {
    CircleImageParams::default().grid_points
}

fn default_image_size() -> usize {
    CircleImageParams::default().image_size
}

fn default_circle_diameter() -> f64 {
    CircleImageParams::default().circle_diameter
}

impl SceneSpec {
    fn sweep(&self) -> Vec<usize> {
        match self {
            Self::SparseVector { k, .. } | Self::Circles { k, .. } => k.clone(),
            Self::Phantom { .. } => vec![0],
        }
    }

    fn shape(&self) -> Vec<usize> {
        match self {
            Self::SparseVector { n, .. } => vec![*n],
            Self::Circles { image_size, .. } => vec![*image_size; 2],
            Self::Phantom { size } => vec![*size; 2],
        }
    }

    fn is_sparse(&self) -> bool {
        !matches!(self, Self::Phantom { .. })
    }
}

/// Measurement model. Fourier grids default to twice the signal size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementSpec {
    OversampledFourier {
        #[serde(default)]
        m: Option<Vec<usize>>,
    },
    /// `count` complex Gaussian vectors, redrawn per trial.
    Gaussian { count: usize },
    LowPass {
        #[serde(default)]
        m: Option<Vec<usize>>,
        cutoff: f64,
    },
}

impl MeasurementSpec {
    fn grid(&self, shape: &[usize]) -> Vec<usize> {
        match self {
            Self::OversampledFourier { m } | Self::LowPass { m, .. } => {
                m.clone().unwrap_or_else(|| shape.iter().map(|&n| 2 * n).collect())
            }
            Self::Gaussian { .. } => shape.to_vec(),
        }
    }

    fn is_fourier(&self) -> bool {
        !matches!(self, Self::Gaussian { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    Poisson { photon_budget: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gespar,
    SparseFienup,
    Qcs,
    Phaselift,
    Cprl,
    Hio,
    Oss,
    Er,
    /// Returns the truth; checks the harness itself.
    Passthrough,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gespar => "gespar",
            Self::SparseFienup => "sparse_fienup",
            Self::Qcs => "qcs",
            Self::Phaselift => "phaselift",
            Self::Cprl => "cprl",
            Self::Hio => "hio",
            Self::Oss => "oss",
            Self::Er => "er",
            Self::Passthrough => "passthrough",
        }
    }
}

/// One solver of the comparison. `config` is the algorithm's own settings
/// object; sparsity and seeds are filled in per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    #[serde(default)]
    pub id: Option<String>,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub config: serde_json::Value,
    /// Alternating projections: grow the true support by this radius.
    #[serde(default)]
    pub support_dilation: usize,
    #[serde(default)]
    pub nonnegative: bool,
    #[serde(default)]
    pub real_valued: bool,
    /// QCS: set `eta` to this multiple of `‖x‖₁‖x‖₂` of the truth.
    #[serde(default)]
    pub eta_factor: Option<f64>,
}

impl SolverEntry {
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.algorithm.name().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuccessCriterion {
    /// Aligned relative residual below which a trial counts.
    pub residual_threshold: f64,
    /// Sparse scenes also require the exact support after alignment.
    pub support_match: bool,
}

impl Default for SuccessCriterion {
    fn default() -> Self {
        Self {
            residual_threshold: 1e-4,
            support_match: true,
        }
    }
}

/// A complete Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub scene: SceneSpec,
    pub measurement: MeasurementSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Half-width of the unmeasured low-frequency square (0 for none).
    #[serde(default)]
    pub missing_center: usize,
    pub solvers: Vec<SolverEntry>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub success: SuccessCriterion,
}

#[derive(Debug, Clone)]
enum Plan {
    Gespar(GesparConfig),
    SparseFienup(SparseFienupConfig),
    Lifted(Algorithm, LiftedConfig),
    AltProj(Algorithm, AltProjConfig),
    Passthrough,
}

fn parse_config<T: DeserializeOwned + Default>(value: &serde_json::Value, at: &str) -> Result<T> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { at.to_string() } else { format!("{at}.{path}") };
        PhaseError::Format(format!("{field}: {}", e.into_inner()))
    })
}

impl ExperimentSpec {
    /// Parse and validate; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| PhaseError::Format(format!("{}: {}", e.path(), e.inner())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn plans(&self) -> Result<Vec<Plan>> {
        self.solvers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let at = format!("solvers[{i}].config");
                Ok(match s.algorithm {
                    Algorithm::Gespar => Plan::Gespar(parse_config(&s.config, &at)?),
                    Algorithm::SparseFienup => Plan::SparseFienup(parse_config(&s.config, &at)?),
                    a @ (Algorithm::Qcs | Algorithm::Phaselift | Algorithm::Cprl) => {
                        let cfg: LiftedConfig = parse_config(&s.config, &at)?;
                        cfg.validate()?;
                        Plan::Lifted(a, cfg)
                    }
                    a @ (Algorithm::Hio | Algorithm::Oss | Algorithm::Er) => {
                        let cfg: AltProjConfig = parse_config(&s.config, &at)?;
                        cfg.validate()?;
                        Plan::AltProj(a, cfg)
                    }
                    Algorithm::Passthrough => {
                        if !(s.config.is_null() || s.config.as_object().is_some_and(|o| o.is_empty())) {
                            return Err(PhaseError::Format(format!("{at}: passthrough takes no settings")));
                        }
                        Plan::Passthrough
                    }
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if !(self.success.residual_threshold > 0.0) {
            return Err(invalid("success.residual_threshold", "must be positive"));
        }
        if self.solvers.is_empty() {
            return Err(invalid("solvers", "list is empty"));
        }
        let mut ids = HashSet::new();
        for s in &self.solvers {
            if !ids.insert(s.id()) {
                return Err(invalid("solvers", format!("duplicate id {:?}", s.id())));
            }
        }
        let shape = self.scene.shape();
        match &self.scene {
            SceneSpec::SparseVector { n, k } => {
                if *n == 0 || k.is_empty() || k.iter().any(|v| v > n) {
                    return Err(invalid("scene.k", format!("needs a nonempty list within 0..={n}")));
                }
            }
            SceneSpec::Circles { grid_points, k, .. } => {
                let atoms = grid_points * grid_points;
                if k.is_empty() || k.iter().any(|&v| v > atoms) {
                    return Err(invalid("scene.k", format!("needs a nonempty list within 0..={atoms}")));
                }
            }
            SceneSpec::Phantom { size } => {
                if *size < 32 {
                    return Err(invalid("scene.size", "must be at least 32"));
                }
            }
        }
        let grid = self.measurement.grid(&shape);
        if self.measurement.is_fourier() && (grid.len() != shape.len() || grid.iter().zip(&shape).any(|(m, n)| m < n)) {
            return Err(invalid("measurement.m", "grid must cover the signal on every axis"));
        }
        if let NoiseSpec::Poisson { photon_budget } = self.noise {
            if !(photon_budget > 0.0 && photon_budget.is_finite()) {
                return Err(invalid("noise.photon_budget", "must be positive"));
            }
        }
        let plain_fourier = matches!(self.measurement, MeasurementSpec::OversampledFourier { .. });
        for (i, (s, plan)) in self.solvers.iter().zip(self.plans()?).enumerate() {
            let needs_fourier = matches!(plan, Plan::SparseFienup(_) | Plan::AltProj(..));
            if needs_fourier && !plain_fourier {
                return Err(invalid("solvers", format!("[{i}].algorithm needs oversampled_fourier measurements")));
            }
            if matches!(plan, Plan::Lifted(..)) && shape.len() != 1 {
                return Err(invalid("solvers", format!("[{i}].algorithm: lifted solvers take 1D scenes")));
            }
            if matches!(plan, Plan::Gespar(_) | Plan::SparseFienup(_)) && !self.scene.is_sparse() {
                return Err(invalid("solvers", format!("[{i}].algorithm needs a sparse scene")));
            }
            if s.eta_factor.is_some_and(|f| !(f > 0.0)) {
                return Err(invalid("solvers", format!("[{i}].eta_factor must be positive")));
            }
        }
        Ok(())
    }
}

/// One `(solver, k, trial)` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub solver: String,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub aligned_residual: f64,
    #[serde(rename = "E")]
    pub e: f64,
    /// Only defined for plain oversampled Fourier data (NaN otherwise).
    #[serde(rename = "R_F")]
    pub r_factor: f64,
    pub wall_time_s: f64,
    /// Swaps for GESPAR, iterations otherwise.
    pub iterations: usize,
    pub error: Option<String>,
}

/// Success rate of one solver at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: String,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub trials: Vec<TrialReport>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn row(&self, solver: &str, k: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.solver == solver && r.k == k)
    }

    /// Records of one solver at one sweep point, in trial order.
    pub fn records<'a>(&'a self, solver: &'a str, k: usize) -> impl Iterator<Item = &'a TrialReport> + 'a {
        self.trials.iter().filter(move |t| t.solver == solver && t.k == k)
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959963984540054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + Z * Z / n;
    let center = (p + Z * Z / (2.0 * n)) / denom;
    let half = Z / denom * (p * (1.0 - p) / n + Z * Z / (4.0 * n * n)).sqrt();
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

/// Stable seed for one stream of one trial.
pub fn derive_seed(base_seed: u64, stream: &str, k: usize, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    h.update((k as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Worker count from `--threads`, then `PHASEKIT_THREADS`, else the
/// machine default (0).
pub fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("PHASEKIT_THREADS").ok()?.trim().parse().ok())
        .unwrap_or(0)
}

/// One drawn instance shared by all solvers.
pub struct Instance {
    pub truth: Signal,
    pub dictionary: Option<Dictionary>,
    pub model: MeasurementModel,
    pub observation: Observation,
    /// Truth embedded in the leading block of the grid.
    pub truth_on_grid: Signal,
}

fn gaussian_vectors(count: usize, n: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect()
        })
        .collect()
}

/// Draw the scene and observation of one `(k, trial)` cell.
pub fn draw_instance(spec: &ExperimentSpec, k: usize, trial: usize) -> Result<Instance> {
    let scene_seed = derive_seed(spec.base_seed, "scene", k, trial);
    let (truth, dictionary) = match &spec.scene {
        SceneSpec::SparseVector { n, .. } => (gen_sparse_vector(*n, k, scene_seed)?, None),
        SceneSpec::Circles {
            grid_points,
            image_size,
            circle_diameter,
            ..
        } => {
            let params = CircleImageParams {
                grid_points: *grid_points,
                image_size: *image_size,
                circle_diameter: *circle_diameter,
                sparsity: k,
            };
            let (img, dict, _) = gen_circle_image(&params, scene_seed)?;
            (img, Some(dict))
        }
        SceneSpec::Phantom { size } => (gen_phantom(*size, scene_seed)?, None),
    };
    let shape = truth.shape().to_vec();
    let grid = spec.measurement.grid(&shape);
    let model = match &spec.measurement {
        MeasurementSpec::OversampledFourier { .. } => MeasurementModel::OversampledFourier { m: grid.clone() },
        MeasurementSpec::LowPass { cutoff, .. } => MeasurementModel::LowPassFourier {
            m: grid.clone(),
            cutoff: *cutoff,
        },
        MeasurementSpec::Gaussian { count } => MeasurementModel::GeneralLinear {
            vectors: gaussian_vectors(*count, truth.len(), derive_seed(spec.base_seed, "measurement", k, trial)),
        },
    };
    let mut observation = intensity(&truth, &model)?;
    if let NoiseSpec::Poisson { photon_budget } = spec.noise {
        observation = add_poisson_noise(&observation, photon_budget, derive_seed(spec.base_seed, "noise", k, trial))?;
    }
    if spec.missing_center > 0 {
        observation = apply_missing_center(&observation, spec.missing_center)?;
    }
    let truth_on_grid = truth.zero_pad(&grid)?;
    Ok(Instance {
        truth,
        dictionary,
        model,
        observation,
        truth_on_grid,
    })
}

/// Estimate on the comparison grid plus the work counter.
fn run_solver(entry: &SolverEntry, plan: &Plan, inst: &Instance, k: usize, seed: u64) -> Result<(Signal, usize)> {
    let grid = inst.truth_on_grid.shape().to_vec();
    let shape = inst.truth.shape().to_vec();
    let identity;
    let dict = match &inst.dictionary {
        Some(d) => d,
        None => {
            identity = Dictionary::identity(&shape)?;
            &identity
        }
    };
    match plan {
        Plan::Gespar(base) => {
            let sys = match &inst.dictionary {
                Some(d) => QuadraticSystem::from_fourier_dictionary(d, &grid, &inst.observation)?,
                None => QuadraticSystem::from_model(&inst.model, &shape, &inst.observation, true)?,
            };
            let cfg = GesparConfig {
                sparsity: k,
                seed,
                ..base.clone()
            };
            let rep = gespar_solve(&sys, &cfg)?;
            let x = match &inst.dictionary {
                Some(d) => d.synthesize(rep.x.data())?,
                None => rep.x.crop(&shape)?,
            };
            Ok((x.zero_pad(&grid)?, rep.swaps))
        }
        Plan::SparseFienup(base) => {
            let cfg = SparseFienupConfig { seed, ..base.clone() };
            let rep = sparse_fienup_solve(&inst.observation, dict, k, &cfg)?;
            Ok((rep.x.zero_pad(&grid)?, rep.errors.len()))
        }
        Plan::Lifted(alg, base) => {
            let mut cfg = LiftedConfig { seed, ..base.clone() };
            if let Some(factor) = entry.eta_factor {
                let l1: f64 = inst.truth.data().iter().map(|v| v.norm()).sum();
                cfg.eta = factor * l1 * inst.truth.norm();
            }
            let problem = LiftedProblem::<Complex64>::from_observation(&inst.observation, &inst.model, inst.truth.len())?;
            let sol = match alg {
                Algorithm::Qcs => qcs_solve(&problem, &cfg)?,
                Algorithm::Cprl => cprl_solve(&problem, &cfg)?,
                _ => phaselift_solve(&problem, &cfg)?,
            };
            let x = extract_rank1(&sol.matrix);
            Ok((x.zero_pad(&grid)?, sol.iterations))
        }
        Plan::AltProj(alg, base) => {
            let cfg = AltProjConfig { seed, ..base.clone() };
            let support = SupportMask::from_signal(&inst.truth, 0.0)?
                .dilate(entry.support_dilation)
                .zero_pad(&grid)?;
            let constraint = RealSpaceConstraint {
                support: Some(support),
                nonnegative: entry.nonnegative,
                real_valued: entry.real_valued || entry.nonnegative,
                known_magnitude: None,
            };
            let trace = match alg {
                Algorithm::Oss => oss_solve(&inst.observation, &constraint, &cfg)?,
                Algorithm::Er => fienup_solve(&inst.observation, &constraint, &cfg, FienupVariant::ErrorReduction)?,
                _ => fienup_solve(&inst.observation, &constraint, &cfg, FienupVariant::Hio)?,
            };
            Ok((trace.reconstruction, trace.iterations))
        }
        Plan::Passthrough => Ok((inst.truth_on_grid.clone(), 0)),
    }
}

/// Closest global-phase rotation of `candidate` to `reference`.
fn align_phase_only(candidate: &Signal, reference: &Signal) -> Result<(Signal, f64)> {
    let inner: Complex64 = candidate
        .data()
        .iter()
        .zip(reference.data())
        .map(|(c, r)| c.conj() * r)
        .sum();
    let rot = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex64::new(1.0, 0.0) };
    let aligned = candidate.scaled(rot);
    let residual = aligned.distance(reference)? / reference.norm();
    Ok((aligned, residual))
}

struct Scored {
    aligned_residual: f64,
    e: f64,
    r_factor: f64,
    support_ok: bool,
}

fn score(spec: &ExperimentSpec, inst: &Instance, estimate: &Signal) -> Result<Scored> {
    let truth = &inst.truth_on_grid;
    let (aligned, aligned_residual, r_factor) = match spec.measurement {
        MeasurementSpec::OversampledFourier { .. } => {
            let metrics = MetricReport::compute(estimate, &inst.observation, Some(truth))?;
            let a = align_to_reference(estimate, truth)?;
            (a.aligned, a.residual, metrics.r_factor)
        }
        MeasurementSpec::LowPass { .. } => {
            let a = align_to_reference(estimate, truth)?;
            (a.aligned, a.residual, f64::NAN)
        }
        MeasurementSpec::Gaussian { .. } => {
            let (aligned, residual) = align_phase_only(estimate, truth)?;
            (aligned, residual, f64::NAN)
        }
    };
    let e = recovery_error_e(&aligned, truth)?;
    let peak = truth.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let support_ok = aligned
        .data()
        .iter()
        .zip(truth.data())
        .all(|(a, t)| (a.norm() > 1e-3 * peak) == (t.norm() > 0.0));
    Ok(Scored {
        aligned_residual,
        e,
        r_factor,
        support_ok,
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "solver panicked".into())
}

fn run_cell(spec: &ExperimentSpec, plans: &[Plan], k: usize, trial: usize) -> Vec<TrialReport> {
    let instance = catch_unwind(AssertUnwindSafe(|| draw_instance(spec, k, trial)))
        .unwrap_or_else(|p| Err(PhaseError::Format(panic_message(p))));
    spec.solvers
        .iter()
        .zip(plans)
        .map(|(entry, plan)| {
            let id = entry.id();
            let seed = derive_seed(spec.base_seed, &id, k, trial);
            let start = Instant::now();
            let outcome = instance.as_ref().map_err(|e| e.to_string()).and_then(|inst| {
                catch_unwind(AssertUnwindSafe(|| {
                    let (est, iterations) = run_solver(entry, plan, inst, k, seed)?;
                    Ok((score(spec, inst, &est)?, iterations))
                }))
                .unwrap_or_else(|p| Err(PhaseError::Format(panic_message(p))))
                .map_err(|e: PhaseError| e.to_string())
            });
            let wall_time_s = start.elapsed().as_secs_f64();
            match outcome {
                Ok((s, iterations)) => TrialReport {
                    solver: id,
                    k,
                    trial,
                    seed,
                    success: s.aligned_residual < spec.success.residual_threshold
                        && (!spec.success.support_match || !spec.scene.is_sparse() || s.support_ok),
                    aligned_residual: s.aligned_residual,
                    e: s.e,
                    r_factor: s.r_factor,
                    wall_time_s,
                    iterations,
                    error: None,
                },
                Err(message) => TrialReport {
                    solver: id,
                    k,
                    trial,
                    seed,
                    success: false,
                    aligned_residual: f64::NAN,
                    e: f64::NAN,
                    r_factor: f64::NAN,
                    wall_time_s,
                    iterations: 0,
                    error: Some(message),
                },
            }
        })
        .collect()
}

/// Run every `(k, trial)` cell on a pool of `threads` workers (0 for the
/// machine default). Records are ordered by solver, then `k`, then trial,
/// regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec, threads: usize) -> Result<ExperimentResult> {
    spec.validate()?;
    let plans = spec.plans()?;
    let cells: Vec<(usize, usize)> = spec
        .scene
        .sweep()
        .into_iter()
        .flat_map(|k| (0..spec.trials).map(move |t| (k, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    let per_cell: Vec<Vec<TrialReport>> =
        pool.install(|| cells.par_iter().map(|&(k, t)| run_cell(spec, &plans, k, t)).collect());
    let mut trials = Vec::with_capacity(per_cell.len() * spec.solvers.len());
    let mut summary = Vec::new();
    for (i, entry) in spec.solvers.iter().enumerate() {
        let id = entry.id();
        for k in spec.scene.sweep() {
            let rows: Vec<&TrialReport> = per_cell
                .iter()
                .zip(&cells)
                .filter(|(_, &(ck, _))| ck == k)
                .map(|(reports, _)| &reports[i])
                .collect();
            let successes = rows.iter().filter(|r| r.success).count();
            let (ci_lo, ci_hi) = wilson_interval(successes, rows.len());
            summary.push(SummaryRow {
                solver: id.clone(),
                k,
                trials: rows.len(),
                successes,
                rate: successes as f64 / rows.len() as f64,
                ci_lo,
                ci_hi,
            });
            trials.extend(rows.into_iter().cloned());
        }
    }
    Ok(ExperimentResult { trials, summary })
}

/// Versioned summary table; rates are printed with six decimals.
pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SUMMARY_VERSION_LINE}")?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(SUMMARY_HEADER)?;
        for r in rows {
            w.write_record([
                r.solver.clone(),
                r.k.to_string(),
                r.trials.to_string(),
                r.successes.to_string(),
                format!("{:.6}", r.rate),
                format!("{:.6}", r.ci_lo),
                format!("{:.6}", r.ci_hi),
            ])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let text = fs::read_to_string(path)?;
    let body = text
        .strip_prefix(SUMMARY_VERSION_LINE)
        .ok_or_else(|| PhaseError::Format("summary has no version line".into()))?;
    let mut r = csv::Reader::from_reader(body.trim_start().as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_trials_csv(path: impl AsRef<Path>, trials: &[TrialReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in trials {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

/// `summary.csv` and `trials.csv` in `dir` (created if missing).
pub fn write_reports(dir: impl AsRef<Path>, result: &ExperimentResult) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_summary_csv(dir.join("summary.csv"), &result.summary)?;
    write_trials_csv(dir.join("trials.csv"), &result.trials)
}
