//! Alternating-projection solvers on the oversampled Fourier grid.
//!
//! Every solver works on the measurement grid `M`. Supports and known
//! magnitudes smaller than the grid are embedded in its leading block, and
//! returned signals live on the full grid (shifts are circular there).
//!
//! One iteration:
//! 1. `Z = FFT(z)`, error `E = Σ_valid (|Z| − |X|)²`,
//! 2. replace the modulus of `Z` by `|X|` on valid entries (invalid keep `Z`),
//! 3. `z' = IFFT(Z')`,
//! 4. a real-space update (magnitude replacement for GS, a Fienup step
//!    otherwise, Fienup plus spectral smoothing for OSS).
//!
//! The OSS filtered spectrum `Z''·W` is brought back to real space with the
//! inverse transform.

mod shrinkwrap;

pub use shrinkwrap::shrinkwrap_update;

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PhaseError, Result};
use crate::fft::{signed_index, FftNd};
use crate::forward::Observation;
use crate::signal::{for_each_index, Signal, SupportMask};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real-space prior information.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealSpaceConstraint {
    pub support: Option<SupportMask>,
    pub nonnegative: bool,
    pub real_valued: bool,
    /// Known real-space modulus `|x|` (GS mode).
    pub known_magnitude: Option<Signal>,
}

impl RealSpaceConstraint {
    pub fn support(mask: SupportMask) -> Self {
        Self {
            support: Some(mask),
            ..Self::default()
        }
    }

    /// Support plus realness and nonnegativity.
    pub fn nonnegative_support(mask: SupportMask) -> Self {
        Self {
            support: Some(mask),
            nonnegative: true,
            real_valued: true,
            known_magnitude: None,
        }
    }

    pub fn is_active(&self) -> bool {
        self.support.is_some() || self.nonnegative || self.real_valued || self.known_magnitude.is_some()
    }
}

/// Fienup real-space correction rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FienupVariant {
    ErrorReduction,
    Hio,
    InputOutput,
    OutputOutput,
}

impl std::str::FromStr for FienupVariant {
    type Err = PhaseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Ok(Self::ErrorReduction),
            "hio" => Ok(Self::Hio),
            "io" => Ok(Self::InputOutput),
            "oo" => Ok(Self::OutputOutput),
            other => Err(invalid("variant", format!("unknown Fienup variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AltProjConfig {
    pub beta: f64,
    pub max_iters: usize,
    pub epsilon: f64,
    pub oss_stages: usize,
    /// Initial and final Gaussian width in frequency samples; `None` uses
    /// `2M → M/10` with `M` the largest grid dimension. An infinite width
    /// disables filtering.
    pub oss_alpha: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for AltProjConfig {
    fn default() -> Self {
        Self {
            beta: 0.9,
            max_iters: 500,
            epsilon: 0.0,
            oss_stages: 10,
            oss_alpha: None,
            seed: 0,
        }
    }
}

impl AltProjConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid("beta", "must lie in (0, 1]"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(invalid("epsilon", "must be nonnegative"));
        }
        if self.oss_stages == 0 {
            return Err(invalid("oss_stages", "must be at least 1"));
        }
        if let Some((a, b)) = self.oss_alpha {
            if !(a > 0.0 && b > 0.0) {
                return Err(invalid("oss_alpha", "widths must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    /// `E_i` of the iterate entering iteration `i`.
    pub errors: Vec<f64>,
    /// Constraint-projected estimate (best-of-run for OSS, last for others).
    pub reconstruction: Signal,
    /// Final raw iterate `z_i`.
    pub last_iterate: Signal,
    pub iterations: usize,
    pub converged: bool,
}

/// Write `(iter, E)` rows.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &IterateTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "E"])?;
    for (i, e) in trace.errors.iter().enumerate() {
        w.write_record([i.to_string(), format!("{e:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Constraint data resolved on the measurement grid.
struct GridConstraint {
    support: Option<Vec<bool>>,
    nonnegative: bool,
    real_valued: bool,
}

impl GridConstraint {
    fn new(c: &RealSpaceConstraint, grid: &[usize]) -> Result<Self> {
        let support = match &c.support {
            Some(s) if s.shape() == grid => Some(s.as_slice().to_vec()),
            Some(s) => Some(s.zero_pad(grid)?.as_slice().to_vec()),
            None => None,
        };
        Ok(Self {
            support,
            nonnegative: c.nonnegative,
            real_valued: c.real_valued,
        })
    }

    fn effective(&self, v: Complex64) -> Complex64 {
        if self.real_valued {
            Complex64::new(v.re, 0.0)
        } else {
            v
        }
    }

    fn violates(&self, n: usize, v: Complex64) -> bool {
        let off = self.support.as_ref().is_some_and(|s| !s[n]);
        (off && v != ZERO) || (self.nonnegative && v.re < 0.0)
    }

    fn project(&self, n: usize, v: Complex64) -> Complex64 {
        let v = self.effective(v);
        if self.support.as_ref().is_some_and(|s| !s[n]) {
            ZERO
        } else if self.nonnegative && v.re < 0.0 {
            Complex64::new(0.0, v.im)
        } else {
            v
        }
    }
}

fn fienup_update(
    z: &[Complex64],
    z_prime: &[Complex64],
    out: &mut [Complex64],
    gamma: &mut [bool],
    c: &GridConstraint,
    variant: FienupVariant,
    beta: f64,
) {
    for n in 0..z.len() {
        let zp = c.effective(z_prime[n]);
        let zi = c.effective(z[n]);
        let violated = c.violates(n, zp);
        gamma[n] = violated;
        out[n] = match (variant, violated) {
            (FienupVariant::InputOutput, false) => zi,
            (FienupVariant::ErrorReduction | FienupVariant::Hio | FienupVariant::OutputOutput, false) => zp,
            (FienupVariant::ErrorReduction, true) => ZERO,
            (FienupVariant::Hio | FienupVariant::InputOutput, true) => zi - zp * beta,
            (FienupVariant::OutputOutput, true) => zp - zp * beta,
        };
    }
}

/// One Fienup real-space correction `z_{i+1}` from the current input `z_i`
/// and the magnitude-corrected output `z'_i`.
///
/// The violation set holds off-support samples with nonzero value and, with
/// nonnegativity, samples whose real part is negative. With realness the
/// real parts of both inputs are used.
pub fn fienup_step(
    z: &Signal,
    z_prime: &Signal,
    constraint: &RealSpaceConstraint,
    variant: FienupVariant,
    beta: f64,
) -> Result<Signal> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid("beta", "must lie in [0, 1]"));
    }
    crate::signal::same_shape(z, z_prime)?;
    let c = GridConstraint::new(constraint, z.shape())?;
    let mut out = vec![ZERO; z.len()];
    let mut gamma = vec![false; z.len()];
    fienup_update(z.data(), z_prime.data(), &mut out, &mut gamma, &c, variant, beta);
    Ok(Signal::from_parts(z.shape().to_vec(), out))
}

/// `Σ_valid (|FFT(estimate)| − sqrt(y))²` with the estimate embedded on the
/// observation grid.
pub fn fourier_error(obs: &Observation, estimate: &Signal) -> Result<f64> {
    let padded = if estimate.shape() == obs.shape() {
        estimate.clone()
    } else {
        estimate.zero_pad(obs.shape())?
    };
    let mut spec = padded.into_data();
    FftNd::new(obs.shape()).forward(&mut spec);
    Ok(spec
        .iter()
        .zip(obs.magnitudes())
        .zip(obs.valid())
        .filter(|(_, &ok)| ok)
        .map(|((z, m), _)| (z.norm() - m).powi(2))
        .sum())
}

/// Fourier-magnitude projection on a fixed grid.
pub(crate) struct FourierProjector {
    plan: FftNd,
    magnitude: Vec<f64>,
    valid: Vec<bool>,
    spectrum: Vec<Complex64>,
}

impl FourierProjector {
    pub(crate) fn new(obs: &Observation) -> Result<Self> {
        if obs.shape().len() > 2 {
            return Err(PhaseError::ShapeMismatch(
                "alternating projections need a 1D or 2D Fourier grid".into(),
            ));
        }
        let magnitude = obs.magnitudes();
        if magnitude
            .iter()
            .zip(obs.valid())
            .all(|(&m, &ok)| !ok || m == 0.0)
        {
            return Err(PhaseError::ZeroNorm("measured Fourier magnitude"));
        }
        Ok(Self {
            plan: FftNd::new(obs.shape()),
            magnitude,
            valid: obs.valid().to_vec(),
            spectrum: vec![ZERO; obs.len()],
        })
    }

    /// Steps 1–3: writes `z'` into `out` and returns `E` of `z`.
    pub(crate) fn project(&mut self, z: &[Complex64], out: &mut [Complex64]) -> f64 {
        self.spectrum.copy_from_slice(z);
        self.plan.forward(&mut self.spectrum);
        let mut err = 0.0;
        for ((s, &m), &ok) in self.spectrum.iter_mut().zip(&self.magnitude).zip(&self.valid) {
            if ok {
                let r = s.norm();
                err += (r - m).powi(2);
                *s = if r > 0.0 {
                    *s * (m / r)
                } else {
                    Complex64::new(m, 0.0)
                };
            }
        }
        out.copy_from_slice(&self.spectrum);
        self.plan.inverse(out);
        err
    }

    pub(crate) fn error_of(&mut self, z: &[Complex64]) -> f64 {
        self.spectrum.copy_from_slice(z);
        self.plan.forward(&mut self.spectrum);
        self.spectrum
            .iter()
            .zip(&self.magnitude)
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .map(|((s, m), _)| (s.norm() - m).powi(2))
            .sum()
    }
}

fn embed(signal: &Signal, grid: &[usize]) -> Result<Vec<Complex64>> {
    if signal.shape() == grid {
        Ok(signal.data().to_vec())
    } else {
        Ok(signal.zero_pad(grid)?.into_data())
    }
}

pub(crate) fn random_phases(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
        .collect()
}

/// Gerchberg–Saxton with a random initial real-space phase.
pub fn gs_solve(obs: &Observation, known_magnitude: &Signal, cfg: &AltProjConfig) -> Result<IterateTrace> {
    let grid = obs.shape().to_vec();
    let modulus: Vec<f64> = embed(known_magnitude, &grid)?.iter().map(|v| v.re).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init: Vec<Complex64> = modulus
        .iter()
        .zip(random_phases(&mut rng, modulus.len()))
        .map(|(&a, p)| p * a)
        .collect();
    gs_solve_from(obs, known_magnitude, &Signal::from_parts(grid, init), cfg)
}

/// Gerchberg–Saxton from a given initial iterate (embedded on the grid).
pub fn gs_solve_from(
    obs: &Observation,
    known_magnitude: &Signal,
    init: &Signal,
    cfg: &AltProjConfig,
) -> Result<IterateTrace> {
    cfg.validate()?;
    let grid = obs.shape().to_vec();
    let modulus: Vec<f64> = embed(known_magnitude, &grid)?.iter().map(|v| v.re).collect();
    if known_magnitude.data().iter().any(|v| v.im != 0.0 || v.re < 0.0) {
        return Err(invalid("known_magnitude", "must be real and nonnegative"));
    }
    let mut proj = FourierProjector::new(obs)?;
    let mut z = embed(init, &grid)?;
    let mut zp = vec![ZERO; z.len()];
    let mut errors = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let err = proj.project(&z, &mut zp);
        errors.push(err);
        if err <= cfg.epsilon {
            converged = true;
            break;
        }
        for ((zn, p), &a) in z.iter_mut().zip(&zp).zip(&modulus) {
            let r = p.norm();
            *zn = if r > 0.0 { p * (a / r) } else { Complex64::new(a, 0.0) };
        }
    }
    let iterations = errors.len();
    let out = Signal::from_parts(grid, z);
    Ok(IterateTrace {
        errors,
        reconstruction: out.clone(),
        last_iterate: out,
        iterations,
        converged,
    })
}

/// Fourier-domain random-phase start: `IFFT(|X|·e^{iφ})`.
fn random_start(obs: &Observation, constraint: &GridConstraint, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<Complex64> = obs
        .magnitudes()
        .iter()
        .zip(random_phases(&mut rng, obs.len()))
        .map(|(&m, p)| p * m)
        .collect();
    FftNd::new(obs.shape()).inverse(&mut z);
    if constraint.real_valued {
        z.iter_mut().for_each(|v| v.im = 0.0);
    }
    z
}

/// Gaussian spectral weights for OSS at width `alpha` (frequency samples).
fn oss_filter(grid: &[usize], alpha: f64) -> Vec<f64> {
    let mut w = vec![1.0; grid.iter().product()];
    for_each_index(grid, |flat, k| {
        let r2: f64 = k
            .iter()
            .zip(grid)
            .map(|(&k, &m)| (signed_index(k, m) as f64).powi(2))
            .sum();
        w[flat] = (-r2 / (2.0 * alpha * alpha)).exp();
    });
    w
}

/// Width of stage `stage` out of `stages`, linear in the stage index.
fn oss_alpha(cfg: &AltProjConfig, grid: &[usize], stage: usize) -> f64 {
    let m = *grid.iter().max().unwrap() as f64;
    let (first, last) = cfg.oss_alpha.unwrap_or((2.0 * m, m / 10.0));
    if cfg.oss_stages == 1 || first.is_infinite() && last.is_infinite() {
        return first;
    }
    let t = stage as f64 / (cfg.oss_stages - 1) as f64;
    first + (last - first) * t
}

enum Mode {
    Fienup(FienupVariant),
    Oss,
}

fn run_fienup(
    obs: &Observation,
    constraint: &RealSpaceConstraint,
    cfg: &AltProjConfig,
    mode: Mode,
    init: Option<&Signal>,
) -> Result<IterateTrace> {
    cfg.validate()?;
    if !constraint.is_active() {
        return Err(invalid("constraint", "no active real-space constraint"));
    }
    let grid = obs.shape().to_vec();
    let c = GridConstraint::new(constraint, &grid)?;
    let mut proj = FourierProjector::new(obs)?;
    let mut z = match init {
        Some(s) => embed(s, &grid)?,
        None => random_start(obs, &c, cfg.seed),
    };
    let len = z.len();
    let mut zp = vec![ZERO; len];
    let mut next = vec![ZERO; len];
    let mut gamma = vec![false; len];
    let mut estimate = vec![ZERO; len];
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    let mut errors = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;

    let variant = match mode {
        Mode::Fienup(v) => v,
        Mode::Oss => FienupVariant::Hio,
    };
    let mut filter_plan = FftNd::new(&grid);
    let mut filter: Option<(usize, Vec<f64>)> = None;
    let mut smoothed = vec![ZERO; len];
    let mut region = vec![false; len];

    for iter in 0..cfg.max_iters {
        let err = proj.project(&z, &mut zp);
        errors.push(err);
        if err <= cfg.epsilon {
            converged = true;
            break;
        }
        fienup_update(&z, &zp, &mut next, &mut gamma, &c, variant, cfg.beta);

        if let Mode::Oss = mode {
            let stage = iter * cfg.oss_stages / cfg.max_iters;
            let alpha = oss_alpha(cfg, &grid, stage);
            if alpha.is_finite() {
                if filter.as_ref().is_none_or(|(s, _)| *s != stage) {
                    filter = Some((stage, oss_filter(&grid, alpha)));
                }
                let w = &filter.as_ref().unwrap().1;
                // Only the off-support part is filtered, so a consistent
                // object stays a fixed point.
                for n in 0..len {
                    region[n] = match &c.support {
                        Some(s) => !s[n],
                        None => gamma[n],
                    };
                    smoothed[n] = if region[n] { next[n] } else { ZERO };
                }
                filter_plan.forward(&mut smoothed);
                smoothed.iter_mut().zip(w).for_each(|(s, w)| *s *= w);
                filter_plan.inverse(&mut smoothed);
                for n in 0..len {
                    if region[n] {
                        next[n] = c.effective(smoothed[n]);
                    }
                }
            }
            for n in 0..len {
                estimate[n] = c.project(n, zp[n]);
            }
            let e = proj.error_of(&estimate);
            if best.as_ref().is_none_or(|(b, _)| e < *b) {
                best = Some((e, estimate.clone()));
            }
        }
        std::mem::swap(&mut z, &mut next);
    }

    let reconstruction = match best {
        Some((_, b)) => b,
        None => {
            proj.project(&z, &mut zp);
            (0..len).map(|n| c.project(n, zp[n])).collect()
        }
    };
    let iterations = errors.len();
    Ok(IterateTrace {
        errors,
        reconstruction: Signal::from_parts(grid.clone(), reconstruction),
        last_iterate: Signal::from_parts(grid, z),
        iterations,
        converged,
    })
}

/// Fienup iteration with the given correction rule from a random start.
pub fn fienup_solve(
    obs: &Observation,
    constraint: &RealSpaceConstraint,
    cfg: &AltProjConfig,
    variant: FienupVariant,
) -> Result<IterateTrace> {
    run_fienup(obs, constraint, cfg, Mode::Fienup(variant), None)
}

pub fn fienup_solve_from(
    obs: &Observation,
    constraint: &RealSpaceConstraint,
    cfg: &AltProjConfig,
    variant: FienupVariant,
    init: &Signal,
) -> Result<IterateTrace> {
    run_fienup(obs, constraint, cfg, Mode::Fienup(variant), Some(init))
}

pub fn hio_solve(obs: &Observation, constraint: &RealSpaceConstraint, cfg: &AltProjConfig) -> Result<IterateTrace> {
    fienup_solve(obs, constraint, cfg, FienupVariant::Hio)
}

pub fn hio_solve_from(
    obs: &Observation,
    constraint: &RealSpaceConstraint,
    cfg: &AltProjConfig,
    init: &Signal,
) -> Result<IterateTrace> {
    fienup_solve_from(obs, constraint, cfg, FienupVariant::Hio, init)
}

/// Oversampling smoothness: HIO followed by Gaussian smoothing of the
/// off-support region (or of the violation set without a support).
pub fn oss_solve(obs: &Observation, constraint: &RealSpaceConstraint, cfg: &AltProjConfig) -> Result<IterateTrace> {
    run_fienup(obs, constraint, cfg, Mode::Oss, None)
}

pub fn oss_solve_from(
    obs: &Observation,
    constraint: &RealSpaceConstraint,
    cfg: &AltProjConfig,
    init: &Signal,
) -> Result<IterateTrace> {
    run_fienup(obs, constraint, cfg, Mode::Oss, Some(init))
}
