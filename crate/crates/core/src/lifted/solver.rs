//! Penalized first-order solvers for the lifted programs.
//!
//! Each program is solved through
//!
//! ```text
//! Φ(X) = Tr(W X) + λ‖X‖₁ + (ρ/2) Σ_k dist(a_k^* X a_k, [y_k − ε, y_k + ε])²
//! ```
//!
//! over the PSD cone (intersected with the row-norm ball for QCS) by the
//! monotone accelerated proximal gradient method. The penalty weight is
//! `ρ = c / (‖A‖² t̂)` with `t̂ = N Σy / Σ‖a_k‖²` an estimate of `Tr(X)`.
//! Outer rounds are augmented-Lagrangian multiplier updates (the data
//! interval is shifted by the accumulated residual), which removes the
//! `1/c` bias of a plain penalty. QCS additionally reweights `W` per round.

use std::cell::RefCell;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{hermitian_part, LiftScalar, LiftedMatrix, LiftedProblem};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftedConfig {
    /// Measurement slack `ε`.
    pub epsilon_noise: f64,
    /// CPRL `ℓ1` weight.
    pub lambda: f64,
    /// QCS row-norm budget `η` (infinite disables the ball).
    pub eta: f64,
    /// Log-det regularizer; `None` uses `1e-6·Tr(X₀)/N`.
    pub log_det_delta: Option<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// QCS hard threshold, relative to the largest row norm.
    pub threshold: f64,
    /// Fidelity constant `c` of the penalty weight.
    pub penalty_scale: f64,
    /// Stop when the proximal-gradient step is below this (relative).
    pub tolerance: f64,
    /// Feasibility flag tolerance, relative to `max y`.
    pub feasibility_tol: f64,
    pub dykstra_iters: usize,
    /// Seeds the power iteration for `‖A‖²`.
    pub seed: u64,
}

impl Default for LiftedConfig {
    fn default() -> Self {
        Self {
            epsilon_noise: 0.0,
            lambda: 0.0,
            eta: f64::INFINITY,
            log_det_delta: None,
            outer_iters: 5,
            inner_iters: 2000,
            threshold: 0.0,
            penalty_scale: 1e4,
            tolerance: 1e-12,
            feasibility_tol: 1e-3,
            dykstra_iters: 10,
            seed: 0,
        }
    }
}

impl LiftedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_noise >= 0.0) {
            return Err(invalid("epsilon_noise", "must be nonnegative"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be nonnegative"));
        }
        if !(self.eta > 0.0) {
            return Err(invalid("eta", "must be positive"));
        }
        if let Some(d) = self.log_det_delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid("log_det_delta", "must be positive"));
            }
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(invalid("iters", "iteration counts must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(invalid("threshold", "must lie in [0, 1)"));
        }
        if !(self.penalty_scale > 0.0 && self.penalty_scale.is_finite()) {
            return Err(invalid("penalty_scale", "must be positive"));
        }
        if !(self.tolerance >= 0.0 && self.feasibility_tol >= 0.0) {
            return Err(invalid("tolerance", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LiftedSolution<T: LiftScalar> {
    pub matrix: LiftedMatrix<T>,
    /// Penalized objective `Φ` after every iteration, one list per outer
    /// round (the multipliers, and for QCS the weights, change between
    /// rounds).
    pub objective: Vec<Vec<f64>>,
    /// `log det(X_t + δI)` after each QCS round (empty otherwise).
    pub log_det: Vec<f64>,
    pub iterations: usize,
    /// Largest `|a_k^* X a_k − y_k| − ε` (clamped at zero).
    pub max_violation: f64,
    pub feasible: bool,
}

/// Euclidean projection onto the PSD cone by eigenvalue clipping.
fn psd_project<T: LiftScalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut v = eig.eigenvectors.clone();
    let mut any = false;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        any |= s > 0.0;
        v.column_mut(j).scale_mut(s);
    }
    if !any {
        return DMatrix::zeros(m.nrows(), m.ncols());
    }
    let out = &v * v.adjoint();
    hermitian_part(&out)
}

fn soft_threshold<T: LiftScalar>(m: &DMatrix<T>, tau: f64) -> DMatrix<T> {
    m.map(|v| {
        let r = v.modulus();
        if r <= tau {
            T::zero()
        } else {
            v.scale(1.0 - tau / r)
        }
    })
}

fn row_norms<T: LiftScalar>(m: &DMatrix<T>) -> Vec<f64> {
    m.row_iter().map(|r| r.norm()).collect()
}

/// Projection of a nonnegative vector onto the `ℓ1` ball of radius `eta`.
fn project_l1_nonneg(r: &[f64], eta: f64) -> Vec<f64> {
    if r.iter().sum::<f64>() <= eta {
        return r.to_vec();
    }
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - eta) / (j + 1) as f64;
        if v > t {
            theta = t;
        }
    }
    r.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Projection onto `{X : Σ_j ‖X_j,:‖₂ ≤ η}` by row scaling.
fn project_row_ball<T: LiftScalar>(m: &DMatrix<T>, eta: f64) -> DMatrix<T> {
    let norms = row_norms(m);
    let target = project_l1_nonneg(&norms, eta);
    let mut out = m.clone();
    for (j, (&n, &t)) in norms.iter().zip(&target).enumerate() {
        let s = if n > 0.0 { t / n } else { 0.0 };
        out.row_mut(j).scale_mut(s);
    }
    out
}

/// Prox of `f + ι_PSD` at `u` by block-coordinate ascent on the dual pair
/// `(p, q)` with `X = u − p − q` (Dykstra's scheme). Any dual start
/// converges, so the pair is carried over between calls.
fn dual_split<T: LiftScalar>(
    u: &DMatrix<T>,
    iters: usize,
    duals: &mut (DMatrix<T>, DMatrix<T>),
    f_prox: impl Fn(&DMatrix<T>) -> DMatrix<T>,
) -> DMatrix<T> {
    let (p, q) = duals;
    let mut x = u.clone();
    for _ in 0..iters.max(1) {
        let shifted = u - &*q;
        let xf = f_prox(&shifted);
        *p = &shifted - &xf;
        let shifted = u - &*p;
        x = psd_project(&shifted);
        let q_next = &shifted - &x;
        let change = (&q_next - &*q).norm();
        *q = q_next;
        if change <= 1e-13 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

#[derive(Clone, Copy)]
enum Regularizer {
    None,
    L1(f64),
    RowBall(f64),
}

struct Program<'a, T: LiftScalar> {
    problem: &'a LiftedProblem<T>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    shift: Vec<f64>,
    rho: f64,
    step: f64,
    weight: Option<DMatrix<T>>,
    reg: Regularizer,
    dykstra_iters: usize,
    duals: RefCell<(DMatrix<T>, DMatrix<T>)>,
}

impl<T: LiftScalar> Program<'_, T> {
    fn residual(&self, x: &DMatrix<T>) -> Vec<f64> {
        self.problem
            .apply(x)
            .iter()
            .zip(&self.shift)
            .zip(self.lo.iter().zip(&self.hi))
            .map(|((&v, &s), (&lo, &hi))| {
                let v = v + s;
                v - v.clamp(lo, hi)
            })
            .collect()
    }

    /// Multiplier update; returns the largest raw constraint violation.
    fn update_multipliers(&mut self, x: &DMatrix<T>) -> f64 {
        let d = self.residual(x);
        let raw = self
            .problem
            .apply(x)
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&lo, &hi))| (v - v.clamp(lo, hi)).abs())
            .fold(0.0, f64::max);
        self.shift.iter_mut().zip(&d).for_each(|(s, d)| *s = *d);
        raw
    }

    fn linear(&self, x: &DMatrix<T>) -> f64 {
        match &self.weight {
            None => x.diagonal().iter().map(|v| v.real()).sum(),
            Some(w) => (w * x).trace().real(),
        }
    }

    fn objective(&self, x: &DMatrix<T>) -> f64 {
        let d = self.residual(x);
        let fit = 0.5 * self.rho * d.iter().map(|v| v * v).sum::<f64>();
        let reg = match self.reg {
            Regularizer::L1(lambda) if lambda > 0.0 => lambda * x.iter().map(|v| v.modulus()).sum::<f64>(),
            _ => 0.0,
        };
        self.linear(x) + reg + fit
    }

    fn prox(&self, v: &DMatrix<T>) -> DMatrix<T> {
        let t = self.step;
        let mut u = v.clone();
        match &self.weight {
            None => {
                for i in 0..u.nrows() {
                    u[(i, i)] -= T::from_real(t);
                }
            }
            Some(w) => u -= w.scale(t),
        }
        match self.reg {
            Regularizer::None | Regularizer::L1(0.0) => psd_project(&u),
            Regularizer::L1(lambda) => dual_split(&u, self.dykstra_iters, &mut self.duals.borrow_mut(), |m| {
                soft_threshold(m, t * lambda)
            }),
            Regularizer::RowBall(eta) => {
                let p = psd_project(&u);
                if row_norms(&p).iter().sum::<f64>() <= eta {
                    p
                } else {
                    dual_split(&u, self.dykstra_iters, &mut self.duals.borrow_mut(), |m| {
                        project_row_ball(m, eta)
                    })
                }
            }
        }
    }

    /// Monotone FISTA from `start`; appends `Φ` per iteration.
    fn run(&self, start: DMatrix<T>, iters: usize, tol: f64, rounds: &mut Vec<Vec<f64>>) -> (DMatrix<T>, usize) {
        let mut history = Vec::new();
        let mut x = start;
        let mut phi_x = self.objective(&x);
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut used = 0;
        for _ in 0..iters {
            used += 1;
            let d = self.residual(&y);
            let grad = self.problem.adjoint(&d.iter().map(|v| v * self.rho).collect::<Vec<_>>());
            let z = self.prox(&(&y - grad.scale(self.step)));
            let phi_z = self.objective(&z);
            let moved = (&z - &y).norm();
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let x_next = if phi_z <= phi_x { z.clone() } else { x.clone() };
            phi_x = phi_x.min(phi_z);
            y = &x_next + (&z - &x_next).scale(t / t_next) + (&x_next - &x).scale((t - 1.0) / t_next);
            x = x_next;
            t = t_next;
            history.push(phi_x);
            if moved <= tol * (1.0 + z.norm()) {
                break;
            }
        }
        rounds.push(history);
        (x, used)
    }
}

/// Power iteration for `‖A‖² = λ_max(A A^*)`.
fn operator_norm_sq<T: LiftScalar>(problem: &LiftedProblem<T>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r: Vec<f64> = (0..problem.len()).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut est = 0.0;
    for _ in 0..500 {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        r.iter_mut().for_each(|v| *v /= norm);
        let next = problem.apply(&problem.adjoint(&r));
        let new_est = next.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        r = next;
        if (new_est - est).abs() <= 1e-10 * new_est {
            est = new_est;
            break;
        }
        est = new_est;
    }
    est
}

fn build<'a, T: LiftScalar>(
    problem: &'a LiftedProblem<T>,
    cfg: &LiftedConfig,
    reg: Regularizer,
) -> Program<'a, T> {
    let n = problem.dim() as f64;
    let sum_y: f64 = problem.y().iter().sum();
    let sum_a: f64 = problem.vectors().iter().map(|a| a.norm_squared()).sum();
    let trace_est = if sum_y > 0.0 && sum_a > 0.0 { n * sum_y / sum_a } else { 1.0 };
    let lip = operator_norm_sq(problem, cfg.seed).max(f64::MIN_POSITIVE) * 1.01;
    let rho = cfg.penalty_scale / (lip * trace_est);
    let eps = cfg.epsilon_noise;
    Program {
        problem,
        shift: vec![0.0; problem.len()],
        lo: problem.y().iter().map(|y| y - eps).collect(),
        hi: problem.y().iter().map(|y| y + eps).collect(),
        rho,
        step: 1.0 / (rho * lip),
        weight: None,
        reg,
        dykstra_iters: cfg.dykstra_iters,
        duals: RefCell::new((DMatrix::zeros(problem.dim(), problem.dim()), DMatrix::zeros(problem.dim(), problem.dim()))),
    }
}

fn finish<T: LiftScalar>(
    problem: &LiftedProblem<T>,
    cfg: &LiftedConfig,
    x: DMatrix<T>,
    objective: Vec<Vec<f64>>,
    log_det: Vec<f64>,
    iterations: usize,
) -> LiftedSolution<T> {
    let max_violation = problem
        .apply(&x)
        .iter()
        .zip(problem.y())
        .map(|(a, y)| ((a - y).abs() - cfg.epsilon_noise).max(0.0))
        .fold(0.0, f64::max);
    let scale = problem.y().iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let feasible = max_violation <= cfg.feasibility_tol * scale;
    if !feasible {
        log::warn!("lifted solve ended infeasible: max violation {max_violation:e}");
    }
    LiftedSolution {
        matrix: LiftedMatrix::from_hermitian(hermitian_part(&x)),
        objective,
        log_det,
        iterations,
        max_violation,
        feasible,
    }
}

/// `min Tr(X)` subject to the measurement slack and `X ⪰ 0`.
pub fn phaselift_solve<T: LiftScalar>(problem: &LiftedProblem<T>, cfg: &LiftedConfig) -> Result<LiftedSolution<T>> {
    solve_convex(problem, cfg, Regularizer::None)
}

/// `min Tr(X) + λ‖X‖₁` subject to the measurement slack and `X ⪰ 0`.
pub fn cprl_solve<T: LiftScalar>(problem: &LiftedProblem<T>, cfg: &LiftedConfig) -> Result<LiftedSolution<T>> {
    solve_convex(problem, cfg, Regularizer::L1(cfg.lambda))
}

fn solve_convex<T: LiftScalar>(
    problem: &LiftedProblem<T>,
    cfg: &LiftedConfig,
    reg: Regularizer,
) -> Result<LiftedSolution<T>> {
    cfg.validate()?;
    let mut program = build(problem, cfg, reg);
    let n = problem.dim();
    let mut history = Vec::new();
    let mut x = DMatrix::zeros(n, n);
    let mut iterations = 0;
    let scale = problem.y().iter().copied().fold(0.0, f64::max);
    for _ in 0..cfg.outer_iters {
        let (next, used) = program.run(x, cfg.inner_iters, cfg.tolerance, &mut history);
        x = next;
        iterations += used;
        if program.update_multipliers(&x) <= 1e-14 * scale {
            break;
        }
    }
    Ok(finish(problem, cfg, x, history, Vec::new(), iterations))
}

fn hard_threshold_rows<T: LiftScalar>(x: &mut DMatrix<T>, frac: f64) {
    if frac <= 0.0 {
        return;
    }
    let norms = row_norms(x);
    let max = norms.iter().copied().fold(0.0, f64::max);
    for (j, &r) in norms.iter().enumerate() {
        if r < frac * max {
            x.row_mut(j).fill(T::zero());
            x.column_mut(j).fill(T::zero());
        }
    }
}

/// Eigendecomposition-based `(X + δI)^{-1}` scaled so its smallest
/// eigenvalue is one, and `log det(X + δI)`.
fn reweight<T: LiftScalar>(x: &DMatrix<T>, delta: f64) -> (DMatrix<T>, f64) {
    let eig = SymmetricEigen::new(hermitian_part(x));
    let shifted: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0) + delta).collect();
    let top = shifted.iter().copied().fold(0.0, f64::max);
    let mut v = eig.eigenvectors.clone();
    for (j, &s) in shifted.iter().enumerate() {
        v.column_mut(j).scale_mut((top / s).sqrt());
    }
    let w = &v * v.adjoint();
    (hermitian_part(&w), shifted.iter().map(|s| s.ln()).sum())
}

/// Log-det reweighted trace minimization over `PSD ∩ {Σ_j ‖X_j,:‖ ≤ η}` with
/// a per-round hard threshold on row norms.
pub fn qcs_solve<T: LiftScalar>(problem: &LiftedProblem<T>, cfg: &LiftedConfig) -> Result<LiftedSolution<T>> {
    cfg.validate()?;
    let mut program = build(problem, cfg, Regularizer::RowBall(cfg.eta));
    let n = problem.dim();
    let mut x = DMatrix::<T>::zeros(n, n);
    let mut history = Vec::new();
    let mut log_det = Vec::new();
    let mut iterations = 0;
    let mut delta = cfg.log_det_delta;
    for round in 0..cfg.outer_iters {
        let (next, used) = program.run(x, cfg.inner_iters, cfg.tolerance, &mut history);
        iterations += used;
        x = next;
        hard_threshold_rows(&mut x, cfg.threshold);
        let d = *delta.get_or_insert_with(|| {
            let tr: f64 = x.diagonal().iter().map(|v| v.real()).sum();
            (1e-6 * tr / n as f64).max(f64::MIN_POSITIVE)
        });
        if round + 1 == cfg.outer_iters {
            log_det.push(reweight(&x, d).1);
            break;
        }
        let (w, ld) = reweight(&x, d);
        let stop = log_det
            .last()
            .is_some_and(|&prev: &f64| (ld - prev).abs() <= 1e-8 * prev.abs().max(1.0));
        log_det.push(ld);
        if stop {
            break;
        }
        program.update_multipliers(&x);
        program.weight = Some(w);
    }
    Ok(finish(problem, cfg, x, history, log_det, iterations))
}

#[cfg(test)]
mod tests {
    use super::super::{extract_rank1, lift};
    use super::*;
    use crate::signal::{align_to_reference, Signal};
    use nalgebra::DVector;
    use num_complex::Complex64;

    fn gaussian_problem(rng: &mut ChaCha8Rng, x: &Signal, m: usize) -> LiftedProblem<Complex64> {
        use rand_distr::{Distribution, StandardNormal};
        let n = x.len();
        let vectors: Vec<DVector<Complex64>> = (0..m)
            .map(|_| {
                DVector::from_fn(n, |_, _| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                })
            })
            .collect();
        let xv = DVector::from_vec(x.data().to_vec());
        let y = vectors.iter().map(|a| a.dotc(&xv).norm_sqr()).collect();
        LiftedProblem::new(vectors, y).unwrap()
    }

    fn random_x(rng: &mut ChaCha8Rng, n: usize) -> Signal {
        Signal::from_vec(
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn l1_ball_projection() {
        assert_eq!(project_l1_nonneg(&[0.2, 0.3], 1.0), vec![0.2, 0.3]);
        let p = project_l1_nonneg(&[3.0, 1.0, 0.5], 2.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!((p[0] - 2.0).abs() < 1e-12 && p[1] == 0.0 && p[2] == 0.0);
        let q = project_l1_nonneg(&[1.0, 1.0], 1.0);
        assert!((q[0] - 0.5).abs() < 1e-12 && (q[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn psd_projection_clips_negative_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let p = psd_project(&m);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-15 && p[(1, 1)].abs() < 1e-15);
    }

    #[test]
    fn identity_measurements_of_basis_vector() {
        let n = 4;
        let vectors: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_fn(n, |j, _| f64::from(u8::from(i == j)))).collect();
        let x = Signal::delta(&[n], &[0]).unwrap();
        let problem = LiftedProblem::new(vectors, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let sol = phaselift_solve(&problem, &LiftedConfig::default()).unwrap();
        assert!(sol.feasible);
        let z = extract_rank1(&sol.matrix);
        assert!(align_to_reference(&z, &x).unwrap().residual < 1e-6);

        let qcs = qcs_solve(&problem, &LiftedConfig { threshold: 0.1, eta: 2.0, ..Default::default() }).unwrap();
        assert!(qcs.matrix.matrix().row(0).norm() > 0.5);
    }

    #[test]
    fn single_measurement_is_not_enough() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_x(&mut rng, 8);
        let problem = gaussian_problem(&mut rng, &x, 1);
        let sol = phaselift_solve(&problem, &LiftedConfig::default()).unwrap();
        assert!(sol.feasible);
        let z = extract_rank1(&sol.matrix);
        assert!(align_to_reference(&z, &x).unwrap().residual > 0.1);
    }

    #[test]
    fn cprl_without_l1_is_phaselift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_x(&mut rng, 6);
        let problem = gaussian_problem(&mut rng, &x, 24);
        let cfg = LiftedConfig { inner_iters: 200, seed: 3, ..Default::default() };
        let a = phaselift_solve(&problem, &cfg).unwrap();
        let b = cprl_solve(&problem, &cfg).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn huge_l1_weight_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_x(&mut rng, 6);
        let problem = gaussian_problem(&mut rng, &x, 24);
        let cfg = LiftedConfig { lambda: 1e6, inner_iters: 100, ..Default::default() };
        let sol = cprl_solve(&problem, &cfg).unwrap();
        assert!(sol.matrix.matrix().norm() < 1e-6 * lift::<Complex64>(&x).unwrap().matrix().norm());
    }

    #[test]
    fn cprl_objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_x(&mut rng, 8);
        let problem = gaussian_problem(&mut rng, &x, 32);
        let cfg = LiftedConfig { lambda: 0.05, inner_iters: 300, ..Default::default() };
        let sol = cprl_solve(&problem, &cfg).unwrap();
        assert!(sol.objective.len() > 1);
        for round in &sol.objective {
            for w in round.windows(2) {
                assert!(w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn unconstrained_qcs_round_is_phaselift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_x(&mut rng, 6);
        let problem = gaussian_problem(&mut rng, &x, 24);
        let cfg = LiftedConfig { inner_iters: 150, outer_iters: 1, ..Default::default() };
        let a = phaselift_solve(&problem, &cfg).unwrap();
        let b = qcs_solve(&problem, &cfg).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn outputs_are_hermitian_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_x(&mut rng, 8);
        let problem = gaussian_problem(&mut rng, &x, 30);
        let cfg = LiftedConfig { inner_iters: 200, lambda: 0.01, eta: 5.0, threshold: 0.05, ..Default::default() };
        for sol in [
            phaselift_solve(&problem, &cfg).unwrap(),
            cprl_solve(&problem, &cfg).unwrap(),
            qcs_solve(&problem, &cfg).unwrap(),
        ] {
            assert!(sol.matrix.hermitian_violation() < 1e-10);
            assert!(sol.matrix.min_eigenvalue() > -1e-8);
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            LiftedConfig { eta: 0.0, ..Default::default() },
            LiftedConfig { lambda: -1.0, ..Default::default() },
            LiftedConfig { log_det_delta: Some(0.0), ..Default::default() },
            LiftedConfig { inner_iters: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
