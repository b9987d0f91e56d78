//! Sparsity-exploiting solvers for quadratic measurement systems
//! `y_i = xᵀ A_i x` with real symmetric `A_i`.
//!
//! Complex unknowns are handled by stacking `[Re x; Im x]` (2N real
//! unknowns); a "site" is then the pair `(n, n + N)` and sparsity counts
//! sites.

mod dictionary;
mod gauss_newton;
mod gespar;
mod omp;
mod sparse_fienup;

pub use dictionary::{AtomMeta, Dictionary};
pub use gauss_newton::{damped_gauss_newton, GaussNewtonResult};
pub use gespar::{gespar_solve, GesparConfig, GesparReport};
pub use omp::{omp_solve, SparseCode};
pub use sparse_fienup::{sparse_fienup_solve, SparseFienupConfig, SparseFienupReport};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, PhaseError, Result};
use crate::fft::FftNd;
use crate::forward::{MeasurementModel, Observation};
use crate::signal::Signal;

/// One symmetric matrix, either dense or as `Σ_j v_j v_jᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadraticForm {
    Dense(DMatrix<f64>),
    LowRank(Vec<DVector<f64>>),
}

impl QuadraticForm {
    fn dim(&self) -> usize {
        match self {
            Self::Dense(m) => m.nrows(),
            Self::LowRank(v) => v.first().map_or(0, |v| v.len()),
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense(m) => m * x,
            Self::LowRank(vs) => {
                let mut out = DVector::zeros(x.len());
                for v in vs {
                    out.axpy(v.dot(x), v, 1.0);
                }
                out
            }
        }
    }

    /// `xᵀ A x`.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Dense(m) => x.dot(&(m * x)),
            Self::LowRank(vs) => vs.iter().map(|v| v.dot(x).powi(2)).sum(),
        }
    }

    /// The form restricted to the given variable indices.
    fn restrict(&self, vars: &[usize]) -> Self {
        match self {
            Self::Dense(m) => Self::Dense(m.select_rows(vars).select_columns(vars)),
            Self::LowRank(vs) => Self::LowRank(vs.iter().map(|v| v.select_rows(vars)).collect()),
        }
    }

    pub(crate) fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(m) => m.clone(),
            Self::LowRank(vs) => {
                let n = self.dim();
                let mut m = DMatrix::zeros(n, n);
                for v in vs {
                    m.ger(1.0, v, v, 1.0);
                }
                m
            }
        }
    }
}

/// Quadratic measurement system.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    forms: Vec<QuadraticForm>,
    y: Vec<f64>,
    signal_len: usize,
    components: usize,
}

impl QuadraticSystem {
    /// Real system from dense symmetric matrices.
    pub fn new(matrices: Vec<DMatrix<f64>>, y: Vec<f64>) -> Result<Self> {
        let n = matrices.first().map_or(0, |m| m.nrows());
        for m in &matrices {
            if m.nrows() != n || m.ncols() != n {
                return Err(PhaseError::ShapeMismatch("matrices must all be N×N".into()));
            }
            let asym = (m - m.transpose()).amax();
            if asym > 1e-12 * m.amax().max(1.0) {
                return Err(invalid("matrices", format!("not symmetric (deviation {asym:e})")));
            }
        }
        Self::from_forms(matrices.into_iter().map(QuadraticForm::Dense).collect(), y, n, 1)
    }

    pub fn from_forms(forms: Vec<QuadraticForm>, y: Vec<f64>, signal_len: usize, components: usize) -> Result<Self> {
        if forms.is_empty() || forms.len() != y.len() {
            return Err(PhaseError::ShapeMismatch(format!(
                "{} matrices for {} measurements",
                forms.len(),
                y.len()
            )));
        }
        if !(components == 1 || components == 2) || signal_len == 0 {
            return Err(invalid("components", "must be 1 (real) or 2 (stacked complex)"));
        }
        let dim = signal_len * components;
        if let Some(f) = forms.iter().find(|f| f.dim() != dim) {
            return Err(PhaseError::ShapeMismatch(format!(
                "form of dimension {} for {dim} unknowns",
                f.dim()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(PhaseError::NonFinite(i));
        }
        Ok(Self {
            forms,
            y,
            signal_len,
            components,
        })
    }

    /// Complex Hermitian `A` (`x^* A x`) embedded as `[[R, −I], [I, R]]`.
    pub fn from_hermitian(matrices: &[DMatrix<Complex64>], y: Vec<f64>) -> Result<Self> {
        let n = matrices.first().map_or(0, |m| m.nrows());
        let mut forms = Vec::with_capacity(matrices.len());
        for m in matrices {
            if m.nrows() != n || m.ncols() != n {
                return Err(PhaseError::ShapeMismatch("matrices must all be N×N".into()));
            }
            let dev = (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
            if dev > 1e-12 * m.iter().map(|v| v.norm()).fold(1.0, f64::max) {
                return Err(invalid("matrices", format!("not Hermitian (deviation {dev:e})")));
            }
            let mut big = DMatrix::zeros(2 * n, 2 * n);
            for r in 0..n {
                for c in 0..n {
                    let v = m[(r, c)];
                    big[(r, c)] = v.re;
                    big[(r + n, c + n)] = v.re;
                    big[(r, c + n)] = -v.im;
                    big[(r + n, c)] = v.im;
                }
            }
            forms.push(QuadraticForm::Dense(big));
        }
        Self::from_forms(forms, y, n, 2)
    }

    /// Real signal of length `n` measured by an `m`-point DFT; only the
    /// `m/2 + 1` distinct magnitudes are used. `y` holds all `m` entries.
    pub fn from_fourier_real(n: usize, m: usize, y: &[f64]) -> Result<Self> {
        Self::from_fourier_real_masked(n, m, y, &vec![true; y.len()])
    }

    fn from_fourier_real_masked(n: usize, m: usize, y: &[f64], valid: &[bool]) -> Result<Self> {
        if y.len() != m || m < n {
            return Err(PhaseError::ShapeMismatch(format!(
                "{m}-point DFT data of length {} for N = {n}",
                y.len()
            )));
        }
        let mut forms = Vec::new();
        let mut values = Vec::new();
        for k in 0..=m / 2 {
            if !valid[k] {
                continue;
            }
            let angle = |t: usize| 2.0 * PI * ((k * t) % m) as f64 / m as f64;
            let c = DVector::from_fn(n, |t, _| angle(t).cos());
            let s = DVector::from_fn(n, |t, _| angle(t).sin());
            let mut vs = vec![c];
            if s.amax() > 1e-12 {
                vs.push(s);
            }
            forms.push(QuadraticForm::LowRank(vs));
            values.push(y[k]);
        }
        Self::from_forms(forms, values, n, 1)
    }

    /// Bridge from a measurement model and its observation. `real` selects
    /// real unknowns (N) instead of stacked complex ones (2N). Invalid
    /// entries are dropped.
    pub fn from_model(model: &MeasurementModel, signal_shape: &[usize], obs: &Observation, real: bool) -> Result<Self> {
        if let (MeasurementModel::OversampledFourier { m }, true, 1) = (model, real, signal_shape.len()) {
            return Self::from_fourier_real_masked(signal_shape[0], m[0], obs.y(), obs.valid());
        }
        let rows = model.measurement_vectors(signal_shape)?;
        if rows.len() != obs.len() {
            return Err(PhaseError::ShapeMismatch(format!(
                "model yields {} measurements, observation has {}",
                rows.len(),
                obs.len()
            )));
        }
        let n: usize = signal_shape.iter().product();
        let mut forms = Vec::new();
        let mut values = Vec::new();
        for ((a, &y), &ok) in rows.iter().zip(obs.y()).zip(obs.valid()) {
            if !ok {
                continue;
            }
            let vs = if real {
                vec![
                    DVector::from_iterator(n, a.iter().map(|v| v.re)),
                    DVector::from_iterator(n, a.iter().map(|v| v.im)),
                ]
            } else {
                vec![
                    DVector::from_iterator(2 * n, a.iter().map(|v| v.re).chain(a.iter().map(|v| v.im))),
                    DVector::from_iterator(2 * n, a.iter().map(|v| -v.im).chain(a.iter().map(|v| v.re))),
                ]
            };
            forms.push(QuadraticForm::LowRank(vs));
            values.push(y);
        }
        Self::from_forms(forms, values, n, if real { 1 } else { 2 })
    }

    /// Real coefficients `α` of a real dictionary measured through the
    /// 2D (or 1D) DFT on `grid`: `y_k = |DFT(Ψα)[k]|²`.
    pub fn from_fourier_dictionary(dict: &Dictionary, grid: &[usize], obs: &Observation) -> Result<Self> {
        if obs.shape() != grid {
            return Err(PhaseError::ShapeMismatch("observation grid differs".into()));
        }
        let d = dict.len();
        let mut plan = FftNd::new(grid);
        let spectra = (0..d)
            .map(|j| {
                let mut s = dict.atom(j).zero_pad(grid)?.into_data();
                plan.forward(&mut s);
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut forms = Vec::new();
        let mut values = Vec::new();
        for (k, (&y, &ok)) in obs.y().iter().zip(obs.valid()).enumerate() {
            if ok {
                let re = DVector::from_fn(d, |j, _| spectra[j][k].re);
                let im = DVector::from_fn(d, |j, _| spectra[j][k].im);
                forms.push(QuadraticForm::LowRank(vec![re, im]));
                values.push(y);
            }
        }
        Self::from_forms(forms, values, d, 1)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn forms(&self) -> &[QuadraticForm] {
        &self.forms
    }

    /// Number of sites (signal samples).
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// 1 for real unknowns, 2 for stacked complex.
    pub fn components(&self) -> usize {
        self.components
    }

    /// Number of real unknowns.
    pub fn dim(&self) -> usize {
        self.signal_len * self.components
    }

    /// Dense `A_i` (for inspection and oracles).
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        self.forms[i].to_dense()
    }

    /// Real variable indices belonging to the given sites.
    pub fn site_vars(&self, sites: &[usize]) -> Vec<usize> {
        let mut vars: Vec<usize> = sites.to_vec();
        if self.components == 2 {
            vars.extend(sites.iter().map(|s| s + self.signal_len));
        }
        vars
    }

    /// System restricted to a subset of variables.
    pub(crate) fn restrict(&self, vars: &[usize]) -> Vec<QuadraticForm> {
        self.forms.iter().map(|f| f.restrict(vars)).collect()
    }

    /// Signal from the real unknown vector.
    pub fn to_signal(&self, x: &DVector<f64>) -> Signal {
        let n = self.signal_len;
        let data = (0..n)
            .map(|i| {
                let im = if self.components == 2 { x[i + n] } else { 0.0 };
                Complex64::new(x[i], im)
            })
            .collect();
        Signal::from_parts(vec![n], data)
    }

    /// Real unknown vector from a 1D signal.
    pub fn from_signal(&self, s: &Signal) -> Result<DVector<f64>> {
        if s.len() != self.signal_len {
            return Err(PhaseError::ShapeMismatch(format!(
                "signal of {} samples for a system of {}",
                s.len(),
                self.signal_len
            )));
        }
        if self.components == 1 {
            Ok(DVector::from_iterator(s.len(), s.data().iter().map(|v| v.re)))
        } else {
            Ok(DVector::from_iterator(
                2 * s.len(),
                s.data().iter().map(|v| v.re).chain(s.data().iter().map(|v| v.im)),
            ))
        }
    }

    /// Magnitude per site of a real unknown vector.
    pub(crate) fn site_magnitudes(&self, v: &DVector<f64>) -> Vec<f64> {
        let n = self.signal_len;
        (0..n)
            .map(|i| {
                if self.components == 2 {
                    v[i].hypot(v[i + n])
                } else {
                    v[i].abs()
                }
            })
            .collect()
    }
}

/// `f = Σ_i (xᵀA_i x − y_i)²` and `∇f = 4 Σ_i (xᵀA_i x − y_i) A_i x`.
pub fn objective_and_gradient(x: &DVector<f64>, sys: &QuadraticSystem) -> Result<(f64, DVector<f64>)> {
    if x.len() != sys.dim() {
        return Err(PhaseError::ShapeMismatch(format!(
            "vector of length {} for a system of {} unknowns",
            x.len(),
            sys.dim()
        )));
    }
    let mut f = 0.0;
    let mut g = DVector::zeros(x.len());
    for (form, &y) in sys.forms.iter().zip(&sys.y) {
        let ax = form.apply(x);
        let r = x.dot(&ax) - y;
        f += r * r;
        g.axpy(4.0 * r, &ax, 1.0);
    }
    Ok((f, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::intensity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&g + g.transpose()) * 0.5
    }

    #[test]
    fn hand_computed_gradient() {
        let sys = QuadraticSystem::new(vec![DMatrix::identity(2, 2)], vec![0.0]).unwrap();
        let (f, g) = objective_and_gradient(&DVector::from_vec(vec![1.0, 0.0]), &sys).unwrap();
        assert_eq!(f, 1.0);
        assert_eq!(g.as_slice(), &[4.0, 0.0]);
    }

    #[test]
    fn global_minimum_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mats: Vec<_> = (0..5).map(|_| random_symmetric(&mut rng, 4)).collect();
        let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let y = mats.iter().map(|m| x.dot(&(m * &x))).collect();
        let sys = QuadraticSystem::new(mats, y).unwrap();
        let (f, g) = objective_and_gradient(&x, &sys).unwrap();
        assert!(f < 1e-28 && g.amax() < 1e-13);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let mats: Vec<_> = (0..16).map(|_| random_symmetric(&mut rng, 8)).collect();
            let y = (0..16).map(|_| rng.random_range(0.0..2.0)).collect();
            let sys = QuadraticSystem::new(mats, y).unwrap();
            let x = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
            let (_, g) = objective_and_gradient(&x, &sys).unwrap();
            let h = 1e-5;
            let fd = DVector::from_fn(8, |i, _| {
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += h;
                b[i] -= h;
                (objective_and_gradient(&a, &sys).unwrap().0 - objective_and_gradient(&b, &sys).unwrap().0) / (2.0 * h)
            });
            assert!((&g - &fd).norm() / g.norm() < 1e-6);
        }
    }

    #[test]
    fn fourier_system_reproduces_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = Signal::from_real(&[10], &x).unwrap();
        let obs = intensity(&s, &MeasurementModel::oversampled_fourier(&[20])).unwrap();
        let sys = QuadraticSystem::from_fourier_real(10, 20, obs.y()).unwrap();
        assert_eq!(sys.len(), 11);
        let v = DVector::from_vec(x);
        for (k, form) in sys.forms().iter().enumerate() {
            assert!((form.eval(&v) - obs.y()[k]).abs() < 1e-10);
        }
        let (f, _) = objective_and_gradient(&v, &sys).unwrap();
        assert!(f < 1e-20);
    }

    #[test]
    fn complex_bridges_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 5;
        let x = Signal::from_vec(
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap();
        let vectors: Vec<Vec<Complex64>> = (0..7)
            .map(|_| {
                (0..n)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let model = MeasurementModel::GeneralLinear { vectors: vectors.clone() };
        let obs = intensity(&x, &model).unwrap();
        let via_model = QuadraticSystem::from_model(&model, &[n], &obs, false).unwrap();
        let hermitian: Vec<DMatrix<Complex64>> = vectors
            .iter()
            .map(|a| {
                let a = DVector::from_vec(a.clone());
                &a * a.adjoint()
            })
            .collect();
        let via_matrix = QuadraticSystem::from_hermitian(&hermitian, obs.y().to_vec()).unwrap();
        let v = via_model.from_signal(&x).unwrap();
        for i in 0..7 {
            assert!((via_model.forms()[i].eval(&v) - obs.y()[i]).abs() < 1e-12);
            assert!((via_matrix.forms()[i].eval(&v) - obs.y()[i]).abs() < 1e-12);
            assert!((via_model.matrix(i) - via_matrix.matrix(i)).amax() < 1e-12);
        }
    }

    #[test]
    fn rejects_asymmetric_and_mismatched() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(QuadraticSystem::new(vec![m], vec![1.0]).is_err());
        assert!(QuadraticSystem::new(vec![DMatrix::identity(2, 2)], vec![]).is_err());
        let sys = QuadraticSystem::new(vec![DMatrix::identity(2, 2)], vec![1.0]).unwrap();
        assert!(objective_and_gradient(&DVector::zeros(3), &sys).is_err());
    }
}
