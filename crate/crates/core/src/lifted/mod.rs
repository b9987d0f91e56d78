//! Lifted (matrix) formulations: `y_k = a_k^* X a_k` with `X = x x^*`.
//!
//! Everything is generic over the scalar field so that real signals can use
//! real symmetric matrices and complex signals Hermitian ones.

mod solver;

pub use solver::{cprl_solve, phaselift_solve, qcs_solve, LiftedConfig, LiftedSolution};

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, PhaseError, Result};
use crate::forward::{MeasurementModel, Observation};
use crate::signal::Signal;

/// Scalars the lifted solvers run over (`f64` or `Complex64`).
pub trait LiftScalar: ComplexField<RealField = f64> + Copy {
    /// `None` when the value is not representable (a complex number with a
    /// nonzero imaginary part for a real field).
    fn from_c64(v: Complex64) -> Option<Self>;
    fn to_c64(self) -> Complex64;
}

impl LiftScalar for f64 {
    fn from_c64(v: Complex64) -> Option<Self> {
        (v.im == 0.0).then_some(v.re)
    }

    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl LiftScalar for Complex64 {
    fn from_c64(v: Complex64) -> Option<Self> {
        Some(v)
    }

    fn to_c64(self) -> Complex64 {
        self
    }
}

/// Hermitian (real symmetric) lifted variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix<T: LiftScalar = Complex64> {
    matrix: DMatrix<T>,
}

impl<T: LiftScalar> LiftedMatrix<T> {
    /// Wrap a square matrix, symmetrizing it.
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(PhaseError::ShapeMismatch(format!(
                "lifted matrix must be square, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix: hermitian_part(&matrix),
        })
    }

    pub(crate) fn from_hermitian(matrix: DMatrix<T>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|v| v.real()).sum()
    }

    /// `max |X − X^*|`.
    pub fn hermitian_violation(&self) -> f64 {
        let m = &self.matrix;
        (m - m.adjoint()).iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Row-major `N×N` signal (for the binary record format).
    pub fn to_signal(&self) -> Signal {
        let n = self.dim();
        let data = (0..n * n).map(|i| self.matrix[(i / n, i % n)].to_c64()).collect();
        Signal::from_parts(vec![n, n], data)
    }

    pub fn from_signal(s: &Signal) -> Result<Self> {
        if s.ndim() != 2 || s.shape()[0] != s.shape()[1] {
            return Err(PhaseError::ShapeMismatch("lifted matrix record must be N×N".into()));
        }
        let n = s.shape()[0];
        let values = s
            .data()
            .iter()
            .map(|&v| T::from_c64(v).ok_or_else(|| invalid("signal", "complex entry for a real field")))
            .collect::<Result<Vec<T>>>()?;
        Self::new(DMatrix::from_row_slice(n, n, &values))
    }
}

pub(crate) fn hermitian_part<T: LiftScalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.adjoint()).scale(0.5)
}

pub(crate) fn to_vector<T: LiftScalar>(x: &Signal) -> Result<DVector<T>> {
    if x.ndim() != 1 {
        return Err(PhaseError::ShapeMismatch("lifting needs a 1D signal".into()));
    }
    let values = x
        .data()
        .iter()
        .map(|&v| T::from_c64(v).ok_or_else(|| invalid("x", "complex entry for a real field")))
        .collect::<Result<Vec<T>>>()?;
    Ok(DVector::from_vec(values))
}

/// `X = x x^*`.
pub fn lift<T: LiftScalar>(x: &Signal) -> Result<LiftedMatrix<T>> {
    let v = to_vector::<T>(x)?;
    Ok(LiftedMatrix::from_hermitian(&v * v.adjoint()))
}

/// `sqrt(λ₁)·u₁` for the leading eigenpair, with the largest entry of `u₁`
/// made real and positive. The zero matrix maps to the zero signal.
pub fn extract_rank1<T: LiftScalar>(x: &LiftedMatrix<T>) -> Signal {
    let n = x.dim();
    let eig = SymmetricEigen::new(x.matrix.clone());
    let (top, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    if !(lambda > 0.0) {
        return Signal::from_parts(vec![n], vec![Complex64::new(0.0, 0.0); n]);
    }
    let u: Vec<Complex64> = eig.eigenvectors.column(top).iter().map(|v| v.to_c64()).collect();
    let pivot = u.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
    let phase = pivot.conj() / pivot.norm();
    let scale = lambda.sqrt();
    Signal::from_parts(vec![n], u.into_iter().map(|v| v * phase * scale).collect())
}

/// Rank-one measurement operator `X ↦ (a_k^* X a_k)_k` with its data.
#[derive(Debug, Clone)]
pub struct LiftedProblem<T: LiftScalar = Complex64> {
    vectors: Vec<DVector<T>>,
    y: Vec<f64>,
}

impl<T: LiftScalar> LiftedProblem<T> {
    pub fn new(vectors: Vec<DVector<T>>, y: Vec<f64>) -> Result<Self> {
        if vectors.is_empty() || vectors.len() != y.len() {
            return Err(PhaseError::ShapeMismatch(format!(
                "{} measurement vectors for {} measurements",
                vectors.len(),
                y.len()
            )));
        }
        let n = vectors[0].len();
        if n == 0 || vectors.iter().any(|a| a.len() != n) {
            return Err(PhaseError::ShapeMismatch("measurement vectors differ in length".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(PhaseError::NonFinite(i));
        }
        Ok(Self { vectors, y })
    }

    /// Problem for a 1D signal of `signal_len` samples measured by `model`;
    /// invalid observation entries are dropped.
    pub fn from_observation(obs: &Observation, model: &MeasurementModel, signal_len: usize) -> Result<Self> {
        let rows = model.measurement_vectors(&[signal_len])?;
        if rows.len() != obs.len() {
            return Err(PhaseError::ShapeMismatch(format!(
                "model yields {} measurements, observation has {}",
                rows.len(),
                obs.len()
            )));
        }
        let mut vectors = Vec::new();
        let mut y = Vec::new();
        for ((row, &v), &ok) in rows.iter().zip(obs.y()).zip(obs.valid()) {
            if ok {
                let entries = row
                    .iter()
                    .map(|&c| T::from_c64(c).ok_or_else(|| invalid("model", "complex vector for a real field")))
                    .collect::<Result<Vec<T>>>()?;
                vectors.push(DVector::from_vec(entries));
                y.push(v);
            }
        }
        Self::new(vectors, y)
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
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

    pub fn vectors(&self) -> &[DVector<T>] {
        &self.vectors
    }

    /// `a_k^* X a_k` for every measurement.
    pub fn apply(&self, x: &DMatrix<T>) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|a| a.dotc(&(x * a)).real())
            .collect()
    }

    /// `Σ_k r_k a_k a_k^*`.
    pub fn adjoint(&self, r: &[f64]) -> DMatrix<T> {
        let n = self.dim();
        let mut out = DMatrix::<T>::zeros(n, n);
        for (a, &rk) in self.vectors.iter().zip(r) {
            if rk != 0.0 {
                out.gerc(T::from_real(rk), a, a, T::one());
            }
        }
        out
    }
}
