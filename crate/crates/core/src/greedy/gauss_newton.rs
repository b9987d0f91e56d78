use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{QuadraticForm, QuadraticSystem};
use crate::error::{invalid, PhaseError, Result};

/// Local minimizer on a fixed support.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonResult {
    /// Full-length real unknown vector, zero off the support.
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Damped Gauss-Newton for `f(z) = Σ (zᵀB_i z − y_i)²` where `B_i` is
/// `A_i` restricted to `support` (sites). Each step solves the linearized
/// least-squares problem and halves the step from `damping_init` until `f`
/// decreases; it stops once the step falls below `tolerance`, the relative
/// decrease is below `tolerance`, or after `max_iters` steps.
///
/// Without `init` the start is a random Gaussian vector scaled so that
/// `Σ zᵀB_i z = Σ y_i`.
pub fn damped_gauss_newton<R: Rng + ?Sized>(
    sys: &QuadraticSystem,
    support: &[usize],
    init: Option<&DVector<f64>>,
    max_iters: usize,
    damping_init: f64,
    tolerance: f64,
    rng: &mut R,
) -> Result<GaussNewtonResult> {
    if !(damping_init > 0.0 && damping_init <= 1.0) {
        return Err(invalid("gn_damping_init", "must lie in (0, 1]"));
    }
    if !(tolerance > 0.0) {
        return Err(invalid("gn_tolerance", "must be positive"));
    }
    if let Some(&s) = support.iter().find(|&&s| s >= sys.signal_len()) {
        return Err(invalid("support", format!("site {s} out of range")));
    }
    let vars = sys.site_vars(support);
    let restricted = Restricted::new(sys, &vars);
    let y = sys.y();
    let mut z = match init {
        Some(x) => {
            if x.len() != sys.dim() {
                return Err(PhaseError::ShapeMismatch("initial point has wrong length".into()));
            }
            x.select_rows(&vars)
        }
        None => {
            let mut z = DVector::from_fn(vars.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let energy: f64 = restricted.values(&z).iter().sum();
            let target: f64 = y.iter().sum();
            if energy > 0.0 && target > 0.0 {
                z *= (target / energy).sqrt();
            }
            z
        }
    };
    let misfit = |z: &DVector<f64>| -> f64 {
        restricted
            .values(z)
            .iter()
            .zip(y)
            .map(|(v, yi)| (v - yi).powi(2))
            .sum()
    };
    let mut f = misfit(&z);
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    while iterations < max_iters && f > 1e-30 * scale {
        let (values, jac) = restricted.values_and_jacobian(&z);
        let neg_r = DVector::from_iterator(y.len(), y.iter().zip(&values).map(|(yi, v)| yi - v));
        let Some(step) = least_squares(&jac, &neg_r) else {
            break;
        };
        let mut mu = damping_init;
        let mut accepted = None;
        while mu >= tolerance {
            let cand = &z + &step * mu;
            let fc = misfit(&cand);
            if fc < f {
                accepted = Some((cand, fc));
                break;
            }
            mu *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            break;
        };
        iterations += 1;
        let previous = f;
        z = cand;
        f = fc;
        if previous - f <= tolerance * previous {
            break;
        }
    }
    let mut x = DVector::zeros(sys.dim());
    for (k, &v) in vars.iter().enumerate() {
        x[v] = z[k];
    }
    Ok(GaussNewtonResult {
        x,
        objective: f,
        iterations,
    })
}


/// Forms restricted to a variable subset, flattened for fast evaluation.
enum Restricted {
    /// Stacked factor rows and, per row, the measurement it belongs to.
    LowRank { factors: DMatrix<f64>, owner: Vec<usize>, count: usize },
    Dense(Vec<DMatrix<f64>>),
}

impl Restricted {
    fn new(sys: &QuadraticSystem, vars: &[usize]) -> Self {
        let forms = sys.forms();
        if forms.iter().all(|f| matches!(f, QuadraticForm::LowRank(_))) {
            let mut rows = Vec::new();
            let mut owner = Vec::new();
            for (i, f) in forms.iter().enumerate() {
                if let QuadraticForm::LowRank(vs) = f {
                    for v in vs {
                        rows.extend(vars.iter().map(|&j| v[j]));
                        owner.push(i);
                    }
                }
            }
            let factors = DMatrix::from_row_slice(owner.len(), vars.len(), &rows);
            Self::LowRank { factors, owner, count: forms.len() }
        } else {
            Self::Dense(
                sys.restrict(vars)
                    .iter()
                    .map(|f| match f {
                        QuadraticForm::Dense(m) => m.clone(),
                        other => other.to_dense(),
                    })
                    .collect(),
            )
        }
    }

    /// `zᵀB_i z` for every measurement.
    fn values(&self, z: &DVector<f64>) -> Vec<f64> {
        match self {
            Self::LowRank { factors, owner, count } => {
                let u = factors * z;
                let mut out = vec![0.0; *count];
                for (&i, &ui) in owner.iter().zip(u.iter()) {
                    out[i] += ui * ui;
                }
                out
            }
            Self::Dense(ms) => ms.iter().map(|m| z.dot(&(m * z))).collect(),
        }
    }

    /// Values and the Jacobian rows `2 (B_i z)ᵀ`.
    fn values_and_jacobian(&self, z: &DVector<f64>) -> (Vec<f64>, DMatrix<f64>) {
        match self {
            Self::LowRank { factors, owner, count } => {
                let u = factors * z;
                let mut out = vec![0.0; *count];
                let mut jac = DMatrix::zeros(*count, z.len());
                for (r, (&i, &ui)) in owner.iter().zip(u.iter()).enumerate() {
                    out[i] += ui * ui;
                    for c in 0..z.len() {
                        jac[(i, c)] += 2.0 * ui * factors[(r, c)];
                    }
                }
                (out, jac)
            }
            Self::Dense(ms) => {
                let mut out = Vec::with_capacity(ms.len());
                let mut jac = DMatrix::zeros(ms.len(), z.len());
                for (i, m) in ms.iter().enumerate() {
                    let bz = m * z;
                    out.push(z.dot(&bz));
                    jac.row_mut(i).copy_from(&(bz * 2.0).transpose());
                }
                (out, jac)
            }
        }
    }
}

/// Minimum-norm least-squares step: normal equations when they are well
/// posed, SVD otherwise.
fn least_squares(jac: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let normal = jac.tr_mul(jac);
    let diag_max = normal.diagonal().amax();
    if jac.nrows() >= jac.ncols() && diag_max > 0.0 {
        if let Some(chol) = normal.clone().cholesky() {
            let d = chol.l().diagonal();
            let (lo, hi) = (d.min(), d.max());
            if lo > 1e-6 * hi {
                return Some(chol.solve(&jac.tr_mul(rhs)));
            }
        }
    }
    jac.clone().svd(true, true).solve(rhs, 1e-12).ok()
}
