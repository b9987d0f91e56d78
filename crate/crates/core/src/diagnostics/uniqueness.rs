use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, PhaseError, Result};
use crate::signal::Signal;

const RIP_MAX_K: usize = 12;
const RIP_MAX_SUBSETS: f64 = 1e6;
const COMPLEMENT_MAX_VECTORS: usize = 20;
const COLLISION_MAX_QUADS: f64 = 1e8;

fn unit_columns(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = a.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 {
            return Err(invalid("matrix", format!("column {j} is zero")));
        }
        col /= n;
    }
    Ok(out)
}

/// Largest `|⟨a_i, a_j⟩| / (‖a_i‖‖a_j‖)` over distinct columns.
pub fn coherence_mu(a: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() < 2 {
        return Err(invalid("matrix", "needs at least two columns"));
    }
    let u = unit_columns(a)?;
    let gram = u.tr_mul(&u);
    let mut mu: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in i + 1..gram.ncols() {
            mu = mu.max(gram[(i, j)].abs());
        }
    }
    Ok(mu)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k.min(n - k)).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `f` on every increasing `k`-subset of `0..n`.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Restricted isometry constant of the column-normalized matrix by
/// enumerating every `k`-column submatrix.
pub fn rip_delta(a: &DMatrix<f64>, k: usize) -> Result<f64> {
    if k == 0 || k > a.ncols() {
        return Err(invalid("k", format!("must lie in 1..={}", a.ncols())));
    }
    let subsets = binomial(a.ncols(), k);
    if k > RIP_MAX_K || subsets > RIP_MAX_SUBSETS {
        return Err(PhaseError::GuardExceeded(format!(
            "RIP over C({}, {k}) = {subsets:.3e} subsets exceeds the desk-scale limit",
            a.ncols()
        )));
    }
    let u = unit_columns(a)?;
    let mut delta: f64 = 0.0;
    for_each_subset(a.ncols(), k, |cols| {
        let sub = u.select_columns(cols);
        let sv = sub.singular_values();
        let smax = sv.max();
        // A wide submatrix has zero singular values beyond its rank.
        let smin = if sub.nrows() < k { 0.0 } else { sv.min() };
        delta = delta.max(1.0 - smin * smin).max(smax * smax - 1.0);
    });
    Ok(delta)
}

/// Outcome of [`complement_property_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementCheck {
    pub holds: bool,
    /// A subset `S` such that neither `S` nor its complement spans.
    pub witness: Option<Vec<usize>>,
}

fn spans(vectors: &[DVector<f64>], members: impl Iterator<Item = usize>, dim: usize) -> bool {
    let cols: Vec<DVector<f64>> = members.map(|i| vectors[i].clone()).collect();
    if cols.len() < dim {
        return false;
    }
    let m = DMatrix::from_columns(&cols);
    m.rank(1e-10 * m.amax().max(f64::MIN_POSITIVE)) == dim
}

/// Whether every split of the vectors leaves one side spanning `R^N`.
pub fn complement_property_check(vectors: &[DVector<f64>]) -> Result<ComplementCheck> {
    let m = vectors.len();
    if m == 0 {
        return Err(invalid("vectors", "need at least one vector"));
    }
    if m > COMPLEMENT_MAX_VECTORS {
        return Err(PhaseError::GuardExceeded(format!(
            "{m} vectors exceed the {COMPLEMENT_MAX_VECTORS}-vector limit"
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) || dim == 0 {
        return Err(PhaseError::ShapeMismatch("vectors must share one positive length".into()));
    }
    for mask in 0u32..(1 << m) {
        let inside = |i: usize| mask & (1 << i) != 0;
        // Each split is visited twice; the side holding vector 0 is enough.
        if !inside(0) {
            continue;
        }
        let held = spans(vectors, (0..m).filter(|&i| inside(i)), dim);
        if !held && !spans(vectors, (0..m).filter(|&i| !inside(i)), dim) {
            return Ok(ComplementCheck {
                holds: false,
                witness: Some((0..m).filter(|&i| inside(i)).collect()),
            });
        }
    }
    Ok(ComplementCheck {
        holds: true,
        witness: None,
    })
}

/// Outcome of [`collision_free_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollisionCheck {
    pub collision_free: bool,
    /// Locations `(i, j, k, l)` with `i − j = k − l` and `(i, j) ≠ (k, l)`.
    pub witness: Option<[usize; 4]>,
}

/// Whether all pairwise differences of nonzero locations are distinct.
pub fn collision_free_check(x: &Signal) -> Result<CollisionCheck> {
    if x.ndim() != 1 {
        return Err(PhaseError::ShapeMismatch("collision check needs a 1D signal".into()));
    }
    let locs: Vec<usize> = (0..x.len()).filter(|&i| x.data()[i].norm() != 0.0).collect();
    let k = locs.len() as f64;
    if k.powi(4) > COLLISION_MAX_QUADS {
        return Err(PhaseError::GuardExceeded(format!(
            "{} nonzeros exceed the collision-check limit",
            locs.len()
        )));
    }
    let mut seen: HashMap<usize, (usize, usize)> = HashMap::new();
    for (b, &j) in locs.iter().enumerate() {
        for &i in &locs[b + 1..] {
            if let Some(&(pi, pj)) = seen.get(&(i - j)) {
                return Ok(CollisionCheck {
                    collision_free: false,
                    witness: Some([pi, pj, i, j]),
                });
            }
            seen.insert(i - j, (i, j));
        }
    }
    Ok(CollisionCheck {
        collision_free: true,
        witness: None,
    })
}

/// Two real signals with equal autocorrelation that are not related by
/// any trivial ambiguity.
pub fn counterexample_pair() -> (Signal, Signal) {
    let r3 = 3f64.sqrt();
    let u = Signal::from_real(&[5], &[1.0, 0.0, -2.0, 0.0, -2.0]).expect("fixed length");
    let v = Signal::from_real(&[5], &[1.0 - r3, 0.0, 1.0, 0.0, 1.0 + r3]).expect("fixed length");
    (u, v)
}
