use nalgebra::DMatrix;
use num_complex::Complex64;

use super::Dictionary;
use crate::error::{invalid, PhaseError, Result};
use crate::signal::Signal;

/// Sparse coefficients over a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// Selected atoms in selection order.
    pub indices: Vec<usize>,
    /// Length-`D` code, zero off `indices`.
    pub coefficients: Vec<Complex64>,
    /// `‖target − Ψα‖` before the first selection and after each one.
    pub residual_norms: Vec<f64>,
}

/// Least-squares coefficients of `target` on the columns `cols` of `psi`.
pub(crate) fn refit(psi: &DMatrix<f64>, cols: &[usize], target: &[Complex64]) -> Result<Vec<Complex64>> {
    let sub = psi.select_columns(cols);
    let rhs = DMatrix::from_fn(target.len(), 2, |i, c| if c == 0 { target[i].re } else { target[i].im });
    let sol = sub
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| PhaseError::Singular(e.to_string()))?;
    Ok((0..cols.len()).map(|j| Complex64::new(sol[(j, 0)], sol[(j, 1)])).collect())
}

/// Orthogonal matching pursuit with `k` selections; stops early once the
/// residual vanishes.
pub fn omp_solve(target: &Signal, dict: &Dictionary, k: usize) -> Result<SparseCode> {
    if k > dict.len() {
        return Err(invalid("k", format!("{k} exceeds the {} atoms", dict.len())));
    }
    if target.len() != dict.atom_len() {
        return Err(PhaseError::ShapeMismatch(format!(
            "target of {} samples for atoms of {}",
            target.len(),
            dict.atom_len()
        )));
    }
    let psi = dict.matrix();
    let norms: Vec<f64> = psi.column_iter().map(|c| c.norm()).collect();
    let t = target.data();
    let t_norm = target.norm();
    let mut residual = t.to_vec();
    let mut indices = Vec::with_capacity(k);
    let mut coefficients = vec![Complex64::new(0.0, 0.0); dict.len()];
    let mut residual_norms = vec![t_norm];
    while indices.len() < k && *residual_norms.last().unwrap() > 1e-14 * t_norm {
        let pick = (0..dict.len())
            .filter(|j| !indices.contains(j))
            .map(|j| {
                let corr: Complex64 = psi.column(j).iter().zip(&residual).map(|(&a, &r)| r * a).sum();
                (j, corr.norm() / norms[j])
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(j, _)| j)
            .expect("k ≤ D leaves a candidate");
        indices.push(pick);
        let coef = refit(psi, &indices, t)?;
        residual.copy_from_slice(t);
        for (&j, &c) in indices.iter().zip(&coef) {
            coefficients[j] = c;
            for (r, &a) in residual.iter_mut().zip(psi.column(j).iter()) {
                *r -= c * a;
            }
        }
        residual_norms.push(residual.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt());
    }
    Ok(SparseCode {
        indices,
        coefficients,
        residual_norms,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::seq::index::sample;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real_signal(v: &[f64]) -> Signal {
        Signal::from_real(&[v.len()], v).unwrap()
    }

    /// `[I, P·S·H/√N]` with a Sylvester Hadamard `H`, random row
    /// permutation `P` and random signs `S`: coherence exactly `1/√N`.
    pub(crate) fn spikes_and_hadamard(n: usize, rng: &mut ChaCha8Rng) -> Dictionary {
        let mut h = DMatrix::from_element(1, 1, 1.0);
        while h.nrows() < n {
            let m = h.nrows();
            let mut next = DMatrix::zeros(2 * m, 2 * m);
            next.view_mut((0, 0), (m, m)).copy_from(&h);
            next.view_mut((0, m), (m, m)).copy_from(&h);
            next.view_mut((m, 0), (m, m)).copy_from(&h);
            next.view_mut((m, m), (m, m)).copy_from(&(-&h));
            h = next;
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let signs: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let scale = (n as f64).sqrt();
        let mut psi = DMatrix::zeros(n, 2 * n);
        psi.view_mut((0, 0), (n, n)).fill_with_identity();
        for r in 0..n {
            for c in 0..n {
                psi[(r, n + c)] = signs[r] * h[(perm[r], c)] / scale;
            }
        }
        Dictionary::new(psi, &[n]).unwrap()
    }

    #[test]
    fn two_atom_target_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi = DMatrix::from_fn(10, 20, |_, _| rng.random_range(-1.0..1.0));
        let dict = Dictionary::new(psi.clone(), &[10]).unwrap();
        let t: Vec<f64> = (0..10).map(|i| 2.0 * psi[(i, 3)] - 0.5 * psi[(i, 17)]).collect();
        let code = omp_solve(&real_signal(&t), &dict, 2).unwrap();
        let mut idx = code.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![3, 17]);
        assert!(*code.residual_norms.last().unwrap() < 1e-10);
        assert!((code.coefficients[3].re - 2.0).abs() < 1e-10);
    }

    #[test]
    fn coherence_bound_gives_exact_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = 64;
            let dict = spikes_and_hadamard(n, &mut rng);
            // μ = 1/8, so any support of size < 4.5 is recoverable.
            let k = 4;
            let mut support = sample(&mut rng, 2 * n, k).into_vec();
            let mut code = vec![Complex64::new(0.0, 0.0); 2 * n];
            for &j in &support {
                code[j] = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            }
            let target = dict.synthesize(&code).unwrap();
            let got = omp_solve(&target, &dict, k).unwrap();
            let mut idx = got.indices.clone();
            idx.sort_unstable();
            support.sort_unstable();
            assert_eq!(idx, support);
        }
    }

    fn best_k_term(psi: &DMatrix<f64>, t: &[Complex64], k: usize) -> f64 {
        fn rec(psi: &DMatrix<f64>, t: &[Complex64], k: usize, start: usize, cur: &mut Vec<usize>, best: &mut f64) {
            if cur.len() == k {
                let c = refit(psi, cur, t).unwrap();
                let r: f64 = (0..t.len())
                    .map(|i| {
                        let fit: Complex64 = cur.iter().zip(&c).map(|(&j, &cj)| cj * psi[(i, j)]).sum();
                        (t[i] - fit).norm_sqr()
                    })
                    .sum();
                *best = best.min(r.sqrt());
                return;
            }
            for j in start..psi.ncols() {
                cur.push(j);
                rec(psi, t, k, j + 1, cur, best);
                cur.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(psi, t, k, 0, &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn within_factor_of_exhaustive_best_k_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let psi = DMatrix::from_fn(12, 24, |_, _| rng.random_range(-1.0..1.0));
            let dict = Dictionary::new(psi.clone(), &[12]).unwrap();
            let t: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let target = real_signal(&t);
            let got = omp_solve(&target, &dict, 3).unwrap();
            let oracle = best_k_term(&psi, target.data(), 3);
            assert!(*got.residual_norms.last().unwrap() <= 1.5 * oracle);
        }
    }

    #[test]
    fn residual_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = DMatrix::from_fn(16, 40, |_, _| rng.random_range(-1.0..1.0));
        let dict = Dictionary::new(psi, &[16]).unwrap();
        let t: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = omp_solve(&real_signal(&t), &dict, 10).unwrap();
        assert!(got.residual_norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn rejects_k_beyond_atoms() {
        let dict = Dictionary::identity(&[3]).unwrap();
        assert!(omp_solve(&real_signal(&[1.0, 0.0, 0.0]), &dict, 4).is_err());
    }
}
