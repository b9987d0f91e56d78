use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{omp_solve, Dictionary};
use crate::altproj::{random_phases, FourierProjector};
use crate::error::{invalid, PhaseError, Result};
use crate::fft::FftNd;
use crate::forward::Observation;
use crate::signal::Signal;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Settings for the sparsity-thresholded Fienup iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparseFienupConfig {
    pub max_iters: usize,
    /// Independent random starts; the one with the least `f` is kept.
    pub restarts: usize,
    /// Stop a run once `E ≤ epsilon`.
    pub epsilon: f64,
    /// Stop a run once `E` falls by less than this fraction per iteration.
    pub stall_tolerance: f64,
    /// Stop restarting once `f ≤ tau`.
    pub tau: f64,
    /// Keep only real coefficients.
    pub real_valued: bool,
    pub seed: u64,
}

impl Default for SparseFienupConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            restarts: 1,
            epsilon: 0.0,
            stall_tolerance: 1e-9,
            tau: 0.0,
            real_valued: true,
            seed: 0,
        }
    }
}

/// Outcome of [`sparse_fienup_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFienupReport {
    /// Estimate with the dictionary's atom shape.
    pub x: Signal,
    /// Its `k`-sparse code.
    pub code: Vec<Complex64>,
    /// `E` per iteration of the kept run.
    pub errors: Vec<f64>,
    /// `Σ (|Ẑ|² − y)²` over valid entries.
    pub objective: f64,
    /// Runs performed.
    pub restarts: usize,
}

enum Analysis {
    Inverse(DMatrix<f64>),
    Pursuit,
}

struct SparseProjector<'a> {
    dict: &'a Dictionary,
    analysis: Analysis,
    k: usize,
    real_valued: bool,
    grid: Vec<usize>,
}

impl SparseProjector<'_> {
    /// Steps a–c: code of the leading block, keep the `k` largest entries,
    /// synthesize back onto the grid.
    fn project(&self, z: &[Complex64]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let block = Signal::from_parts(self.grid.clone(), z.to_vec()).crop(self.dict.atom_shape())?;
        let mut code = match &self.analysis {
            Analysis::Inverse(inv) => {
                let re = inv * DVector::from_iterator(block.len(), block.data().iter().map(|v| v.re));
                let im = inv * DVector::from_iterator(block.len(), block.data().iter().map(|v| v.im));
                re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
            }
            Analysis::Pursuit => omp_solve(&block, self.dict, self.k)?.coefficients,
        };
        if self.real_valued {
            code.iter_mut().for_each(|c| c.im = 0.0);
        }
        let mut order: Vec<usize> = (0..code.len()).collect();
        order.sort_by(|&a, &b| code[b].norm().total_cmp(&code[a].norm()).then(a.cmp(&b)));
        for &j in &order[self.k..] {
            code[j] = ZERO;
        }
        let next = self.dict.synthesize(&code)?.zero_pad(&self.grid)?.into_data();
        Ok((code, next))
    }
}

fn intensity_misfit(obs: &Observation, z: &[Complex64]) -> f64 {
    let mut spec = z.to_vec();
    FftNd::new(obs.shape()).forward(&mut spec);
    spec.iter()
        .zip(obs.y())
        .zip(obs.valid())
        .filter(|(_, &ok)| ok)
        .map(|((s, &y), _)| (s.norm_sqr() - y).powi(2))
        .sum()
}

/// Fienup iteration whose real-space step replaces the support constraint by
/// `k`-sparse thresholding in the dictionary domain. Square dictionaries
/// are inverted; other shapes use [`omp_solve`] for the coding step.
pub fn sparse_fienup_solve(
    obs: &Observation,
    dict: &Dictionary,
    k: usize,
    cfg: &SparseFienupConfig,
) -> Result<SparseFienupReport> {
    if k == 0 || k > dict.len() {
        return Err(invalid("k", format!("must lie in 1..={}", dict.len())));
    }
    if cfg.restarts == 0 {
        return Err(invalid("restarts", "must be at least 1"));
    }
    if !(cfg.epsilon >= 0.0 && cfg.stall_tolerance >= 0.0 && cfg.tau >= 0.0) {
        return Err(invalid("sparse_fienup", "tolerances must be nonnegative"));
    }
    let grid = obs.shape().to_vec();
    if grid.len() != dict.atom_shape().len() || grid.iter().zip(dict.atom_shape()).any(|(g, a)| a > g) {
        return Err(PhaseError::ShapeMismatch(format!(
            "atoms of shape {:?} do not fit the grid {grid:?}",
            dict.atom_shape()
        )));
    }
    let analysis = if dict.len() == dict.atom_len() {
        let svd = dict.matrix().clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-12 * smax {
            return Err(PhaseError::Singular("square dictionary is rank-deficient".into()));
        }
        Analysis::Inverse(svd.pseudo_inverse(0.0).map_err(|e| PhaseError::Singular(e.to_string()))?)
    } else {
        Analysis::Pursuit
    };
    let proj = SparseProjector {
        dict,
        analysis,
        k,
        real_valued: cfg.real_valued,
        grid: grid.clone(),
    };
    let mut fourier = FourierProjector::new(obs)?;
    let mut plan = FftNd::new(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<SparseFienupReport> = None;
    let mut prime = vec![ZERO; obs.len()];
    let mut runs = 0;
    for _ in 0..cfg.restarts {
        runs += 1;
        let mut run_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let mut start: Vec<Complex64> = obs
            .magnitudes()
            .iter()
            .zip(random_phases(&mut run_rng, obs.len()))
            .map(|(&m, p)| p * m)
            .collect();
        plan.inverse(&mut start);
        let (mut code, mut z) = proj.project(&start)?;
        let mut errors = Vec::new();
        for _ in 0..cfg.max_iters {
            let e = fourier.project(&z, &mut prime);
            let stalled = errors.last().is_some_and(|&prev: &f64| prev - e <= cfg.stall_tolerance * prev);
            errors.push(e);
            if e <= cfg.epsilon || stalled {
                break;
            }
            (code, z) = proj.project(&prime)?;
        }
        if errors.len() == cfg.max_iters || errors.is_empty() {
            errors.push(fourier.error_of(&z));
        }
        let objective = intensity_misfit(obs, &z);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(SparseFienupReport {
                x: Signal::from_parts(grid.clone(), z).crop(dict.atom_shape())?,
                code,
                errors,
                objective,
                restarts: 0,
            });
        }
        if best.as_ref().is_some_and(|b| b.objective <= cfg.tau) {
            break;
        }
    }
    let mut report = best.expect("at least one restart ran");
    report.restarts = runs;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::altproj::{fienup_solve_from, AltProjConfig, FienupVariant, RealSpaceConstraint};
    use crate::forward::{intensity, MeasurementModel};
    use crate::signal::SupportMask;
    use rand::seq::index::sample;

    fn sparse(n: usize, k: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; n];
        for i in sample(&mut rng, n, k) {
            x[i] = rng.random_range(3.0..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        Signal::from_real(&[n], &x).unwrap()
    }

    fn observe(x: &Signal, m: usize) -> Observation {
        intensity(x, &MeasurementModel::oversampled_fourier(&[m])).unwrap()
    }

    #[test]
    fn error_is_nonincreasing() {
        let x = sparse(32, 4, 1);
        let obs = observe(&x, 64);
        let dict = Dictionary::identity(&[32]).unwrap();
        for seed in 0..5 {
            let cfg = SparseFienupConfig {
                max_iters: 300,
                stall_tolerance: 0.0,
                seed,
                ..Default::default()
            };
            let rep = sparse_fienup_solve(&obs, &dict, 4, &cfg).unwrap();
            for w in rep.errors.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn output_is_k_sparse_and_deterministic() {
        let x = sparse(24, 3, 2);
        let obs = observe(&x, 48);
        let dict = Dictionary::identity(&[24]).unwrap();
        let cfg = SparseFienupConfig {
            restarts: 4,
            seed: 9,
            ..Default::default()
        };
        let a = sparse_fienup_solve(&obs, &dict, 3, &cfg).unwrap();
        assert_eq!(a, sparse_fienup_solve(&obs, &dict, 3, &cfg).unwrap());
        assert!(a.code.iter().filter(|c| c.norm() > 0.0).count() <= 3);
        assert!(a.x.data().iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn recovers_easy_instances() {
        let dict = Dictionary::identity(&[32]).unwrap();
        let mut hits = 0;
        for seed in 0..10 {
            let x = sparse(32, 3, 100 + seed);
            let obs = observe(&x, 64);
            let cfg = SparseFienupConfig {
                restarts: 50,
                tau: 1e-12,
                seed,
                ..Default::default()
            };
            let rep = sparse_fienup_solve(&obs, &dict, 3, &cfg).unwrap();
            let est = rep.x.zero_pad(&[64]).unwrap();
            let truth = x.zero_pad(&[64]).unwrap();
            if crate::signal::align_to_reference(&est, &truth).unwrap().residual < 1e-4 {
                hits += 1;
            }
        }
        assert!(hits >= 8, "{hits}/10");
    }

    #[test]
    fn full_sparsity_matches_error_reduction() {
        let x = sparse(16, 5, 3);
        let obs = observe(&x, 32);
        let dict = Dictionary::identity(&[16]).unwrap();
        let cfg = SparseFienupConfig {
            max_iters: 40,
            stall_tolerance: 0.0,
            real_valued: false,
            seed: 4,
            ..Default::default()
        };
        let rep = sparse_fienup_solve(&obs, &dict, 16, &cfg).unwrap();
        // Same start: thresholding that keeps everything is the support projection.
        let mut run_rng = ChaCha8Rng::seed_from_u64(ChaCha8Rng::seed_from_u64(4).random());
        let mut start: Vec<Complex64> = obs
            .magnitudes()
            .iter()
            .zip(random_phases(&mut run_rng, 32))
            .map(|(&m, p)| p * m)
            .collect();
        FftNd::new(&[32]).inverse(&mut start);
        let block = SupportMask::leading_block(&[32], &[16]).unwrap();
        start.iter_mut().enumerate().for_each(|(i, v)| {
            if !block.contains(i) {
                *v = ZERO;
            }
        });
        let start = Signal::new(&[32], start).unwrap();
        let er_cfg = AltProjConfig {
            max_iters: 40,
            ..Default::default()
        };
        let constraint = RealSpaceConstraint::support(block);
        let er = fienup_solve_from(&obs, &constraint, &er_cfg, FienupVariant::ErrorReduction, &start).unwrap();
        for (a, b) in rep.errors.iter().zip(&er.errors) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let x = sparse(16, 3, 5);
        let obs = observe(&x, 32);
        let dict = Dictionary::identity(&[16]).unwrap();
        let proj = SparseProjector {
            dict: &dict,
            analysis: Analysis::Inverse(DMatrix::identity(16, 16)),
            k: 3,
            real_valued: true,
            grid: vec![32],
        };
        let z = x.zero_pad(&[32]).unwrap().into_data();
        let mut fourier = FourierProjector::new(&obs).unwrap();
        let mut prime = vec![ZERO; 32];
        let e = fourier.project(&z, &mut prime);
        assert!(e < 1e-20);
        let (_, next) = proj.project(&prime).unwrap();
        let d: f64 = next.iter().zip(&z).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-10);
    }

    #[test]
    fn rejects_singular_square_dictionary() {
        let mut m = DMatrix::identity(4, 4);
        let dup = m.column(2).clone_owned();
        m.column_mut(3).copy_from(&dup);
        let dict = Dictionary::new(m, &[4]).unwrap();
        let obs = observe(&sparse(4, 1, 0), 8);
        assert!(sparse_fienup_solve(&obs, &dict, 1, &SparseFienupConfig::default()).is_err());
    }
}
