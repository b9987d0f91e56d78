use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{damped_gauss_newton, objective_and_gradient, QuadraticSystem};
use crate::error::{invalid, Result};
use crate::signal::Signal;

/// Settings for the greedy 2-opt support search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GesparConfig {
    pub sparsity: usize,
    /// Success threshold on `f`; `None` uses `1e-4 Σ y_i²`.
    pub tau: Option<f64>,
    /// Total swap budget across restarts.
    pub max_swaps: usize,
    /// `None` leaves restarts bounded by the swap budget alone.
    pub max_restarts: Option<usize>,
    pub gn_max_iters: usize,
    pub gn_damping_init: f64,
    pub gn_tolerance: f64,
    /// Weakest support sites tried per sweep.
    pub support_candidates: usize,
    /// Strongest-gradient off-support sites tried per support site.
    pub offsupport_candidates: usize,
    pub seed: u64,
}

impl Default for GesparConfig {
    fn default() -> Self {
        Self {
            sparsity: 1,
            tau: None,
            max_swaps: 100_000,
            max_restarts: None,
            gn_max_iters: 100,
            gn_damping_init: 1.0,
            gn_tolerance: 1e-8,
            support_candidates: 1,
            offsupport_candidates: 3,
            seed: 0,
        }
    }
}

/// Outcome of [`gespar_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct GesparReport {
    /// Best estimate, exactly `sparsity` sites in its support.
    pub x: Signal,
    pub support: Vec<usize>,
    pub objective: f64,
    pub swaps: usize,
    pub restarts: usize,
    /// Whether `objective < tau`.
    pub converged: bool,
}

fn order_by(values: &[f64], sites: impl Iterator<Item = usize>, ascending: bool) -> Vec<usize> {
    let mut s: Vec<usize> = sites.collect();
    s.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        if ascending {
            o.then(a.cmp(&b))
        } else {
            o.reverse().then(a.cmp(&b))
        }
    });
    s
}

/// Greedy support search: from a random support, run Gauss-Newton, then try
/// swapping the weakest support sites against the off-support sites with the
/// largest gradient, in rank order, accepting the first swap that lowers `f`.
/// When no candidate helps, restart from a fresh random support. The swap
/// budget is shared by all restarts. Each sweep tries at most
/// `support_candidates × min(offsupport_candidates, 10, N − s)` pairs.
pub fn gespar_solve(sys: &QuadraticSystem, cfg: &GesparConfig) -> Result<GesparReport> {
    let n = sys.signal_len();
    if cfg.sparsity == 0 || cfg.sparsity > n {
        return Err(invalid("sparsity", format!("must lie in 1..={n}")));
    }
    if cfg.max_restarts == Some(0) || cfg.max_swaps == 0 {
        return Err(invalid("max_restarts", "budgets must be at least 1"));
    }
    if cfg.support_candidates == 0 || cfg.offsupport_candidates == 0 {
        return Err(invalid("candidates", "must be at least 1"));
    }
    let tau = cfg
        .tau
        .unwrap_or_else(|| 1e-4 * sys.y().iter().map(|v| v * v).sum::<f64>());
    if !(tau >= 0.0) {
        return Err(invalid("tau", "must be nonnegative"));
    }
    let s = cfg.sparsity;
    let p_count = cfg.support_candidates.min(s);
    let q_count = cfg.offsupport_candidates.min(10).min(n - s);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gn = |support: &[usize], init: Option<&DVector<f64>>, rng: &mut ChaCha8Rng| {
        damped_gauss_newton(sys, support, init, cfg.gn_max_iters, cfg.gn_damping_init, cfg.gn_tolerance, rng)
    };

    let mut best: Option<(DVector<f64>, Vec<usize>, f64)> = None;
    let mut swaps = 0;
    let mut restarts = 0;
    'restart: while cfg.max_restarts.is_none_or(|cap| restarts < cap) {
        restarts += 1;
        let mut support = sample(&mut rng, n, s).into_vec();
        support.sort_unstable();
        let start = gn(&support, None, &mut rng)?;
        let (mut x, mut f) = (start.x, start.objective);
        loop {
            if best.as_ref().is_none_or(|b| f < b.2) {
                best = Some((x.clone(), support.clone(), f));
            }
            if f < tau {
                break 'restart;
            }
            let (_, grad) = objective_and_gradient(&x, sys)?;
            let mags = sys.site_magnitudes(&x);
            let gmags = sys.site_magnitudes(&grad);
            let weak: Vec<usize> = order_by(&mags, support.iter().copied(), true)
                .into_iter()
                .take(p_count)
                .collect();
            let strong: Vec<usize> = order_by(&gmags, (0..n).filter(|i| !support.contains(i)), false)
                .into_iter()
                .take(q_count)
                .collect();
            let mut improved = false;
            'pairs: for &p in &weak {
                for &q in &strong {
                    if swaps >= cfg.max_swaps {
                        break 'restart;
                    }
                    swaps += 1;
                    let mut trial: Vec<usize> = support.iter().map(|&v| if v == p { q } else { v }).collect();
                    trial.sort_unstable();
                    let res = gn(&trial, Some(&x), &mut rng)?;
                    if res.objective < f {
                        support = trial;
                        x = res.x;
                        f = res.objective;
                        improved = true;
                        break 'pairs;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    let (x, support, objective) = best.expect("at least one restart ran");
    Ok(GesparReport {
        x: sys.to_signal(&x),
        support,
        objective,
        swaps,
        restarts,
        converged: objective < tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{intensity, MeasurementModel};
    use crate::signal::align_to_reference;
    use rand::Rng;

    fn sparse_real(n: usize, k: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; n];
        for i in sample(&mut rng, n, k) {
            let mag = rng.random_range(3.0..4.0);
            x[i] = if rng.random_bool(0.5) { mag } else { -mag };
        }
        x
    }

    fn fourier_system(x: &[f64], m: usize) -> QuadraticSystem {
        let s = Signal::from_real(&[x.len()], x).unwrap();
        let obs = intensity(&s, &MeasurementModel::oversampled_fourier(&[m])).unwrap();
        QuadraticSystem::from_fourier_real(x.len(), m, obs.y()).unwrap()
    }

    #[test]
    fn recovers_sparse_fourier_signal_up_to_ambiguity() {
        let (n, m) = (32, 64);
        let mut hits = 0;
        for seed in 0..10 {
            let x = sparse_real(n, 4, seed);
            let sys = fourier_system(&x, m);
            let rep = gespar_solve(&sys, &GesparConfig { sparsity: 4, seed, ..Default::default() }).unwrap();
            assert_eq!(rep.support.len(), 4);
            let truth = Signal::from_real(&[n], &x).unwrap().zero_pad(&[m]).unwrap();
            let est = rep.x.zero_pad(&[m]).unwrap();
            if align_to_reference(&est, &truth).unwrap().residual < 1e-6 {
                hits += 1;
            }
        }
        assert!(hits >= 9, "{hits}/10");
    }

    #[test]
    fn support_is_exactly_s_and_deterministic() {
        let x = sparse_real(20, 3, 7);
        let sys = fourier_system(&x, 40);
        let cfg = GesparConfig {
            sparsity: 3,
            seed: 11,
            ..Default::default()
        };
        let a = gespar_solve(&sys, &cfg).unwrap();
        let b = gespar_solve(&sys, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.support.len(), 3);
        let nonzero = a.x.data().iter().filter(|v| v.norm() > 0.0).count();
        assert!(nonzero <= 3);
    }

    #[test]
    fn swap_budget_is_respected() {
        let x = sparse_real(24, 6, 3);
        let sys = fourier_system(&x, 48);
        let cfg = GesparConfig {
            sparsity: 6,
            tau: Some(0.0),
            max_swaps: 25,
            ..Default::default()
        };
        let rep = gespar_solve(&sys, &cfg).unwrap();
        assert!(rep.swaps <= 25);
        assert!(!rep.converged);
    }

    #[test]
    fn rejects_bad_sparsity() {
        let sys = fourier_system(&[1.0, 2.0], 4);
        assert!(gespar_solve(&sys, &GesparConfig { sparsity: 0, ..Default::default() }).is_err());
        assert!(gespar_solve(&sys, &GesparConfig { sparsity: 3, ..Default::default() }).is_err());
    }
}
