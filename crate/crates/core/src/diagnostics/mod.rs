//! Reconstruction-quality metrics and uniqueness diagnostics.

mod uniqueness;

pub use uniqueness::{
    coherence_mu, collision_free_check, complement_property_check, counterexample_pair, rip_delta, CollisionCheck,
    ComplementCheck,
};

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PhaseError, Result};
use crate::fft::FftNd;
use crate::forward::Observation;
use crate::signal::{align_to_reference, same_shape, Signal};

/// `Σ|z_r − z_m| / Σ|z_m|`. Align the reconstruction first.
pub fn recovery_error_e(recon: &Signal, model: &Signal) -> Result<f64> {
    same_shape(recon, model)?;
    let den: f64 = model.data().iter().map(|v| v.norm()).sum();
    if den == 0.0 {
        return Err(PhaseError::ZeroNorm("model signal"));
    }
    let num: f64 = recon.data().iter().zip(model.data()).map(|(a, b)| (a - b).norm()).sum();
    Ok(num / den)
}

/// Scale-fitted L1 discrepancy between Fourier magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RFactor {
    pub r_factor: f64,
    pub zeta: f64,
}

/// `ζ` minimizes `Σ ||Z_e| − ζ|Z_r||` (a weighted median of `|Z_e|/|Z_r|`
/// with weights `|Z_r|`); `R_F` is that minimum over `Σ|Z_e|`.
pub fn r_factor(measured_mag: &[f64], recon_mag: &[f64]) -> Result<RFactor> {
    if measured_mag.len() != recon_mag.len() {
        return Err(PhaseError::ShapeMismatch(format!(
            "{} measured and {} reconstructed magnitudes",
            measured_mag.len(),
            recon_mag.len()
        )));
    }
    if measured_mag.iter().chain(recon_mag).any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(invalid("magnitudes", "must be finite and nonnegative"));
    }
    let total: f64 = measured_mag.iter().sum();
    if total == 0.0 {
        return Err(PhaseError::ZeroNorm("measured magnitudes"));
    }
    let mut ratios: Vec<(f64, f64)> = measured_mag
        .iter()
        .zip(recon_mag)
        .filter(|(_, &r)| r > 0.0)
        .map(|(&e, &r)| (e / r, r))
        .collect();
    ratios.sort_by(|a, b| a.0.total_cmp(&b.0));
    let weight: f64 = ratios.iter().map(|r| r.1).sum();
    let mut zeta = 1.0;
    let mut acc = 0.0;
    for &(ratio, w) in &ratios {
        acc += w;
        if acc >= 0.5 * weight {
            zeta = ratio;
            break;
        }
    }
    let misfit: f64 = measured_mag
        .iter()
        .zip(recon_mag)
        .map(|(&e, &r)| (e - zeta * r).abs())
        .sum();
    Ok(RFactor {
        r_factor: misfit / total,
        zeta,
    })
}

/// `|mean_i Z_i[k]| / measured[k]`, zero where nothing was measured and
/// clipped to `1 + 1e-9`. Reconstructions must be aligned to each other.
pub fn prtf(ensemble: &[Signal], measured_mag: &[f64]) -> Result<Vec<f64>> {
    if ensemble.len() < 2 {
        return Err(invalid("ensemble", "needs at least two reconstructions"));
    }
    let shape = ensemble[0].shape().to_vec();
    if measured_mag.len() != ensemble[0].len() {
        return Err(PhaseError::ShapeMismatch(format!(
            "{} magnitudes for reconstructions of {} samples",
            measured_mag.len(),
            ensemble[0].len()
        )));
    }
    for z in &ensemble[1..] {
        same_shape(z, &ensemble[0])?;
        if ensemble[0].norm() > 0.0 {
            let r = align_to_reference(z, &ensemble[0])?.residual;
            if r > 0.5 {
                warn!("ensemble member differs from the first by aligned residual {r:.3}; PRTF is not meaningful");
            }
        }
    }
    let mut plan = FftNd::new(&shape);
    let mut mean = vec![Complex64::new(0.0, 0.0); measured_mag.len()];
    for z in ensemble {
        let mut spec = z.data().to_vec();
        plan.forward(&mut spec);
        mean.iter_mut().zip(&spec).for_each(|(m, s)| *m += s);
    }
    let count = ensemble.len() as f64;
    Ok(mean
        .iter()
        .zip(measured_mag)
        .map(|(m, &e)| if e > 0.0 { (m.norm() / count / e).min(1.0 + 1e-9) } else { 0.0 })
        .collect())
}

/// Flat summary of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Real-space error against the truth after alignment.
    #[serde(rename = "E")]
    pub e: Option<f64>,
    #[serde(rename = "R_F")]
    pub r_factor: f64,
    pub zeta: f64,
    pub aligned_residual: Option<f64>,
    /// Fourier-magnitude misfit over valid entries.
    pub fourier_error: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub prtf: Vec<f64>,
}

impl MetricReport {
    /// Metrics of `recon` (on the observation grid) against `obs` and,
    /// when given, the truth (on the same grid).
    pub fn compute(recon: &Signal, obs: &Observation, truth: Option<&Signal>) -> Result<Self> {
        if recon.shape() != obs.shape() {
            return Err(PhaseError::ShapeMismatch("reconstruction must live on the observation grid".into()));
        }
        let mut spec = recon.data().to_vec();
        FftNd::new(obs.shape()).forward(&mut spec);
        let measured = obs.magnitudes();
        let (mut m, mut r) = (Vec::new(), Vec::new());
        let mut fourier_error = 0.0;
        for ((s, &e), &ok) in spec.iter().zip(&measured).zip(obs.valid()) {
            if ok {
                m.push(e);
                r.push(s.norm());
                fourier_error += (s.norm() - e).powi(2);
            }
        }
        let rf = r_factor(&m, &r)?;
        let (e, aligned_residual) = match truth {
            Some(t) => {
                let a = align_to_reference(recon, t)?;
                (Some(recovery_error_e(&a.aligned, t)?), Some(a.residual))
            }
            None => (None, None),
        };
        Ok(Self {
            e,
            r_factor: rf.r_factor,
            zeta: rf.zeta,
            aligned_residual,
            fourier_error,
            prtf: Vec::new(),
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }
}

/// PRTF as `k,prtf` rows (flat frequency index).
pub fn write_prtf_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "prtf"])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::altproj::random_phases;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn recovery_error_examples() {
        let z = Signal::from_vec(vec![c(1.0), Complex64::new(0.0, -2.0), c(3.0)]).unwrap();
        assert_eq!(recovery_error_e(&z, &z).unwrap(), 0.0);
        let zero = Signal::zeros(&[3]).unwrap();
        assert_eq!(recovery_error_e(&zero, &z).unwrap(), 1.0);
        let mut bumped = z.data().to_vec();
        bumped[1] += c(0.3);
        let bumped = Signal::from_vec(bumped).unwrap();
        assert!((recovery_error_e(&bumped, &z).unwrap() - 0.3 / 6.0).abs() < 1e-15);
        assert!(recovery_error_e(&z, &zero).is_err());
    }

    #[test]
    fn r_factor_examples() {
        let m = [1.0, 2.0, 0.5, 4.0];
        assert_eq!(r_factor(&m, &m).unwrap(), RFactor { r_factor: 0.0, zeta: 1.0 });
        let doubled: Vec<f64> = m.iter().map(|v| 2.0 * v).collect();
        assert_eq!(r_factor(&m, &doubled).unwrap(), RFactor { r_factor: 0.0, zeta: 0.5 });
        assert!(r_factor(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn r_factor_beats_scale_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let m: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..3.0)).collect();
            let r: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..3.0)).collect();
            let got = r_factor(&m, &r).unwrap().r_factor;
            let total: f64 = m.iter().sum();
            for zeta in [0.5, 1.0, 2.0] {
                let at: f64 = m.iter().zip(&r).map(|(e, x)| (e - zeta * x).abs()).sum::<f64>() / total;
                assert!(got <= at + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn r_factor_scale_equivariance(
            pairs in proptest::collection::vec((0.0f64..5.0, 0.01f64..5.0), 1..40),
            scale in 0.01f64..100.0,
        ) {
            let (m, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(m.iter().sum::<f64>() > 0.0);
            let base = r_factor(&m, &r).unwrap();
            let scaled: Vec<f64> = r.iter().map(|v| v * scale).collect();
            let got = r_factor(&m, &scaled).unwrap();
            prop_assert!((got.zeta * scale - base.zeta).abs() <= 1e-9 * base.zeta.max(1.0));
            prop_assert!((got.r_factor - base.r_factor).abs() <= 1e-9);
        }
    }

    fn from_spectrum(spec: &[Complex64]) -> Signal {
        let mut z = spec.to_vec();
        FftNd::new(&[spec.len()]).inverse(&mut z);
        Signal::new(&[spec.len()], z).unwrap()
    }

    #[test]
    fn prtf_of_identical_copies_is_one() {
        let x = Signal::from_vec(vec![c(1.0), c(-0.5), Complex64::new(0.2, 0.7), c(0.0)]).unwrap();
        let mut spec = x.data().to_vec();
        FftNd::new(&[4]).forward(&mut spec);
        let mags: Vec<f64> = spec.iter().map(|v| v.norm()).collect();
        let p = prtf(&[x.clone(), x.clone(), x], &mags).unwrap();
        for (v, m) in p.iter().zip(&mags) {
            if *m > 0.0 {
                assert!((v - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn prtf_of_opposite_copies_vanishes() {
        let x = Signal::from_vec(vec![c(1.0), c(2.0), c(0.5)]).unwrap();
        let neg = x.scaled(c(-1.0));
        let p = prtf(&[x, neg], &[1.0, 1.0, 1.0]).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));
        assert!(prtf(&[Signal::zeros(&[3]).unwrap()], &[1.0; 3]).is_err());
    }

    #[test]
    fn prtf_of_random_phases_follows_random_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 64;
        let mags: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let ensemble: Vec<Signal> = (0..1000)
            .map(|_| {
                let spec: Vec<Complex64> = random_phases(&mut rng, n).iter().zip(&mags).map(|(p, m)| p * m).collect();
                from_spectrum(&spec)
            })
            .collect();
        let mut p = prtf(&ensemble, &mags).unwrap();
        p.sort_by(f64::total_cmp);
        let median = p[n / 2];
        // Rayleigh median sqrt(ln 4 / 1000) ≈ 0.026.
        assert!(median > 0.015 && median < 0.045, "{median}");
    }

    #[test]
    fn report_of_exact_reconstruction() {
        let x = Signal::from_real(&[8], &[1.0, 2.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let obs = crate::forward::intensity(&x, &crate::forward::MeasurementModel::oversampled_fourier(&[8])).unwrap();
        let rep = MetricReport::compute(&x, &obs, Some(&x)).unwrap();
        assert!(rep.r_factor < 1e-12 && rep.e.unwrap() < 1e-12);
        assert!((rep.zeta - 1.0).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        rep.write_json(dir.path().join("m.json")).unwrap();
        let back: MetricReport =
            serde_json::from_reader(File::open(dir.path().join("m.json")).unwrap()).unwrap();
        assert_eq!(back, rep);
        write_prtf_csv(dir.path().join("p.csv"), &[1.0, 0.5]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
        assert_eq!(text, "k,prtf\n0,1\n1,0.5\n");
    }
}
