//! Support refinement from the smoothed modulus of the current estimate.

use crate::error::{invalid, PhaseError, Result};
use crate::signal::{Signal, SupportMask};

/// Normalized Gaussian taps over `[-r, r]`, `r = ceil(4σ)`.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let r = (4.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Circular separable convolution along every axis.
pub(crate) fn gaussian_smooth(values: &[f64], shape: &[usize], sigma: f64) -> Vec<f64> {
    let taps = gaussian_taps(sigma);
    let half = (taps.len() / 2) as isize;
    let mut cur = values.to_vec();
    let mut stride = 1;
    for axis in (0..shape.len()).rev() {
        let n = shape[axis];
        let mut next = vec![0.0; cur.len()];
        for (flat, out) in next.iter_mut().enumerate() {
            let pos = (flat / stride) % n;
            let base = flat - pos * stride;
            *out = taps
                .iter()
                .enumerate()
                .map(|(t, w)| {
                    let p = (pos as isize + t as isize - half).rem_euclid(n as isize) as usize;
                    w * cur[base + p * stride]
                })
                .sum();
        }
        cur = next;
        stride *= n;
    }
    cur
}

/// Samples where the Gaussian-smoothed `|current|` reaches
/// `threshold_frac` of its maximum. The maximum is always included.
pub fn shrinkwrap_update(current: &Signal, smoothing_width: f64, threshold_frac: f64) -> Result<SupportMask> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(invalid("threshold_frac", "must lie in (0, 1)"));
    }
    if !(smoothing_width >= 0.0 && smoothing_width.is_finite()) {
        return Err(invalid("smoothing_width", "must be nonnegative"));
    }
    let modulus = current.magnitudes();
    if modulus.iter().all(|&m| m == 0.0) {
        return Err(PhaseError::ZeroNorm("shrinkwrap input"));
    }
    let smooth = gaussian_smooth(&modulus, current.shape(), smoothing_width);
    let (argmax, max) = smooth
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let mut mask: Vec<bool> = smooth.iter().map(|&v| v >= threshold_frac * max).collect();
    mask[argmax] = true;
    SupportMask::new(current.shape(), mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(n: usize, width: f64) -> Signal {
        let c = (n / 2) as f64;
        let v: Vec<f64> = (0..n * n)
            .map(|i| {
                let (r, q) = ((i / n) as f64 - c, (i % n) as f64 - c);
                (-(r * r + q * q) / (2.0 * width * width)).exp()
            })
            .collect();
        Signal::from_real(&[n, n], &v).unwrap()
    }

    #[test]
    fn blob_half_max_region_is_kept() {
        let (n, w, sigma) = (48, 3.0, 1.5);
        let mask = shrinkwrap_update(&blob(n, w), sigma, 0.2).unwrap();
        // Smoothing a Gaussian of width w by σ gives width sqrt(w² + σ²);
        // the 0.2 level sits at that width × sqrt(2 ln 5).
        let outer = (w * w + sigma * sigma).sqrt() * (2.0 * 5f64.ln()).sqrt();
        let half_max = w * (2.0 * 2f64.ln()).sqrt();
        let c = (n / 2) as f64;
        for i in 0..n * n {
            let (r, q) = ((i / n) as f64 - c, (i % n) as f64 - c);
            let rho = (r * r + q * q).sqrt();
            if rho <= half_max {
                assert!(mask.contains(i));
            }
            if rho > outer + 0.5 {
                assert!(!mask.contains(i));
            }
        }
    }

    #[test]
    fn single_pixel_survives() {
        let s = Signal::delta(&[9, 9], &[4, 6]).unwrap();
        let m = shrinkwrap_update(&s, 2.0, 0.9).unwrap();
        assert!(m.contains(4 * 9 + 6));
    }

    #[test]
    fn uniform_image_keeps_everything() {
        let s = Signal::from_real(&[6, 5], &[0.7; 30]).unwrap();
        assert_eq!(shrinkwrap_update(&s, 1.0, 0.5).unwrap().count(), 30);
    }

    #[test]
    fn rejects_bad_input() {
        let z = Signal::zeros(&[4, 4]).unwrap();
        assert!(shrinkwrap_update(&z, 1.0, 0.2).is_err());
        let s = Signal::delta(&[4], &[0]).unwrap();
        assert!(shrinkwrap_update(&s, 1.0, 1.0).is_err());
    }

    #[test]
    fn smoothing_preserves_mass() {
        let v: Vec<f64> = (0..35).map(|i| (i % 7) as f64).collect();
        let out = gaussian_smooth(&v, &[5, 7], 1.3);
        let (a, b): (f64, f64) = (v.iter().sum(), out.iter().sum());
        assert!((a - b).abs() < 1e-10);
    }
}
