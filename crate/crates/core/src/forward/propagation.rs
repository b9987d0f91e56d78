//! Angular-spectrum free-space propagation.
//!
//! The spectrum of the input plane is multiplied by
//! `T(kx, ky, z) = exp(-i z sqrt(k² - kx² - ky²))`, `k = 2π/λ`. Evanescent
//! components (`kx² + ky² > k²`) take the decaying branch
//! `exp(-z sqrt(kx² + ky² - k²))`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, PhaseError, Result};
use crate::fft::{signed_index, FftNd};
use crate::signal::Signal;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    /// Wavelength in meters.
    pub wavelength: f64,
    /// Propagation distance in meters (`0` is the identity).
    pub distance: f64,
    /// Sample pitch of the grid in meters.
    pub spacing: f64,
    /// Object radius in meters, only used for Fresnel-number reporting.
    pub object_radius: Option<f64>,
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(invalid("wavelength", "must be positive"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(invalid("spacing", "must be positive"));
        }
        if !(self.distance >= 0.0 && self.distance.is_finite()) {
            return Err(invalid("distance", "must be nonnegative"));
        }
        if let Some(a) = self.object_radius {
            if !(a > 0.0) {
                return Err(invalid("object_radius", "must be positive"));
            }
        }
        Ok(())
    }

    /// `N_F = a² / (λ z)`; `None` without an object radius or at `z = 0`.
    pub fn fresnel_number(&self) -> Option<f64> {
        let a = self.object_radius?;
        (self.distance > 0.0).then(|| a * a / (self.wavelength * self.distance))
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

/// Transfer function sampled on the FFT grid of `shape`.
pub fn transfer_function(shape: &[usize], cfg: &PropagationConfig) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    if shape.len() != 2 {
        return Err(PhaseError::ShapeMismatch("propagation needs a 2D grid".into()));
    }
    let (rows, cols) = (shape[0], shape[1]);
    let k2 = cfg.wavenumber().powi(2);
    let z = cfg.distance;
    let kx = |i: usize, n: usize| 2.0 * PI * signed_index(i, n) as f64 / (n as f64 * cfg.spacing);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let ky = kx(r, rows);
        for c in 0..cols {
            let kt2 = ky * ky + kx(c, cols).powi(2);
            let t = if kt2 <= k2 {
                Complex64::from_polar(1.0, -z * (k2 - kt2).sqrt())
            } else {
                Complex64::new((-z * (kt2 - k2).sqrt()).exp(), 0.0)
            };
            out.push(t);
        }
    }
    Ok(out)
}

/// Propagate a 2D field by `cfg.distance`.
pub fn propagate(field: &Signal, cfg: &PropagationConfig) -> Result<Signal> {
    cfg.validate()?;
    if field.ndim() != 2 {
        return Err(PhaseError::ShapeMismatch("propagation needs a 2D field".into()));
    }
    if cfg.distance == 0.0 {
        return Ok(field.clone());
    }
    let transfer = transfer_function(field.shape(), cfg)?;
    let mut plan = FftNd::new(field.shape());
    let mut spec = field.data().to_vec();
    plan.forward(&mut spec);
    for (s, t) in spec.iter_mut().zip(&transfer) {
        *s *= t;
    }
    plan.inverse(&mut spec);
    Ok(Signal::from_parts(field.shape().to_vec(), spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(z: f64) -> PropagationConfig {
        PropagationConfig {
            wavelength: 0.5e-6,
            distance: z,
            spacing: 1e-6,
            object_radius: Some(4e-6),
        }
    }

    fn test_field() -> Signal {
        let n = 32;
        let data = (0..n * n)
            .map(|i| {
                let (r, c) = ((i / n) as f64 - 16.0, (i % n) as f64 - 16.0);
                Complex64::new((-(r * r + c * c) / 18.0).exp(), 0.1 * (r * 0.3).sin())
            })
            .collect();
        Signal::new(&[n, n], data).unwrap()
    }

    #[test]
    fn zero_distance_is_exact_identity() {
        let f = test_field();
        assert_eq!(propagate(&f, &cfg(0.0)).unwrap(), f);
    }

    #[test]
    fn power_conserved_on_propagating_band() {
        // λ = 0.5 µm < 2·spacing keeps every grid wavenumber propagating.
        let f = test_field();
        let out = propagate(&f, &cfg(5e-5)).unwrap();
        assert!((out.norm_sq() - f.norm_sq()).abs() < 1e-9 * f.norm_sq());
    }

    #[test]
    fn evanescent_components_decay() {
        let c = PropagationConfig {
            wavelength: 4e-6,
            distance: 1e-5,
            spacing: 1e-6,
            object_radius: None,
        };
        let t = transfer_function(&[16, 16], &c).unwrap();
        // Highest grid frequency: kx = π/dx > k = 2π/λ.
        let corner = t[8 * 16 + 8];
        assert!(corner.im == 0.0 && corner.re < 1.0 && corner.re > 0.0);
        assert!((t[0].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn propagation_composes() {
        let f = test_field();
        let once = propagate(&f, &cfg(3e-5)).unwrap();
        let twice = propagate(&propagate(&f, &cfg(1e-5)).unwrap(), &cfg(2e-5)).unwrap();
        assert!(once.distance(&twice).unwrap() < 1e-9 * f.norm());
    }

    #[test]
    fn rejects_bad_config() {
        let f = test_field();
        let mut c = cfg(1e-5);
        c.wavelength = 0.0;
        assert!(propagate(&f, &c).is_err());
        let mut c = cfg(1e-5);
        c.spacing = -1.0;
        assert!(propagate(&f, &c).is_err());
        assert!(propagate(&Signal::zeros(&[8]).unwrap(), &cfg(1e-5)).is_err());
    }

    #[test]
    fn fresnel_number_is_derived() {
        let c = cfg(1e-3);
        let nf = c.fresnel_number().unwrap();
        assert!((nf - (4e-6f64).powi(2) / (0.5e-6 * 1e-3)).abs() < 1e-15);
        assert!(cfg(0.0).fresnel_number().is_none());
    }
}
