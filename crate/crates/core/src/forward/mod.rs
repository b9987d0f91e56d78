//! Forward measurement models and measurement corruption.
//!
//! Noise-free intensity is normalized so that it equals `|X|²` exactly; no
//! proportionality constant is carried. Detector pixels are point samples.

mod propagation;

pub use propagation::{propagate, transfer_function, PropagationConfig};

use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, PhaseError, Result};
use crate::fft::{signed_index, FftNd};
use crate::signal::{for_each_index, ravel, Signal};

/// Forward operator mapping a signal to nonnegative intensities.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementModel {
    /// `|X_M[k]|²` with `M` points per axis (`M ≥ N`).
    OversampledFourier { m: Vec<usize> },
    /// `y_k = |⟨a_k, x⟩|²` for the (row-major flattened) signal.
    GeneralLinear { vectors: Vec<Vec<Complex64>> },
    /// Oversampled Fourier intensity with frequencies above `cutoff`
    /// (cycles per sample, `0 < cutoff ≤ 0.5`) removed.
    LowPassFourier { m: Vec<usize>, cutoff: f64 },
    /// Intensity of the propagated 2D field at each distance, concatenated.
    MultiPlane {
        distances: Vec<f64>,
        wavelength: f64,
        spacing: f64,
    },
}

impl MeasurementModel {
    pub fn oversampled_fourier(m: &[usize]) -> Self {
        Self::OversampledFourier { m: m.to_vec() }
    }

    /// Check the model's own invariants and compatibility with a signal shape.
    pub fn validate(&self, signal_shape: &[usize]) -> Result<()> {
        let grid_ok = |m: &[usize]| -> Result<()> {
            if m.len() != signal_shape.len() {
                return Err(PhaseError::ShapeMismatch(format!(
                    "grid {m:?} vs signal {signal_shape:?}"
                )));
            }
            if m.iter().zip(signal_shape).any(|(m, n)| m < n) {
                return Err(invalid("m", format!("grid {m:?} smaller than signal {signal_shape:?}")));
            }
            Ok(())
        };
        match self {
            Self::OversampledFourier { m } => grid_ok(m),
            Self::LowPassFourier { m, cutoff } => {
                if !(*cutoff > 0.0 && *cutoff <= 0.5) {
                    return Err(invalid("cutoff", "must lie in (0, 0.5]"));
                }
                grid_ok(m)
            }
            Self::GeneralLinear { vectors } => {
                let n: usize = signal_shape.iter().product();
                if vectors.is_empty() {
                    return Err(invalid("vectors", "need at least one measurement vector"));
                }
                if let Some(v) = vectors.iter().find(|v| v.len() != n) {
                    return Err(PhaseError::ShapeMismatch(format!(
                        "measurement vector of length {} for a signal of {n} samples",
                        v.len()
                    )));
                }
                Ok(())
            }
            Self::MultiPlane {
                distances,
                wavelength,
                spacing,
            } => {
                if distances.is_empty() {
                    return Err(invalid("distances", "need at least one plane"));
                }
                if signal_shape.len() != 2 {
                    return Err(PhaseError::ShapeMismatch("multi-plane needs a 2D signal".into()));
                }
                for &z in distances {
                    PropagationConfig {
                        wavelength: *wavelength,
                        distance: z,
                        spacing: *spacing,
                        object_radius: None,
                    }
                    .validate()?;
                }
                Ok(())
            }
        }
    }

    /// Shape of the measurement vector produced for a signal of `signal_shape`.
    pub fn output_shape(&self, signal_shape: &[usize]) -> Vec<usize> {
        match self {
            Self::OversampledFourier { m } | Self::LowPassFourier { m, .. } => m.clone(),
            Self::GeneralLinear { vectors } => vec![vectors.len()],
            Self::MultiPlane { distances, .. } => {
                let mut s = vec![distances.len()];
                s.extend_from_slice(signal_shape);
                s
            }
        }
    }

    /// Explicit measurement vectors `a_k` such that `y_k = |a_k^* x|²`.
    ///
    /// Fourier rows use `a_k[n] = e^{+j2πkn/M}` so that `a_k^* x = X[k]`.
    pub fn measurement_vectors(&self, signal_shape: &[usize]) -> Result<Vec<Vec<Complex64>>> {
        self.validate(signal_shape)?;
        match self {
            Self::GeneralLinear { vectors } => Ok(vectors.clone()),
            Self::OversampledFourier { m } => {
                let mut out = Vec::with_capacity(m.iter().product());
                for_each_index(m, |_, k| {
                    let mut a = Vec::with_capacity(signal_shape.iter().product());
                    for_each_index(signal_shape, |_, n| {
                        let phase: f64 = k
                            .iter()
                            .zip(n)
                            .zip(m)
                            .map(|((&k, &n), &m)| (k * n % m) as f64 / m as f64)
                            .sum();
                        a.push(Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase));
                    });
                    out.push(a);
                });
                Ok(out)
            }
            _ => Err(invalid(
                "model",
                "only Fourier and general linear models have explicit measurement vectors",
            )),
        }
    }
}

/// Noise applied to an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMeta {
    None,
    /// Poisson counting noise with the given expected total photon count.
    Poisson { photon_budget: f64 },
}

/// Nonnegative intensity measurements with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    y: Vec<f64>,
    shape: Vec<usize>,
    valid: Vec<bool>,
    noise: NoiseMeta,
}

impl Observation {
    pub fn new(shape: &[usize], y: Vec<f64>, valid: Vec<bool>, noise: NoiseMeta) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || len == 0 || y.len() != len || valid.len() != len {
            return Err(PhaseError::ShapeMismatch(format!(
                "observation shape {shape:?} with {} values and {} mask entries",
                y.len(),
                valid.len()
            )));
        }
        if let Some(i) = y
            .iter()
            .zip(&valid)
            .position(|(v, ok)| !v.is_finite() || (*ok && *v < 0.0))
        {
            return Err(invalid("y", format!("entry {i} is negative or non-finite")));
        }
        Ok(Self {
            y,
            shape: shape.to_vec(),
            valid,
            noise,
        })
    }

    /// Noise-free, fully valid observation.
    pub fn noise_free(shape: &[usize], y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(shape, y, vec![true; n], NoiseMeta::None)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn noise(&self) -> NoiseMeta {
        self.noise
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `sqrt(y)`, clamping any tiny negative noise to zero.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.y.iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// `M`-point DFT per axis of a zero-padded signal.
pub fn oversampled_dft(x: &Signal, m: &[usize]) -> Result<Signal> {
    if m.len() != x.ndim() {
        return Err(PhaseError::ShapeMismatch(format!(
            "grid {m:?} for a {}D signal",
            x.ndim()
        )));
    }
    if m.iter().zip(x.shape()).any(|(m, n)| m < n) {
        return Err(invalid("m", format!("M = {m:?} is smaller than N = {:?}", x.shape())));
    }
    let mut data = x.zero_pad(m)?.into_data();
    FftNd::new(m).forward(&mut data);
    Ok(Signal::from_parts(m.to_vec(), data))
}

/// `g[m] = Σ_i x̂_i conj(x̂_{i-m})` for `m = -(N-1) … N-1`, returned in that
/// order (index `m + N - 1`).
pub fn autocorrelation(x: &Signal) -> Result<Vec<Complex64>> {
    if x.ndim() != 1 {
        return Err(PhaseError::ShapeMismatch(
            "autocorrelation is defined for 1D signals".into(),
        ));
    }
    let v = x.data();
    let n = v.len() as isize;
    Ok((-(n - 1)..n)
        .map(|lag| {
            (lag.max(0)..n.min(n + lag))
                .map(|i| v[i as usize] * v[(i - lag) as usize].conj())
                .sum()
        })
        .collect())
}

fn lowpass_keep(k: &[usize], m: &[usize], cutoff: f64) -> bool {
    let r2: f64 = k
        .iter()
        .zip(m)
        .map(|(&k, &m)| (signed_index(k, m) as f64 / m as f64).powi(2))
        .sum();
    r2 <= cutoff * cutoff
}

/// Noise-free intensity with a full validity mask.
pub fn intensity(x: &Signal, model: &MeasurementModel) -> Result<Observation> {
    model.validate(x.shape())?;
    let shape = model.output_shape(x.shape());
    let y: Vec<f64> = match model {
        MeasurementModel::OversampledFourier { m } => oversampled_dft(x, m)?
            .data()
            .iter()
            .map(|v| v.norm_sqr())
            .collect(),
        MeasurementModel::LowPassFourier { m, cutoff } => {
            let spec = oversampled_dft(x, m)?;
            let mut y = vec![0.0; spec.len()];
            for_each_index(m, |flat, k| {
                if lowpass_keep(k, m, *cutoff) {
                    y[flat] = spec.data()[flat].norm_sqr();
                }
            });
            y
        }
        MeasurementModel::GeneralLinear { vectors } => vectors
            .iter()
            .map(|a| {
                a.iter()
                    .zip(x.data())
                    .map(|(a, x)| a.conj() * x)
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .collect(),
        MeasurementModel::MultiPlane {
            distances,
            wavelength,
            spacing,
        } => {
            let mut y = Vec::with_capacity(distances.len() * x.len());
            for &z in distances {
                let cfg = PropagationConfig {
                    wavelength: *wavelength,
                    distance: z,
                    spacing: *spacing,
                    object_radius: None,
                };
                y.extend(propagate(x, &cfg)?.data().iter().map(|v| v.norm_sqr()));
            }
            y
        }
    };
    Observation::noise_free(&shape, y)
}

/// Poisson counting noise at a fixed expected photon total.
///
/// Intensities are scaled so that they sum to `photon_budget`, each entry is
/// replaced by a Poisson draw, and the result is scaled back.
pub fn add_poisson_noise(obs: &Observation, photon_budget: f64, seed: u64) -> Result<Observation> {
    if !(photon_budget > 0.0 && photon_budget.is_finite()) {
        return Err(invalid("photon_budget", "must be positive"));
    }
    if obs.noise != NoiseMeta::None {
        return Err(invalid("obs", "input observation is already noisy"));
    }
    if obs.y.iter().any(|&v| v < 0.0) {
        return Err(invalid("obs", "negative intensity entries"));
    }
    let total: f64 = obs.y.iter().sum();
    let mut y = vec![0.0; obs.y.len()];
    if total > 0.0 {
        let scale = photon_budget / total;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (out, &v) in y.iter_mut().zip(&obs.y) {
            let mean = v * scale;
            if mean > 0.0 {
                let draw = Poisson::new(mean)
                    .map_err(|e| invalid("photon_budget", e.to_string()))?
                    .sample(&mut rng);
                *out = draw / scale;
            }
        }
    }
    Observation::new(
        &obs.shape,
        y,
        obs.valid.clone(),
        NoiseMeta::Poisson { photon_budget },
    )
}

/// Flag the square (L∞) region of half-width `radius` around zero frequency
/// as invalid. Values are retained. `radius = 0` means no missing center.
pub fn apply_missing_center(obs: &Observation, radius: usize) -> Result<Observation> {
    if obs.shape.len() > 2 {
        return Err(PhaseError::ShapeMismatch(
            "missing center applies to 1D or 2D Fourier grids".into(),
        ));
    }
    if let Some(&m) = obs.shape.iter().find(|&&m| 2 * radius + 1 > m) {
        return Err(invalid(
            "radius",
            format!("radius {radius} exceeds the half-extent of a {m}-point axis"),
        ));
    }
    let mut out = obs.clone();
    if radius == 0 {
        return Ok(out);
    }
    let r = radius as isize;
    for_each_index(&obs.shape, |flat, k| {
        if k
            .iter()
            .zip(&obs.shape)
            .all(|(&k, &m)| signed_index(k, m).abs() <= r)
        {
            out.valid[flat] = false;
        }
    });
    Ok(out)
}

const INDEX_COLS: [&str; 3] = ["i", "j", "l"];

/// CSV with columns `(index…, y, valid)`.
pub fn write_observation_csv(path: impl AsRef<Path>, obs: &Observation) -> Result<()> {
    if obs.shape.len() > INDEX_COLS.len() {
        return Err(PhaseError::ShapeMismatch("too many dimensions for CSV".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = INDEX_COLS[..obs.shape.len()].to_vec();
    header.extend(["y", "valid"]);
    w.write_record(&header)?;
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(obs.len());
    for_each_index(&obs.shape, |flat, idx| {
        let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        row.push(format!("{:e}", obs.y[flat]));
        row.push(u8::from(obs.valid[flat]).to_string());
        rows.push(row);
    });
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observation_csv(path: impl AsRef<Path>) -> Result<Observation> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let y_col = col("y").ok_or_else(|| PhaseError::Format("missing `y` column".into()))?;
    let valid_col = col("valid");
    let index_cols: Vec<usize> = INDEX_COLS.iter().filter_map(|n| col(n)).collect();
    if index_cols.is_empty() {
        return Err(PhaseError::Format("missing index column `i`".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |c: usize| {
            rec.get(c)
                .map(str::trim)
                .ok_or_else(|| PhaseError::Format("short row".into()))
        };
        let idx = index_cols
            .iter()
            .map(|&c| {
                field(c)?
                    .parse::<usize>()
                    .map_err(|e| PhaseError::Format(format!("bad index: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let y: f64 = field(y_col)?
            .parse()
            .map_err(|e| PhaseError::Format(format!("bad y: {e}")))?;
        let valid = match valid_col {
            Some(c) => !matches!(field(c)?, "0" | "false"),
            None => true,
        };
        rows.push((idx, y, valid));
    }
    if rows.is_empty() {
        return Err(PhaseError::Format("no data rows".into()));
    }
    let shape: Vec<usize> = (0..index_cols.len())
        .map(|a| rows.iter().map(|(i, _, _)| i[a]).max().unwrap() + 1)
        .collect();
    let len = shape.iter().product();
    let (mut y, mut valid) = (vec![0.0; len], vec![false; len]);
    for (idx, v, ok) in rows {
        let flat = ravel(&idx, &shape);
        y[flat] = v;
        valid[flat] = ok;
    }
    Observation::new(&shape, y, valid, NoiseMeta::None)
}

/// Binary form: a `PKSG` record holding `y`, followed by a record holding the
/// validity mask as `1.0`/`0.0`.
pub fn write_observation_bin(path: impl AsRef<Path>, obs: &Observation) -> Result<()> {
    if obs.shape.len() > 2 {
        return Err(PhaseError::ShapeMismatch(
            "binary observations are 1D or 2D".into(),
        ));
    }
    let y = Signal::from_real(&obs.shape, &obs.y)?;
    let mask: Vec<f64> = obs.valid.iter().map(|&v| f64::from(u8::from(v))).collect();
    let mask = Signal::from_real(&obs.shape, &mask)?;
    crate::io::write_signals(path, &[y, mask])
}

pub fn read_observation_bin(path: impl AsRef<Path>) -> Result<Observation> {
    let records = crate::io::read_signals(path)?;
    let y_rec = records
        .first()
        .ok_or_else(|| PhaseError::Format("empty observation file".into()))?;
    let y: Vec<f64> = y_rec.real_parts();
    let valid = match records.get(1) {
        Some(m) if m.shape() == y_rec.shape() => m.data().iter().map(|v| v.re != 0.0).collect(),
        Some(_) => return Err(PhaseError::Format("mask record shape differs from y".into())),
        None => vec![true; y.len()],
    };
    Observation::new(y_rec.shape(), y, valid, NoiseMeta::None)
}
