//! Signal containers and the trivial-ambiguity machinery.
//!
//! All multi-dimensional data is stored row-major. Shifts are circular on the
//! signal's own grid; callers comparing Fourier magnitudes on an `M`-point
//! grid zero-pad to `M` first (see [`Signal::zero_pad`]).
//!
//! Conjugate inversion in 2D is the point reflection through the origin
//! combined with conjugation: `x[n1, n2] -> conj(x[-n1, -n2])`.

use num_complex::Complex64;

use crate::error::{invalid, PhaseError, Result};
use crate::fft::FftNd;

/// Complex 1D or 2D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(PhaseError::ShapeMismatch(format!(
            "signals are 1D or 2D, got {} dimensions",
            shape.len()
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(PhaseError::ShapeMismatch(format!(
            "every dimension must be >= 1, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl Signal {
    pub fn new(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(PhaseError::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(PhaseError::NonFinite(i));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 1D signal from complex values.
    pub fn from_vec(data: Vec<Complex64>) -> Result<Self> {
        let n = data.len();
        Self::new(&[n], data)
    }

    pub fn from_real(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    /// Unit impulse at the given multi-index.
    pub fn delta(shape: &[usize], at: &[usize]) -> Result<Self> {
        let mut s = Self::zeros(shape)?;
        let flat = s.flat_index(at)?;
        s.data[flat] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Crate-internal constructor for values produced by our own arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn flat_index(&self, at: &[usize]) -> Result<usize> {
        if at.len() != self.shape.len() || at.iter().zip(&self.shape).any(|(i, d)| i >= d) {
            return Err(PhaseError::ShapeMismatch(format!(
                "index {at:?} outside shape {:?}",
                self.shape
            )));
        }
        Ok(at.iter().zip(&self.shape).fold(0, |acc, (i, d)| acc * d + i))
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.re).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }

    /// Embed at the origin of a larger grid, filling with zeros.
    pub fn zero_pad(&self, shape: &[usize]) -> Result<Self> {
        if shape.len() != self.ndim() || shape.iter().zip(&self.shape).any(|(m, n)| m < n) {
            return Err(PhaseError::ShapeMismatch(format!(
                "cannot pad {:?} into {shape:?}",
                self.shape
            )));
        }
        let mut out = Self::zeros(shape)?;
        for_each_index(&self.shape, |flat_src, idx| {
            let dst = ravel(idx, shape);
            out.data[dst] = self.data[flat_src];
        });
        Ok(out)
    }

    /// Keep the block at the origin.
    pub fn crop(&self, shape: &[usize]) -> Result<Self> {
        if shape.len() != self.ndim() || shape.iter().zip(&self.shape).any(|(m, n)| m > n) {
            return Err(PhaseError::ShapeMismatch(format!(
                "cannot crop {:?} to {shape:?}",
                self.shape
            )));
        }
        let mut out = Self::zeros(shape)?;
        for_each_index(shape, |flat_dst, idx| {
            out.data[flat_dst] = self.data[ravel(idx, &self.shape)];
        });
        Ok(out)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|v| v * factor).collect())
    }

    /// Euclidean distance to another signal of the same shape.
    pub fn distance(&self, other: &Signal) -> Result<f64> {
        same_shape(self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

pub(crate) fn same_shape(a: &Signal, b: &Signal) -> Result<()> {
    if a.shape != b.shape {
        return Err(PhaseError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(())
}

pub(crate) fn ravel(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, d)| acc * d + i)
}

/// Visit every multi-index of `shape` in row-major order.
pub(crate) fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..total {
        f(flat, &idx);
        for axis in (0..shape.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < shape[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Indicator of where a signal may be nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    shape: Vec<usize>,
    mask: Vec<bool>,
}

impl SupportMask {
    pub fn new(shape: &[usize], mask: Vec<bool>) -> Result<Self> {
        let len = check_shape(shape)?;
        if mask.len() != len {
            return Err(PhaseError::ShapeMismatch(format!(
                "mask shape {shape:?} needs {len} entries, got {}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(invalid("support", "mask has no in-support sample"));
        }
        Ok(Self {
            shape: shape.to_vec(),
            mask,
        })
    }

    pub fn full(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Self::new(shape, vec![true; len])
    }

    /// Support covering the block `[0, n)` of an `m`-grid (per axis).
    pub fn leading_block(grid: &[usize], block: &[usize]) -> Result<Self> {
        let len = check_shape(grid)?;
        if block.len() != grid.len() || block.iter().zip(grid).any(|(b, g)| b > g || *b == 0) {
            return Err(PhaseError::ShapeMismatch(format!(
                "block {block:?} does not fit grid {grid:?}"
            )));
        }
        let mut mask = vec![false; len];
        for_each_index(grid, |flat, idx| {
            mask[flat] = idx.iter().zip(block).all(|(i, b)| i < b);
        });
        Self::new(grid, mask)
    }

    /// Samples whose modulus exceeds `threshold`.
    pub fn from_signal(signal: &Signal, threshold: f64) -> Result<Self> {
        Self::new(
            signal.shape(),
            signal.data().iter().map(|v| v.norm() > threshold).collect(),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.mask[flat]
    }

    /// Grow the support by a Euclidean disc of the given radius (no wrap).
    pub fn dilate(&self, radius: usize) -> Self {
        let r = radius as isize;
        let mut out = self.mask.clone();
        let shape = &self.shape;
        for_each_index(shape, |flat, idx| {
            if !self.mask[flat] {
                return;
            }
            let offsets: Vec<Vec<isize>> = if shape.len() == 1 {
                (-r..=r).map(|d| vec![d]).collect()
            } else {
                let mut v = Vec::new();
                for d0 in -r..=r {
                    for d1 in -r..=r {
                        if d0 * d0 + d1 * d1 <= r * r {
                            v.push(vec![d0, d1]);
                        }
                    }
                }
                v
            };
            for off in offsets {
                let target: Option<Vec<usize>> = idx
                    .iter()
                    .zip(&off)
                    .zip(shape)
                    .map(|((&i, &d), &n)| {
                        let j = i as isize + d;
                        (j >= 0 && j < n as isize).then_some(j as usize)
                    })
                    .collect();
                if let Some(t) = target {
                    out[ravel(&t, shape)] = true;
                }
            }
        });
        Self {
            shape: self.shape.clone(),
            mask: out,
        }
    }

    /// Embed at the origin of a larger grid.
    pub fn zero_pad(&self, shape: &[usize]) -> Result<Self> {
        if shape.len() != self.shape.len() || shape.iter().zip(&self.shape).any(|(m, n)| m < n) {
            return Err(PhaseError::ShapeMismatch(format!(
                "cannot pad mask {:?} into {shape:?}",
                self.shape
            )));
        }
        let mut mask = vec![false; shape.iter().product()];
        for_each_index(&self.shape, |flat, idx| {
            mask[ravel(idx, shape)] = self.mask[flat];
        });
        Self::new(shape, mask)
    }
}

/// Member of the trivial-ambiguity group: `x -> e^{iφ} · shift_s(flip^b(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityTransform {
    pub global_phase: f64,
    pub shift: Vec<isize>,
    pub conjugate_flip: bool,
}

impl AmbiguityTransform {
    pub fn identity(ndim: usize) -> Self {
        Self {
            global_phase: 0.0,
            shift: vec![0; ndim],
            conjugate_flip: false,
        }
    }

    /// The transform undoing `self`. Flip members are involutions.
    pub fn inverse(&self) -> Self {
        if self.conjugate_flip {
            self.clone()
        } else {
            Self {
                global_phase: -self.global_phase,
                shift: self.shift.iter().map(|s| -s).collect(),
                conjugate_flip: false,
            }
        }
    }
}

fn conjugate_flip(x: &Signal) -> Signal {
    let shape = x.shape.clone();
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    let mut src = vec![0usize; shape.len()];
    for_each_index(&shape, |flat, idx| {
        for (axis, (&i, &n)) in idx.iter().zip(&shape).enumerate() {
            src[axis] = (n - i) % n;
        }
        out[flat] = x.data[ravel(&src, &shape)].conj();
    });
    Signal::from_parts(shape, out)
}

fn circular_shift(x: &Signal, shift: &[isize]) -> Signal {
    let shape = x.shape.clone();
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    let mut dst = vec![0usize; shape.len()];
    for_each_index(&shape, |flat, idx| {
        for (axis, ((&i, &n), &s)) in idx.iter().zip(&shape).zip(shift).enumerate() {
            dst[axis] = (i as isize + s).rem_euclid(n as isize) as usize;
        }
        out[ravel(&dst, &shape)] = x.data[flat];
    });
    Signal::from_parts(shape, out)
}

/// Apply a trivial ambiguity on the signal's own (circular) grid.
pub fn apply_ambiguity(x: &Signal, t: &AmbiguityTransform) -> Result<Signal> {
    if t.shift.len() != x.ndim() {
        return Err(PhaseError::ShapeMismatch(format!(
            "shift has {} components for a {}D signal",
            t.shift.len(),
            x.ndim()
        )));
    }
    let flipped = if t.conjugate_flip {
        conjugate_flip(x)
    } else {
        x.clone()
    };
    let shifted = circular_shift(&flipped, &t.shift);
    Ok(shifted.scaled(Complex64::from_polar(1.0, t.global_phase)))
}

/// Result of [`align_to_reference`].
#[derive(Debug, Clone)]
pub struct Alignment {
    pub aligned: Signal,
    pub transform: AmbiguityTransform,
    /// `‖aligned − reference‖₂ / ‖reference‖₂`.
    pub residual: f64,
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for axis in (0..shape.len()).rev() {
        idx[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    idx
}

/// Find the ambiguity-group member of `candidate` closest to `reference`.
///
/// Exhaustive over circular shifts and the conjugate flip; the global phase
/// is solved in closed form for each. Cross-correlations are computed with
/// the FFT and the few best shifts are re-scored directly, so the reported
/// residual has no cancellation error.
pub fn align_to_reference(candidate: &Signal, reference: &Signal) -> Result<Alignment> {
    same_shape(candidate, reference)?;
    let ref_norm = reference.norm();
    if ref_norm == 0.0 {
        return Err(PhaseError::ZeroNorm("reference"));
    }
    let shape = reference.shape.clone();
    let mut plan = FftNd::new(&shape);
    let mut ref_spec = reference.data.clone();
    plan.forward(&mut ref_spec);

    // (|corr|, flip, flat shift)
    let mut scored: Vec<(f64, bool, usize)> = Vec::with_capacity(2 * reference.len());
    for flip in [false, true] {
        let base = if flip {
            conjugate_flip(candidate)
        } else {
            candidate.clone()
        };
        let mut spec = base.data.clone();
        plan.forward(&mut spec);
        for (s, r) in spec.iter_mut().zip(&ref_spec) {
            *s = r * s.conj();
        }
        plan.inverse(&mut spec);
        scored.extend(spec.iter().enumerate().map(|(i, c)| (c.norm(), flip, i)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best: Option<Alignment> = None;
    for &(_, flip, flat) in scored.iter().take(4) {
        let shift: Vec<isize> = unravel(flat, &shape).into_iter().map(|v| v as isize).collect();
        let moved = apply_ambiguity(
            candidate,
            &AmbiguityTransform {
                global_phase: 0.0,
                shift: shift.clone(),
                conjugate_flip: flip,
            },
        )?;
        let inner: Complex64 = moved
            .data
            .iter()
            .zip(&reference.data)
            .map(|(c, r)| c.conj() * r)
            .sum();
        let phase = if inner.norm() > 0.0 { inner.arg() } else { 0.0 };
        let aligned = moved.scaled(Complex64::from_polar(1.0, phase));
        let residual = aligned.distance(reference)? / ref_norm;
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(Alignment {
                aligned,
                transform: AmbiguityTransform {
                    global_phase: phase,
                    shift,
                    conjugate_flip: flip,
                },
                residual,
            });
        }
    }
    Ok(best.expect("at least one alignment candidate"))
}
