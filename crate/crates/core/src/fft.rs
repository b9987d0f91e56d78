//! Row-major N-dimensional FFT built on `rustfft`.
//!
//! Forward transforms are unnormalized (`X[k] = Σ x[n] e^{-j2πkn/M}`), the
//! inverse carries the `1/len` factor, so `inverse(forward(x)) == x`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse transforms for a fixed 1D or 2D shape.
pub struct FftNd {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    scratch: Vec<Complex64>,
    line: Vec<Complex64>,
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse: Vec<_> = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let scratch_len = forward
            .iter()
            .chain(inverse.iter())
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let max_dim = shape.iter().copied().max().unwrap_or(0);
        Self {
            shape: shape.to_vec(),
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            line: vec![Complex64::new(0.0, 0.0); max_dim],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.run(data, true);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&mut self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.len(), "FFT buffer length does not match plan");
        let plans = if inverse { &self.inverse } else { &self.forward };
        match self.shape.len() {
            1 => plans[0].process_with_scratch(data, &mut self.scratch),
            2 => {
                let (rows, cols) = (self.shape[0], self.shape[1]);
                for row in data.chunks_exact_mut(cols) {
                    plans[1].process_with_scratch(row, &mut self.scratch);
                }
                let line = &mut self.line[..rows];
                for c in 0..cols {
                    for r in 0..rows {
                        line[r] = data[r * cols + c];
                    }
                    plans[0].process_with_scratch(line, &mut self.scratch);
                    for r in 0..rows {
                        data[r * cols + c] = line[r];
                    }
                }
            }
            d => panic!("unsupported FFT dimensionality {d}"),
        }
    }
}

/// Signed frequency index of bin `k` on an `m`-point grid (`k` for `k < m/2`,
/// `k - m` above).
pub fn signed_index(k: usize, m: usize) -> isize {
    if 2 * k < m {
        k as isize
    } else {
        k as isize - m as isize
    }
}
