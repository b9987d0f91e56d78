//! Synthetic ground-truth generators.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::greedy::{AtomMeta, Dictionary};
use crate::signal::Signal;

/// `k` nonzeros at uniformly drawn locations with values uniform on
/// `[-4, -3] ∪ [3, 4]`.
pub fn gen_sparse_vector(n: usize, k: usize, seed: u64) -> Result<Signal> {
    if k > n || n == 0 {
        return Err(invalid("k", format!("must not exceed N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n];
    for i in sample(&mut rng, n, k) {
        let magnitude = rng.random_range(3.0..=4.0);
        values[i] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
    }
    Signal::from_real(&[n], &values)
}

/// Geometry of a circle-dictionary image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircleImageParams {
    /// Circle centers per axis.
    pub grid_points: usize,
    pub image_size: usize,
    pub circle_diameter: f64,
    /// Active circles.
    pub sparsity: usize,
}

impl Default for CircleImageParams {
    fn default() -> Self {
        Self {
            grid_points: 15,
            image_size: 195,
            circle_diameter: 13.0,
            sparsity: 15,
        }
    }
}

/// A sum of `sparsity` disks chosen from a `grid_points²` lattice of
/// non-overlapping disks, with coefficients uniform on `[1, 2]`.
pub fn gen_circle_image(params: &CircleImageParams, seed: u64) -> Result<(Signal, Dictionary, Vec<f64>)> {
    let CircleImageParams {
        grid_points,
        image_size,
        circle_diameter,
        sparsity,
    } = *params;
    if grid_points == 0 || image_size == 0 {
        return Err(invalid("grid_points", "grid and image must be nonempty"));
    }
    let pitch = image_size as f64 / grid_points as f64;
    if !(circle_diameter > 0.0 && circle_diameter <= pitch) {
        return Err(invalid(
            "circle_diameter",
            format!("{circle_diameter} does not fit the lattice pitch {pitch:.3}"),
        ));
    }
    let atoms = grid_points * grid_points;
    if sparsity > atoms {
        return Err(invalid("sparsity", format!("exceeds the {atoms} atoms")));
    }
    let pixels = image_size * image_size;
    let radius = circle_diameter / 2.0;
    let mut psi = DMatrix::zeros(pixels, atoms);
    let mut meta = Vec::with_capacity(atoms);
    for a in 0..grid_points {
        for b in 0..grid_points {
            let j = a * grid_points + b;
            let (cy, cx) = ((a as f64 + 0.5) * pitch, (b as f64 + 0.5) * pitch);
            let (lo_r, hi_r) = ((cy - radius).floor().max(0.0) as usize, ((cy + radius).ceil() as usize).min(image_size));
            let (lo_c, hi_c) = ((cx - radius).floor().max(0.0) as usize, ((cx + radius).ceil() as usize).min(image_size));
            for r in lo_r..hi_r {
                for c in lo_c..hi_c {
                    let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                    if dy * dy + dx * dx <= radius * radius {
                        psi[(r * image_size + c, j)] = 1.0;
                    }
                }
            }
            meta.push(AtomMeta {
                label: format!("circle_{a}_{b}"),
                center: Some(vec![cy, cx]),
                diameter: Some(circle_diameter),
            });
        }
    }
    let dict = Dictionary::with_meta(psi, &[image_size, image_size], meta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut code = vec![0.0; atoms];
    for j in sample(&mut rng, atoms, sparsity) {
        code[j] = rng.random_range(1.0..=2.0);
    }
    let complex: Vec<Complex64> = code.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let image = dict.synthesize(&complex)?;
    Ok((image, dict, code))
}

/// Nonnegative vesicle-like object: a bright elliptical membrane around a
/// dimmer interior with a few dense granules, centered on a `size × size`
/// grid and confined below half the grid per axis.
pub fn gen_phantom(size: usize, seed: u64) -> Result<Signal> {
    if size < 32 {
        return Err(invalid("size", "must be at least 32"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let (ay, ax) = (rng.random_range(0.15..0.22) * s, rng.random_range(0.15..0.22) * s);
    let tilt = rng.random_range(0.0..PI);
    let (cy, cx) = (s / 2.0, s / 2.0);
    let membrane = rng.random_range(0.12..0.2);
    let granules: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(3..7))
        .map(|_| {
            let (t, rho) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..0.6f64).sqrt());
            let width = rng.random_range(0.03..0.07) * s;
            (rho * t.sin(), rho * t.cos(), width, rng.random_range(0.5..1.0))
        })
        .collect();
    let (sin, cos) = tilt.sin_cos();
    let mut values = vec![0.0; size * size];
    for r in 0..size {
        for c in 0..size {
            let (dy, dx) = (r as f64 - cy, c as f64 - cx);
            let (u, v) = ((cos * dy + sin * dx) / ay, (-sin * dy + cos * dx) / ax);
            let rho = (u * u + v * v).sqrt();
            if rho > 1.0 {
                continue;
            }
            let shell = (-((1.0 - rho) / membrane).powi(2)).exp();
            let texture: f64 = granules
                .iter()
                .map(|&(gu, gv, w, amp)| {
                    let d2 = ((u - gu) * ay).powi(2) + ((v - gv) * ax).powi(2);
                    amp * (-d2 / (2.0 * w * w)).exp()
                })
                .sum();
            values[r * size + c] = 0.3 + shell + texture;
        }
    }
    Signal::from_real(&[size, size], &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::omp_solve;

    #[test]
    fn sparse_vector_has_k_banded_values() {
        let x = gen_sparse_vector(64, 5, 3).unwrap();
        let nz: Vec<f64> = x.real_parts().into_iter().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 5);
        assert!(nz.iter().all(|v| (3.0..=4.0).contains(&v.abs())));
        assert!(x.data().iter().all(|v| v.im == 0.0));
        assert_eq!(gen_sparse_vector(64, 5, 3).unwrap(), x);
        assert_eq!(gen_sparse_vector(8, 0, 1).unwrap().norm(), 0.0);
        assert!(gen_sparse_vector(4, 5, 0).is_err());
    }

    #[test]
    fn dense_values_are_uniform_over_both_bands() {
        // Map each band onto [0, 1) and compare with the uniform CDF.
        let mut folded: Vec<f64> = (0..157)
            .flat_map(|seed| gen_sparse_vector(64, 64, seed).unwrap().real_parts())
            .map(|v| if v < 0.0 { (-v - 3.0) / 2.0 } else { 0.5 + (v - 3.0) / 2.0 })
            .collect();
        assert!(folded.len() >= 10_000);
        folded.sort_by(f64::total_cmp);
        let n = folded.len() as f64;
        let ks = folded
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - i as f64 / n).abs().max((v - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "KS distance {ks}");
    }

    #[test]
    fn circle_image_defaults() {
        let (img, dict, code) = gen_circle_image(&CircleImageParams::default(), 4).unwrap();
        assert_eq!(img.shape(), &[195, 195]);
        assert_eq!(dict.len(), 225);
        assert_eq!(code.iter().filter(|v| **v != 0.0).count(), 15);
        // Disjoint atoms: every pixel belongs to at most one.
        let psi = dict.matrix();
        for r in 0..psi.nrows() {
            assert!(psi.row(r).sum() <= 1.0);
        }
    }

    #[test]
    fn circle_image_edge_cases() {
        let p = CircleImageParams {
            grid_points: 5,
            image_size: 40,
            circle_diameter: 7.0,
            sparsity: 0,
        };
        assert_eq!(gen_circle_image(&p, 0).unwrap().0.norm(), 0.0);
        let one = CircleImageParams { sparsity: 1, ..p };
        let (img, dict, code) = gen_circle_image(&one, 9).unwrap();
        let j = code.iter().position(|v| *v != 0.0).unwrap();
        let sparse = omp_solve(&img, &dict, 1).unwrap();
        assert_eq!(sparse.indices, vec![j]);
        assert!((sparse.coefficients[j].re - code[j]).abs() < 1e-12);
        let bad = CircleImageParams { circle_diameter: 9.0, ..p };
        assert!(gen_circle_image(&bad, 0).is_err());
    }

    #[test]
    fn phantom_is_compact_nonnegative_and_deterministic() {
        let mut fractions = 0.0;
        for seed in 0..100 {
            let p = gen_phantom(64, seed).unwrap();
            assert!(p.data().iter().all(|v| v.re >= 0.0 && v.im == 0.0));
            let inside: Vec<usize> = (0..64 * 64).filter(|&i| p.data()[i].re > 0.0).collect();
            let (rows, cols): (Vec<usize>, Vec<usize>) = inside.iter().map(|i| (i / 64, i % 64)).unzip();
            assert!(rows.iter().max().unwrap() - rows.iter().min().unwrap() < 32);
            assert!(cols.iter().max().unwrap() - cols.iter().min().unwrap() < 32);
            fractions += inside.len() as f64 / 4096.0;
        }
        let mean = fractions / 100.0;
        assert!((0.05..=0.25).contains(&mean), "{mean}");
        assert_eq!(gen_phantom(64, 3).unwrap(), gen_phantom(64, 3).unwrap());
        assert!(gen_phantom(16, 0).is_err());
    }
}
