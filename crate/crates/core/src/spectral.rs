//! Fast solver for `(μ - Σ_k w_k ∂_k²) v = f` with the discrete Dirichlet
//! Laplacian, diagonalized by the type-I discrete sine transform.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

/// Inverse of `μ - Σ_k w_k Δ_k` on a grid.
pub struct SpectralPreconditioner {
    grid: Grid,
    plans: Vec<Arc<dyn Fft<f64>>>,
    eig: Vec<Vec<f64>>,
    mu: f64,
    weights: Vec<f64>,
}

impl std::fmt::Debug for SpectralPreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPreconditioner")
            .field("mu", &self.mu)
            .field("weights", &self.weights)
            .finish()
    }
}

impl SpectralPreconditioner {
    /// `weights[k]` multiplies `-∂_k²`; all weights must be nonnegative and
    /// `μ > 0`.
    pub fn new(grid: &Grid, mu: f64, weights: &[f64]) -> Self {
        assert!(mu > 0.0);
        assert_eq!(weights.len(), grid.dim());
        let mut planner = FftPlanner::new();
        let plans = grid.sizes().iter().map(|&n| planner.plan_fft_forward(2 * (n + 1))).collect();
        let eig = grid
            .sizes()
            .iter()
            .zip(grid.spacing())
            .map(|(&n, &h)| {
                (1..=n)
                    .map(|k| (2.0 - 2.0 * (std::f64::consts::PI * k as f64 / (n + 1) as f64).cos()) / (h * h))
                    .collect()
            })
            .collect();
        Self { grid: grid.clone(), plans, eig, mu, weights: weights.to_vec() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Replaces `values` by the solution of the shifted Poisson problem.
    pub fn apply(&self, values: &mut [Complex64]) {
        assert_eq!(values.len(), self.grid.len());
        for axis in 0..self.grid.dim() {
            self.dst_axis(values, axis);
        }
        let g = &self.grid;
        let d = g.dim();
        let norm: f64 = g.sizes().iter().map(|&n| 2.0 / (n + 1) as f64).product();
        let sl = g.slab_len();
        values.par_chunks_mut(sl).enumerate().for_each(|(i0, chunk)| {
            let mut idx = vec![0usize; d];
            for (off, v) in chunk.iter_mut().enumerate() {
                g.unflatten(i0 * sl + off, &mut idx);
                let mut s = self.mu;
                for k in 0..d {
                    s += self.weights[k] * self.eig[k][idx[k]];
                }
                *v *= norm / s;
            }
        });
        for axis in 0..self.grid.dim() {
            self.dst_axis(values, axis);
        }
    }

    /// Unnormalized DST-I along one axis: `X_k = Σ_j x_j sin(π(j+1)(k+1)/(n+1))`.
    fn dst_axis(&self, values: &mut [Complex64], axis: usize) {
        let n = self.grid.sizes()[axis];
        let stride = self.grid.strides()[axis];
        let block = n * stride;
        let lines = values.len() / n;
        let plan = &self.plans[axis];
        let m = 2 * (n + 1);
        let read = &*values;
        let out: Vec<Vec<Complex64>> = (0..lines)
            .into_par_iter()
            .map_init(
                || (vec![Complex64::new(0.0, 0.0); m], vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()]),
                |(buf, scratch), line| {
                    let base = (line / stride) * block + line % stride;
                    buf[0] = Complex64::new(0.0, 0.0);
                    buf[n + 1] = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        let x = read[base + j * stride];
                        buf[j + 1] = x;
                        buf[m - 1 - j] = -x;
                    }
                    plan.process_with_scratch(buf, scratch);
                    // Y_k = -2i X_k.
                    (1..=n).map(|k| buf[k] * Complex64::new(0.0, 0.5)).collect()
                },
            )
            .collect();
        for (line, col) in out.into_iter().enumerate() {
            let base = (line / stride) * block + line % stride;
            for (j, x) in col.into_iter().enumerate() {
                values[base + j * stride] = x;
            }
        }
    }
}
