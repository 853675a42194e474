#![allow(dead_code)]

use nlsw::{ComplexField, Grid};
use num_complex::Complex64;
use rand::Rng;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Random sub-box `∏[c_k - r_k, c_k + r_k]` at least two cells inside the
/// grid.
#[derive(Clone, Debug)]
pub struct Envelope {
    centre: Vec<f64>,
    radius: Vec<f64>,
}

impl Envelope {
    pub fn random(grid: &Grid, rng: &mut impl Rng) -> Self {
        let d = grid.dim();
        let mut centre = vec![0.0; d];
        let mut radius = vec![0.0; d];
        for a in 0..d {
            let w = grid.half_width(a) - 2.0 * grid.spacing()[a];
            radius[a] = rng.gen_range(0.4..0.7) * w;
            centre[a] = rng.gen_range(-(w - radius[a])..=(w - radius[a]));
        }
        Self { centre, radius }
    }

    /// Product of `(1 - t²)⁴` profiles over the sub-box times a random plane
    /// wave: smooth enough for second-order stencils and exactly zero outside
    /// the sub-box, with `|u| ≤ amp`.
    pub fn field(&self, grid: &Grid, rng: &mut impl Rng, amp: f64) -> ComplexField {
        let d = grid.dim();
        let k: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.2..1.2)).collect();
        let a0 = Complex64::from_polar(amp * rng.gen_range(0.5..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
        let (centre, radius) = (&self.centre, &self.radius);
        ComplexField::sample(grid.clone(), move |x| {
            let mut env = 1.0;
            let mut phase = 0.0;
            for a in 0..d {
                let t = (x[a] - centre[a]) / radius[a];
                if t.abs() >= 1.0 {
                    return Complex64::new(0.0, 0.0);
                }
                env *= (1.0 - t * t).powi(4);
                phase += k[a] * x[a];
            }
            a0 * env * Complex64::from_polar(1.0, phase)
        })
    }
}

pub fn compact_field(grid: &Grid, rng: &mut impl Rng, amp: f64) -> ComplexField {
    Envelope::random(grid, rng).field(grid, rng, amp)
}

/// Samples `f(x₁/λ, x'/σ)` on `grid`.
pub fn resample(grid: &Grid, f: impl Fn(&[f64]) -> Complex64 + Sync, lambda: f64, sigma: f64) -> ComplexField {
    ComplexField::sample(grid.clone(), |x| {
        let mut y = x.to_vec();
        y[0] /= lambda;
        for v in &mut y[1..] {
            *v /= sigma;
        }
        f(&y)
    })
}

/// Grid with `x₁` half-width `w1` and transverse half-width `wp`.
pub fn box_grid(dim: usize, n: usize, w1: f64, wp: f64) -> Grid {
    let mut h = vec![2.0 * wp / (n - 1) as f64; dim];
    h[0] = 2.0 * w1 / (n - 1) as f64;
    Grid::new(vec![n; dim], h).unwrap()
}
