//! Truncated N-dimensional boxes, complex fields on them, finite differences,
//! midpoint quadrature and anisotropic dilations.
//!
//! Layout is row-major with the last axis fastest. Axis 0 is the propagation
//! direction `x₁`. Values outside the box are zero (Dirichlet ghosts), which
//! stands in for `u → 0` at infinity.
//!
//! Reductions are computed per axis-0 slab and then combined with a fixed
//! pairwise tree, so sums do not depend on the number of worker threads.

use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Smallest number of points allowed along any axis.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    sizes: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(sizes: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        if sizes.len() < 3 {
            return Err(Error::InvalidGrid(format!("dimension {} < 3", sizes.len())));
        }
        if sizes.len() != spacing.len() {
            return Err(Error::InvalidGrid("sizes and spacings differ in length".into()));
        }
        if let Some(n) = sizes.iter().find(|&&n| n < MIN_POINTS) {
            return Err(Error::InvalidGrid(format!("axis with {n} < {MIN_POINTS} points")));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidGrid("spacings must be positive and finite".into()));
        }
        let mut strides = vec![1; sizes.len()];
        for k in (0..sizes.len() - 1).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        Ok(Self { sizes, spacing, strides })
    }

    /// `n` points per axis with spacing `h` in every direction.
    pub fn cube(dim: usize, n: usize, h: f64) -> Result<Self> {
        Self::new(vec![n; dim], vec![h; dim])
    }

    /// `n` points per axis, spacing chosen so the outermost nodes sit at
    /// `±half_width`.
    pub fn with_half_width(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("{n} < {MIN_POINTS} points")));
        }
        Self::cube(dim, n, 2.0 * half_width / (n - 1) as f64)
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.strides[0] * self.sizes[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of nodes in one axis-0 slab.
    pub fn slab_len(&self) -> usize {
        self.strides[0]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Physical extent `n h` along `axis`.
    pub fn extent(&self, axis: usize) -> f64 {
        self.sizes[axis] as f64 * self.spacing[axis]
    }

    /// Coordinate of the outermost node along `axis`.
    pub fn half_width(&self, axis: usize) -> f64 {
        0.5 * (self.sizes[axis] - 1) as f64 * self.spacing[axis]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.sizes[axis] - 1) as f64) * self.spacing[axis]
    }

    /// Fills `idx` with the multi-index of flat index `j`.
    pub fn unflatten(&self, mut j: usize, idx: &mut [usize]) {
        for k in 0..self.dim() {
            idx[k] = j / self.strides[k];
            j %= self.strides[k];
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Fills `x` with the coordinates of flat index `j`.
    pub fn point(&self, j: usize, x: &mut [f64]) {
        let mut rem = j;
        for k in 0..self.dim() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            x[k] = self.coord(k, i);
        }
    }

    /// Same grid with the spacing along `axis` replaced.
    pub fn with_axis_spacing(&self, axis: usize, h: f64) -> Result<Self> {
        let mut spacing = self.spacing.clone();
        spacing[axis] = h;
        Self::new(self.sizes.clone(), spacing)
    }

    /// True when flat index `j` lies on the outermost layer of the box.
    pub fn is_boundary(&self, j: usize) -> bool {
        let mut rem = j;
        for k in 0..self.dim() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            if i == 0 || i + 1 == self.sizes[k] {
                return true;
            }
        }
        false
    }

    /// Stable short hash of sizes and spacings (hex).
    pub fn descriptor_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim() as u32).to_le_bytes());
        for &n in &self.sizes {
            hasher.update((n as u64).to_le_bytes());
        }
        for &h in &self.spacing {
            hasher.update(h.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Deterministic parallel sum of `K` quantities: `per_slab(i0)` is the
    /// partial sum over axis-0 slab `i0`.
    pub fn reduce_slabs<const K: usize, F>(&self, per_slab: F) -> [f64; K]
    where
        F: Fn(usize) -> [f64; K] + Sync + Send,
    {
        let parts: Vec<[f64; K]> = (0..self.sizes[0]).into_par_iter().map(per_slab).collect();
        tree_sum(&parts)
    }

    /// Runtime-sized variant of [`reduce_slabs`](Self::reduce_slabs).
    pub fn reduce_slabs_vec<F>(&self, k: usize, per_slab: F) -> Vec<f64>
    where
        F: Fn(usize) -> Vec<f64> + Sync + Send,
    {
        let parts: Vec<Vec<f64>> = (0..self.sizes[0]).into_par_iter().map(per_slab).collect();
        tree_sum_vec(&parts, k)
    }

    /// Midpoint rule: `Σ f × cell volume`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len(), "field does not match grid");
        let sl = self.slab_len();
        let [s] = self.reduce_slabs(|i0| [pairwise(&f[i0 * sl..(i0 + 1) * sl])]);
        s * self.cell_volume()
    }

    /// Calls `row(base, idx)` for every row of the slab `i0`; a row is the set
    /// of nodes differing only in the last index. `idx` holds the row's
    /// multi-index with the last entry 0.
    pub(crate) fn for_each_row(&self, i0: usize, mut row: impl FnMut(usize, &[usize])) {
        let d = self.dim();
        let n_last = self.sizes[d - 1];
        let rows = self.slab_len() / n_last;
        let mut idx = vec![0usize; d];
        idx[0] = i0;
        for r in 0..rows {
            let mut rem = r;
            for k in (1..d - 1).rev() {
                idx[k] = rem % self.sizes[k];
                rem /= self.sizes[k];
            }
            let base = i0 * self.strides[0] + r * n_last;
            row(base, &idx);
        }
    }
}

/// Pairwise summation of a slice.
pub(crate) fn pairwise(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise(&v[..mid]) + pairwise(&v[mid..])
}

fn tree_sum<const K: usize>(parts: &[[f64; K]]) -> [f64; K] {
    match parts.len() {
        0 => [0.0; K],
        1 => parts[0],
        n => {
            let (l, r) = parts.split_at(n / 2);
            let (a, b) = (tree_sum(l), tree_sum(r));
            let mut out = [0.0; K];
            for k in 0..K {
                out[k] = a[k] + b[k];
            }
            out
        }
    }
}

fn tree_sum_vec(parts: &[Vec<f64>], k: usize) -> Vec<f64> {
    match parts.len() {
        0 => vec![0.0; k],
        1 => parts[0].clone(),
        n => {
            let (l, r) = parts.split_at(n / 2);
            let (a, b) = (tree_sum_vec(l, k), tree_sum_vec(r, k));
            a.iter().zip(&b).map(|(x, y)| x + y).collect()
        }
    }
}

/// Anisotropic dilation `f(x₁/λ, x'/σ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DilationSpec {
    pub lambda: f64,
    pub sigma: f64,
}

impl DilationSpec {
    pub fn new(lambda: f64, sigma: f64) -> Result<Self> {
        if !(lambda > 0.0 && sigma > 0.0) {
            return Err(Error::Config(format!(
                "dilation factors must be positive, got ({lambda}, {sigma})"
            )));
        }
        Ok(Self { lambda, sigma })
    }

    pub fn identity() -> Self {
        Self { lambda: 1.0, sigma: 1.0 }
    }

    #[inline]
    fn factor(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.lambda
        } else {
            self.sigma
        }
    }
}

/// Complex field `u` on a grid; `r0 - u` is the wave profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self { grid, values: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Invariant("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node.
    pub fn sample(grid: Grid, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Self {
        let d = grid.dim();
        let sl = grid.slab_len();
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        values.par_chunks_mut(sl).enumerate().for_each(|(i0, chunk)| {
            let mut x = vec![0.0; d];
            for (off, v) in chunk.iter_mut().enumerate() {
                grid.point(i0 * sl + off, &mut x);
                *v = f(&x);
            }
        });
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Same values on a relabelled grid (same sizes).
    pub fn with_grid(self, grid: Grid) -> Result<Self> {
        if grid.sizes() != self.grid.sizes() {
            return Err(Error::InvalidGrid("relabelled grid must keep sizes".into()));
        }
        Ok(Self { grid, values: self.values })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// Largest modulus on the outermost layer of the box.
    pub fn boundary_max(&self) -> f64 {
        let g = &self.grid;
        (0..g.len())
            .filter(|&j| g.is_boundary(j))
            .map(|j| self.values[j].norm())
            .fold(0.0, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        self.values.par_iter().map(|z| z.norm()).reduce(|| 0.0, f64::max)
    }

    /// Real L² inner product `∫ Re(u v̄)`.
    pub fn dot(&self, other: &ComplexField) -> f64 {
        dot(&self.grid, &self.values, &other.values)
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += t * dir`.
    pub fn axpy(&mut self, t: f64, dir: &[Complex64]) {
        self.values.par_iter_mut().zip(dir.par_iter()).for_each(|(v, d)| *v += d * t);
    }

    /// Value at multi-index `idx`, zero outside the box.
    #[inline]
    pub fn at(&self, idx: &[isize]) -> Complex64 {
        let mut j = 0usize;
        for k in 0..idx.len() {
            let i = idx[k];
            if i < 0 || i as usize >= self.grid.sizes[k] {
                return Complex64::new(0.0, 0.0);
            }
            j += i as usize * self.grid.strides[k];
        }
        self.values[j]
    }
}

/// `∫ Re(a b̄)` over the grid.
pub fn dot(grid: &Grid, a: &[Complex64], b: &[Complex64]) -> f64 {
    let sl = grid.slab_len();
    let [s] = grid.reduce_slabs(|i0| {
        let r = i0 * sl..(i0 + 1) * sl;
        let prods: Vec<f64> = a[r.clone()]
            .iter()
            .zip(&b[r])
            .map(|(x, y)| x.re * y.re + x.im * y.im)
            .collect();
        [pairwise(&prods)]
    });
    s * grid.cell_volume()
}

/// Applies `f(out_row, row_base, idx)` to every row of `out`, in parallel over
/// axis-0 slabs.
pub(crate) fn map_rows<T: Send>(
    grid: &Grid,
    out: &mut [T],
    f: impl Fn(&mut [T], usize, &[usize]) + Sync,
) {
    let sl = grid.slab_len();
    let n_last = *grid.sizes().last().unwrap();
    out.par_chunks_mut(sl).enumerate().for_each(|(i0, chunk)| {
        let start = i0 * sl;
        grid.for_each_row(i0, |base, idx| {
            let off = base - start;
            f(&mut chunk[off..off + n_last], base, idx);
        });
    });
}

/// Neighbour of flat index `j` along `axis`, `+1` or `-1`, zero outside.
#[inline]
pub(crate) fn neighbour(
    grid: &Grid,
    v: &[Complex64],
    j: usize,
    i_axis: usize,
    axis: usize,
    plus: bool,
) -> Complex64 {
    if plus {
        if i_axis + 1 < grid.sizes[axis] {
            v[j + grid.strides[axis]]
        } else {
            Complex64::new(0.0, 0.0)
        }
    } else if i_axis > 0 {
        v[j - grid.strides[axis]]
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Second-order central differences along every axis.
pub fn gradient(u: &ComplexField) -> Vec<ComplexField> {
    let g = u.grid();
    (0..g.dim())
        .map(|axis| {
            let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
            central_difference_into(u, axis, &mut out);
            ComplexField { grid: g.clone(), values: out }
        })
        .collect()
}

pub(crate) fn central_difference_into(u: &ComplexField, axis: usize, out: &mut [Complex64]) {
    let g = u.grid();
    let v = u.values();
    let d = g.dim();
    let inv = 0.5 / g.spacing()[axis];
    map_rows(g, out, |row, base, idx| {
        for (m, o) in row.iter_mut().enumerate() {
            let j = base + m;
            let i_axis = if axis == d - 1 { m } else { idx[axis] };
            let p = neighbour(g, v, j, i_axis, axis, true);
            let q = neighbour(g, v, j, i_axis, axis, false);
            *o = (p - q) * inv;
        }
    });
}

/// Samples `sampler(x₁/λ, x'/σ)` on `grid`.
pub fn dilate_closed_form(
    sampler: impl Fn(&[f64]) -> Complex64 + Sync,
    spec: DilationSpec,
    grid: &Grid,
) -> ComplexField {
    ComplexField::sample(grid.clone(), |x| {
        let mut y = x.to_vec();
        for (k, yk) in y.iter_mut().enumerate() {
            *yk /= spec.factor(k);
        }
        sampler(&y)
    })
}

/// Dilation onto the same grid by multilinear interpolation; points pulled
/// back outside the box read zero.
pub fn dilate_grid(u: &ComplexField, spec: DilationSpec) -> ComplexField {
    let g = u.grid().clone();
    let d = g.dim();
    ComplexField::sample(g.clone(), |x| {
        let mut base = vec![0isize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let y = x[k] / spec.factor(k);
            let t = y / g.spacing()[k] + 0.5 * (g.sizes()[k] - 1) as f64;
            let f = t.floor();
            base[k] = f as isize;
            frac[k] = t - f;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut idx = vec![0isize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                idx[k] = base[k] + bit as isize;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += u.at(&idx) * w;
            }
        }
        acc
    })
}

/// Exact dilation by relabelling: the same nodal values on a grid whose
/// spacings are multiplied by `(λ, σ, …, σ)`.
pub fn dilate_by_spacing(u: &ComplexField, spec: DilationSpec) -> ComplexField {
    let g = u.grid();
    let spacing: Vec<f64> = (0..g.dim()).map(|k| g.spacing()[k] * spec.factor(k)).collect();
    let grid = Grid::new(g.sizes().to_vec(), spacing).expect("scaled grid stays valid");
    ComplexField { grid, values: u.values.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bump(r2: f64, w: f64) -> f64 {
        (-(r2 / (w * w))).exp()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(vec![8, 8], vec![1.0, 1.0]).is_err());
        assert!(Grid::new(vec![8, 8, 4], vec![1.0; 3]).is_err());
        assert!(Grid::new(vec![8; 3], vec![1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn integrate_constant_and_zero() {
        let g = Grid::cube(3, 8, 0.25).unwrap(); // volume 2³ = 8
        assert_relative_eq!(g.integrate(&vec![1.0; g.len()]), 8.0, epsilon = 1e-12);
        assert_eq!(g.integrate(&vec![0.0; g.len()]), 0.0);
    }

    #[test]
    fn integrate_gaussian_matches_1d_product() {
        let n = 64;
        let g = Grid::with_half_width(3, n, 6.0).unwrap();
        let h = g.spacing()[0];
        let widths = [1.0, 1.3, 0.8];
        let mut f = vec![0.0; g.len()];
        let mut x = vec![0.0; 3];
        for (j, fj) in f.iter_mut().enumerate() {
            g.point(j, &mut x);
            *fj = (0..3).map(|k| (-(x[k] / widths[k]).powi(2)).exp()).product();
        }
        let oracle: f64 = (0..3)
            .map(|k| (0..n).map(|i| (-(g.coord(k, i) / widths[k]).powi(2)).exp()).sum::<f64>() * h)
            .product();
        assert_relative_eq!(g.integrate(&f), oracle, max_relative = 1e-6);
    }

    #[test]
    fn integrate_is_linear() {
        let g = Grid::cube(3, 10, 0.3).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|j| ((j * 37 % 101) as f64).sin()).collect();
        let h: Vec<f64> = (0..g.len()).map(|j| ((j * 13 % 59) as f64).cos()).collect();
        let comb: Vec<f64> = f.iter().zip(&h).map(|(a, b)| 2.5 * a - 0.75 * b).collect();
        let lhs = g.integrate(&comb);
        let rhs = 2.5 * g.integrate(&f) - 0.75 * g.integrate(&h);
        assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs()).max(1.0));
    }

    #[test]
    fn gradient_of_zero_is_zero() {
        let g = Grid::cube(3, 8, 0.5).unwrap();
        let u = ComplexField::zeros(g);
        for c in gradient(&u) {
            assert!(c.is_zero());
        }
    }

    fn gradient_error(n: usize) -> f64 {
        // u = x₁ exp(-|x|²/4): ∂₁u = (1 - x₁²/2) exp(-|x|²/4)
        let g = Grid::with_half_width(3, n, 8.0).unwrap();
        let u = ComplexField::sample(g.clone(), |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new(x[0] * bump(r2, 2.0), 0.5 * x[0] * bump(r2, 2.0))
        });
        let du = &gradient(&u)[0];
        let mut x = vec![0.0; 3];
        let mut err: f64 = 0.0;
        for j in 0..g.len() {
            g.point(j, &mut x);
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 > 16.0 {
                continue;
            }
            let exact = (1.0 - x[0] * x[0] / 2.0) * bump(r2, 2.0);
            let e = (du.values()[j] - Complex64::new(exact, 0.5 * exact)).norm();
            err = err.max(e);
        }
        err
    }

    #[test]
    fn gradient_is_second_order() {
        let coarse = gradient_error(33);
        let fine = gradient_error(65);
        let order = (coarse / fine).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn tree_sum_is_thread_independent() {
        let g = Grid::cube(3, 16, 0.1).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|j| (j as f64 * 0.7).sin() * 1e3).collect();
        let a = g.integrate(&f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| g.integrate(&f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn identity_dilation_is_bit_exact() {
        let g = Grid::cube(3, 12, 0.4).unwrap();
        let f = |x: &[f64]| Complex64::new(x[0].sin(), x[1] * x[2]);
        let a = ComplexField::sample(g.clone(), f);
        let b = dilate_closed_form(f, DilationSpec::identity(), &g);
        assert_eq!(a, b);
        let c = dilate_grid(&a, DilationSpec::identity());
        for (p, q) in a.values().iter().zip(c.values()) {
            assert!((p - q).norm() <= 1e-14);
        }
    }

    #[test]
    fn dilate_grid_tracks_closed_form() {
        let g = Grid::with_half_width(3, 48, 6.0).unwrap();
        let f = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new(bump(r2, 1.5), x[0] * bump(r2, 1.5))
        };
        let spec = DilationSpec::new(1.3, 0.8).unwrap();
        let exact = dilate_closed_form(f, spec, &g);
        let interp = dilate_grid(&ComplexField::sample(g.clone(), f), spec);
        let h = g.spacing()[0];
        for (p, q) in exact.values().iter().zip(interp.values()) {
            assert!((p - q).norm() <= h * h);
        }
    }

    #[test]
    fn spacing_dilation_keeps_values() {
        let g = Grid::cube(3, 8, 0.5).unwrap();
        let u = ComplexField::sample(g, |x| Complex64::new(x[0], x[1]));
        let d = dilate_by_spacing(&u, DilationSpec::new(2.0, 0.5).unwrap());
        assert_eq!(d.values(), u.values());
        assert_eq!(d.grid().spacing(), &[1.0, 0.25, 0.25]);
    }
}
