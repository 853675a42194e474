//! Scalar functionals of a field at speed `c`: Ginzburg–Landau energy,
//! potential energy, momentum (plain and lifted forms), the transverse
//! kinetic energy `A`, `B_c`, the Pohozaev functional `P_c`, `E_c` and `D`;
//! plus their L² gradients.
//!
//! Kinetic terms use forward differences on the edges of the grid (ghost
//! values zero), so the exact gradient of `∫|∇u|²` is `-2Δu` with the
//! compact `2N+1`-point Laplacian. The momentum uses central differences
//! along `x₁`; its exact gradient is `2i∂₁u`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{map_rows, neighbour, ComplexField, Grid};
use crate::nonlinearity::{CutoffPhi, NonlinearityModel};

/// Radial profile used for the cutoff `χ` between `r0/4` and `r0/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChiProfile {
    /// `6t⁵ - 15t⁴ + 10t³` (C²).
    QuinticSmoothstep,
    /// `3t² - 2t³` (C¹).
    CubicSmoothstep,
}

/// `χ(z) = 1` for `|z| ≤ r0/4`, `0` for `|z| ≥ r0/2`, smooth in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiCutoff {
    r0: f64,
    profile: ChiProfile,
}

impl ChiCutoff {
    pub fn new(r0: f64, profile: ChiProfile) -> Self {
        assert!(r0 > 0.0, "r0 must be positive");
        Self { r0, profile }
    }

    pub fn quintic(r0: f64) -> Self {
        Self::new(r0, ChiProfile::QuinticSmoothstep)
    }

    pub fn profile(&self) -> ChiProfile {
        self.profile
    }

    #[inline]
    pub fn value(&self, z: Complex64) -> f64 {
        let m = z.norm();
        let inner = 0.25 * self.r0;
        if m <= inner {
            return 1.0;
        }
        if m >= 2.0 * inner {
            return 0.0;
        }
        let t = (m - inner) / inner;
        let step = match self.profile {
            ChiProfile::QuinticSmoothstep => t * t * t * (t * (6.0 * t - 15.0) + 10.0),
            ChiProfile::CubicSmoothstep => t * t * (3.0 - 2.0 * t),
        };
        1.0 - step
    }
}

/// Polar form `r0 - χ(u)u = ρ e^{iθ}` on the principal branch.
#[derive(Clone, Debug)]
pub struct Lifting {
    pub chi: Vec<f64>,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Builds the lifting of `r0 - u₁`, `u₁ = χ(u)u`. Since `|u₁| ≤ r0/2` the
/// real part of `r0 - u₁` stays `≥ r0/2`, so `θ ∈ (-π/2, π/2)` needs no
/// unwrapping.
pub fn lifting(u: &ComplexField, r0: f64, chi: &ChiCutoff) -> Result<Lifting> {
    let n = u.values().len();
    let mut out = Lifting { chi: vec![0.0; n], rho: vec![0.0; n], theta: vec![0.0; n] };
    for (j, &z) in u.values().iter().enumerate() {
        let c = chi.value(z);
        let w = Complex64::new(r0, 0.0) - z * c;
        out.chi[j] = c;
        out.rho[j] = w.norm();
        out.theta[j] = w.im.atan2(w.re);
    }
    if let Some(j) = out.rho.iter().position(|&r| r < 0.25 * r0) {
        return Err(Error::Invariant(format!(
            "lifting modulus {} < r0/4 at node {j}",
            out.rho[j]
        )));
    }
    Ok(out)
}

/// Errors when the field reaches moduli the model cannot evaluate.
pub fn check_field_domain(u: &ComplexField, model: &NonlinearityModel) -> Result<()> {
    if model.domain_max().is_finite() {
        let r0 = model.r0();
        let smax = u
            .values()
            .iter()
            .map(|z| (Complex64::new(r0, 0.0) - z).norm_sqr())
            .fold(0.0, f64::max);
        model.check_domain(smax)?;
    }
    Ok(())
}

/// Per-axis `∫|∂_k u|²` (forward differences).
pub fn kinetic_by_axis(u: &ComplexField) -> Vec<f64> {
    let g = u.grid();
    let d = g.dim();
    let v = u.values();
    let inv_h2: Vec<f64> = g.spacing().iter().map(|h| 1.0 / (h * h)).collect();
    let sums = g.reduce_slabs_vec(d, |i0| {
        let mut acc = vec![0.0; d];
        let n_last = g.sizes()[d - 1];
        g.for_each_row(i0, |base, idx| {
            for m in 0..n_last {
                let j = base + m;
                let uj = v[j];
                for k in 0..d {
                    let ik = if k == d - 1 { m } else { idx[k] };
                    let fwd = neighbour(g, v, j, ik, k, true);
                    let mut e = (fwd - uj).norm_sqr();
                    if ik == 0 {
                        e += uj.norm_sqr();
                    }
                    acc[k] += e * inv_h2[k];
                }
            }
        });
        acc
    });
    let vol = g.cell_volume();
    sums.into_iter().map(|s| s * vol).collect()
}

/// `∫ V(|r0 - u|²)`.
pub fn e_potential(u: &ComplexField, model: &NonlinearityModel) -> Result<f64> {
    check_field_domain(u, model)?;
    let r0 = Complex64::new(model.r0(), 0.0);
    let g = u.grid();
    let v = u.values();
    let sl = g.slab_len();
    let [s] = g.reduce_slabs(|i0| {
        [v[i0 * sl..(i0 + 1) * sl].iter().map(|z| model.v_unchecked((r0 - z).norm_sqr())).sum()]
    });
    Ok(s * g.cell_volume())
}

/// `a² ∫ (φ²(|r0 - u|) - r0²)²`.
pub fn gl_potential(u: &ComplexField, model: &NonlinearityModel, phi: &CutoffPhi) -> f64 {
    let r0 = model.r0();
    let a2 = model.a() * model.a();
    let g = u.grid();
    let v = u.values();
    let sl = g.slab_len();
    let [s] = g.reduce_slabs(|i0| {
        [v[i0 * sl..(i0 + 1) * sl]
            .iter()
            .map(|z| {
                let p = phi.value((Complex64::new(r0, 0.0) - z).norm());
                let t = p * p - r0 * r0;
                t * t
            })
            .sum()]
    });
    a2 * s * g.cell_volume()
}

/// Modified Ginzburg–Landau energy.
pub fn e_gl(u: &ComplexField, model: &NonlinearityModel, phi: &CutoffPhi) -> f64 {
    kinetic_by_axis(u).iter().sum::<f64>() + gl_potential(u, model, phi)
}

/// Pointwise Ginzburg–Landau energy density; each edge term is shared
/// equally by its two end nodes, so the density of a symmetric field is
/// symmetric.
pub fn gl_energy_density(u: &ComplexField, model: &NonlinearityModel, phi: &CutoffPhi) -> Vec<f64> {
    let g = u.grid();
    let d = g.dim();
    let v = u.values();
    let r0 = model.r0();
    let a2 = model.a() * model.a();
    let inv_h2: Vec<f64> = g.spacing().iter().map(|h| 0.5 / (h * h)).collect();
    let mut out = vec![0.0; g.len()];
    map_rows(g, &mut out, |row, base, idx| {
        for (m, o) in row.iter_mut().enumerate() {
            let j = base + m;
            let mut e = 0.0;
            for k in 0..d {
                let ik = if k == d - 1 { m } else { idx[k] };
                let fwd = neighbour(g, v, j, ik, k, true);
                let bwd = neighbour(g, v, j, ik, k, false);
                e += ((fwd - v[j]).norm_sqr() + (v[j] - bwd).norm_sqr()) * inv_h2[k];
            }
            let p = phi.value((Complex64::new(r0, 0.0) - v[j]).norm());
            let t = p * p - r0 * r0;
            *o = e + a2 * t * t;
        }
    });
    out
}

/// `Q₁(u) = ∫ ⟨i∂₁u, u⟩` with `⟨z, w⟩ = Re(z w̄)`.
pub fn momentum_simple(u: &ComplexField) -> f64 {
    let g = u.grid();
    let d = g.dim();
    let v = u.values();
    let inv = 0.5 / g.spacing()[0];
    let n_last = g.sizes()[d - 1];
    let [s] = g.reduce_slabs(|i0| {
        let mut acc = 0.0;
        g.for_each_row(i0, |base, _| {
            for m in 0..n_last {
                let j = base + m;
                let dp = neighbour(g, v, j, i0, 0, true) - neighbour(g, v, j, i0, 0, false);
                acc -= (dp * v[j].conj()).im * inv;
            }
        });
        [acc]
    });
    s * g.cell_volume()
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Momentum through the cutoff decomposition `u = χ(u)u + (1-χ(u))u` and the
/// lifting `r0 - χ(u)u = ρe^{iθ}`:
/// `Q = ∫ (1-χ²(u))⟨i∂₁u, u⟩ - (ρ² - r0²)∂₁θ`.
///
/// Discretized on the `x₁` edges of the grid: the cutoff weight is
/// `χ_j χ_{j+1}`, `∂₁θ` is the forward difference of `θ`, and `ρ²` is the
/// edge mean `ρ_j ρ_{j+1} sinc(Δθ)`. With these choices the discarded exact
/// derivative `-r0∂₁(Im u₁ + r0θ)` telescopes to zero on the grid, so the
/// result coincides with [`momentum_simple`] for every cutoff.
pub fn momentum_general(u: &ComplexField, r0: f64, chi: &ChiCutoff) -> Result<f64> {
    let lift = lifting(u, r0, chi)?;
    let g = u.grid();
    let v = u.values();
    let h1 = g.spacing()[0];
    let n0 = g.sizes()[0];
    let st = g.strides()[0];
    let sl = g.slab_len();
    let r0sq = r0 * r0;
    let zero = Complex64::new(0.0, 0.0);
    // Edge (j, j + e₁); slab i0 owns the edge leaving it, slab 0 also owns the
    // edge entering from the ghost layer.
    let [s] = g.reduce_slabs(|i0| {
        let mut acc = 0.0;
        for off in 0..sl {
            let j = i0 * sl + off;
            let (uj, cj, rj, tj) = (v[j], lift.chi[j], lift.rho[j], lift.theta[j]);
            let (up, cp, rp, tp) = if i0 + 1 < n0 {
                (v[j + st], lift.chi[j + st], lift.rho[j + st], lift.theta[j + st])
            } else {
                (zero, 1.0, r0, 0.0)
            };
            acc += edge_momentum(uj, up, cj, cp, rj, rp, tj, tp, r0sq);
            if i0 == 0 {
                acc += edge_momentum(zero, uj, 1.0, cj, r0, rj, 0.0, tj, r0sq);
            }
        }
        [acc]
    });
    Ok(s * g.cell_volume() / h1)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn edge_momentum(
    ua: Complex64,
    ub: Complex64,
    ca: f64,
    cb: f64,
    ra: f64,
    rb: f64,
    ta: f64,
    tb: f64,
    r0sq: f64,
) -> f64 {
    let current = -(ub * ua.conj()).im;
    let dtheta = tb - ta;
    (1.0 - ca * cb) * current - (ra * rb * sinc(dtheta) - r0sq) * dtheta
}

/// All scalar functionals of one field at one speed.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct FunctionalReport {
    pub dim: usize,
    pub c: f64,
    pub e_gl: f64,
    pub e_pot: f64,
    pub gl_potential: f64,
    pub e_c: f64,
    pub q: f64,
    pub a_transverse: f64,
    pub b_c: f64,
    pub p_c: f64,
    pub d_long: f64,
    pub kinetic_x1: f64,
}

impl FunctionalReport {
    /// `(N-3)/(N-1)`.
    pub fn pohozaev_weight(&self) -> f64 {
        pohozaev_weight(self.dim)
    }

    /// Assembles a report from its independent parts.
    pub fn from_parts(
        dim: usize,
        c: f64,
        kinetic: &[f64],
        q: f64,
        e_pot: f64,
        gl_potential: f64,
    ) -> Self {
        let kinetic_x1 = kinetic[0];
        let a_transverse: f64 = kinetic[1..].iter().sum();
        let b_c = kinetic_x1 + c * q + e_pot;
        let p_c = pohozaev_weight(dim) * a_transverse + b_c;
        Self {
            dim,
            c,
            e_gl: kinetic_x1 + a_transverse + gl_potential,
            e_pot,
            gl_potential,
            e_c: kinetic_x1 + a_transverse + c * q + e_pot,
            q,
            a_transverse,
            b_c,
            p_c,
            d_long: kinetic_x1 + gl_potential,
            kinetic_x1,
        }
    }

    /// CSV header matching [`csv_row`](Self::csv_row).
    pub fn csv_header() -> &'static str {
        "c,e_gl,e_pot,e_c,q,a_transverse,b_c,p_c,d_long,kinetic_x1,grid_hash"
    }

    pub fn csv_row(&self, grid: &Grid) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.c,
            self.e_gl,
            self.e_pot,
            self.e_c,
            self.q,
            self.a_transverse,
            self.b_c,
            self.p_c,
            self.d_long,
            self.kinetic_x1,
            grid.descriptor_hash()
        )
    }
}

pub fn pohozaev_weight(dim: usize) -> f64 {
    (dim as f64 - 3.0) / (dim as f64 - 1.0)
}

/// The model, cutoff `φ` and cutoff `χ` used by every evaluation.
#[derive(Clone, Debug)]
pub struct Physics {
    pub model: NonlinearityModel,
    pub phi: CutoffPhi,
    pub chi: ChiCutoff,
}

impl Physics {
    pub fn new(model: NonlinearityModel) -> Self {
        let r0 = model.r0();
        Self { model, phi: CutoffPhi::new(r0), chi: ChiCutoff::quintic(r0) }
    }

    pub fn r0(&self) -> f64 {
        self.model.r0()
    }

    pub fn report(&self, u: &ComplexField, c: f64) -> Result<FunctionalReport> {
        report(u, c, &self.model, &self.phi, &self.chi)
    }
}

/// Full report; `q` comes from [`momentum_general`].
pub fn report(
    u: &ComplexField,
    c: f64,
    model: &NonlinearityModel,
    phi: &CutoffPhi,
    chi: &ChiCutoff,
) -> Result<FunctionalReport> {
    let kinetic = kinetic_by_axis(u);
    let q = momentum_general(u, model.r0(), chi)?;
    let e_pot = e_potential(u, model)?;
    let glp = gl_potential(u, model, phi);
    Ok(FunctionalReport::from_parts(u.grid().dim(), c, &kinetic, q, e_pot, glp))
}

/// Report using the plain momentum; identical to [`report`] up to rounding
/// and cheaper, for use inside iterative loops.
pub fn fast_report(
    u: &ComplexField,
    c: f64,
    model: &NonlinearityModel,
    phi: &CutoffPhi,
) -> Result<FunctionalReport> {
    let kinetic = kinetic_by_axis(u);
    let q = momentum_simple(u);
    let e_pot = e_potential(u, model)?;
    let glp = gl_potential(u, model, phi);
    Ok(FunctionalReport::from_parts(u.grid().dim(), c, &kinetic, q, e_pot, glp))
}

/// Weights of the terms in a linear combination of functionals:
/// `x1 ∫|∂₁u|² + perp A + momentum cQ + potential ∫V`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights {
    pub x1: f64,
    pub perp: f64,
    pub momentum: f64,
    pub potential: f64,
}

impl Weights {
    pub const E_C: Weights = Weights { x1: 1.0, perp: 1.0, momentum: 1.0, potential: 1.0 };
    pub const A: Weights = Weights { x1: 0.0, perp: 1.0, momentum: 0.0, potential: 0.0 };
    pub const B_C: Weights = Weights { x1: 1.0, perp: 0.0, momentum: 1.0, potential: 1.0 };

    pub fn p_c(dim: usize) -> Weights {
        Weights { perp: pohozaev_weight(dim), ..Self::B_C }
    }

    pub fn scaled(self, s: f64) -> Weights {
        Weights {
            x1: self.x1 * s,
            perp: self.perp * s,
            momentum: self.momentum * s,
            potential: self.potential * s,
        }
    }

    pub fn plus(self, o: Weights) -> Weights {
        Weights {
            x1: self.x1 + o.x1,
            perp: self.perp + o.perp,
            momentum: self.momentum + o.momentum,
            potential: self.potential + o.potential,
        }
    }

    /// Value of the combination given a report.
    pub fn evaluate(&self, r: &FunctionalReport) -> f64 {
        self.x1 * r.kinetic_x1
            + self.perp * r.a_transverse
            + self.momentum * r.c * r.q
            + self.potential * r.e_pot
    }
}

/// L² gradient of a weighted combination of functionals:
/// `2(-w₁∂₁²u - w⊥Δ'u + w_Q ic∂₁u + w_V F(|r0-u|²)(r0-u))`.
pub fn functional_gradient(
    u: &ComplexField,
    c: f64,
    model: &NonlinearityModel,
    w: Weights,
) -> Result<ComplexField> {
    if w.potential != 0.0 {
        check_field_domain(u, model)?;
    }
    let g = u.grid();
    let d = g.dim();
    let v = u.values();
    let r0 = Complex64::new(model.r0(), 0.0);
    let inv_h2: Vec<f64> = g.spacing().iter().map(|h| 1.0 / (h * h)).collect();
    let ic = Complex64::new(0.0, c * w.momentum * 0.5 / g.spacing()[0]);
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    map_rows(g, &mut out, |row, base, idx| {
        for (m, o) in row.iter_mut().enumerate() {
            let j = base + m;
            let uj = v[j];
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..d {
                let wk = if k == 0 { w.x1 } else { w.perp };
                let ik = if k == d - 1 { m } else { idx[k] };
                let p = neighbour(g, v, j, ik, k, true);
                let q = neighbour(g, v, j, ik, k, false);
                if k == 0 && ic.im != 0.0 {
                    acc += ic * (p - q);
                }
                if wk != 0.0 {
                    acc -= (p + q - uj * 2.0) * (wk * inv_h2[k]);
                }
            }
            if w.potential != 0.0 {
                let z = r0 - uj;
                acc += z * (w.potential * model.f_unchecked(z.norm_sqr()));
            }
            *o = acc * 2.0;
        }
    });
    ComplexField::from_values(g.clone(), out)
}

/// Discrete Laplacian `Δ_h u`.
pub fn laplacian(u: &ComplexField) -> ComplexField {
    let g = u.grid();
    let d = g.dim();
    let v = u.values();
    let inv_h2: Vec<f64> = g.spacing().iter().map(|h| 1.0 / (h * h)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    map_rows(g, &mut out, |row, base, idx| {
        for (m, o) in row.iter_mut().enumerate() {
            let j = base + m;
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..d {
                let ik = if k == d - 1 { m } else { idx[k] };
                let p = neighbour(g, v, j, ik, k, true);
                let q = neighbour(g, v, j, ik, k, false);
                acc += (p + q - v[j] * 2.0) * inv_h2[k];
            }
            *o = acc;
        }
    });
    ComplexField::from_values(g.clone(), out).expect("finite input gives finite Laplacian")
}

/// Quadrature tolerance `τ_h = (h²_max/12) ∫|Δ_h u|²`: the size of the
/// leading truncation term of the second-order difference and midpoint
/// formulas for the quadratic functionals of `u`.
pub fn quadrature_tolerance(u: &ComplexField) -> f64 {
    let hmax = u.grid().spacing().iter().cloned().fold(0.0, f64::max);
    let lap = laplacian(u);
    hmax * hmax / 12.0 * lap.dot(&lap)
}
