//! Regularization by minimizing
//! `G(v) = E_GL^Ω(v) + h⁻² ∫_Ω φ(|v-u|²/(32 r0))` over `v` equal to `u`
//! outside a sub-box `Ω`.
//!
//! On the grid `E_GL^Ω` collects the potential on the nodes of `Ω` and every
//! kinetic edge with at least one endpoint in `Ω`, so the rest of the energy
//! does not depend on the values inside `Ω`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::functionals::{momentum_simple, Physics};
use crate::grid::{map_rows, neighbour, ComplexField, Grid};
use crate::spectral::SpectralPreconditioner;

/// Half-open node-index box `[lo, hi)` per axis.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IndexBox {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl IndexBox {
    pub fn whole(grid: &Grid) -> Self {
        Self { lo: vec![0; grid.dim()], hi: grid.sizes().to_vec() }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let d = grid.dim();
        if self.lo.len() != d || self.hi.len() != d {
            return Err(Error::Config("Omega has the wrong dimension".into()));
        }
        for k in 0..d {
            if !(self.lo[k] < self.hi[k] && self.hi[k] <= grid.sizes()[k]) {
                return Err(Error::Config(format!("Omega axis {k} range {}..{} invalid", self.lo[k], self.hi[k])));
            }
            if self.hi[k] - self.lo[k] < 8 {
                return Err(Error::Config("Omega needs at least 8 nodes per axis".into()));
            }
        }
        Ok(())
    }

    #[inline]
    fn contains(&self, idx: &[usize]) -> bool {
        idx.iter().zip(&self.lo).zip(&self.hi).all(|((&i, &l), &h)| i >= l && i < h)
    }

    fn sub_grid(&self, grid: &Grid) -> Grid {
        let sizes = self.hi.iter().zip(&self.lo).map(|(h, l)| h - l).collect();
        Grid::new(sizes, grid.spacing().to_vec()).expect("validated box")
    }

    fn nodes(&self, grid: &Grid) -> Vec<usize> {
        let mut out = Vec::new();
        let mut idx = vec![0usize; grid.dim()];
        for j in 0..grid.len() {
            grid.unflatten(j, &mut idx);
            if self.contains(&idx) {
                out.push(j);
            }
        }
        out
    }
}

/// Settings of [`g_minimize`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizeConfig {
    /// Penalty scale `h > 0`.
    pub h: f64,
    /// `None` is the whole box.
    pub omega: Option<IndexBox>,
    pub max_iters: usize,
    /// Stop when `‖∇G‖` falls below `tol` times its initial value.
    pub tol: f64,
}

impl Default for RegularizeConfig {
    fn default() -> Self {
        Self { h: 0.2, omega: None, max_iters: 2000, tol: 1e-6 }
    }
}

impl RegularizeConfig {
    pub fn omega_for(&self, grid: &Grid) -> Result<IndexBox> {
        if !(self.h > 0.0) {
            return Err(Error::Config(format!("penalty scale h = {} must be positive", self.h)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        let b = self.omega.clone().unwrap_or_else(|| IndexBox::whole(grid));
        b.validate(grid)?;
        Ok(b)
    }
}

/// `E_GL^Ω(v)`.
pub fn e_gl_omega(v: &ComplexField, physics: &Physics, omega: &IndexBox) -> f64 {
    let g = v.grid();
    let d = g.dim();
    let vals = v.values();
    let r0 = physics.r0();
    let a2 = physics.model.a().powi(2);
    let inv_h2: Vec<f64> = g.spacing().iter().map(|h| 1.0 / (h * h)).collect();
    let n_last = g.sizes()[d - 1];
    let [s] = g.reduce_slabs(|i0| {
        let mut acc = 0.0;
        let mut full = vec![0usize; d];
        g.for_each_row(i0, |base, idx| {
            full.copy_from_slice(idx);
            for m in 0..n_last {
                full[d - 1] = m;
                let j = base + m;
                let here = omega.contains(&full);
                if here {
                    let p = physics.phi.value((Complex64::new(r0, 0.0) - vals[j]).norm());
                    let t = p * p - r0 * r0;
                    acc += a2 * t * t;
                }
                for k in 0..d {
                    let ik = full[k];
                    let fwd_in = ik + 1 < g.sizes()[k] && {
                        full[k] += 1;
                        let c = omega.contains(&full);
                        full[k] -= 1;
                        c
                    };
                    if here || fwd_in {
                        acc += (neighbour(g, vals, j, ik, k, true) - vals[j]).norm_sqr() * inv_h2[k];
                    }
                    if ik == 0 && here {
                        acc += vals[j].norm_sqr() * inv_h2[k];
                    }
                }
            }
        });
        [acc]
    });
    s * g.cell_volume()
}

fn penalty(u: &ComplexField, v: &ComplexField, physics: &Physics, h: f64) -> f64 {
    let r0 = physics.r0();
    let f: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| physics.phi.value((b - a).norm_sqr() / (32.0 * r0)))
        .collect();
    u.grid().integrate(&f) / (h * h)
}

/// `G^u_{h,Ω}(v)`; `v` must equal `u` outside `Ω`.
pub fn g_value(u: &ComplexField, v: &ComplexField, physics: &Physics, h: f64, omega: &IndexBox) -> f64 {
    e_gl_omega(v, physics, omega) + penalty(u, v, physics, h)
}

/// L² gradient of `G` at `v`, zero outside `Ω`:
/// `2(-Δv + 2a²H(v) + φ'(|v-u|²/(32r0))(v-u)/(32 r0 h²))`.
pub fn g_gradient(u: &ComplexField, v: &ComplexField, physics: &Physics, h: f64, omega: &IndexBox) -> ComplexField {
    let g = v.grid();
    let d = g.dim();
    let vals = v.values();
    let uv = u.values();
    let r0 = physics.r0();
    let a2 = physics.model.a().powi(2);
    let inv_h2: Vec<f64> = g.spacing().iter().map(|s| 1.0 / (s * s)).collect();
    let pen = 1.0 / (32.0 * r0 * h * h);
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    map_rows(g, &mut out, |row, base, idx| {
        let mut full = idx.to_vec();
        for (m, o) in row.iter_mut().enumerate() {
            full[d - 1] = m;
            if !omega.contains(&full) {
                continue;
            }
            let j = base + m;
            let mut lap = Complex64::new(0.0, 0.0);
            for k in 0..d {
                let p = neighbour(g, vals, j, full[k], k, true);
                let q = neighbour(g, vals, j, full[k], k, false);
                lap += (p + q - vals[j] * 2.0) * inv_h2[k];
            }
            let w = vals[j] - Complex64::new(r0, 0.0);
            let mw = w.norm();
            let hz = if mw > 0.0 {
                let p = physics.phi.value(mw);
                w * ((p * p - r0 * r0) * p * physics.phi.derivative(mw) / mw)
            } else {
                Complex64::new(0.0, 0.0)
            };
            let dv = vals[j] - uv[j];
            let pz = dv * (pen * physics.phi.derivative(dv.norm_sqr() / (32.0 * r0)));
            *o = (-lap + hz * (2.0 * a2) + pz) * 2.0;
        }
    });
    ComplexField::from_values(g.clone(), out).expect("finite gradient")
}

/// Outcome of [`g_minimize`].
#[derive(Clone, Debug, serde::Serialize)]
pub struct RegularizeOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub g_initial: f64,
    pub g_final: f64,
    pub gradient_ratio: f64,
}

/// Preconditioned descent on `G` from `v = u` with Armijo backtracking, so
/// `G(v_h) ≤ G(u) = E_GL^Ω(u)`.
pub fn g_minimize(
    u: &ComplexField,
    cfg: &RegularizeConfig,
    physics: &Physics,
) -> Result<(ComplexField, RegularizeOutcome)> {
    let grid = u.grid().clone();
    let omega = cfg.omega_for(&grid)?;
    let h = cfg.h;
    let nodes = omega.nodes(&grid);
    let sub = omega.sub_grid(&grid);
    let mu = 1.0 + 1.0 / (32.0 * physics.r0() * h * h);
    let pc = SpectralPreconditioner::new(&sub, mu, &vec![1.0; grid.dim()]);
    let precondition = |gr: &ComplexField| -> ComplexField {
        let mut buf: Vec<Complex64> = nodes.iter().map(|&j| gr.values()[j]).collect();
        pc.apply(&mut buf);
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (&j, z) in nodes.iter().zip(buf) {
            out[j] = z * 0.5;
        }
        ComplexField::from_values(grid.clone(), out).expect("finite direction")
    };
    let mut v = u.clone();
    let g0 = g_value(u, &v, physics, h, &omega);
    let mut gv = g0;
    let mut grad = g_gradient(u, &v, physics, h, &omega);
    let norm0 = grad.norm_l2();
    let mut tau = 1.0;
    let mut iterations = 0;
    let mut converged = norm0 == 0.0;
    let mut ratio = if norm0 == 0.0 { 0.0 } else { 1.0 };
    while !converged && iterations < cfg.max_iters {
        let d = precondition(&grad);
        let slope = grad.dot(&d);
        let mut accepted = false;
        for _ in 0..50 {
            let mut w = v.clone();
            w.axpy(-tau, d.values());
            let gw = g_value(u, &w, physics, h, &omega);
            if gw <= gv - 1e-4 * tau * slope {
                v = w;
                gv = gw;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        tau = (tau * 1.5).min(4.0);
        grad = g_gradient(u, &v, physics, h, &omega);
        ratio = grad.norm_l2() / norm0;
        converged = ratio <= cfg.tol;
    }
    if gv > g0 {
        return Err(Error::Invariant(format!("descent increased G from {g0} to {gv}")));
    }
    Ok((v, RegularizeOutcome { iterations, converged, g_initial: g0, g_final: gv, gradient_ratio: ratio }))
}

/// Properties of a regularized field relative to its source.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RegularizeAudit {
    pub h: f64,
    pub e_gl_u: f64,
    pub e_gl_v: f64,
    /// `E_GL^Ω(u) - E_GL^Ω(v_h)`.
    pub e_gl_drop: f64,
    /// `‖v_h - u‖²_{L²(Ω)}`.
    pub l2_sq: f64,
    /// `‖v_h - u‖² / h²`.
    pub l2_sq_over_h2: f64,
    /// `∫_Ω |(φ²(|r0-u|)-r0²)² - (φ²(|r0-v_h|)-r0²)²|`.
    pub potential_drift: f64,
    pub q_u: f64,
    pub q_v: f64,
    pub q_drift: f64,
    /// Fraction of interior nodes of `Ω` with `||r0 - v_h| - r0| < r0/2`.
    pub pinch_fraction: f64,
}

impl RegularizeAudit {
    pub fn csv_header() -> &'static str {
        "h,e_gl_u,e_gl_v,e_gl_drop,l2_sq,l2_sq_over_h2,potential_drift,q_u,q_v,q_drift,pinch_fraction"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.h,
            self.e_gl_u,
            self.e_gl_v,
            self.e_gl_drop,
            self.l2_sq,
            self.l2_sq_over_h2,
            self.potential_drift,
            self.q_u,
            self.q_v,
            self.q_drift,
            self.pinch_fraction
        )
    }
}

pub fn g_audit(
    u: &ComplexField,
    v: &ComplexField,
    cfg: &RegularizeConfig,
    physics: &Physics,
) -> Result<RegularizeAudit> {
    let grid = u.grid();
    let omega = cfg.omega_for(grid)?;
    let r0 = physics.r0();
    let e_u = e_gl_omega(u, physics, &omega);
    let e_v = e_gl_omega(v, physics, &omega);
    let mut idx = vec![0usize; grid.dim()];
    let mut l2 = vec![0.0; grid.len()];
    let mut drift = vec![0.0; grid.len()];
    let mut interior = 0usize;
    let mut pinched = 0usize;
    let gl = |z: Complex64| {
        let p = physics.phi.value((Complex64::new(r0, 0.0) - z).norm());
        let t = p * p - r0 * r0;
        t * t
    };
    for j in 0..grid.len() {
        grid.unflatten(j, &mut idx);
        if !omega.contains(&idx) {
            continue;
        }
        let (a, b) = (u.values()[j], v.values()[j]);
        l2[j] = (b - a).norm_sqr();
        drift[j] = (gl(a) - gl(b)).abs();
        let inner = idx.iter().zip(&omega.lo).zip(&omega.hi).all(|((&i, &l), &h)| i > l && i + 1 < h);
        if inner {
            interior += 1;
            if ((Complex64::new(r0, 0.0) - b).norm() - r0).abs() < 0.5 * r0 {
                pinched += 1;
            }
        }
    }
    let l2_sq = grid.integrate(&l2);
    let q_u = momentum_simple(u);
    let q_v = momentum_simple(v);
    Ok(RegularizeAudit {
        h: cfg.h,
        e_gl_u: e_u,
        e_gl_v: e_v,
        e_gl_drop: e_u - e_v,
        l2_sq,
        l2_sq_over_h2: l2_sq / (cfg.h * cfg.h),
        potential_drift: grid.integrate(&drift),
        q_u,
        q_v,
        q_drift: (q_u - q_v).abs(),
        pinch_fraction: if interior == 0 { 1.0 } else { pinched as f64 / interior as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::e_gl;
    use crate::nonlinearity::NonlinearityModel;
    use approx::assert_relative_eq;

    fn physics() -> Physics {
        Physics::new(NonlinearityModel::gross_pitaevskii())
    }

    fn field(n: usize) -> ComplexField {
        let g = Grid::with_half_width(3, n, 4.0).unwrap();
        ComplexField::sample(g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new(0.8, 0.5 * x[0]) * (-r2 / 2.0).exp()
        })
    }

    #[test]
    fn whole_box_energy_matches_e_gl() {
        let u = field(16);
        let p = physics();
        let om = IndexBox::whole(u.grid());
        assert_relative_eq!(e_gl_omega(&u, &p, &om), e_gl(&u, &p.model, &p.phi), max_relative = 1e-12);
        assert_relative_eq!(g_value(&u, &u, &p, 0.3, &om), e_gl(&u, &p.model, &p.phi), max_relative = 1e-12);
    }

    #[test]
    fn penalty_is_bounded_by_plateau() {
        let u = field(12);
        let p = physics();
        let om = IndexBox::whole(u.grid());
        let v = ComplexField::sample(u.grid().clone(), |_| Complex64::new(40.0, -30.0));
        let pen = g_value(&u, &v, &p, 0.5, &om) - e_gl_omega(&v, &p, &om);
        let vol = u.grid().cell_volume() * u.grid().len() as f64;
        assert!(pen <= 3.0 * p.r0() / 0.25 * vol * (1.0 + 1e-12));
    }

    #[test]
    fn gradient_matches_directional_derivative() {
        let u = field(14);
        let p = physics();
        let g = u.grid().clone();
        let om = IndexBox { lo: vec![2, 3, 1], hi: vec![12, 13, 11] };
        let mut v = u.clone();
        let bump = ComplexField::sample(g.clone(), |x| Complex64::new(0.7 * x[1], -0.4) * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 3.0).exp());
        let mut idx = vec![0; 3];
        let mut w = vec![Complex64::new(0.0, 0.0); g.len()];
        for j in 0..g.len() {
            g.unflatten(j, &mut idx);
            if om.contains(&idx) {
                w[j] = bump.values()[j];
            }
        }
        v.axpy(1.0, &w);
        let dir = ComplexField::from_values(g.clone(), w.iter().map(|z| z * Complex64::new(0.3, 0.9)).collect()).unwrap();
        let h = 0.3;
        let grad = g_gradient(&u, &v, &p, h, &om);
        let t = 1e-5;
        let mut vp = v.clone();
        vp.axpy(t, dir.values());
        let mut vm = v.clone();
        vm.axpy(-t, dir.values());
        let fd = (g_value(&u, &vp, &p, h, &om) - g_value(&u, &vm, &p, h, &om)) / (2.0 * t);
        assert_relative_eq!(grad.dot(&dir), fd, max_relative = 1e-6);
    }

    #[test]
    fn zero_field_is_fixed() {
        let g = Grid::cube(3, 10, 0.5).unwrap();
        let u = ComplexField::zeros(g);
        let (v, out) = g_minimize(&u, &RegularizeConfig::default(), &physics()).unwrap();
        assert!(v.is_zero());
        assert!(out.converged);
        let audit = g_audit(&u, &v, &RegularizeConfig::default(), &physics()).unwrap();
        assert_eq!(audit.e_gl_drop, 0.0);
        assert_eq!(audit.l2_sq, 0.0);
        assert_eq!(audit.q_drift, 0.0);
    }

    #[test]
    fn descent_lowers_energy() {
        let u = field(16);
        let p = physics();
        let cfg = RegularizeConfig { h: 0.3, max_iters: 200, ..Default::default() };
        let (v, out) = g_minimize(&u, &cfg, &p).unwrap();
        assert!(out.g_final <= out.g_initial);
        let a = g_audit(&u, &v, &cfg, &p).unwrap();
        assert!(a.e_gl_v <= a.e_gl_u);
        assert!(a.l2_sq > 0.0);
    }

    #[test]
    fn rejects_bad_omega() {
        let g = Grid::cube(3, 10, 0.5).unwrap();
        let cfg = RegularizeConfig { omega: Some(IndexBox { lo: vec![0, 0, 0], hi: vec![5, 10, 10] }), ..Default::default() };
        assert!(cfg.omega_for(&g).is_err());
        let cfg = RegularizeConfig { h: 0.0, ..Default::default() };
        assert!(cfg.omega_for(&g).is_err());
    }
}
