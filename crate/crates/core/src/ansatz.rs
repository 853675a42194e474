//! Compactly supported vortex-ring test fields
//! `w_{A,R,ε} = r0(1 - ψ^{R,ε} e^{iθ^{A,R}})` and their explicit bounds.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::functionals::{self, Physics};
use crate::grid::{ComplexField, Grid};

/// Parameters `(A, R, ε)` of the ring and the modulus `r0` at infinity.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnsatzSpec {
    pub a: f64,
    pub r: f64,
    pub eps: f64,
    pub r0: f64,
}

impl AnsatzSpec {
    pub fn new(a: f64, r: f64, eps: f64, r0: f64) -> Result<Self> {
        if !(r > 0.0 && a > 0.0 && r0 > 0.0) {
            return Err(Error::Config(format!("ansatz needs A, R, r0 > 0 (A={a}, R={r}, r0={r0})")));
        }
        if !(eps > 0.0 && eps < 0.5 * r) {
            return Err(Error::Config(format!("ansatz needs 0 < eps < R/2 (R={r}, eps={eps})")));
        }
        Ok(Self { a, r, eps, r0 })
    }

    /// `v^{R,ε} = w_{R,R,ε}`.
    pub fn ring(r: f64, eps: f64, r0: f64) -> Result<Self> {
        Self::new(r, r, eps, r0)
    }

    /// Half-extents of the support along `x₁` and in `|x'|`.
    pub fn support(&self) -> (f64, f64) {
        (self.a.max(2.0 * self.eps), self.r + 2.0 * self.eps)
    }

    /// Phase `θ^{A,R}`. Nodes on the cone boundary take the inside branch.
    pub fn theta(&self, x: &[f64]) -> f64 {
        let rho = transverse_radius(x);
        if rho >= self.r {
            return 0.0;
        }
        let half = self.a * (self.r - rho) / self.r;
        if x[0] < -half {
            0.0
        } else if x[0] > half {
            2.0 * PI
        } else {
            PI * self.r / (self.a * (self.r - rho)) * x[0] + PI
        }
    }

    /// `ψ(dist(x, ring)/ε)`.
    pub fn psi(&self, x: &[f64]) -> f64 {
        let rho = transverse_radius(x);
        let d = (x[0] * x[0] + (rho - self.r) * (rho - self.r)).sqrt();
        step(d / self.eps)
    }

    /// `w(x)`, the deviation `u` from the constant state.
    pub fn value(&self, x: &[f64]) -> Complex64 {
        let psi = self.psi(x);
        if psi == 1.0 {
            let th = self.theta(x);
            if th == 0.0 || th == 2.0 * PI {
                return Complex64::new(0.0, 0.0);
            }
            return self.r0 * (1.0 - Complex64::from_polar(1.0, th));
        }
        self.r0 * (1.0 - Complex64::from_polar(psi, self.theta(x)))
    }

    /// Endpoints `-2π r0² ω_{N-1} R^{N-1}` and `-2π r0² ω_{N-1} (R-2ε)^{N-1}`
    /// of the momentum bracket.
    pub fn momentum_bounds(&self, dim: usize) -> (f64, f64) {
        let k = dim as i32 - 1;
        let base = 2.0 * PI * self.r0 * self.r0 * unit_ball_volume(dim - 1);
        (-base * self.r.powi(k), -base * (self.r - 2.0 * self.eps).powi(k))
    }
}

fn transverse_radius(x: &[f64]) -> f64 {
    x[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Smooth step: 0 on `(-∞, 1]`, 1 on `[2, ∞)`, quintic smoothstep between.
pub fn step(s: f64) -> f64 {
    if s <= 1.0 {
        0.0
    } else if s >= 2.0 {
        1.0
    } else {
        let t = s - 1.0;
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

/// Volume of the unit ball of `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Samples `w_{A,R,ε}` on `grid`. The support plus one cell must fit inside
/// the outermost nodes.
pub fn vortex_field(spec: &AnsatzSpec, grid: &Grid) -> Result<ComplexField> {
    let (s1, sp) = spec.support();
    for axis in 0..grid.dim() {
        let need = if axis == 0 { s1 } else { sp };
        let have = grid.half_width(axis) - grid.spacing()[axis];
        if have < need {
            return Err(Error::Config(format!(
                "ansatz support {need} exceeds grid half-width {} on axis {axis} (one cell margin)",
                grid.half_width(axis)
            )));
        }
    }
    let s = *spec;
    Ok(ComplexField::sample(grid.clone(), move |x| s.value(x)))
}

/// Cube grid with spacing `h` just large enough for `spec` plus `margin`.
pub fn fitted_grid(spec: &AnsatzSpec, dim: usize, h: f64, margin: f64) -> Result<Grid> {
    let (s1, sp) = spec.support();
    let hw = s1.max(sp) + margin;
    let n = (2.0 * hw / h).ceil() as usize + 1;
    Grid::cube(dim, n.max(8), h)
}

/// Functionals of one ansatz and the momentum bracket check.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct AnsatzBoundsRow {
    pub r: f64,
    pub eps: f64,
    pub kinetic: f64,
    pub e_pot: f64,
    pub gl_potential: f64,
    pub q: f64,
    pub e_c: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub q_in_bounds: bool,
}

impl AnsatzBoundsRow {
    pub fn csv_header() -> &'static str {
        "R,eps,kinetic,e_pot,gl_potential,q,e_c,q_lo,q_hi,q_in_bounds"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.r,
            self.eps,
            self.kinetic,
            self.e_pot,
            self.gl_potential,
            self.q,
            self.e_c,
            self.q_lo,
            self.q_hi,
            self.q_in_bounds
        )
    }

    /// `kinetic / (R^{N-2} (1 + ln(R/ε)))`.
    pub fn kinetic_ratio(&self, dim: usize) -> f64 {
        self.kinetic / (self.r.powi(dim as i32 - 2) * (1.0 + (self.r / self.eps).ln()))
    }

    /// `|e_pot| / (ε² R^{N-2})`.
    pub fn potential_ratio(&self, dim: usize) -> f64 {
        self.e_pot.abs() / (self.eps * self.eps * self.r.powi(dim as i32 - 2))
    }

    /// `gl_potential / (ε² R^{N-2})`.
    pub fn gl_ratio(&self, dim: usize) -> f64 {
        self.gl_potential / (self.eps * self.eps * self.r.powi(dim as i32 - 2))
    }
}

/// Relative slack on the momentum bracket.
pub const Q_SLACK: f64 = 0.03;

/// Evaluates the ansatz on `grid` and checks the momentum bracket widened by
/// [`Q_SLACK`].
pub fn bounds_row(spec: &AnsatzSpec, grid: &Grid, c: f64, physics: &Physics) -> Result<AnsatzBoundsRow> {
    let u = vortex_field(spec, grid)?;
    let rep = physics.report(&u, c)?;
    let (lo, hi) = spec.momentum_bounds(grid.dim());
    Ok(AnsatzBoundsRow {
        r: spec.r,
        eps: spec.eps,
        kinetic: rep.kinetic_x1 + rep.a_transverse,
        e_pot: rep.e_pot,
        gl_potential: rep.gl_potential,
        q: rep.q,
        e_c: rep.e_c,
        q_lo: lo,
        q_hi: hi,
        q_in_bounds: rep.q >= lo * (1.0 + Q_SLACK) && rep.q <= hi * (1.0 - Q_SLACK),
    })
}

/// Sweep outcome: one row per `(R, ε)` and the ratio-stability verdicts.
#[derive(Clone, Debug, serde::Serialize)]
pub struct AnsatzBoundsReport {
    pub rows: Vec<AnsatzBoundsRow>,
    /// Every row satisfies the momentum bracket.
    pub momentum_pass: bool,
    /// For every pair `R, 2R` at equal `ε`, the potential ratios differ by
    /// less than a factor 2.
    pub potential_ratio_pass: bool,
    /// Same for the GL potential.
    pub gl_ratio_pass: bool,
    /// Spread `max/min` of the kinetic ratio across the sweep.
    pub kinetic_ratio_spread: f64,
}

/// Runs [`bounds_row`] over `(R, ε)` pairs; `grid_for` supplies the grid
/// for each spec.
pub fn verify_bounds(
    params: &[(f64, f64)],
    dim: usize,
    c: f64,
    physics: &Physics,
    grid_for: impl Fn(&AnsatzSpec) -> Result<Grid>,
) -> Result<AnsatzBoundsReport> {
    let mut rows = Vec::with_capacity(params.len());
    for &(r, eps) in params {
        let spec = AnsatzSpec::ring(r, eps, physics.r0())?;
        let grid = grid_for(&spec)?;
        if grid.dim() != dim {
            return Err(Error::Config("grid dimension does not match sweep".into()));
        }
        rows.push(bounds_row(&spec, &grid, c, physics)?);
    }
    let momentum_pass = rows.iter().all(|r| r.q_in_bounds);
    let mut potential_ratio_pass = true;
    let mut gl_ratio_pass = true;
    for a in &rows {
        for b in &rows {
            if b.eps == a.eps && (b.r - 2.0 * a.r).abs() < 1e-12 {
                let f = |x: f64, y: f64| x.max(y) / x.min(y).max(f64::MIN_POSITIVE);
                potential_ratio_pass &= f(a.potential_ratio(dim), b.potential_ratio(dim)) < 2.0;
                gl_ratio_pass &= f(a.gl_ratio(dim), b.gl_ratio(dim)) < 2.0;
            }
        }
    }
    let kr: Vec<f64> = rows.iter().map(|r| r.kinetic_ratio(dim)).collect();
    let kmax = kr.iter().cloned().fold(f64::MIN, f64::max);
    let kmin = kr.iter().cloned().fold(f64::MAX, f64::min);
    Ok(AnsatzBoundsReport {
        rows,
        momentum_pass,
        potential_ratio_pass,
        gl_ratio_pass,
        kinetic_ratio_spread: if kr.is_empty() { 1.0 } else { kmax / kmin },
    })
}

/// Doubles `R` from `r_start` at fixed `ε` until the ansatz has `E_c < 0`.
/// Returns `(R, E_c)`, or `None` after `max_doublings`.
pub fn negative_energy_radius(
    physics: &Physics,
    dim: usize,
    c: f64,
    eps: f64,
    r_start: f64,
    h: f64,
    max_doublings: usize,
) -> Result<Option<(f64, f64)>> {
    let mut r = r_start;
    for _ in 0..=max_doublings {
        let spec = AnsatzSpec::ring(r, eps, physics.r0())?;
        let grid = fitted_grid(&spec, dim, h, 2.0 * h)?;
        let u = vortex_field(&spec, &grid)?;
        let e_c = functionals::fast_report(&u, c, &physics.model, &physics.phi)?.e_c;
        if e_c < 0.0 {
            return Ok(Some((r, e_c)));
        }
        r *= 2.0;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spec_validation() {
        assert!(AnsatzSpec::ring(6.0, 3.0, 1.0).is_err());
        assert!(AnsatzSpec::ring(6.0, 0.0, 1.0).is_err());
        assert!(AnsatzSpec::ring(6.0, 2.9, 1.0).is_ok());
    }

    #[test]
    fn theta_branches() {
        let s = AnsatzSpec::ring(6.0, 1.0, 1.0).unwrap();
        assert_eq!(s.theta(&[-100.0, 1.0, 0.0]), 0.0);
        assert_eq!(s.theta(&[0.0, 1.0, 2.0]), PI);
        assert_eq!(s.theta(&[100.0, 0.0, 1.0]), 2.0 * PI);
        assert_eq!(s.theta(&[0.0, 6.0, 0.0]), 0.0);
        // Ramp endpoints are continuous with the outer branches.
        let half = 6.0 * (6.0 - 3.0) / 6.0;
        assert_relative_eq!(s.theta(&[half, 3.0, 0.0]), 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(s.theta(&[-half, 0.0, 3.0]), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn psi_values() {
        let s = AnsatzSpec::ring(6.0, 1.0, 1.0).unwrap();
        assert_eq!(s.psi(&[0.0, 6.0, 0.0]), 0.0);
        assert_eq!(s.psi(&[0.0, 0.0, 8.0]), 1.0);
        assert_eq!(s.psi(&[1.5, 6.0, 0.0]), 0.5);
        // 0 ≤ ψ' ≤ 2 on a fine sweep.
        let mut prev = step(0.0);
        let ds = 1e-4;
        for i in 1..30000 {
            let v = step(i as f64 * ds);
            let slope = (v - prev) / ds;
            assert!((-1e-12..=2.0).contains(&slope));
            prev = v;
        }
    }

    #[test]
    fn field_values() {
        let s = AnsatzSpec::ring(6.0, 1.0, 1.0).unwrap();
        assert_eq!(s.value(&[-20.0, 0.0, 0.0]), Complex64::new(0.0, 0.0));
        assert_eq!(s.value(&[0.0, 0.0, 20.0]), Complex64::new(0.0, 0.0));
        assert_eq!(s.value(&[0.0, 6.0, 0.0]), Complex64::new(1.0, 0.0));
        // On the axis inside the cone θ = π + πx₁/A, ψ = 1.
        let v = s.value(&[0.0, 0.0, 0.0]);
        assert_relative_eq!(v.re, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn unit_balls() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert_relative_eq!(unit_ball_volume(2), PI, epsilon = 1e-15);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-15);
        assert_relative_eq!(unit_ball_volume(4), PI * PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn momentum_bound_endpoints() {
        let s = AnsatzSpec::ring(6.0, 1.0, 1.0).unwrap();
        let (lo, hi) = s.momentum_bounds(3);
        assert_relative_eq!(lo, -710.6115, epsilon = 1e-3);
        assert_relative_eq!(hi, -315.8273, epsilon = 1e-3);
    }

    #[test]
    fn support_check() {
        let s = AnsatzSpec::ring(6.0, 1.0, 1.0).unwrap();
        let small = Grid::with_half_width(3, 32, 7.5).unwrap();
        assert!(matches!(vortex_field(&s, &small), Err(Error::Config(_))));
        let g = fitted_grid(&s, 3, 0.5, 1.0).unwrap();
        let u = vortex_field(&s, &g).unwrap();
        assert_eq!(u.boundary_max(), 0.0);
        for z in u.values() {
            assert!((Complex64::new(1.0, 0.0) - z).norm() <= 1.0 + 1e-14);
        }
    }
}
