//! Pohozaev projection, constrained minimization of the transverse kinetic
//! energy (or of `E_c`) on the Pohozaev set, Euler–Lagrange residuals and the
//! axial-symmetry diagnostic.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::functionals::{self, fast_report, functional_gradient, pohozaev_weight, FunctionalReport, Physics, Weights};
use crate::grid::{dilate_by_spacing, ComplexField, DilationSpec, Grid};
use crate::nonlinearity::NonlinearityModel;
use crate::spectral::SpectralPreconditioner;

/// Root in `(0, 1]` of `K₂σ² + cQσ + K₁ = 0`, the value of the Pohozaev
/// functional of `u_{σ,1}` times `σ`, given `K₁ > 0` and `K₁ + K₂ + cQ ≤ 0`.
pub fn solve_projection(k1: f64, k2: f64, cq: f64) -> Result<f64> {
    let f = |s: f64| (k2 * s + cq) * s + k1;
    if !(k1 > 0.0) {
        return Err(Error::ProjectionInfeasible(format!("x1 kinetic energy {k1} is not positive")));
    }
    let p1 = f(1.0);
    if p1 == 0.0 {
        return Ok(1.0);
    }
    if p1 > 0.0 {
        return Err(Error::ProjectionInfeasible(format!(
            "Pohozaev functional {p1} is positive; no root in (0, 1]"
        )));
    }
    // f(0) > 0 > f(1): exactly one root in (0, 1).
    let mut s = if k2 == 0.0 {
        -k1 / cq
    } else {
        let disc = cq * cq - 4.0 * k1 * k2;
        let q = -0.5 * (cq + cq.signum() * disc.max(0.0).sqrt());
        let roots = [q / k2, if q != 0.0 { k1 / q } else { f64::NAN }];
        roots
            .into_iter()
            .filter(|r| r.is_finite() && *r > 0.0 && *r <= 1.0)
            .min_by(|a, b| f(*a).abs().total_cmp(&f(*b).abs()))
            .ok_or_else(|| Error::ProjectionInfeasible("no root in (0, 1]".into()))?
    };
    for _ in 0..2 {
        let d = 2.0 * k2 * s + cq;
        if d != 0.0 {
            let t = s - f(s) / d;
            if t > 0.0 && t <= 1.0 && f(t).abs() <= f(s).abs() {
                s = t;
            }
        }
    }
    Ok(s)
}

/// Projection factor `σ₀` for a report: `1` when `P_c = 0`, otherwise the
/// root of [`solve_projection`].
pub fn project_sigma(report: &FunctionalReport) -> Result<f64> {
    if report.p_c == 0.0 {
        return Ok(1.0);
    }
    let k2 = report.pohozaev_weight() * report.a_transverse + report.e_pot;
    solve_projection(report.kinetic_x1, k2, report.c * report.q)
}

/// `P_c(u_{σ,1})` predicted from the report of `u`.
pub fn predicted_p_c(report: &FunctionalReport, sigma: f64) -> f64 {
    let k2 = report.pohozaev_weight() * report.a_transverse + report.e_pot;
    report.kinetic_x1 / sigma + sigma * k2 + report.c * report.q
}

/// `u_{σ,1}` by relabelling the `x₁` spacing (exact for every discrete
/// functional).
pub fn apply_projection(u: &ComplexField, sigma: f64) -> ComplexField {
    dilate_by_spacing(u, DilationSpec { lambda: sigma, sigma: 1.0 })
}

/// `2(-Δu + ic∂₁u + F(|r0-u|²)(r0-u))`, the L² gradient of `E_c`.
pub fn el_gradient(u: &ComplexField, c: f64, model: &NonlinearityModel) -> Result<ComplexField> {
    functional_gradient(u, c, model, Weights::E_C)
}

/// `‖-Δu + ic∂₁u + F(r0-u)‖ / (‖Δu‖ + c‖∂₁u‖ + ‖F(r0-u)‖)`.
pub fn relative_residual(u: &ComplexField, c: f64, model: &NonlinearityModel) -> Result<f64> {
    let full = el_gradient(u, c, model)?.norm_l2();
    let lap = functional_gradient(u, c, model, Weights { x1: 1.0, perp: 1.0, momentum: 0.0, potential: 0.0 })?.norm_l2();
    let mom = functional_gradient(u, c, model, Weights { x1: 0.0, perp: 0.0, momentum: 1.0, potential: 0.0 })?.norm_l2();
    let pot = functional_gradient(u, c, model, Weights { x1: 0.0, perp: 0.0, momentum: 0.0, potential: 1.0 })?.norm_l2();
    let scale = lap + mom + pot;
    Ok(if scale == 0.0 { 0.0 } else { full / scale })
}

/// The two Pohozaev combinations and the `x₁`-dilation identity.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct PohozaevResiduals {
    /// `P_c(u)`.
    pub p_c: f64,
    /// `N ≥ 4`: `((N-3)/(N-1))² A + B_c`. `N = 3`: `B_c / D`.
    pub second: f64,
    /// `K₁ - A - ∫V`, which vanishes on solutions by stationarity under
    /// `x₁`-dilations.
    pub x1_identity: f64,
    /// `E_GL(u)`, the scale for `p_c` and `x1_identity`.
    pub scale: f64,
}

impl PohozaevResiduals {
    /// `(|P_c|/E_GL, |second|/scale)`, where the second scale is `1` for
    /// `N = 3` (already normalized) and `E_GL` otherwise.
    pub fn relative(&self, dim: usize) -> (f64, f64) {
        let s = if self.scale > 0.0 { self.scale } else { 1.0 };
        let second = if dim == 3 { self.second.abs() } else { self.second.abs() / s };
        (self.p_c.abs() / s, second)
    }
}

pub fn pohozaev_residuals(report: &FunctionalReport) -> PohozaevResiduals {
    let w = report.pohozaev_weight();
    let second = if report.dim == 3 {
        if report.d_long > 0.0 {
            report.b_c / report.d_long
        } else {
            0.0
        }
    } else {
        w * w * report.a_transverse + report.b_c
    };
    PohozaevResiduals {
        p_c: report.p_c,
        second,
        x1_identity: report.kinetic_x1 - report.a_transverse - report.e_pot,
        scale: report.e_gl,
    }
}

/// Settings of [`minimize`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeConfig {
    /// Speed `c ∈ (0, v_s)`; not read from configuration files, where the
    /// run-level speed applies.
    #[serde(skip)]
    pub c: f64,
    pub max_iters: usize,
    /// Initial step; `0` selects `1` with the preconditioner and `1e-2 h²`
    /// without it.
    pub step0: f64,
    pub armijo_shrink: f64,
    pub armijo_slope: f64,
    pub tol_residual: f64,
    /// Target for `|constraint| / E_GL`.
    pub tol_constraint: f64,
    /// Iterations between convergence checks and exact `x₁`-reprojections.
    pub project_every: usize,
    /// Use the sine-transform preconditioner.
    pub precondition: bool,
    /// Mass term of the preconditioner.
    pub mu: f64,
    /// Iterations allowed to reach the negative side of the constraint when
    /// the seed has `P_c > 0`.
    pub feasibility_iters: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            c: 0.5 * std::f64::consts::SQRT_2,
            max_iters: 20_000,
            step0: 0.0,
            armijo_shrink: 0.5,
            armijo_slope: 1e-4,
            tol_residual: 1e-3,
            tol_constraint: 1e-4,
            project_every: 10,
            precondition: true,
            mu: 1.0,
            feasibility_iters: 2_000,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self, model: &NonlinearityModel) -> Result<()> {
        if !(self.c > 0.0 && self.c < model.v_s()) {
            return Err(Error::Config(format!(
                "speed c = {} must be subsonic: 0 < c < v_s = {}",
                self.c,
                model.v_s()
            )));
        }
        if !(self.tol_residual > 0.0 && self.tol_constraint > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0 && self.armijo_slope > 0.0 && self.armijo_slope < 1.0) {
            return Err(Error::Config("Armijo parameters must lie in (0, 1)".into()));
        }
        if self.project_every == 0 || self.max_iters == 0 {
            return Err(Error::Config("max_iters and project_every must be positive".into()));
        }
        if !(self.mu > 0.0) || self.step0 < 0.0 {
            return Err(Error::Config("mu must be positive and step0 nonnegative".into()));
        }
        Ok(())
    }
}

/// One accepted iteration.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub e_c: f64,
    pub a: f64,
    /// `P_c` (equal to `B_c` when `N = 3`).
    pub constraint: f64,
    /// Relative Euler–Lagrange residual after the terminal rescale, at
    /// check iterations; `NaN` otherwise.
    pub residual: f64,
    pub step: f64,
    /// Dilation factor applied at this iteration (`1` if none).
    pub sigma_applied: f64,
}

impl TraceRow {
    pub fn csv_header() -> &'static str {
        "iter,e_c,a,constraint,residual,step,sigma_applied"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            self.iter, self.e_c, self.a, self.constraint, self.residual, self.step, self.sigma_applied
        )
    }
}

/// History and outcome of [`minimize`].
#[derive(Clone, Debug, serde::Serialize)]
pub struct MinimizeTrace {
    pub rows: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
    /// Multiplier `α` with `A'(u) = α P_c'(u)` at the end of the descent.
    pub alpha: f64,
    /// Transverse factor of the terminal rescale.
    pub sigma_final: f64,
    /// Relative Euler–Lagrange residual of the returned field.
    pub residual: f64,
    pub report: FunctionalReport,
    pub pohozaev: PohozaevResiduals,
    /// `E_c` of the returned field.
    pub t_c_estimate: f64,
    /// Accepted iterates with `P_c < 0` and `A ≤ (N-1)/2 · t_c_estimate`
    /// beyond tolerance.
    pub lower_bound_warnings: usize,
}

/// Objective weights: `A` for `N = 3`, `E_c` otherwise.
fn objective(dim: usize) -> Weights {
    if dim == 3 {
        Weights::A
    } else {
        Weights::E_C
    }
}

/// `α` for `A' = αP_c'` from the fitted multiplier `λ` of the objective.
fn alpha_from_lambda(dim: usize, lambda: f64) -> f64 {
    if dim == 3 {
        lambda
    } else {
        0.5 * (dim as f64 - 1.0) * (lambda - 1.0)
    }
}

/// Transverse factor `σ₀ = ((N-3)/(N-1) - 1/α)^{-1/2}`.
pub fn terminal_sigma(dim: usize, alpha: f64) -> Result<f64> {
    let t = pohozaev_weight(dim) - 1.0 / alpha;
    if !(alpha < 0.0 && t > 0.0) {
        return Err(Error::Invariant(format!("multiplier alpha = {alpha} is not negative")));
    }
    Ok(t.powf(-0.5))
}

/// Fits `α` on the probe direction `∇A` and returns it with the rescaled
/// field `u_{1,σ₀}` and its relative residual.
fn terminal_candidate(u: &ComplexField, c: f64, model: &NonlinearityModel) -> Result<(f64, f64, ComplexField, f64)> {
    let dim = u.grid().dim();
    let ga = functional_gradient(u, c, model, Weights::A)?;
    let gp = functional_gradient(u, c, model, Weights::p_c(dim))?;
    let den = gp.dot(&ga);
    if den == 0.0 {
        return Err(Error::Invariant("probe direction is orthogonal to the constraint gradient".into()));
    }
    let alpha = ga.dot(&ga) / den;
    let sigma = terminal_sigma(dim, alpha)?;
    let v = dilate_by_spacing(u, DilationSpec { lambda: 1.0, sigma });
    let res = relative_residual(&v, c, model)?;
    Ok((alpha, sigma, v, res))
}

struct Evaluator<'a> {
    physics: &'a Physics,
    c: f64,
    obj: Weights,
    con: Weights,
}

impl Evaluator<'_> {
    fn report(&self, u: &ComplexField) -> Result<FunctionalReport> {
        fast_report(u, self.c, &self.physics.model, &self.physics.phi)
    }

    fn grads(&self, u: &ComplexField) -> Result<(ComplexField, ComplexField)> {
        Ok((
            functional_gradient(u, self.c, &self.physics.model, self.obj)?,
            functional_gradient(u, self.c, &self.physics.model, self.con)?,
        ))
    }
}

/// Moves `v` along `dir` until the constraint vanishes (secant iteration
/// from the first-order guess `-C/slope`).
fn restore(
    ev: &Evaluator<'_>,
    v: &ComplexField,
    dir: &ComplexField,
    slope: f64,
    target: f64,
) -> Result<Option<(ComplexField, FunctionalReport)>> {
    let rep0 = ev.report(v)?;
    let c0 = ev.con.evaluate(&rep0);
    if c0.abs() <= target {
        return Ok(Some((v.clone(), rep0)));
    }
    if slope == 0.0 {
        return Ok(None);
    }
    let (mut s_prev, mut c_prev) = (0.0, c0);
    let mut s = -c0 / slope;
    for _ in 0..8 {
        let mut w = v.clone();
        w.axpy(s, dir.values());
        let rep = match ev.report(&w) {
            Ok(r) => r,
            Err(Error::OutOfDomain { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let cs = ev.con.evaluate(&rep);
        if cs.abs() <= target {
            return Ok(Some((w, rep)));
        }
        if cs == c_prev {
            return Ok(None);
        }
        let next = s - cs * (s - s_prev) / (cs - c_prev);
        s_prev = s;
        c_prev = cs;
        s = next;
        if !s.is_finite() {
            return Ok(None);
        }
    }
    Ok(None)
}

/// Constrained descent. `N = 3`: minimize `A` on `{B_c = 0}`; `N ≥ 4`:
/// minimize `E_c` on `{P_c = 0}`. The returned field is the terminal
/// transverse rescale `u_{1,σ₀}` of the constrained minimizer.
///
/// Each iteration takes a preconditioned step along the projected gradient
/// `-P(∇O - λ∇C)`, restores the constraint along `P∇C`, and accepts by
/// Armijo backtracking on the objective. Seeds with `P_c < 0` are first
/// projected by an exact `x₁`-dilation; seeds with `P_c > 0` are first
/// brought onto the constraint by Gauss-Newton steps along `-P∇C`.
pub fn minimize(
    u0: &ComplexField,
    cfg: &MinimizeConfig,
    physics: &Physics,
) -> Result<(ComplexField, MinimizeTrace)> {
    cfg.validate(&physics.model)?;
    if u0.is_zero() {
        return Err(Error::Config("seed u0 = 0 is excluded from the constraint set".into()));
    }
    let dim = u0.grid().dim();
    let c = cfg.c;
    let model = &physics.model;
    let ev = Evaluator { physics, c, obj: objective(dim), con: Weights::p_c(dim) };
    let mut rows = Vec::new();
    let mut u = u0.clone();
    let mut rep = ev.report(&u)?;
    if rep.e_gl <= 0.0 {
        return Err(Error::Config("seed has zero Ginzburg-Landau energy".into()));
    }
    let tight = |rep: &FunctionalReport| 1e-3 * cfg.tol_constraint * rep.e_gl;
    let mut iter = 0usize;

    let precond = |g: &Grid, lam: f64| -> Option<SpectralPreconditioner> {
        if !cfg.precondition {
            return None;
        }
        let mut w = vec![1.0; dim];
        w[0] = lam.abs().clamp(0.1, 10.0);
        Some(SpectralPreconditioner::new(g, cfg.mu, &w))
    };
    let apply_p = |p: &Option<SpectralPreconditioner>, g: &ComplexField| -> ComplexField {
        match p {
            Some(p) => {
                let mut v = g.values().to_vec();
                p.apply(&mut v);
                ComplexField::from_values(g.grid().clone(), v).expect("preconditioner keeps values finite")
            }
            None => g.clone(),
        }
    };
    let hmin = u.grid().spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let base_step = if cfg.step0 > 0.0 {
        cfg.step0
    } else if cfg.precondition {
        1.0
    } else {
        1e-2 * hmin * hmin
    };

    // Seeds on the positive side: damped Gauss-Newton steps on the
    // constraint, with fresh gradients, until it vanishes.
    if ev.con.evaluate(&rep) > tight(&rep) {
        let p = precond(u.grid(), 1.0);
        while ev.con.evaluate(&rep) > tight(&rep) {
            let con = ev.con.evaluate(&rep);
            if iter >= cfg.feasibility_iters.min(cfg.max_iters) {
                return Err(Error::ProjectionInfeasible(format!(
                    "seed has P_c = {con} > 0 and restoration did not reach P_c = 0; enlarge R"
                )));
            }
            let g = functional_gradient(&u, c, model, ev.con)?;
            let d = apply_p(&p, &g);
            let slope = g.dot(&d);
            if slope <= 0.0 {
                return Err(Error::ProjectionInfeasible("constraint gradient vanished; enlarge R".into()));
            }
            let mut t = con / slope;
            let mut accepted = false;
            for _ in 0..40 {
                let mut v = u.clone();
                v.axpy(-t, d.values());
                if let Ok(r) = ev.report(&v) {
                    if ev.con.evaluate(&r).abs() < con && !v.is_zero() {
                        u = v;
                        rep = r;
                        accepted = true;
                        break;
                    }
                }
                t *= cfg.armijo_shrink;
            }
            if !accepted {
                return Err(Error::ProjectionInfeasible("constraint restoration stalled; enlarge R".into()));
            }
            iter += 1;
            rows.push(TraceRow {
                iter,
                e_c: rep.e_c,
                a: rep.a_transverse,
                constraint: ev.con.evaluate(&rep),
                residual: f64::NAN,
                step: t,
                sigma_applied: 1.0,
            });
        }
    }

    // Exact x₁ projection onto P_c = 0.
    let sigma0 = if ev.con.evaluate(&rep) < -tight(&rep) { project_sigma(&rep)? } else { 1.0 };
    if sigma0 != 1.0 {
        u = apply_projection(&u, sigma0);
        rep = ev.report(&u)?;
    }
    rows.push(TraceRow {
        iter,
        e_c: rep.e_c,
        a: rep.a_transverse,
        constraint: ev.con.evaluate(&rep),
        residual: f64::NAN,
        step: 0.0,
        sigma_applied: sigma0,
    });

    let mut tau = base_step;
    let mut lambda_prev = -1.0;
    let mut p = precond(u.grid(), lambda_prev);
    let mut converged = false;
    let (mut go, mut gc) = ev.grads(&u)?;
    while iter < cfg.max_iters {
        let pgc = apply_p(&p, &gc);
        let pgo = apply_p(&p, &go);
        let gcpgc = gc.dot(&pgc);
        if gcpgc <= 0.0 {
            return Err(Error::Invariant("constraint gradient vanished".into()));
        }
        let lambda = go.dot(&pgc) / gcpgc;
        let mut d = pgo.clone();
        d.axpy(-lambda, pgc.values());
        let mut lg = go.clone();
        lg.axpy(-lambda, gc.values());
        let decrease = lg.dot(&d);
        if iter % cfg.project_every == 0 {
            let (_, _, _, res) = terminal_candidate(&u, c, model)?;
            let feasible = ev.con.evaluate(&rep).abs() <= cfg.tol_constraint * rep.e_gl;
            if let Some(last) = rows.last_mut() {
                last.residual = res;
            }
            if res <= cfg.tol_residual && feasible {
                converged = true;
                break;
            }
            let lam_a = alpha_from_lambda(dim, lambda);
            if cfg.precondition && ((lam_a.abs() / lambda_prev.abs()).ln().abs() > 0.2) {
                lambda_prev = lam_a;
                p = precond(u.grid(), lambda_prev);
                continue;
            }
            let con = ev.con.evaluate(&rep);
            if con < 0.0 && con.abs() > cfg.tol_constraint * rep.e_gl {
                if let Ok(s) = project_sigma(&rep) {
                    u = apply_projection(&u, s);
                    rep = ev.report(&u)?;
                    p = precond(u.grid(), lambda_prev);
                    (go, gc) = ev.grads(&u)?;
                    continue;
                }
            }
        }
        let obj0 = ev.obj.evaluate(&rep);
        let mut accepted = None;
        for _ in 0..50 {
            let mut v = u.clone();
            v.axpy(-tau, d.values());
            let slope = gc.dot(&pgc);
            if let Some((w, r)) = restore(&ev, &v, &pgc, slope, tight(&rep))? {
                if ev.obj.evaluate(&r) <= obj0 - cfg.armijo_slope * tau * decrease {
                    accepted = Some((w, r));
                    break;
                }
            }
            tau *= cfg.armijo_shrink;
            if tau < 1e-14 * base_step {
                break;
            }
        }
        let Some((w, r)) = accepted else {
            break;
        };
        u = w;
        rep = r;
        iter += 1;
        rows.push(TraceRow {
            iter,
            e_c: rep.e_c,
            a: rep.a_transverse,
            constraint: ev.con.evaluate(&rep),
            residual: f64::NAN,
            step: tau,
            sigma_applied: 1.0,
        });
        tau = (tau * 1.5).min(base_step * 4.0);
        (go, gc) = ev.grads(&u)?;
    }

    let (alpha, sigma, v, res) = terminal_candidate(&u, c, model)?;
    let report = physics.report(&v, c)?;
    let pohozaev = pohozaev_residuals(&report);
    rows.push(TraceRow {
        iter,
        e_c: report.e_c,
        a: report.a_transverse,
        constraint: report.p_c,
        residual: res,
        step: 0.0,
        sigma_applied: sigma,
    });
    let t_c = report.e_c;
    let bound = 0.5 * (dim as f64 - 1.0) * t_c;
    let lower_bound_warnings = rows
        .iter()
        .filter(|r| r.constraint < 0.0 && r.a <= bound * (1.0 - cfg.tol_residual))
        .count();
    let trace = MinimizeTrace {
        rows,
        converged,
        iterations: iter,
        alpha,
        sigma_final: sigma,
        residual: res,
        report,
        pohozaev,
        t_c_estimate: t_c,
        lower_bound_warnings,
    };
    Ok((v, trace))
}

/// `‖u - angular mean‖ / ‖u‖` on rings about the `x₁` axis through the
/// transverse centroid of the Ginzburg–Landau energy density, sampled by
/// bilinear interpolation in each `x₁` plane.
pub fn axial_symmetry_deviation(u: &ComplexField, physics: &Physics) -> Result<f64> {
    let g = u.grid();
    if g.dim() != 3 {
        return Err(Error::Config("axial symmetry diagnostic needs N = 3".into()));
    }
    if u.is_zero() {
        return Ok(0.0);
    }
    let dens = functionals::gl_energy_density(u, &physics.model, &physics.phi);
    let total: f64 = dens.iter().sum();
    let mut centre = [0.0; 2];
    let mut x = [0.0; 3];
    for (j, &e) in dens.iter().enumerate() {
        g.point(j, &mut x);
        centre[0] += e * x[1];
        centre[1] += e * x[2];
    }
    centre[0] /= total;
    centre[1] /= total;
    let (h2, h3) = (g.spacing()[1], g.spacing()[2]);
    let r_max = (g.half_width(1) - centre[0].abs()).min(g.half_width(2) - centre[1].abs()) - h2.max(h3);
    let dr = h2.min(h3);
    let n_r = (r_max / dr).floor().max(0.0) as usize;
    let n_theta = ((2.0 * std::f64::consts::PI * r_max / dr).ceil() as usize).max(16);
    let n1 = g.sizes()[0];
    let (num, den): (f64, f64) = {
        use rayon::prelude::*;
        let parts: Vec<(f64, f64)> = (0..n1)
            .into_par_iter()
            .map(|i1| {
                let mut num = 0.0;
                let mut den = 0.0;
                let mut ring = vec![Complex64::new(0.0, 0.0); n_theta];
                for ir in 0..=n_r {
                    let r = ir as f64 * dr;
                    let weight = if ir == 0 { 0.125 * dr } else { r };
                    for (t, z) in ring.iter_mut().enumerate() {
                        let th = 2.0 * std::f64::consts::PI * t as f64 / n_theta as f64;
                        *z = bilinear(u, i1, centre[0] + r * th.cos(), centre[1] + r * th.sin());
                    }
                    let mean = ring.iter().sum::<Complex64>() / n_theta as f64;
                    for z in &ring {
                        num += weight * (z - mean).norm_sqr();
                        den += weight * z.norm_sqr();
                    }
                }
                (num, den)
            })
            .collect();
        parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
    };
    Ok(if den == 0.0 { 0.0 } else { (num / den).sqrt() })
}

fn bilinear(u: &ComplexField, i1: usize, y2: f64, y3: f64) -> Complex64 {
    let g = u.grid();
    let t2 = y2 / g.spacing()[1] + 0.5 * (g.sizes()[1] - 1) as f64;
    let t3 = y3 / g.spacing()[2] + 0.5 * (g.sizes()[2] - 1) as f64;
    let (f2, f3) = (t2.floor(), t3.floor());
    let (a, b) = (t2 - f2, t3 - f3);
    let (i2, i3) = (f2 as isize, f3 as isize);
    let i1 = i1 as isize;
    u.at(&[i1, i2, i3]) * ((1.0 - a) * (1.0 - b))
        + u.at(&[i1, i2 + 1, i3]) * (a * (1.0 - b))
        + u.at(&[i1, i2, i3 + 1]) * ((1.0 - a) * b)
        + u.at(&[i1, i2 + 1, i3 + 1]) * (a * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn projection_examples() {
        assert_relative_eq!(solve_projection(1.0, -2.0, -1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(solve_projection(1.0, -1.0, 0.0).unwrap(), 1.0);
        assert!(solve_projection(1.0, 1.0, 0.5).is_err());
        assert!(solve_projection(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn projection_linear_case() {
        let s = solve_projection(2.0, 0.0, -5.0).unwrap();
        assert_relative_eq!(s, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn terminal_sigma_values() {
        assert_relative_eq!(terminal_sigma(3, -4.0).unwrap(), 2.0, epsilon = 1e-15);
        // N = 5: w = 1/2, α = -2 gives σ₀ = 1.
        assert_relative_eq!(terminal_sigma(5, -2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(terminal_sigma(3, 0.5).is_err());
    }

    #[test]
    fn multiplier_mapping() {
        // E_c' = λP_c' and E_c = 2/(N-1) A + P_c give A' = (N-1)(λ-1)/2 P_c'.
        assert_eq!(alpha_from_lambda(3, -0.7), -0.7);
        assert_relative_eq!(alpha_from_lambda(5, 0.0), -2.0, epsilon = 1e-15);
    }

    #[test]
    fn config_rejects_supersonic() {
        let m = NonlinearityModel::gross_pitaevskii();
        let cfg = MinimizeConfig { c: 1.5, ..Default::default() };
        assert!(matches!(cfg.validate(&m), Err(Error::Config(_))));
        assert!(MinimizeConfig::default().validate(&m).is_ok());
    }
}
