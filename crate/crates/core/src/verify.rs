//! The invariant suite behind `nlsw verify`: each check yields one verdict,
//! printed as a JSON line.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ansatz::{self, AnsatzSpec};
use crate::config::RunConfig;
use crate::error::Result;
use crate::functionals::{
    self, fast_report, functional_gradient, momentum_general, momentum_simple, ChiCutoff, ChiProfile, Physics, Weights,
};
use crate::grid::{dilate_by_spacing, dilate_closed_form, ComplexField, DilationSpec, Grid};
use crate::io::{read_field, write_field, FieldFile};
use crate::nonlinearity::NonlinearityModel;
use crate::regularize::{g_audit, g_minimize, RegularizeConfig};
use crate::variational::{apply_projection, predicted_p_c, project_sigma, solve_projection};

/// Verdict of one check: `value` is the measured error, `tol` its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub value: f64,
    pub tol: f64,
    pub detail: String,
}

impl Verdict {
    pub fn new(check: impl Into<String>, value: f64, tol: f64, detail: impl Into<String>) -> Self {
        Self { check: check.into(), pass: value <= tol, value, tol, detail: detail.into() }
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// `exp(-s/(1-s))` for `s < 1`, zero otherwise: a C^∞ bump equal to 1 at 0.
fn bump(s: f64) -> f64 {
    if s < 1.0 {
        (-s / (1.0 - s)).exp()
    } else {
        0.0
    }
}

/// Sum of three modulated C^∞ bumps, available in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothField {
    bumps: Vec<(Vec<f64>, f64, Vec<f64>, Complex64)>,
}

impl SmoothField {
    /// Random centres, radii, wave vectors and amplitudes with supports in
    /// `∏[-w_k, w_k]` and `|u| ≤ amp` everywhere.
    pub fn random(half_widths: &[f64], rng: &mut impl Rng, amp: f64) -> Self {
        let d = half_widths.len();
        let rmax = half_widths.iter().cloned().fold(f64::INFINITY, f64::min);
        let bumps = (0..3)
            .map(|_| {
                let rad = rng.gen_range(0.4..0.8) * rmax;
                let centre: Vec<f64> = half_widths.iter().map(|&w| rng.gen_range(-(w - rad)..=(w - rad))).collect();
                let k: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = Complex64::from_polar(rng.gen_range(0.2..1.0) * amp / 3.0, rng.gen_range(0.0..std::f64::consts::TAU));
                (centre, rad, k, a)
            })
            .collect();
        Self { bumps }
    }

    /// Same centres and radii with fresh wave vectors and amplitudes.
    pub fn redraw(&self, rng: &mut impl Rng, amp: f64) -> Self {
        let bumps = self
            .bumps
            .iter()
            .map(|(centre, rad, k, _)| {
                let k = k.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = Complex64::from_polar(rng.gen_range(0.2..1.0) * amp / 3.0, rng.gen_range(0.0..std::f64::consts::TAU));
                (centre.clone(), *rad, k, a)
            })
            .collect();
        Self { bumps }
    }

    pub fn value(&self, x: &[f64]) -> Complex64 {
        let mut z = Complex64::new(0.0, 0.0);
        for (centre, rad, k, a) in &self.bumps {
            let s: f64 = x.iter().zip(centre).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum::<f64>() / (rad * rad);
            let b = bump(s);
            if b > 0.0 {
                let phase: f64 = x.iter().zip(k).map(|(xi, ki)| xi * ki).sum();
                z += a * b * Complex64::from_polar(1.0, phase);
            }
        }
        z
    }
}

/// A [`SmoothField`] sampled on `grid`, supported at least two cells inside
/// the box.
pub fn random_smooth_field(grid: &Grid, rng: &mut impl Rng, amp: f64) -> ComplexField {
    let inner: Vec<f64> = (0..grid.dim()).map(|k| grid.half_width(k) - 2.0 * grid.spacing()[k]).collect();
    let f = SmoothField::random(&inner, rng, amp);
    ComplexField::sample(grid.clone(), move |x| f.value(x))
}

/// Worst relative error between `⟨∇E_c(u), w⟩` and the centred difference
/// of `E_c` over `pairs` random pairs. Each pair shares its bump supports
/// so that the directional derivative does not cancel.
pub fn gradient_check(model: &NonlinearityModel, grid: &Grid, c: f64, pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    let phi = crate::nonlinearity::CutoffPhi::new(model.r0());
    let inner: Vec<f64> = (0..grid.dim()).map(|k| grid.half_width(k) - 2.0 * grid.spacing()[k]).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let fu = SmoothField::random(&inner, rng, 0.8 * model.r0());
        let fw = fu.redraw(rng, 0.5 * model.r0());
        let u = ComplexField::sample(grid.clone(), |x| fu.value(x));
        let w = ComplexField::sample(grid.clone(), |x| fw.value(x));
        let g = functional_gradient(&u, c, model, Weights::E_C)?;
        let t = 1e-5;
        let mut up = u.clone();
        up.axpy(t, w.values());
        let mut um = u;
        um.axpy(-t, w.values());
        let fd = (fast_report(&up, c, model, &phi)?.e_c - fast_report(&um, c, model, &phi)?.e_c) / (2.0 * t);
        worst = worst.max(rel(g.dot(&w), fd));
    }
    Ok(worst)
}

/// Worst relative gaps `(general vs simple, quintic χ vs cubic χ)` of the
/// momentum over `fields` random fields.
pub fn momentum_agreement(grid: &Grid, r0: f64, fields: usize, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let qa = ChiCutoff::quintic(r0);
    let qb = ChiCutoff::new(r0, ChiProfile::CubicSmoothstep);
    let (mut gs, mut chi) = (0.0f64, 0.0f64);
    for i in 0..fields {
        // Alternate small and large amplitudes so both χ branches are used.
        let amp = if i % 2 == 0 { 0.4 * r0 } else { 1.8 * r0 };
        let u = random_smooth_field(grid, rng, amp);
        let s = momentum_simple(&u);
        let a = momentum_general(&u, r0, &qa)?;
        let b = momentum_general(&u, r0, &qb)?;
        gs = gs.max(rel(a, s));
        chi = chi.max(rel(a, b));
    }
    Ok((gs, chi))
}

/// Box for the `v^{R,ε}` dilation checks: room for the `σ = 2` transverse
/// dilation and two spare units per side.
pub fn dilation_grid(spec: &AnsatzSpec, dim: usize, n: usize) -> Result<Grid> {
    let (s1, sp) = spec.support();
    let h1 = 2.0 * (s1 + 2.0) / (n - 1) as f64;
    let hp = 2.0 * (2.0 * sp + 2.0) / (n - 1) as f64;
    let mut h = vec![hp; dim];
    h[0] = h1;
    Grid::new(vec![n; dim], h)
}

/// Errors of the transverse scaling laws for one closed-form dilation
/// `u_{1,σ}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub sigma: f64,
    /// `|Q(u_{1,σ}) - σ^{N-1} Q(u)| / |σ^{N-1} Q(u)|`.
    pub q_err: f64,
    /// `|A(u_{1,σ}) - σ^{N-3} A(u)| / σ^{N-3} A(u)`.
    pub a_err: f64,
    /// Same for `B_c` and `D` with factor `σ^{N-1}`.
    pub b_err: f64,
    pub d_err: f64,
}

impl ScalingRow {
    pub fn worst(&self) -> f64 {
        self.q_err.max(self.a_err).max(self.b_err).max(self.d_err)
    }
}

/// Samples `f` and its transverse dilations on `grid` and compares the
/// functionals with their scaling laws.
pub fn scaling_rows(
    f: impl Fn(&[f64]) -> Complex64 + Sync + Copy,
    grid: &Grid,
    c: f64,
    physics: &Physics,
    sigmas: &[f64],
) -> Result<Vec<ScalingRow>> {
    let dim = grid.dim() as i32;
    let base = physics.report(&ComplexField::sample(grid.clone(), f), c)?;
    sigmas
        .iter()
        .map(|&sigma| {
            let v = dilate_closed_form(f, DilationSpec::new(1.0, sigma)?, grid);
            let r = physics.report(&v, c)?;
            let fl = sigma.powi(dim - 1);
            let fa = sigma.powi(dim - 3);
            Ok(ScalingRow {
                sigma,
                q_err: rel(r.q, fl * base.q),
                a_err: rel(r.a_transverse, fa * base.a_transverse),
                b_err: rel(r.b_c, fl * base.b_c),
                d_err: rel(r.d_long, fl * base.d_long),
            })
        })
        .collect()
}

/// Modulated Gaussian `(0.6 + 0.2i) exp(-x₁²/4.5 - |x'|²/(2s²)) e^{0.8ix₁}`.
pub fn gaussian_packet(s: f64) -> impl Fn(&[f64]) -> Complex64 + Sync + Copy {
    move |x: &[f64]| {
        let perp: f64 = x[1..].iter().map(|v| v * v).sum();
        Complex64::new(0.6, 0.2) * (-x[0] * x[0] / 4.5 - perp / (2.0 * s * s)).exp() * Complex64::from_polar(1.0, 0.8 * x[0])
    }
}

/// Grid for [`gaussian_packet`]`(s)`: `x₁ ∈ [-8, 8]`, transverse half-width
/// `6s`, which keeps the `σ = 2` dilation clear of the box.
pub fn packet_grid(s: f64, dim: usize, n: usize) -> Result<Grid> {
    let mut h = vec![12.0 * s / (n - 1) as f64; dim];
    h[0] = 16.0 / (n - 1) as f64;
    Grid::new(vec![n; dim], h)
}

/// Residual of the projection quadratic at the returned root, relative to
/// the size of its terms.
pub fn quadratic_residual(k1: f64, k2: f64, cq: f64, sigma: f64) -> f64 {
    let terms = k1.abs() + (k2 * sigma * sigma).abs() + (cq * sigma).abs();
    ((k2 * sigma + cq) * sigma + k1).abs() / terms
}

/// Projection of `v^{R,ε}` at speed `c`: returns `(σ₀, quadratic residual,
/// |P_c| after closed-form resampling, |P_c| after spacing relabelling,
/// quadrature tolerance)`.
pub fn projection_check(spec: &AnsatzSpec, grid: &Grid, c: f64, physics: &Physics) -> Result<(f64, f64, f64, f64, f64)> {
    let u = ansatz::vortex_field(spec, grid)?;
    let rep = physics.report(&u, c)?;
    let sigma = project_sigma(&rep)?;
    let k2 = rep.pohozaev_weight() * rep.a_transverse + rep.e_pot;
    let qres = quadratic_residual(rep.kinetic_x1, k2, c * rep.q, sigma);
    let s = *spec;
    let resampled = dilate_closed_form(move |x| s.value(x), DilationSpec::new(sigma, 1.0)?, grid);
    let p_resampled = physics.report(&resampled, c)?.p_c.abs();
    let p_relabel = physics.report(&apply_projection(&u, sigma), c)?.p_c.abs();
    let tau = functionals::quadrature_tolerance(&resampled);
    debug_assert!(predicted_p_c(&rep, sigma).abs() <= 1e-9 * rep.e_gl.max(1.0));
    Ok((sigma, qres, p_resampled, p_relabel, tau))
}

/// `max |e_pot - a²∫(|r0-u|² - r0²)²| / scale` over random fields with
/// `|r0 - u| ≤ 2r0`, for the GP model.
pub fn gp_identity_check(grid: &Grid, fields: usize, rng: &mut impl Rng) -> Result<f64> {
    let m = NonlinearityModel::gross_pitaevskii();
    let (r0, a) = (m.r0(), m.a());
    let mut worst: f64 = 0.0;
    for _ in 0..fields {
        let u = random_smooth_field(grid, rng, 0.95 * r0);
        let oracle: f64 = u
            .values()
            .iter()
            .map(|z| {
                let s = (Complex64::new(r0, 0.0) - z).norm_sqr();
                a * a * (s - r0 * r0) * (s - r0 * r0)
            })
            .sum::<f64>()
            * grid.cell_volume();
        worst = worst.max(rel(functionals::e_potential(&u, &m)?, oracle));
    }
    Ok(worst)
}

/// Runs every check of the suite with the settings of `cfg`.
pub fn run_suite(cfg: &RunConfig, physics: &Physics, c: f64) -> Result<Vec<Verdict>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    let dim = cfg.grid.dim;
    let n = cfg.verify.n;
    let small = Grid::with_half_width(dim, n, 6.0)?;

    let gp = NonlinearityModel::gross_pitaevskii();
    let cq = NonlinearityModel::cubic_quintic(1.0, 3.0, 2.0)?;
    for (name, m) in [("gp", &gp), ("cubic-quintic", &cq)] {
        let e = gradient_check(m, &small, 0.5 * m.v_s(), cfg.verify.pairs, &mut rng)?;
        out.push(Verdict::new(format!("gradient_fd_{name}"), e, 1e-6, format!("{} pairs", cfg.verify.pairs)));
    }

    let (gs, chi) = momentum_agreement(&small, physics.r0(), 10, &mut rng)?;
    out.push(Verdict::new("momentum_general_vs_simple", gs, 1e-6, "10 fields"));
    out.push(Verdict::new("momentum_chi_independence", chi, 1e-6, "quintic vs cubic smoothstep"));

    let ring = AnsatzSpec::ring(cfg.ansatz.r, cfg.ansatz.eps, physics.r0())?;
    let n_a = cfg.verify.ansatz_n;
    let dgrid = dilation_grid(&ring, dim, n_a)?;
    let q_tol = if n_a >= 96 { 0.01 } else { 0.02 };
    let s = ring;
    for row in scaling_rows(move |x| s.value(x), &dgrid, c, physics, &[0.5, 2.0])? {
        out.push(Verdict::new(format!("q_dilation_sigma_{}", row.sigma), row.q_err, q_tol, "vortex ring ansatz"));
    }
    let sgrid = packet_grid(2.0, dim, n_a)?;
    for row in scaling_rows(gaussian_packet(2.0), &sgrid, c, physics, &[2.0 / 3.0, 1.5])? {
        let name = if dim == 3 { "scaling_n3" } else { "scaling" };
        let detail = format!("A {:.2e}, B_c {:.2e}, D {:.2e}", row.a_err, row.b_err, row.d_err);
        out.push(Verdict::new(format!("{name}_sigma_{:.3}", row.sigma), row.worst(), 0.01, detail));
    }

    let hand = solve_projection(1.0, -2.0, -1.0)?;
    out.push(Verdict::new("projection_hand_case", (hand - 0.5).abs(), 1e-12, "(K1, K2, cQ) = (1, -2, -1)"));
    let fast = AnsatzSpec::ring(16.0, 1.0, physics.r0())?;
    let pgrid = Grid::with_half_width(dim, n_a, fast.support().1 + 2.0)?;
    let (sigma, qres, p_res, p_rel, tau) = projection_check(&fast, &pgrid, 0.9 * physics.model.v_s(), physics)?;
    out.push(Verdict::new("projection_quadratic", qres, 1e-12, format!("sigma0 = {sigma}")));
    out.push(Verdict::new("projection_resampled", p_res, 5.0 * tau, format!("sigma0 = {sigma}")));
    out.push(Verdict::new("projection_relabelled", p_rel, 1e-9 * tau.max(1.0), format!("sigma0 = {sigma}")));

    let h = cfg.ansatz.sweep_spacing;
    let lem = ansatz::verify_bounds(&cfg.ansatz.sweep(), dim, c, physics, |s| ansatz::fitted_grid(s, dim, h, 2.0))?;
    for row in &lem.rows {
        let miss = if row.q_in_bounds { 0.0 } else { 1.0 };
        out.push(Verdict::new(
            format!("momentum_bracket_R{}_eps{}", row.r, row.eps),
            miss,
            0.0,
            format!("Q = {} in [{}, {}] with 3% slack", row.q, row.q_lo, row.q_hi),
        ));
    }

    let e = gp_identity_check(&small, 5, &mut rng)?;
    out.push(Verdict::new("gp_potential_identity", e, 1e-12, "5 fields"));
    let (r0, a, vs) = gp.derived_constants();
    let e = rel(r0, 1.0).max(rel(a, 0.5f64.sqrt())).max(rel(vs, 2f64.sqrt()));
    out.push(Verdict::new("gp_derived_constants", e, 1e-12, format!("({r0}, {a}, {vs})")));

    let u = random_smooth_field(&small, &mut rng, 0.9);
    let file = FieldFile::new(u.clone(), physics.r0());
    let (mut b1, mut b2) = (Vec::new(), Vec::new());
    write_field(&mut b1, &file)?;
    write_field(&mut b2, &read_field(&b1[..])?)?;
    out.push(Verdict::new("io_round_trip", if b1 == b2 { 0.0 } else { 1.0 }, 0.0, format!("{} bytes", b1.len())));

    let r = physics.report(&u, c)?;
    let w = 2.0 / (dim as f64 - 1.0);
    let e = rel(r.e_c, w * r.a_transverse + r.p_c).max(rel(r.e_c, r.a_transverse + r.b_c));
    out.push(Verdict::new("report_identities", e, 1e-12, "E_c = A + B_c = 2A/(N-1) + P_c"));
    let z = physics.report(&ComplexField::zeros(small.clone()), c)?;
    let zmax = [z.e_gl, z.e_pot, z.e_c, z.q, z.a_transverse, z.b_c, z.p_c, z.d_long]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    out.push(Verdict::new("zero_field_report", zmax, 0.0, ""));

    let seed = AnsatzSpec::ring(4.0, 1.0, physics.r0())?;
    let rgrid = Grid::with_half_width(dim, 32, 7.0)?;
    let u = ansatz::vortex_field(&seed, &rgrid)?;
    for &hp in &cfg.regularize.sweep {
        let rc = RegularizeConfig { h: hp, ..cfg.regularize.run.clone() };
        let (v, outcome) = g_minimize(&u, &rc, physics)?;
        let audit = g_audit(&u, &v, &rc, physics)?;
        let rise = (-audit.e_gl_drop).max(0.0) / audit.e_gl_u.max(1.0);
        out.push(Verdict::new(format!("regularize_energy_h{hp}"), rise, 1e-12, format!("E_GL {} -> {}", audit.e_gl_u, audit.e_gl_v)));
        let g_rise = (outcome.g_final - outcome.g_initial).max(0.0) / outcome.g_initial.max(1.0);
        out.push(Verdict::new(format!("regularize_descent_h{hp}"), g_rise, 0.0, format!("{} iterations", outcome.iterations)));
    }

    let dil = DilationSpec::new(1.3, 0.7)?;
    let shrunk = dilate_by_spacing(&u, dil);
    let (r1, r2) = (physics.report(&u, c)?, physics.report(&shrunk, c)?);
    let d = dim as i32;
    let e = rel(r2.kinetic_x1, r1.kinetic_x1 * 0.7f64.powi(d - 1) / 1.3)
        .max(rel(r2.q, r1.q * 0.7f64.powi(d - 1)))
        .max(rel(r2.e_pot, r1.e_pot * 1.3 * 0.7f64.powi(d - 1)));
    out.push(Verdict::new("spacing_relabel_scaling", e, 1e-12, "lambda = 1.3, sigma = 0.7"));
    Ok(out)
}
