mod common;

use common::{compact_field, rel, SQRT2};
use nlsw::ansatz::{fitted_grid, negative_energy_radius, vortex_field, AnsatzSpec};
use nlsw::functionals::{
    fast_report, momentum_general, momentum_simple, quadrature_tolerance, ChiCutoff, ChiProfile, Weights,
};
use nlsw::grid::{dilate_by_spacing, dilate_closed_form};
use nlsw::io::{self, FieldFile};
use nlsw::regularize::{g_audit, g_minimize, g_value, IndexBox, RegularizeConfig};
use nlsw::variational::{apply_projection, axial_symmetry_deviation, minimize, predicted_p_c, MinimizeConfig};
use nlsw::{ComplexField, DilationSpec, Grid, NonlinearityModel, Physics};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gp() -> Physics {
    Physics::new(NonlinearityModel::gross_pitaevskii())
}

fn cq() -> Physics {
    Physics::new(NonlinearityModel::cubic_quintic(1.0, 3.0, 2.0).unwrap())
}

fn small_grid(dim: usize) -> Grid {
    match dim {
        3 => Grid::with_half_width(3, 16, 5.0).unwrap(),
        4 => Grid::with_half_width(4, 10, 4.0).unwrap(),
        _ => Grid::with_half_width(dim, 8, 3.0).unwrap(),
    }
}

fn packet(x: &[f64]) -> Complex64 {
    let r2: f64 = x[1..].iter().map(|v| v * v).sum();
    let env = (-x[0] * x[0] / 4.5 - r2 / 8.0).exp();
    Complex64::new(0.6 * env, 0.5 * x[0] * env)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn closed_form_identity_is_bitwise(seed in any::<u64>()) {
        let g = small_grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = compact_field(&g, &mut rng, 0.8);
        let f = |x: &[f64]| {
            let mut idx = [0isize; 3];
            for k in 0..3 {
                idx[k] = (x[k] / g.spacing()[k] + 0.5 * (g.sizes()[k] - 1) as f64).round() as isize;
            }
            u.at(&idx)
        };
        let v = dilate_closed_form(f, DilationSpec::identity(), &g);
        let w = ComplexField::sample(g.clone(), f);
        prop_assert_eq!(v.values(), w.values());
        prop_assert_eq!(v.values(), u.values());
    }

    #[test]
    fn integrate_is_linear(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let g = small_grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..g.len()).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let h: Vec<f64> = (0..g.len()).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let mix: Vec<f64> = f.iter().zip(&h).map(|(x, y)| a * x + b * y).collect();
        let lhs = g.integrate(&mix);
        let rhs = a * g.integrate(&f) + b * g.integrate(&h);
        let scale = g.integrate(&f.iter().map(|v| v.abs()).collect::<Vec<_>>())
            + g.integrate(&h.iter().map(|v| v.abs()).collect::<Vec<_>>());
        prop_assert!((lhs - rhs).abs() <= 1e-13 * scale * (a.abs() + b.abs() + 1.0));
    }

    #[test]
    fn relabelled_dilation_laws(seed in any::<u64>(), dim in 3usize..=4, lambda in 0.5..2.0f64, sigma in 0.5..2.0f64) {
        let physics = gp();
        let g = small_grid(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = compact_field(&g, &mut rng, 0.7);
        let c = 0.4 * SQRT2;
        let r = fast_report(&u, c, &physics.model, &physics.phi).unwrap();
        let v = dilate_by_spacing(&u, DilationSpec::new(lambda, sigma).unwrap());
        let s = fast_report(&v, c, &physics.model, &physics.phi).unwrap();
        let n = dim as f64;
        let vol = lambda * sigma.powf(n - 1.0);
        prop_assert!(rel(s.q, sigma.powf(n - 1.0) * r.q) < 1e-10);
        prop_assert!(rel(s.kinetic_x1, vol / (lambda * lambda) * r.kinetic_x1) < 1e-10);
        prop_assert!(rel(s.a_transverse, vol / (sigma * sigma) * r.a_transverse) < 1e-10);
        prop_assert!(rel(s.e_pot, vol * r.e_pot) < 1e-10);
        if lambda == 1.0 {
            let e = sigma.powf(n - 3.0) * r.a_transverse + sigma.powf(n - 1.0) * r.b_c;
            prop_assert!(rel(s.e_c, e) < 1e-10);
        }
    }

    #[test]
    fn transverse_energy_law(seed in any::<u64>(), dim in 3usize..=5, sigma in 0.5..2.0f64) {
        let physics = gp();
        let g = small_grid(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = compact_field(&g, &mut rng, 0.7);
        let c = 0.3 * SQRT2;
        let r = fast_report(&u, c, &physics.model, &physics.phi).unwrap();
        let v = dilate_by_spacing(&u, DilationSpec::new(1.0, sigma).unwrap());
        let s = fast_report(&v, c, &physics.model, &physics.phi).unwrap();
        let n = dim as f64;
        let e = sigma.powf(n - 3.0) * r.a_transverse + sigma.powf(n - 1.0) * r.b_c;
        prop_assert!((s.e_c - e).abs() <= 1e-10 * (r.a_transverse + r.kinetic_x1 + r.e_pot.abs() + (c * r.q).abs()) * sigma.powf(n));
    }

    #[test]
    fn energy_splits_into_transverse_and_pohozaev(seed in any::<u64>(), dim in 3usize..=5) {
        let physics = cq();
        let g = small_grid(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = compact_field(&g, &mut rng, 0.9);
        let r = fast_report(&u, 0.6 * physics.model.v_s(), &physics.model, &physics.phi).unwrap();
        let rhs = 2.0 / (dim as f64 - 1.0) * r.a_transverse + r.p_c;
        let scale = r.kinetic_x1 + r.a_transverse + r.e_pot.abs() + (r.c * r.q).abs();
        prop_assert!((r.e_c - rhs).abs() <= 1e-12 * scale);
        prop_assert!((Weights::p_c(dim).evaluate(&r) - r.p_c).abs() <= 1e-12 * scale);
    }

    #[test]
    fn momentum_forms_agree(seed in any::<u64>()) {
        let g = small_grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = compact_field(&g, &mut rng, 0.2);
        let simple = momentum_simple(&u);
        let quintic = momentum_general(&u, 1.0, &ChiCutoff::quintic(1.0)).unwrap();
        let cubic = momentum_general(&u, 1.0, &ChiCutoff::new(1.0, ChiProfile::CubicSmoothstep)).unwrap();
        let scale = g.integrate(&u.values().iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()).max(1e-300);
        prop_assert!((quintic - simple).abs() <= 1e-10 * scale);
        prop_assert!((cubic - quintic).abs() <= 1e-10 * scale);
    }

    #[test]
    fn gradient_is_finite_and_energy_nonnegative(seed in any::<u64>()) {
        let physics = gp();
        let g = small_grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = compact_field(&g, &mut rng, 1.2);
        let r = fast_report(&u, 0.5 * SQRT2, &physics.model, &physics.phi).unwrap();
        prop_assert!(r.e_gl >= 0.0 && r.a_transverse >= 0.0 && r.kinetic_x1 >= 0.0);
        let grad = nlsw::functionals::functional_gradient(&u, 0.5 * SQRT2, &physics.model, Weights::E_C).unwrap();
        prop_assert!(grad.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    #[test]
    fn ansatz_is_compact_with_negative_momentum(r in 3.0..6.0f64, frac in 0.1..0.45f64) {
        let physics = gp();
        let spec = AnsatzSpec::ring(r, frac * r, physics.r0()).unwrap();
        let g = fitted_grid(&spec, 3, 0.4, 0.8).unwrap();
        let u = vortex_field(&spec, &g).unwrap();
        prop_assert_eq!(u.boundary_max(), 0.0);
        let r0 = Complex64::new(physics.r0(), 0.0);
        for z in u.values() {
            prop_assert!((r0 - z).norm() <= physics.r0() * (1.0 + 1e-12));
        }
        prop_assert!(momentum_simple(&u) < 0.0);
        let (lo, hi) = spec.support();
        prop_assert!(lo < hi);
    }

    #[test]
    fn projection_prediction_matches_resampled_field(sigma in 0.7..1.4f64) {
        let physics = gp();
        let g = common::box_grid(3, 48, 9.0, 12.0);
        let c = 0.5 * SQRT2;
        let u = ComplexField::sample(g.clone(), packet);
        let r = physics.report(&u, c).unwrap();
        let v = dilate_closed_form(packet, DilationSpec::new(sigma, 1.0).unwrap(), &g);
        let s = physics.report(&v, c).unwrap();
        let tau = quadrature_tolerance(&u).max(quadrature_tolerance(&v));
        prop_assert!((predicted_p_c(&r, sigma) - s.p_c).abs() <= 5.0 * tau);
        let relabelled = physics.report(&apply_projection(&u, sigma), c).unwrap();
        prop_assert!((predicted_p_c(&r, sigma) - relabelled.p_c).abs() <= 1e-10 * r.e_gl);
    }
}

#[test]
fn negative_energy_search_doubles_until_negative() {
    let physics = gp();
    let c = 0.5 * physics.model.v_s();
    let (r, e_c) = negative_energy_radius(&physics, 3, c, 1.0, 4.0, 0.5, 6).unwrap().expect("finds a radius");
    assert!(e_c < 0.0);
    assert!(r >= 4.0 && (r / 4.0).log2().fract() == 0.0);
    if r > 4.0 {
        let spec = AnsatzSpec::ring(r / 2.0, 1.0, physics.r0()).unwrap();
        let g = fitted_grid(&spec, 3, 0.5, 1.0).unwrap();
        let u = vortex_field(&spec, &g).unwrap();
        assert!(fast_report(&u, c, &physics.model, &physics.phi).unwrap().e_c >= 0.0);
    }
}

fn short_run() -> (ComplexField, MinimizeConfig, Physics) {
    let physics = gp();
    let spec = AnsatzSpec::ring(6.0, 1.0, physics.r0()).unwrap();
    let g = Grid::with_half_width(3, 32, 10.0).unwrap();
    let u = vortex_field(&spec, &g).unwrap();
    let cfg = MinimizeConfig { c: 0.5 * SQRT2, max_iters: 40, ..MinimizeConfig::default() };
    (u, cfg, physics)
}

#[test]
fn accepted_steps_do_not_increase_the_objective() {
    let (u, cfg, physics) = short_run();
    let (_, trace) = minimize(&u, &cfg, &physics).unwrap();
    let start = trace.rows.iter().position(|r| r.step == 0.0).unwrap();
    let descent = &trace.rows[start..trace.rows.len() - 1];
    assert!(descent.len() > 10);
    let mut compared = 0;
    for w in descent.windows(2) {
        if w[0].iter % cfg.project_every == 0 {
            continue;
        }
        assert!(w[1].a <= w[0].a, "A rose from {} to {} at iteration {}", w[0].a, w[1].a, w[1].iter);
        compared += 1;
    }
    assert!(compared > 0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (u, cfg, physics) = short_run();
    let cfg = MinimizeConfig { max_iters: 12, ..cfg };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = physics.report(&u, cfg.c).unwrap();
            let (v, trace) = minimize(&u, &cfg, &physics).unwrap();
            (r, v, trace.report)
        })
    };
    let (r1, v1, t1) = run(1);
    let (r4, v4, t4) = run(4);
    assert_eq!(r1, r4);
    assert_eq!(v1.values(), v4.values());
    assert_eq!(t1, t4);
}

#[test]
fn regularizer_decreases_penalized_and_local_energy() {
    let physics = gp();
    let g = Grid::with_half_width(3, 16, 5.0).unwrap();
    let omega = IndexBox { lo: vec![2, 2, 2], hi: vec![14, 14, 14] };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for h in [0.5, 0.2] {
        let u = compact_field(&g, &mut rng, 1.0);
        let cfg = RegularizeConfig { h, omega: Some(omega.clone()), max_iters: 200, ..RegularizeConfig::default() };
        let (v, out) = g_minimize(&u, &cfg, &physics).unwrap();
        assert!(out.g_final <= out.g_initial);
        assert!(g_value(&u, &v, &physics, h, &omega) <= g_value(&u, &u, &physics, h, &omega));
        let audit = g_audit(&u, &v, &cfg, &physics).unwrap();
        assert!(audit.e_gl_drop >= 0.0);
        for (j, (a, b)) in u.values().iter().zip(v.values()).enumerate() {
            let mut idx = [0usize; 3];
            g.unflatten(j, &mut idx);
            if (0..3).any(|k| idx[k] < 2 || idx[k] >= 14) {
                assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn field_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(vec![12, 10, 8], vec![0.5, 0.75, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = compact_field(&g, &mut rng, 0.9);
    let path = dir.path().join("u.bin");
    let file = FieldFile::new(u, 1.0);
    io::save(&path, &file).unwrap();
    let back = io::load(&path).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.field.grid().descriptor_hash(), g.descriptor_hash());
}

#[test]
fn axial_symmetry_examples() {
    let physics = gp();
    let g = Grid::with_half_width(3, 96, 10.0).unwrap();
    assert_eq!(axial_symmetry_deviation(&ComplexField::zeros(g.clone()), &physics).unwrap(), 0.0);
    let gauss = ComplexField::sample(g, |x| {
        let r2 = x[1] * x[1] + x[2] * x[2];
        Complex64::new((-x[0] * x[0] / 4.0 - r2 / 8.0).exp(), 0.3 * x[0] * (-r2 / 4.0).exp())
    });
    let d = axial_symmetry_deviation(&gauss, &physics).unwrap();
    assert!(d <= 1e-3, "axisymmetric field: {d}");

    let spec = AnsatzSpec::ring(6.0, 1.0, physics.r0()).unwrap();
    let shifted = |g: &Grid| ComplexField::sample(g.clone(), |x| spec.value(&[x[0], x[1] - 1.3, x[2] + 0.7]));
    let g = fitted_grid(&spec, 3, 0.2, 2.0).unwrap();
    let d = axial_symmetry_deviation(&shifted(&g), &physics).unwrap();
    assert!(d <= 5e-3, "shifted ring: {d}");

    // Bilinear resampling of the vortex core needs h ≈ ε/12 to reach 1e-3.
    let g = fitted_grid(&spec, 3, 0.08, 2.0).unwrap();
    let d = axial_symmetry_deviation(&vortex_field(&spec, &g).unwrap(), &physics).unwrap();
    assert!(d <= 1e-3, "ring: {d}");
}
