mod common;

use bm_landscape::landscape::{classify_point, Classification};
use bm_landscape::linalg::sym_eigen;
use bm_landscape::losses::{f_lambda_value, hessian_matrix};
use bm_landscape::operators::{isometry_operator, odd_index_indicator};
use bm_landscape::optimizer::{find_spurious_minima, gradient_descent_from, small_init, Termination};
use bm_landscape::{
    gradient_descent, make_epsilon_operator, make_gaussian_operator, make_instance, perturbed_gd, LossSpec,
    PgdConfig,
};
use common::*;
use nalgebra::DMatrix;
use rand::Rng;

fn gaussian_instance(seed: u64) -> bm_landscape::ProblemInstance {
    let op = make_gaussian_operator(6, 40, seed).unwrap();
    make_instance(op, bm_landscape::operators::random_factor(6, 1, 1.0, seed + 1), 1).unwrap()
}

#[test]
fn scalar_run_with_penalty_follows_the_recursion() {
    let inst = make_instance(isometry_operator(1).unwrap(), DMatrix::from_element(1, 1, 1.0), 1).unwrap();
    let spec = LossSpec::new(4, 0.5).unwrap();
    let cfg = PgdConfig { step: Some(0.05), max_iters: 10_000, ..PgdConfig::default() };
    let traj = gradient_descent_from(&inst, &spec, &cfg, DMatrix::from_element(1, 1, 0.1)).unwrap();
    assert_eq!(traj.termination, Termination::Converged);
    // x ← x − η · 2x (a + λa³), a = x² − 1
    let mut x = 0.1f64;
    for _ in 0..traj.iterations {
        let a = x * x - 1.0;
        x -= 0.05 * 2.0 * x * (a + 0.5 * a.powi(3));
    }
    assert!((traj.final_x[0] - x).abs() <= 1e-14);
    assert!((x * x - 1.0).abs() < 1e-6);
}

#[test]
fn no_trigger_means_plain_gradient_descent() {
    let inst = gaussian_instance(3);
    for spec in [LossSpec::least_squares(), LossSpec::new(4, 0.5).unwrap()] {
        let cfg = PgdConfig { grad_trigger: 0.0, max_iters: 3000, seed: 9, ..PgdConfig::default() };
        let a = perturbed_gd(&inst, &spec, &cfg).unwrap();
        let b = gradient_descent(&inst, &spec, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.perturbations, 0);
    }
}

#[test]
fn runs_are_deterministic() {
    let inst = gaussian_instance(4);
    let cfg = PgdConfig { max_iters: 5000, grad_trigger: 1e-2, seed: 17, ..PgdConfig::default() };
    let spec = LossSpec::new(4, 0.5).unwrap();
    let mut first = Vec::new();
    let mut second = Vec::new();
    perturbed_gd(&inst, &spec, &cfg).unwrap().write_csv(&mut first).unwrap();
    perturbed_gd(&inst, &spec, &cfg).unwrap().write_csv(&mut second).unwrap();
    assert_eq!(first, second);
    assert!(String::from_utf8(first).unwrap().starts_with("iter,f,dist,grad_norm,perturbed\n"));
}

#[test]
fn perturbations_fire_only_below_the_trigger() {
    let inst = gaussian_instance(5);
    let cfg = PgdConfig { max_iters: 2000, grad_trigger: 1e-2, perturb_radius: 1e-3, seed: 2, ..PgdConfig::default() };
    let traj = perturbed_gd(&inst, &LossSpec::least_squares(), &cfg).unwrap();
    assert!(traj.perturbations > 0);
    for r in &traj.records {
        if r.perturbed {
            assert!(r.grad_norm < cfg.grad_trigger);
        }
    }
}

/// With `η ≤ 1/(4 λ_max(∇²f_λ^l(X₀)))` the objective never increases.
#[test]
fn small_steps_descend_monotonically() {
    let mut rng = rng(31);
    let trials = 40;
    let mut monotone = 0;
    for t in 0..trials {
        let kind = random_kind(&mut rng);
        let inst = random_instance(&mut rng, kind);
        let spec = random_spec(&mut rng);
        let base = PgdConfig { init_scale: 0.5, seed: t, max_iters: 500, ..PgdConfig::default() };
        let x0 = small_init(&inst, &base);
        let lmax = sym_eigen(&hessian_matrix(&inst, &x0, &spec).unwrap()).max().abs().max(1e-12);
        let cfg = PgdConfig { step: Some(1.0 / (4.0 * lmax)), ..base };
        let traj = gradient_descent_from(&inst, &spec, &cfg, x0).unwrap();
        if traj.records.windows(2).all(|w| w[1].f <= w[0].f) {
            monotone += 1;
        }
    }
    assert!(monotone * 100 >= 95 * trials as usize, "{monotone}/{trials}");
}

#[test]
fn epsilon_mask_has_verified_spurious_points() {
    let op = make_epsilon_operator(3, 0.3).unwrap();
    let inst = make_instance(op, odd_index_indicator(3), 1).unwrap();
    let spec = LossSpec::new(4, 0.0).unwrap();
    let cfg = PgdConfig { init_scale: 1.0, max_iters: 200_000, ..PgdConfig::default() };
    let grad_tol = 1e-8;
    let found = find_spurious_minima(&inst, &spec, 16, &cfg, grad_tol, 1e-6).unwrap();
    assert!(!found.is_empty());
    for p in &found {
        let again = classify_point(&inst, &p.x, &spec, grad_tol, 1e-6).unwrap();
        assert_eq!(again.classification, Classification::SecondOrderPoint);
        assert!(again.distance > 10.0 * cfg.converge_tol);
        assert!(f_lambda_value(&inst, &p.x, &spec).unwrap() > 1e-6);
    }
}

#[test]
fn isometry_has_no_spurious_points() {
    let mut rng = rng(32);
    for _ in 0..3 {
        let n = rng.random_range(3..6);
        let r = rng.random_range(1..3);
        let xstar = bm_landscape::linalg::gaussian_matrix(&mut rng, n, r);
        let inst = make_instance(isometry_operator(n).unwrap(), xstar, r).unwrap();
        let cfg = PgdConfig { init_scale: 1.0, max_iters: 100_000, ..PgdConfig::default() };
        let found = find_spurious_minima(&inst, &LossSpec::least_squares(), 8, &cfg, 1e-8, 1e-6).unwrap();
        assert!(found.is_empty(), "{found:?}");
    }
}

#[test]
fn search_from_an_exact_fit_finds_nothing() {
    let op = make_epsilon_operator(3, 0.3).unwrap();
    let inst = make_instance(op, odd_index_indicator(3), 1).unwrap();
    let found = bm_landscape::optimizer::find_spurious_minima_from(
        &inst,
        &LossSpec::least_squares(),
        &[inst.exact_factor()],
        &PgdConfig::default(),
        1e-8,
        1e-6,
    )
    .unwrap();
    assert!(found.is_empty());
}
