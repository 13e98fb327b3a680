//! Acceptance suite: every criterion is evaluated at its stated tolerance and
//! reported on one `PASS`/`FAIL` line; the test fails if any criterion does.

mod common;

use std::time::{Duration, Instant};

use bm_landscape::experiments::{
    run_landscape, run_pgd_compare, run_ratio, run_rip_estimate, run_table1, run_theorem_audit, AuditResult,
    ExperimentConfig, OutputFile,
};
use bm_landscape::linalg::{gaussian_matrix, lp_norm};
use bm_landscape::losses::{
    c_of_l, f_lambda_value, gradient, h_gradient, h_value, hessian_quadratic_form, taylor_identity_residual,
    taylor_identity_residual_with,
};
use bm_landscape::TaylorCoefficient;
use common::*;
use rand::Rng;

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn derivative_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(1001);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let kind = random_kind(&mut rng);
        let inst = random_instance(&mut rng, kind);
        let spec = random_spec(&mut rng);
        let x = random_point(&mut rng, &inst);
        let f = |y: &nalgebra::DMatrix<f64>| f_lambda_value(&inst, y, &spec).unwrap();
        let g = gradient(&inst, &x, &spec).unwrap();
        worst_g = worst_g.max(rel_err_mat(&g, &fd_gradient(f, &x, 1e-4)));
        let u = gaussian_matrix(&mut rng, inst.n(), inst.r);
        let q = hessian_quadratic_form(&inst, &x, &u, &spec).unwrap();
        worst_h = worst_h.max(rel_err(q, fd_second_directional(f, &x, &u, 1e-3)));
    }
    let t = start.elapsed();
    Outcome {
        id: "1",
        title: "derivative oracles",
        pass: worst_g < 1e-6 && worst_h < 1e-4 && within(t, 60),
        detail: format!("200 cases, max gradient rel err {worst_g:.2e}, max Hessian-form rel err {worst_h:.2e}, {}", secs(t)),
    }
}

fn exact_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(1002);
    let mut taylor_fail = 0;
    let mut worst = 0.0f64;
    let mut worst_exact = 0.0f64;
    let mut fail_orders = std::collections::BTreeSet::new();
    for _ in 0..1000 {
        let kind = random_kind(&mut rng);
        let inst = random_instance(&mut rng, kind);
        let l = [2, 4, 6][rng.random_range(0..3)];
        let m = random_symmetric(&mut rng, inst.n()) * rng.random_range(0.1..1.0) + &inst.mstar;
        let diff = &m - &inst.mstar;
        let lifted: f64 = inst.operator.apply(&diff).unwrap().iter().map(|v| v.powi(l as i32)).sum();
        let scale = [
            1.0,
            h_value(&inst, &m, l).unwrap().abs(),
            h_gradient(&inst, &m, l).unwrap().dot(&diff).abs(),
            lifted,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let rel = taylor_identity_residual(&inst, &m, l).unwrap().abs() / scale;
        let rel_exact = taylor_identity_residual_with(&inst, &m, l, TaylorCoefficient::Exact).unwrap().abs() / scale;
        worst = worst.max(rel);
        worst_exact = worst_exact.max(rel_exact);
        if rel > 1e-10 {
            taylor_fail += 1;
            fail_orders.insert(l);
        }
    }
    let mut holder_fail = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..64);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p = rng.random_range(1.0..6.0);
        let q = p + rng.random_range(0.0..6.0);
        if lp_norm(&x, p) > (len as f64).powf(1.0 / p - 1.0 / q) * lp_norm(&x, q) * (1.0 + 1e-12) {
            holder_fail += 1;
        }
    }
    let constants = c_of_l(2, 1) == 0.5 && c_of_l(2, 17) == 0.5 && c_of_l(4, 1) == 11.0 / 4.0;
    let t = start.elapsed();
    Outcome {
        id: "2",
        title: "exact identities",
        pass: taylor_fail == 0 && holder_fail == 0 && constants && within(t, 10),
        detail: format!(
            "Taylor identity (default coefficient): {taylor_fail}/1000 over tolerance, orders {fail_orders:?}, \
             max scaled residual {worst:.2e} (exact coefficient: {worst_exact:.2e}); norm inequality failures \
             {holder_fail}/1000; C(2)=1/2 and C(4,m=1)=11/4 {}; {}",
            if constants { "exact" } else { "WRONG" },
            secs(t)
        ),
    }
}

fn theorem_audit(audit: &AuditResult, t: Duration) -> Outcome {
    let bad = audit.inconsistent();
    let max_grad = audit.rows.iter().map(|r| r.verdict.grad_norm).fold(0.0, f64::max);
    let gap = audit.reduction_gap();
    let exact_bad = audit.rows.iter().filter(|r| r.exact.as_ref().is_some_and(|v| !v.consistent)).count();
    let pass = audit.points_audited >= 100 && max_grad <= 1e-8 && bad.is_empty() && gap <= 1e-12 && within(t, 120);
    let mut detail = format!(
        "{} points, {} verdict rows, max grad norm {max_grad:.1e}, {} inconsistent, λ=0 reduction gap {gap:.1e}, \
         {exact_bad} inconsistent with the exact constant, {}",
        audit.points_audited,
        audit.rows.len(),
        bad.len(),
        secs(t)
    );
    if let Some(r) = bad.first() {
        detail += &format!(
            "; e.g. {} bound {:.4} vs λ_min {:.4}",
            r.point_id, r.verdict.predicted_bound, r.verdict.observed_lambda_min
        );
    }
    Outcome { id: "3", title: "theorem audit", pass, detail }
}

fn table1_trends() -> (Outcome, Vec<OutputFile>) {
    let start = Instant::now();
    let res = run_table1(&ExperimentConfig::default()).unwrap();
    let t = start.elapsed();
    let mut ns: Vec<usize> = res.rows.iter().map(|r| r.n).collect();
    ns.dedup();
    let mut truth_ok = true;
    let mut trend_ok = true;
    let mut notes = Vec::new();
    for &n in &ns {
        let rows: Vec<_> = res.rows.iter().filter(|r| r.n == n).collect();
        let (t0min, t0max) = (rows[0].truth_min, rows[0].truth_max);
        truth_ok &= rows.iter().all(|r| (r.truth_min - t0min).abs() <= 1e-10 && (r.truth_max - t0max).abs() <= 1e-10);
        let Some(spec): Option<Vec<_>> = rows.iter().map(|r| r.spurious).collect() else {
            trend_ok = false;
            notes.push(format!("n={n}: spurious point not found for every λ"));
            continue;
        };
        let mins: Vec<f64> = spec.iter().map(|s| s.lambda_min).collect();
        let maxs: Vec<f64> = spec.iter().map(|s| s.lambda_max).collect();
        let min_ok = mins.windows(2).all(|w| w[1] <= w[0]);
        let max_ok = maxs.windows(2).all(|w| w[1] > w[0]);
        let ratio = maxs[maxs.len() - 1] / maxs[0];
        trend_ok &= min_ok && max_ok && ratio > 5.0;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
        notes.push(format!(
            "n={n}: λ_min {} ({}), λ_max {} ({}), λ_max ratio {ratio:.2}",
            fmt(&mins),
            if min_ok { "non-increasing" } else { "NOT non-increasing" },
            fmt(&maxs),
            if max_ok { "increasing" } else { "NOT increasing" },
        ));
    }
    let pass = truth_ok && trend_ok && within(t, 300);
    let detail = format!(
        "(a) ground-truth eigenvalues λ-independent: {}; (b) {}; {}",
        if truth_ok { "yes" } else { "NO" },
        notes.join("; "),
        secs(t)
    );
    (Outcome { id: "4", title: "Table-1 trends", pass, detail }, res.files())
}

fn pgd_acceleration() -> (Outcome, Vec<OutputFile>) {
    let start = Instant::now();
    let res = run_pgd_compare(&ExperimentConfig::default()).unwrap();
    let t = start.elapsed();
    let (m0, m5) = (res.median_iters(0.0).unwrap(), res.median_iters(0.5).unwrap());
    let seeds = res.runs.len() / res.lambdas.len();
    let pass = seeds >= 10 && m5 <= m0 && within(t, 600);
    let detail = format!(
        "{seeds} seeds, median iterations to D<1e-3: λ=0 {m0}, λ=0.5 {m5}; converged {}/{} and {}/{} (budget {}); {}",
        res.reached_count(0.0),
        seeds,
        res.reached_count(0.5),
        seeds,
        res.max_iters,
        secs(t)
    );
    (Outcome { id: "5", title: "PGD acceleration", pass, detail }, res.files())
}

fn landscape_amplification() -> (Outcome, Vec<OutputFile>) {
    let start = Instant::now();
    let res = run_landscape(&ExperimentConfig::default()).unwrap();
    let t = start.elapsed();
    let mins = res.grid_minima();
    let pass = mins.windows(2).all(|w| w[1] < w[0]) && res.lambdas.first() == Some(&0.0) && within(t, 600);
    let detail = format!(
        "grid minima {} for λ = {:?}, {}",
        mins.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" > "),
        res.lambdas,
        secs(t)
    );
    (Outcome { id: "6", title: "landscape amplification", pass, detail }, res.files())
}

fn rip_estimator() -> (Outcome, Vec<OutputFile>) {
    let start = Instant::now();
    let res = run_rip_estimate(&ExperimentConfig::default()).unwrap();
    let t = start.elapsed();
    let d = res.estimate.delta_hat;
    let pass = d <= 0.588 && res.samples == 10_000 && res.p == 2 && within(t, 60);
    let detail = format!(
        "ε-mask n=6, ε=0.3, p=2, {} samples: δ̂ = {d:.4} (gate 0.588, claimed {:.4}), {}",
        res.samples,
        res.claimed_delta.unwrap_or(f64::NAN),
        secs(t)
    );
    (Outcome { id: "7", title: "RIP estimator", pass, detail }, res.files())
}

fn escape_check(audit: &AuditResult) -> Outcome {
    let holding = audit.rows.iter().filter(|r| r.verdict.criterion_satisfied).count();
    let failures = audit.escape_failures().len();
    Outcome {
        id: "8",
        title: "strict-saddle escape directions",
        pass: failures == 0 && holding > 0,
        detail: format!("{holding} rows with the criterion satisfied, {failures} without negative curvature along Δ"),
    }
}

fn determinism(first: &[(&'static str, Vec<OutputFile>)]) -> Outcome {
    let cfg = ExperimentConfig::default();
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (name, before) in first {
        let again = match *name {
            "table1" => run_table1(&cfg).unwrap().files(),
            "ratio" => run_ratio(&cfg).unwrap().files(),
            "pgd-compare" => run_pgd_compare(&cfg).unwrap().files(),
            "landscape" => run_landscape(&cfg).unwrap().files(),
            "theorem-audit" => run_theorem_audit(&cfg).unwrap().files(),
            "rip-estimate" => run_rip_estimate(&cfg).unwrap().files(),
            other => panic!("unknown experiment {other}"),
        };
        files += before.len();
        if before != &again {
            mismatched.push(*name);
        }
    }
    Outcome {
        id: "9",
        title: "determinism",
        pass: mismatched.is_empty(),
        detail: format!("{} experiments, {files} files re-run with the same seed; differing: {mismatched:?}", first.len()),
    }
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = vec![derivative_oracles(), exact_identities()];

    let start = Instant::now();
    let audit = run_theorem_audit(&ExperimentConfig::default()).unwrap();
    outcomes.push(theorem_audit(&audit, start.elapsed()));

    let (o4, f_table1) = table1_trends();
    let (o5, f_pgd) = pgd_acceleration();
    let (o6, f_landscape) = landscape_amplification();
    let (o7, f_rip) = rip_estimator();
    outcomes.extend([o4, o5, o6, o7, escape_check(&audit)]);

    let f_ratio = run_ratio(&ExperimentConfig::default()).unwrap().files();
    outcomes.push(determinism(&[
        ("table1", f_table1),
        ("ratio", f_ratio),
        ("pgd-compare", f_pgd),
        ("landscape", f_landscape),
        ("theorem-audit", audit.files()),
        ("rip-estimate", f_rip),
    ]));

    println!();
    for o in &outcomes {
        println!("criterion {} ({}): {} — {}", o.id, o.title, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
