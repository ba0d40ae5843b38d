//! Acceptance suite. Each criterion is one test that prints a `PASS`/`FAIL`
//! line (written straight to stdout so it shows even when the harness captures
//! output) and then asserts. Lines tagged `supplement` are informational runs
//! on a second configuration and never decide a verdict.

use std::sync::OnceLock;
use std::time::Instant;

use selmut_core::eps_solver::{check_bounds, run_eps, EpsConfig};
use selmut_core::grid::{logsumexp_integral, GridField};
use selmut_core::harness::{ConvergenceReport, Quantity};
use selmut_core::limit_solver::{run_limit, LimitConfig};
use selmut_core::model::MassPrefactor;
use selmut_core::{gaussian_gamma, k_formula, Grid, GrowthModel, InitialData, Weight};
use selmut_verify::{config, fit, in_band, perturbed, show, stationary, supplement, sweep, transient, verdict};

fn p0_quadratic(x_c: f64, r: MassPrefactor<f64>) -> InitialData {
    InitialData::new(0.5, x_c, r, None)
}

/// Steady Gaussian at ε = 0.05 on [-6, 6] with 6001 points, T = 1.
fn steady_run(r: MassPrefactor<f64>) -> (f64, f64, f64) {
    let start = Instant::now();
    let eps = 0.05;
    let grid = Grid::new(-6.0, 6.0, 6001).unwrap();
    let init = p0_quadratic(0.0, r);
    let model = GrowthModel::p0();
    let u0 = selmut_core::eps_solver::initial_potential(&init.resolved(&model, &Weight::ConstantOne, eps, &grid).unwrap(), eps, &grid).unwrap();
    let cfg = EpsConfig::aligned(eps, 1.0, grid, 0.05, &u0).unwrap();
    let traj = run_eps(&cfg, &model, &Weight::ConstantOne, &init).unwrap();
    let di = traj.intake.iter().map(|i| (i - (1.0 - eps)).abs()).fold(0.0, f64::max);
    let dx = traj.dominant.iter().map(|x| x.abs()).fold(0.0, f64::max);
    (di, dx, start.elapsed().as_secs_f64())
}

#[test]
fn criterion_01_exact_steady_state() {
    let r = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let (di, dx, secs) = steady_run(MassPrefactor::Fixed(r));
    let pass = di <= 1e-4 && dx <= 1e-6 && secs <= 60.0;
    verdict(1, "exact steady state, r = (2 pi)^(-1/2)", pass, format!("sup|I - (1 - eps)| = {di:.3e}, sup|x| = {dx:.3e}, {secs:.1}s"));
    let (di2, dx2, secs2) = steady_run(MassPrefactor::Prepared);
    supplement(
        1,
        format!("mass prepared so that I(0) = 1 - eps: sup|I - (1 - eps)| = {di2:.3e}, sup|x| = {dx2:.3e}, {secs2:.1}s"),
    );
    assert!(pass, "sup|I - (1 - eps)| = {di}, sup|x| = {dx}, {secs}s");
}

#[test]
fn criterion_02_limit_oracle() {
    let (err, _, _, secs) = limit_oracle_run();
    let pass = err <= 1e-5 && secs <= 10.0;
    verdict(2, "limit solver vs closed form", pass, format!("sup error {err:.3e}, {secs:.1}s"));
    assert!(pass);
}

#[test]
fn criterion_03_constraint_invariant() {
    let (_, drift, gap, _) = limit_oracle_run();
    let pass = drift <= 1e-8 && gap <= 1e-5;
    verdict(3, "constraint invariant", pass, format!("max drift {drift:.3e}, max |xbar - argmax u| {gap:.3e}"));
    assert!(pass);
}

/// (sup oracle error, max drift, max argmax gap, seconds), computed once.
fn limit_oracle_run() -> (f64, f64, f64, f64) {
    static R: OnceLock<(f64, f64, f64, f64)> = OnceLock::new();
    *R.get_or_init(|| {
        let start = Instant::now();
        let grid = Grid::new(-3.0, 3.0, 3001).unwrap();
        let cfg = LimitConfig { horizon: 1.0, dt: 1e-4, snapshot_stride: 100, grid };
        let traj = run_limit(&GrowthModel::p0(), &InitialData::quadratic(0.5, 0.5, 1.0), &cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let err = traj
            .dense
            .iter()
            .map(|p| {
                let xbar = 0.5 * (-2.0 * p.t).exp();
                let intake = 1.0 - 0.25 * (-4.0 * p.t).exp();
                (p.xbar - xbar).abs().max((p.intake - intake).abs())
            })
            .fold(0.0, f64::max);
        (err, traj.max_drift(), traj.max_argmax_gap(), secs)
    })
}

#[test]
fn criterion_04_zeroth_order_rates() {
    let start = Instant::now();
    let rep = transient();
    let qs = [Quantity::IntakeZeroth, Quantity::TraitZeroth, Quantity::PotentialZeroth];
    let (ok, detail) = in_band(rep, &qs, (0.8, 1.4), true);
    let secs = start.elapsed().as_secs_f64().max(rep.wall_time_s);
    let pass = ok && secs <= 900.0;
    verdict(4, "zeroth-order rates, p0_transient", pass, format!("{detail}, sweep {:.1}s", rep.wall_time_s));
    supplement(4, format!("p0_perturbed: {}", in_band(perturbed(), &qs, (0.8, 1.4), true).1));
    assert!(pass, "{detail}");
}

#[test]
fn criterion_05_first_order_rates() {
    let qs = [Quantity::IntakeFirst, Quantity::TraitFirst, Quantity::PotentialFirst];
    let (pass, detail) = in_band(transient(), &qs, (1.6, 2.4), false);
    verdict(5, "first-order rates, p0_transient", pass, detail);
    supplement(5, format!("p0_perturbed: {}", in_band(perturbed(), &qs, (1.6, 2.4), false).1));
    assert!(pass);
}

#[test]
fn criterion_06_neutral_intake_rates() {
    let (ok0, d0) = in_band(transient(), &[Quantity::NeutralIntake], (0.8, 1.4), false);
    let (ok1, d1) = in_band(transient(), &[Quantity::NeutralIntakeCorrected], (1.6, 2.4), false);

    let model = GrowthModel::p0();
    let k = k_formula(&model, &Weight::ConstantOne, 0.0, 1.0, -1.0, 0.0).unwrap();
    // (I_eps(T) - I) / eps on the steady datum with r = (2 pi)^(-1/2), then a
    // straight-line extrapolation in eps to eps = 0
    let grid = Grid::new(-6.0, 6.0, 2401).unwrap();
    let init = p0_quadratic(0.0, MassPrefactor::Fixed(1.0 / (2.0 * std::f64::consts::PI).sqrt()));
    let samples: Vec<(f64, f64)> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&eps| {
            let u0 = selmut_core::eps_solver::initial_potential(&init, eps, &grid).unwrap();
            let cfg = EpsConfig::aligned(eps, 1.0, grid, 0.5, &u0).unwrap();
            let traj = run_eps(&cfg, &model, &Weight::ConstantOne, &init).unwrap();
            (eps, (traj.intake.last().unwrap() - 1.0) / eps)
        })
        .collect();
    let n = samples.len() as f64;
    let (mx, my) = (samples.iter().map(|s| s.0).sum::<f64>() / n, samples.iter().map(|s| s.1).sum::<f64>() / n);
    let slope = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum::<f64>() / samples.iter().map(|s| (s.0 - mx).powi(2)).sum::<f64>();
    let limit = my - slope * mx;
    let ok2 = (k + 1.0).abs() < 1e-12 && (limit + 1.0).abs() <= 2e-2;
    let pass = ok0 && ok1 && ok2;
    verdict(6, "neutral-intake rates and stationary K", pass, format!("{d0}; {d1}; K = {k:.6}, extrapolated (I_eps - I)/eps = {limit:.5}"));
    assert!(pass);
}

#[test]
fn criterion_07_moment_rates() {
    let (ok2, d2) = in_band(transient(), &[Quantity::CentralMoment(2)], (1.6, 2.4), false);
    let (ok1, d1) = in_band(transient(), &[Quantity::MeanTrait], (1.2, 1.9), false);
    let (ok3, d3) = in_band(perturbed(), &[Quantity::CentralMoment(3)], (1.6, 2.6), false);
    let pass = ok1 && ok2 && ok3;
    verdict(7, "moment rates", pass, format!("p0_transient {d2}; {d1}; p0_perturbed {d3}"));
    let extra = [Quantity::MeanTrait, Quantity::CentralMoment(2), Quantity::CentralMoment(4), Quantity::CentralMoment(5)];
    let parts: Vec<String> = extra.iter().map(|&q| show(q, &fit(perturbed(), q))).collect();
    supplement(7, format!("p0_perturbed: {}", parts.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_08_gaussian_laplace_properties() {
    let mut worst_gamma = 0.0f64;
    for m2 in [0.25, 1.0, 2.0] {
        let half = 12.0 * f64::sqrt(m2);
        let grid = Grid::new(-half, half, 240_001).unwrap();
        for k in 0..=5usize {
            let f = GridField::from_fn(grid, |y| y.powi(2 * k as i32) * (-y * y / (2.0 * m2)).exp());
            let rel = (f.trapezoid() - gaussian_gamma(k, m2)).abs() / gaussian_gamma(k, m2);
            worst_gamma = worst_gamma.max(rel);
        }
    }

    // weighted Laplace integral on u = -(x - 0.3)^2, so |D^2 u| = 2
    let psi = Weight::SmoothPositive { c0: 1.0, c1: 0.4, c2: -0.2, c3: 0.8 };
    let grid = Grid::new(-4.0, 4.0, 16_001).unwrap();
    let u = GridField::from_fn(grid, |x| -(x - 0.3) * (x - 0.3));
    let psi_field = psi.sample(&grid);
    let points: Vec<(f64, f64, bool)> = [0.08, 0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&eps| {
            let exact = logsumexp_integral(&u, &psi_field, eps).exp();
            let laplace = (2.0 * std::f64::consts::PI * eps / 2.0).sqrt() * psi.value(0.3);
            (eps, (exact / laplace - 1.0).abs(), false)
        })
        .collect();
    let f = selmut_core::fit_order(&points);
    let pass = worst_gamma <= 1e-10 && !f.no_fit && (0.8..=1.4).contains(&f.order);
    verdict(8, "Gaussian and Laplace properties", pass, format!("gamma worst relative error {worst_gamma:.2e}; Laplace remainder order {:.3}", f.order));
    assert!(pass);
}

#[test]
fn criterion_09_a_priori_bounds() {
    let mut parts = Vec::new();
    let mut total = 0;
    for (name, rep) in [("p0_stationary", stationary()), ("p0_transient", transient())] {
        let v = rep.total_bound_violations();
        let runs = rep.outcomes.iter().filter(|o| o.diagnostics.is_some()).count();
        total += v;
        parts.push(format!("{name}: {v} violations over {runs} runs"));
        assert_eq!(runs, rep.outcomes.len(), "{name}: some runs failed");
    }
    // direct check on one run, independent of the sweep plumbing
    let cfg = config("p0_transient");
    let sc = cfg.sweep_config();
    let traj = run_eps(&sc.eps_config(0.02, cfg.grid).unwrap(), &cfg.model, &cfg.psi, &cfg.init).unwrap();
    let direct = check_bounds(&traj, &cfg.model, &cfg.init, sc.bounds);
    total += direct.violations();
    let pass = total == 0;
    verdict(9, "a-priori bound diagnostics", pass, format!("{}; eps = 0.02 direct: {}", parts.join(", "), direct.violations()));
    supplement(9, format!("p0_perturbed: {} violations", perturbed().total_bound_violations()));
    assert!(pass);
}

fn csv_bytes(rep: &ConvergenceReport) -> Vec<u8> {
    let mut buf = Vec::new();
    rep.write_errors_csv(&mut buf).unwrap();
    rep.write_orders_csv(&mut buf).unwrap();
    rep.write_runs_csv(&mut buf).unwrap();
    buf
}

#[test]
fn criterion_10_determinism() {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, first) in [("p0_stationary", stationary()), ("p0_transient", transient()), ("p0_perturbed", perturbed())] {
        // second run on a single worker, so scheduling cannot matter
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let again = pool.install(|| sweep(name));
        let same = csv_bytes(first) == csv_bytes(&again);
        pass &= same;
        parts.push(format!("{name} {}", if same { "identical" } else { "DIFFERS" }));
    }
    verdict(10, "byte-identical reruns", pass, parts.join(", "));
    assert!(pass);
}
