//! End-to-end checks of the public API against closed forms.

use selmut_core::eps_solver::{compute_intake, initial_potential, run_eps, EpsConfig};
use selmut_core::harness::{run_sweep, Quantity};
use selmut_core::limit_solver::{quadratic_oracle, run_limit, LimitConfig};
use selmut_core::moments::moment_errors;
use selmut_core::run_with_corrections;
use selmut_core::{fit_order, preset, Grid, GrowthModel, InitialData, MassPrefactor, RunConfig, Weight};

fn p0() -> GrowthModel {
    GrowthModel::p0()
}

#[test]
fn riccati_oracle_has_the_closed_form_on_the_balanced_datum() {
    let times: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
    let pts = quadratic_oracle(&p0(), 0.5, 0.5, &times).unwrap();
    for p in pts {
        assert!((p.xbar - 0.5 * (-2.0 * p.t).exp()).abs() < 1e-10);
        assert!((p.intake - (1.0 - p.xbar * p.xbar)).abs() < 1e-10);
        assert!((p.beta - 0.5).abs() < 1e-12);
    }
}

#[test]
fn grid_limit_tracks_the_riccati_oracle_off_balance() {
    // L1 = 1 starts the curvature away from its fixed point
    let init = InitialData::quadratic(1.0, 0.4, 1.0);
    let grid = Grid::new(-3.0, 3.0, 1201).unwrap();
    let cfg = LimitConfig::aligned(1.0, grid, 0.1, Some(2e-4), &init.sample(&grid));
    let traj = run_limit(&p0(), &init, &cfg).unwrap();
    let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
    let oracle = quadratic_oracle(&p0(), 1.0, 0.4, &times).unwrap();
    for (s, o) in traj.snapshots.iter().zip(&oracle) {
        assert!((s.xbar - o.xbar).abs() < 1e-6, "t = {}: {} vs {}", s.t, s.xbar, o.xbar);
        assert!((s.intake - o.intake).abs() < 1e-6);
        assert!((s.d2u_at_xbar + 2.0 * o.beta).abs() < 1e-6);
    }
}

#[test]
fn the_core_runs_in_single_precision() {
    let model = selmut_core::model::GrowthModel::<f32>::p0();
    let init = selmut_core::model::InitialData::<f32>::quadratic(0.5, 0.5, 1.0);
    let grid = selmut_core::grid::Grid1D::<f32>::new(-3.0, 3.0, 301).unwrap();
    let cfg = LimitConfig::aligned(0.5f32, grid, 0.1, Some(1e-3), &init.sample(&grid));
    let traj = run_limit(&model, &init, &cfg).unwrap();
    let last = traj.snapshots.last().unwrap();
    assert!((last.xbar - 0.5 * (-1.0f32).exp()).abs() < 1e-3);
}

#[test]
fn prepared_mass_keeps_the_gaussian_stationary() {
    let eps = 0.05;
    let grid = Grid::new(-5.0, 5.0, 1001).unwrap();
    let init = InitialData::new(0.5, 0.0, MassPrefactor::Prepared, None);
    let resolved = init.resolved(&p0(), &Weight::ConstantOne, eps, &grid).unwrap();
    let u0 = initial_potential(&resolved, eps, &grid).unwrap();
    let psi = Weight::ConstantOne.sample(&grid);
    assert!((compute_intake(&u0, &psi, eps).unwrap() - (1.0 - eps)).abs() < 1e-12);
    let cfg = EpsConfig::aligned(eps, 0.5, grid, 0.1, &u0).unwrap();
    let traj = run_eps(&cfg, &p0(), &Weight::ConstantOne, &init).unwrap();
    assert!(traj.intake.iter().all(|i| (i - 0.95).abs() < 1e-10));
}

#[test]
fn order_fit_examples() {
    let f = fit_order(&[(0.1, 1e-2, false), (0.05, 2.5e-3, false), (0.025, 6.25e-4, false)]);
    assert!((f.order - 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
    let f = fit_order(&[(0.1, 0.03, false), (0.05, 0.015, false), (0.025, 0.0075, false)]);
    assert!((f.order - 1.0).abs() < 1e-12);
    let f = fit_order(&[(0.1, 1e-9, false), (0.05, 1e-9, false), (0.025, 1e-9, false)]);
    assert!(f.order.abs() < 1e-12 && f.floor_flag);
}

fn transient(eps_list: Vec<f64>) -> selmut_core::SweepConfig {
    let mut cfg = RunConfig::parse(preset("p0_transient").unwrap()).unwrap().sweep_config();
    cfg.eps_list = eps_list;
    cfg.refine_check = false;
    cfg
}

#[test]
fn halving_eps_halves_the_intake_error() {
    let rep = run_sweep(&transient(vec![0.1, 0.05])).unwrap();
    let e: Vec<f64> = rep.rows_for(Quantity::IntakeZeroth).map(|r| r.error).collect();
    let ratio = e[0] / e[1];
    assert!((1.6..=2.4).contains(&ratio), "{ratio}");
}

#[test]
fn stationary_first_order_intake_is_exact() {
    let mut cfg = RunConfig::parse(preset("p0_stationary").unwrap()).unwrap().sweep_config();
    cfg.eps_list = vec![0.05];
    let rep = run_sweep(&cfg).unwrap();
    let err = rep.outcomes[0].errors.as_ref().unwrap().get(Quantity::IntakeFirst).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn transient_moment_errors_stay_in_the_sanity_envelope() {
    let cfg = transient(vec![0.05]);
    let lcfg = LimitConfig::aligned(cfg.horizon, cfg.grid, cfg.snapshot_interval, None, &cfg.init.sample(&cfg.grid));
    let (limit, corr) = run_with_corrections(&cfg.model, &cfg.psi, &cfg.init, &lcfg).unwrap();
    let traj = run_eps(&cfg.eps_config(0.05, cfg.grid).unwrap(), &cfg.model, &cfg.psi, &cfg.init).unwrap();
    let series = moment_errors(&traj, &limit, &corr, &cfg.psi, 5).unwrap();
    assert!(series.sup_err_mean() < 0.1);
    for j in 2..=5 {
        let e = series.sup_err_central(j);
        assert!(e.is_finite() && e < 0.1, "Mc{j}: {e}");
    }
}
