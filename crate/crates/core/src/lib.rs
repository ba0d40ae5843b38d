//! Selection-mutation dynamics in the small-mutation scaling.
//!
//! The crate solves the Hopf-Cole transformed equation
//! `∂t u = ε u'' + (u')² + R(x, I)` for a population `n = exp(u/ε)` competing
//! through a weighted intake `I = ∫ ψ n`, its constrained Hamilton-Jacobi
//! limit (`max u = 0`, with the dominant trait `x̄` moving by the canonical
//! equation), and the first-order corrections `J`, `y`, `w` in
//! `I ≈ I₀ + εJ`, `x ≈ x̄ + εy`, `u ≈ u₀ + εw`. A harness sweeps `ε`, measures
//! the error of each expansion and fits convergence orders.
//!
//! The numerical core is generic over the scalar (`f32` or `f64`, see
//! [`Real`]); the aliases below fix it to `f64`.
//!
//! ```
//! use selmut_core::{Grid, InitialData, GrowthModel, LimitConfig, run_limit};
//!
//! let model = GrowthModel::p0();
//! let init = InitialData::quadratic(0.5, 0.5, 1.0);
//! let grid = Grid::new(-3.0, 3.0, 601).unwrap();
//! let cfg = LimitConfig::aligned(0.5, grid, 0.1, Some(1e-3), &init.sample(&grid));
//! let traj = run_limit(&model, &init, &cfg).unwrap();
//! let last = traj.snapshots.last().unwrap();
//! assert!((last.xbar - 0.5 * (-1.0f64).exp()).abs() < 1e-4);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Stencil loops read
// several arrays at the same index and stay clearer as index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod corrections;
pub mod eps_solver;
pub mod error;
pub mod grid;
pub mod harness;
pub mod limit_solver;
pub mod model;
pub mod moments;
pub mod numeric;
pub mod report;
pub mod scalar;
pub mod svg;

pub use config::{preset, RunConfig, PRESETS};
pub use corrections::{compute_k, k_formula, run_with_corrections};
pub use eps_solver::{check_bounds, run_eps, BoundsTolerance, HamiltonianFlux};
pub use error::{Error, Result};
pub use harness::{fit_order, run_sweep, ConvergenceReport, DtRule, OrderFit, Quantity, SweepConfig};
pub use limit_solver::{quadratic_oracle, run_limit};
pub use model::{validate_assumptions, Bump, MassPrefactor, WeightFunction};
pub use moments::{asymptotic_moments, gaussian_gamma, numeric_moments};
pub use scalar::Real;

pub type Grid = grid::Grid1D<f64>;
pub type Field = grid::GridField<f64>;
pub type GrowthModel = model::GrowthModel<f64>;
pub type InitialData = model::InitialData<f64>;
pub type Weight = model::WeightFunction<f64>;
pub type EpsConfig = eps_solver::EpsConfig<f64>;
pub type EpsTrajectory = eps_solver::EpsTrajectory<f64>;
pub type LimitConfig = limit_solver::LimitConfig<f64>;
pub type LimitState = limit_solver::LimitState<f64>;
pub type LimitTrajectory = limit_solver::LimitTrajectory<f64>;
pub type CorrectionState = corrections::CorrectionState<f64>;
pub type CorrectionTrajectory = corrections::CorrectionTrajectory<f64>;
