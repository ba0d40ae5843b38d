//! The ε → 0 limit: `∂t u = |∇u|² + R(x, I(t))`, `R(x̄, I) = 0`, with the
//! dominant trait moved by the canonical equation `x̄' = (-D²u(x̄))⁻¹ ∂ₓR(x̄, I)`.
//!
//! `u` is renormalized to `max u = 0` after every step and the removed amount
//! is kept as a diagnostic.

use crate::eps_solver::{max_abs_gradient, stability_limit, substeps};
use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridField};
use crate::model::{GrowthModel, InitialData};
use crate::numeric::Dopri5;
use crate::scalar::{lit, to_f64, Real};

/// `𝓘(x̄)`, with the check `𝓘(x̄) ≤ I_M`.
pub fn intake_from_constraint<F: Real>(model: &GrowthModel<F>, xbar: F) -> Result<F> {
    let intake = model.optimal_intake(xbar)?.intake;
    let cap = model.carrying_intake();
    if intake > cap + lit(crate::model::ROOT_TOL) {
        return Err(Error::Degeneracy(format!(
            "constraint intake {} exceeds I_M = {}",
            to_f64(intake),
            to_f64(cap)
        )));
    }
    Ok(intake)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitState<F> {
    pub t: F,
    pub u: GridField<F>,
    pub xbar: F,
    pub intake: F,
    pub d2u_at_xbar: F,
    pub d3u_at_xbar: F,
}

impl<F: Real> LimitState<F> {
    /// State at `t = 0` from the initial datum.
    pub fn initial(model: &GrowthModel<F>, init: &InitialData<F>, grid: &Grid1D<F>) -> Result<Self> {
        let xbar = init.dominant_trait();
        if !grid.contains(xbar) {
            return Err(Error::BoundaryContact { x: to_f64(xbar), time: 0.0 });
        }
        Self::assemble(F::zero(), init.sample(grid), xbar, model)
    }

    fn assemble(t: F, u: GridField<F>, xbar: F, model: &GrowthModel<F>) -> Result<Self> {
        let intake = model.optimal_intake(xbar)?.intake;
        let d2u_at_xbar = u.diff(2).sample_at(xbar)?;
        let d3u_at_xbar = u.diff(3).sample_at(xbar)?;
        Ok(Self { t, u, xbar, intake, d2u_at_xbar, d3u_at_xbar })
    }
}

/// `(-D²u(x̄))⁻¹ ∂ₓR(x̄, I)`.
pub fn canonical_rhs<F: Real>(state: &LimitState<F>, model: &GrowthModel<F>) -> Result<F> {
    canonical_velocity(model, state.xbar, state.intake, state.d2u_at_xbar)
}

fn canonical_velocity<F: Real>(model: &GrowthModel<F>, xbar: F, intake: F, d2u: F) -> Result<F> {
    if !(d2u < F::zero()) {
        return Err(Error::Degeneracy(format!("D²u(x̄) = {} is not negative at x̄ = {}", to_f64(d2u), to_f64(xbar))));
    }
    Ok(model.eval(xbar, intake)?.d_x / -d2u)
}

/// Step diagnostics returned alongside the new state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport<F> {
    /// `max u` before renormalization.
    pub drift: F,
    /// `|x̄ - argmax u|` after the step.
    pub argmax_gap: F,
}

fn hj_rhs<F: Real>(u: &GridField<F>, model: &GrowthModel<F>, intake: F) -> Vec<F> {
    let grad = u.diff(1);
    u.grid()
        .points()
        .zip(grad.values())
        .map(|(x, &g)| g * g + model.rate(x, intake))
        .collect()
}

/// One Heun step of `(u, x̄)`; `I` is taken from the constraint at each stage.
pub fn advance_limit<F: Real>(
    state: &LimitState<F>,
    dt: F,
    model: &GrowthModel<F>,
) -> Result<(LimitState<F>, StepReport<F>)> {
    let grid = *state.u.grid();
    let k1 = hj_rhs(&state.u, model, state.intake);
    let v1 = canonical_rhs(state, model)?;
    let stage_u: Vec<F> = state.u.values().iter().zip(&k1).map(|(&u, &k)| u + dt * k).collect();
    let stage_u = GridField::from_raw(grid, stage_u);
    let stage_x = state.xbar + dt * v1;
    let stage_i = model.optimal_intake(stage_x)?.intake;
    let k2 = hj_rhs(&stage_u, model, stage_i);
    let stage_d2 = stage_u.diff(2).sample_at(stage_x)?;
    let v2 = canonical_velocity(model, stage_x, stage_i, stage_d2)?;

    let half = lit::<F>(0.5) * dt;
    let t = state.t + dt;
    let mut next: Vec<F> = state
        .u
        .values()
        .iter()
        .zip(k1.iter().zip(&k2))
        .map(|(&u, (&a, &b))| u + half * (a + b))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { step: 0, time: to_f64(t) });
    }
    let xbar = state.xbar + half * (v1 + v2);
    let field = GridField::from_raw(grid, std::mem::take(&mut next));
    let (peak_x, drift) = field.argmax_parabolic().map_err(|e| match e {
        Error::BoundaryContact { x, .. } => Error::BoundaryContact { x, time: to_f64(t) },
        other => other,
    })?;
    let field = field.map(|v| v - drift);
    let next = LimitState::assemble(t, field, xbar, model)?;
    Ok((next, StepReport { drift, argmax_gap: (xbar - peak_x).abs() }))
}

/// Time stepping parameters shared by the limit and correction solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitConfig<F> {
    pub horizon: F,
    pub dt: F,
    pub snapshot_stride: usize,
    pub grid: Grid1D<F>,
}

impl<F: Real> LimitConfig<F> {
    /// Snapshots on multiples of `snapshot_interval`; `dt_max` defaults to the
    /// advective stability limit of the initial datum.
    pub fn aligned(
        horizon: F,
        grid: Grid1D<F>,
        snapshot_interval: F,
        dt_max: Option<F>,
        u0: &GridField<F>,
    ) -> Self {
        let dt_max = dt_max.unwrap_or_else(|| stability_limit(F::zero(), grid.h(), max_abs_gradient(u0)));
        let (stride, dt) = substeps(snapshot_interval, dt_max);
        Self { horizon, dt, snapshot_stride: stride, grid }
    }

    pub fn total_steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(0)
    }
}

/// One row of the dense series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPoint<F> {
    pub t: F,
    pub xbar: F,
    pub intake: F,
    pub d2u: F,
    pub d3u: F,
    pub drift: F,
    pub argmax_gap: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitTrajectory<F> {
    pub snapshots: Vec<LimitState<F>>,
    pub dense: Vec<LimitPoint<F>>,
}

impl<F: Real> LimitTrajectory<F> {
    pub(crate) fn new(first: LimitState<F>) -> Self {
        let point = LimitPoint {
            t: first.t,
            xbar: first.xbar,
            intake: first.intake,
            d2u: first.d2u_at_xbar,
            d3u: first.d3u_at_xbar,
            drift: F::zero(),
            argmax_gap: (first.xbar - first.u.argmax_parabolic().map(|p| p.0).unwrap_or(first.xbar)).abs(),
        };
        Self { snapshots: vec![first], dense: vec![point] }
    }

    pub(crate) fn record(&mut self, state: &LimitState<F>, report: StepReport<F>, snapshot: bool) {
        self.dense.push(LimitPoint {
            t: state.t,
            xbar: state.xbar,
            intake: state.intake,
            d2u: state.d2u_at_xbar,
            d3u: state.d3u_at_xbar,
            drift: report.drift,
            argmax_gap: report.argmax_gap,
        });
        if snapshot {
            self.snapshots.push(state.clone());
        }
    }

    pub fn max_drift(&self) -> F {
        self.dense.iter().fold(F::zero(), |m, p| m.max(p.drift.abs()))
    }

    pub fn max_argmax_gap(&self) -> F {
        self.dense.iter().fold(F::zero(), |m, p| m.max(p.argmax_gap))
    }
}

/// Integrates the limit system over `[0, cfg.horizon]`.
pub fn run_limit<F: Real>(
    model: &GrowthModel<F>,
    init: &InitialData<F>,
    cfg: &LimitConfig<F>,
) -> Result<LimitTrajectory<F>> {
    let mut state = LimitState::initial(model, init, &cfg.grid)?;
    let mut traj = LimitTrajectory::new(state.clone());
    for step in 1..=cfg.total_steps() {
        let (next, report) = advance_limit(&state, cfg.dt, model).map_err(|e| restamp(e, step))?;
        state = next;
        state.t = F::from_usize(step).unwrap() * cfg.dt;
        traj.record(&state, report, step % cfg.snapshot_stride == 0);
    }
    Ok(traj)
}

pub(crate) fn restamp(e: Error, step: usize) -> Error {
    match e {
        Error::BlowUp { time, .. } => Error::BlowUp { step, time },
        other => other,
    }
}

/// One row of [`quadratic_oracle`]: `u = -β (x - x̄)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePoint<F> {
    pub t: F,
    pub xbar: F,
    pub intake: F,
    pub beta: F,
}

/// Reference solution of the limit system for a purely quadratic model and
/// datum: `β' = a - 4β²`, `x̄' = -a (x̄ - θ) / β`, `I = 𝓘(x̄)`.
pub fn quadratic_oracle<F: Real>(
    model: &GrowthModel<F>,
    l1: F,
    x_c: F,
    times: &[F],
) -> Result<Vec<OraclePoint<F>>> {
    if model.perturbation.is_some() {
        return Err(Error::Misuse("the quadratic oracle needs an unperturbed model".into()));
    }
    let (a, theta) = (model.a, model.theta);
    let intake = |x: F| (model.r0 - a * (x - theta) * (x - theta)) / model.b;
    let beta_star = a.sqrt() * lit(0.5);
    if (l1 - beta_star).abs() <= F::epsilon() * beta_star {
        let rate = lit::<F>(2.0) * a.sqrt();
        return Ok(times
            .iter()
            .map(|&t| {
                let xbar = theta + (x_c - theta) * (-rate * t).exp();
                OraclePoint { t, xbar, intake: intake(xbar), beta: l1 }
            })
            .collect());
    }
    let four = lit::<F>(4.0);
    let states = Dopri5::new(lit(1e-12)).solve(
        |_, y: &[F; 2]| [a - four * y[0] * y[0], -a * (y[1] - theta) / y[0]],
        F::zero(),
        [l1, x_c],
        times,
    )?;
    Ok(times
        .iter()
        .zip(states)
        .map(|(&t, [beta, xbar])| OraclePoint { t, xbar, intake: intake(xbar), beta })
        .collect())
}
