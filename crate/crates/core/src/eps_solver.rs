//! The ε-scaled problem in Hopf–Cole variables,
//! `∂t u = ε Δu + |∇u|² + R(x, I(t))` with `I = ∫ ψ e^{u/ε} dx`.
//!
//! Time stepping is explicit Heun (two-stage SSP Runge–Kutta); the intake is
//! recomputed from each stage's `u`. Boundary nodes use one-sided stencils and
//! no boundary value is imposed.

use crate::error::{Error, Result};
use crate::grid::{diff1, diff2, logsumexp_integral, Grid1D, GridField};
use crate::model::{GrowthModel, InitialData, MassPrefactor, WeightFunction, MARGIN_FACTOR};
use crate::scalar::{lit, to_f64, Real};

/// Safety factor applied to both explicit stability limits.
pub const CFL: f64 = 0.4;

/// Discretization of the Hamiltonian `|∇u|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HamiltonianFlux {
    /// Square of the centered difference (second order).
    #[default]
    Centered,
    /// First-order local Lax–Friedrichs flux, for robustness experiments.
    LocalLaxFriedrichs,
}

/// `CFL · min(h² / (2ε), h / (2 max|∇u|))`; the diffusive limit is absent when ε = 0.
pub fn stability_limit<F: Real>(eps: F, h: F, max_grad: F) -> F {
    let two = lit::<F>(2.0);
    let cfl = lit::<F>(CFL);
    let diffusive = if eps > F::zero() { h * h / (two * eps) } else { F::infinity() };
    let advective = if max_grad > F::zero() { h / (two * max_grad) } else { F::infinity() };
    cfl * diffusive.min(advective)
}

pub(crate) fn max_abs_gradient<F: Real>(u: &GridField<F>) -> F {
    u.diff(1).values().iter().fold(F::zero(), |m, v| m.max(v.abs()))
}

/// Splits `interval` into the fewest equal steps not exceeding `dt_max`.
pub fn substeps<F: Real>(interval: F, dt_max: F) -> (usize, F) {
    let n = (interval / dt_max).ceil().to_usize().unwrap_or(1).max(1);
    let n = if F::from_usize(n).unwrap() * dt_max < interval * (F::one() - lit(1e-12)) { n + 1 } else { n };
    (n, interval / F::from_usize(n).unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsConfig<F> {
    pub eps: F,
    pub horizon: F,
    pub dt: F,
    pub grid: Grid1D<F>,
    /// Steps between stored snapshots; snapshots sit at `k · stride · dt`.
    pub snapshot_stride: usize,
    pub flux: HamiltonianFlux,
}

impl<F: Real> EpsConfig<F> {
    /// Configuration whose snapshots land exactly on multiples of
    /// `snapshot_interval`, with the largest stable step for data `u0`.
    pub fn aligned(
        eps: F,
        horizon: F,
        grid: Grid1D<F>,
        snapshot_interval: F,
        u0: &GridField<F>,
    ) -> Result<Self> {
        let dt_max = stability_limit(eps, grid.h(), max_abs_gradient(u0));
        Self::with_max_step(eps, horizon, grid, snapshot_interval, dt_max)
    }

    /// As [`EpsConfig::aligned`] but with a caller-chosen upper bound on `dt`.
    pub fn with_max_step(
        eps: F,
        horizon: F,
        grid: Grid1D<F>,
        snapshot_interval: F,
        dt_max: F,
    ) -> Result<Self> {
        if !(snapshot_interval > F::zero()) || !(horizon > F::zero()) {
            return Err(Error::Validation(vec!["horizon and snapshot interval must be positive".into()]));
        }
        let (stride, dt) = substeps(snapshot_interval, dt_max);
        Ok(Self { eps, horizon, dt, grid, snapshot_stride: stride, flux: HamiltonianFlux::Centered })
    }

    pub fn total_steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(0)
    }

    /// Refuses configurations that violate the explicit stability limit.
    pub fn check_stability(&self, u0: &GridField<F>) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.eps > F::zero()) {
            problems.push(format!("eps = {} must be positive", to_f64(self.eps)));
        }
        if !(self.horizon > F::zero()) {
            problems.push("horizon must be positive".to_string());
        }
        let limit = stability_limit(self.eps, self.grid.h(), max_abs_gradient(u0));
        if self.dt > limit * (F::one() + lit(1e-12)) {
            problems.push(format!(
                "dt = {:e} exceeds the stability limit {:e} (eps = {}, h = {:e})",
                to_f64(self.dt),
                to_f64(limit),
                to_f64(self.eps),
                to_f64(self.grid.h())
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// `u⁰ + ε log(r / √ε)` on the grid. The prefactor must already be resolved.
pub fn initial_potential<F: Real>(init: &InitialData<F>, eps: F, grid: &Grid1D<F>) -> Result<GridField<F>> {
    let r = match init.r {
        MassPrefactor::Fixed(r) => r,
        MassPrefactor::Prepared => {
            return Err(Error::Misuse("prepared prefactor must be resolved for a given eps first".into()))
        }
    };
    if !(eps > F::zero()) || !(r > F::zero()) {
        return Err(Error::Domain(format!("need eps > 0 and r > 0 (eps = {}, r = {})", to_f64(eps), to_f64(r))));
    }
    let offset = eps * (r / eps.sqrt()).ln();
    Ok(GridField::from_fn(*grid, |x| init.u0(x) + offset))
}

/// `I = ∫ ψ e^{u/ε} dx`, overflow-free.
pub fn compute_intake<F: Real>(u: &GridField<F>, psi: &GridField<F>, eps: F) -> Result<F> {
    let (i, _) = u.max_sample();
    if i == 0 || i + 1 == u.values().len() {
        return Err(Error::BoundaryContact { x: to_f64(u.grid().x(i)), time: f64::NAN });
    }
    Ok(logsumexp_integral(u, psi, eps).exp())
}

/// Reusable buffers and precomputed profiles for one grid.
struct Stepper<F> {
    grid: Grid1D<F>,
    eps: F,
    flux: HamiltonianFlux,
    psi: GridField<F>,
    /// `R(x, 0)`; the canonical family is affine in `I` with slope `-b`.
    base_rate: Vec<F>,
    intake_slope: F,
    grad: Vec<F>,
    lap: Vec<F>,
    k1: Vec<F>,
    k2: Vec<F>,
    stage: Vec<F>,
}

impl<F: Real> Stepper<F> {
    fn new(cfg: &EpsConfig<F>, model: &GrowthModel<F>, psi: &WeightFunction<F>) -> Self {
        let n = cfg.grid.len();
        Self {
            grid: cfg.grid,
            eps: cfg.eps,
            flux: cfg.flux,
            psi: psi.sample(&cfg.grid),
            base_rate: model.rate_profile(&cfg.grid, F::zero()).into_values(),
            intake_slope: -model.b,
            grad: vec![F::zero(); n],
            lap: vec![F::zero(); n],
            k1: vec![F::zero(); n],
            k2: vec![F::zero(); n],
            stage: vec![F::zero(); n],
        }
    }

    fn intake(&self, u: &[F]) -> Result<F> {
        compute_intake(&GridField::from_raw(self.grid, u.to_vec()), &self.psi, self.eps)
    }

    /// Right-hand side `ε Δu + H(∇u) + R(x, I)` into `out`.
    fn rhs(&mut self, u: &[F], intake: F, which: usize) {
        let h = self.grid.h();
        diff2(u, h, &mut self.lap);
        let out = if which == 1 { &mut self.k1 } else { &mut self.k2 };
        match self.flux {
            HamiltonianFlux::Centered => {
                diff1(u, h, &mut self.grad);
                for i in 0..u.len() {
                    let g = self.grad[i];
                    out[i] = self.eps * self.lap[i] + g * g + self.base_rate[i] + self.intake_slope * intake;
                }
            }
            HamiltonianFlux::LocalLaxFriedrichs => {
                diff1(u, h, &mut self.grad);
                let n = u.len();
                let half = lit::<F>(0.5);
                for i in 0..n {
                    let ham = if i == 0 || i + 1 == n {
                        self.grad[i] * self.grad[i]
                    } else {
                        let pp = (u[i + 1] - u[i]) / h;
                        let pm = (u[i] - u[i - 1]) / h;
                        let alpha = lit::<F>(2.0) * pp.abs().max(pm.abs());
                        let mid = half * (pp + pm);
                        mid * mid - half * alpha * (pp - pm)
                    };
                    out[i] = self.eps * self.lap[i] + ham + self.base_rate[i] + self.intake_slope * intake;
                }
            }
        }
    }

    /// One Heun step in place. Returns the intake at the start of the step.
    fn step(&mut self, u: &mut [F], dt: F, intake_now: F) -> Result<F> {
        self.rhs(u, intake_now, 1);
        for i in 0..u.len() {
            self.stage[i] = u[i] + dt * self.k1[i];
        }
        let stage = std::mem::take(&mut self.stage);
        let intake_stage = self.intake(&stage)?;
        self.rhs(&stage, intake_stage, 2);
        self.stage = stage;
        let half = lit::<F>(0.5) * dt;
        for i in 0..u.len() {
            u[i] = u[i] + half * (self.k1[i] + self.k2[i]);
        }
        Ok(intake_now)
    }
}

/// One Heun step of the ε-equation from `u` at time `t`.
pub fn advance_eps<F: Real>(
    u: &GridField<F>,
    t: F,
    cfg: &EpsConfig<F>,
    model: &GrowthModel<F>,
    psi: &WeightFunction<F>,
) -> Result<GridField<F>> {
    let mut stepper = Stepper::new(cfg, model, psi);
    let mut values = u.values().to_vec();
    let intake = stepper.intake(&values)?;
    stepper.step(&mut values, cfg.dt, intake)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { step: 1, time: to_f64(t + cfg.dt) });
    }
    Ok(GridField::from_raw(cfg.grid, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsSnapshot<F> {
    pub t: F,
    pub u: GridField<F>,
    pub intake: F,
    pub dominant: F,
}

/// Time series of one ε-run. `u` snapshots carry the `ε log(r/√ε)` offset.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsTrajectory<F> {
    pub eps: F,
    pub prefactor: F,
    pub dt: F,
    pub times: Vec<F>,
    pub intake: Vec<F>,
    pub dominant: Vec<F>,
    pub max_u: Vec<F>,
    pub snapshots: Vec<EpsSnapshot<F>>,
    /// Largest `dt / stability_limit` met during the run.
    pub max_cfl_ratio: F,
}

impl<F: Real> EpsTrajectory<F> {
    /// `ε log(r / √ε)`.
    pub fn offset(&self) -> F {
        self.eps * (self.prefactor / self.eps.sqrt()).ln()
    }
}

fn boundary_drop<F: Real>(u: &GridField<F>, peak: F) -> F {
    let v = u.values();
    peak - v[0].max(v[v.len() - 1])
}

/// Integrates the ε-problem over `[0, cfg.horizon]`.
pub fn run_eps<F: Real>(
    cfg: &EpsConfig<F>,
    model: &GrowthModel<F>,
    psi: &WeightFunction<F>,
    init: &InitialData<F>,
) -> Result<EpsTrajectory<F>> {
    let init = init.resolved(model, psi, cfg.eps, &cfg.grid)?;
    let r = match init.r {
        MassPrefactor::Fixed(r) => r,
        MassPrefactor::Prepared => unreachable!(),
    };
    let u0 = initial_potential(&init, cfg.eps, &cfg.grid)?;
    cfg.check_stability(&u0)?;
    let margin = lit::<F>(MARGIN_FACTOR) * cfg.eps * cfg.eps.recip().ln();

    let mut stepper = Stepper::new(cfg, model, psi);
    let mut u = u0.into_values();
    let steps = cfg.total_steps();
    let mut traj = EpsTrajectory {
        eps: cfg.eps,
        prefactor: r,
        dt: cfg.dt,
        times: Vec::with_capacity(steps + 1),
        intake: Vec::with_capacity(steps + 1),
        dominant: Vec::with_capacity(steps + 1),
        max_u: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        max_cfl_ratio: F::zero(),
    };

    for step in 0..=steps {
        let t = F::from_usize(step).unwrap() * cfg.dt;
        let field = GridField::from_raw(cfg.grid, u.clone());
        let intake = stepper.intake(&u).map_err(|e| stamp(e, t))?;
        let (x_eps, peak) = field.argmax_parabolic().map_err(|e| stamp(e, t))?;
        traj.times.push(t);
        traj.intake.push(intake);
        traj.dominant.push(x_eps);
        traj.max_u.push(peak);
        if step % cfg.snapshot_stride == 0 {
            if boundary_drop(&field, peak) < margin {
                let (i, _) = field.max_sample();
                return Err(Error::BoundaryContact { x: to_f64(cfg.grid.x(i)), time: to_f64(t) });
            }
            let limit = stability_limit(cfg.eps, cfg.grid.h(), max_abs_gradient(&field));
            traj.max_cfl_ratio = traj.max_cfl_ratio.max(cfg.dt / limit * lit(CFL));
            traj.snapshots.push(EpsSnapshot { t, u: field, intake, dominant: x_eps });
        }
        if step == steps {
            break;
        }
        stepper.step(&mut u, cfg.dt, intake).map_err(|e| stamp(e, t))?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: step + 1, time: to_f64(t + cfg.dt) });
        }
    }
    Ok(traj)
}

fn stamp(e: Error, t: impl Real) -> Error {
    match e {
        Error::BoundaryContact { x, .. } => Error::BoundaryContact { x, time: to_f64(t) },
        other => other,
    }
}

/// Tolerances for [`check_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsTolerance {
    /// Allowed excess of `I_ε` over `I_M`.
    pub intake: f64,
    /// Allowed excursion of `D²u_ε` outside `[-2M̲₁, -2M̄₁]`.
    pub curvature: f64,
    /// Half-width of the window around `x_ε` where stencils are trusted.
    pub window: f64,
}

impl Default for BoundsTolerance {
    fn default() -> Self {
        Self { intake: 0.01, curvature: 0.05, window: 1.0 }
    }
}

/// Envelope constants derived from the model and the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeConstants {
    pub m1_under: f64,
    pub m1_over: f64,
    pub l0_under: f64,
    pub l0_over: f64,
    pub k0_over: f64,
    pub intake_max: f64,
}

impl EnvelopeConstants {
    /// `M̲₁ = max(L̲₁, √K̲₁ / 2)`, `M̄₁ = min(L̄₁, √K̄₁ / 2)` plus the
    /// zeroth-order envelope offsets, all sampled on `grid`.
    pub fn new<F: Real>(model: &GrowthModel<F>, init: &InitialData<F>, grid: &Grid1D<F>) -> Self {
        let (k1_under, k1_over) = model.curvature_constants(grid);
        let (l1_under, l1_over) = init.curvature_constants(grid);
        let (k1_under, k1_over) = (to_f64(k1_under), to_f64(k1_over));
        let (l1_under, l1_over) = (to_f64(l1_under), to_f64(l1_over));
        let theta = to_f64(model.theta);
        let mut l0_under = f64::NEG_INFINITY;
        let mut l0_over = f64::NEG_INFINITY;
        let mut k0_over = f64::NEG_INFINITY;
        for x in grid.points() {
            let (xf, u) = (to_f64(x), to_f64(init.u0(x)));
            let d2 = (xf - theta).powi(2);
            l0_under = l0_under.max(-u - l1_under * d2);
            l0_over = l0_over.max(u + l1_over * d2);
            k0_over = k0_over.max(to_f64(model.rate(x, F::zero())) + k1_over * d2);
        }
        Self {
            m1_under: l1_under.max(k1_under.sqrt() / 2.0),
            m1_over: l1_over.min(k1_over.sqrt() / 2.0),
            l0_under,
            l0_over,
            k0_over,
            intake_max: to_f64(model.carrying_intake()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDiagnostics {
    pub t: f64,
    pub intake: f64,
    pub d2_min: f64,
    pub d2_max: f64,
    pub d3_sup: f64,
    pub envelope_ok: bool,
    pub intake_ok: bool,
    pub concavity_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub constants: EnvelopeConstants,
    pub snapshots: Vec<SnapshotDiagnostics>,
    pub intake_violations: usize,
    pub concavity_violations: usize,
    pub envelope_violations: usize,
    /// Worst signed margins (negative means violated).
    pub worst_intake_margin: f64,
    pub worst_concavity_margin: f64,
    pub d3_sup: f64,
    pub intake_min: f64,
}

impl DiagnosticsReport {
    pub fn violations(&self) -> usize {
        self.intake_violations + self.concavity_violations + self.envelope_violations
    }
}

/// Checks positivity and the upper bound of `I_ε`, the quadratic envelope
/// and the two-sided concavity bound of `u_ε` on the trust window, and
/// records `sup |D³u_ε|` there.
pub fn check_bounds<F: Real>(
    traj: &EpsTrajectory<F>,
    model: &GrowthModel<F>,
    init: &InitialData<F>,
    tol: BoundsTolerance,
) -> DiagnosticsReport {
    let grid = *traj.snapshots[0].u.grid();
    let constants = EnvelopeConstants::new(model, init, &grid);
    let eps = to_f64(traj.eps);
    let offset = to_f64(traj.offset());
    let theta = to_f64(model.theta);
    let mut rows = Vec::with_capacity(traj.snapshots.len());
    let (mut iv, mut cv, mut ev) = (0, 0, 0);
    let mut worst_i = f64::INFINITY;
    let mut worst_c = f64::INFINITY;
    let mut d3_all = 0.0f64;
    for snap in &traj.snapshots {
        let t = to_f64(snap.t);
        let x_eps = to_f64(snap.dominant);
        let d2 = snap.u.diff(2);
        let d3 = snap.u.diff(3);
        let (mut d2_min, mut d2_max, mut d3_sup) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        let mut envelope_ok = true;
        for (i, x) in grid.points().enumerate() {
            let xf = to_f64(x);
            if (xf - x_eps).abs() > tol.window {
                continue;
            }
            let v = to_f64(d2.values()[i]);
            d2_min = d2_min.min(v);
            d2_max = d2_max.max(v);
            d3_sup = d3_sup.max(to_f64(d3.values()[i]).abs());
            let shifted = to_f64(snap.u.values()[i]) - offset;
            let r2 = (xf - theta).powi(2);
            let lower = -constants.l0_under - constants.m1_under * r2 - 2.0 * eps * constants.m1_under * t;
            let upper = constants.l0_over - constants.m1_over * r2 + constants.k0_over * t;
            if shifted < lower - 1e-9 || shifted > upper + 1e-9 {
                envelope_ok = false;
            }
        }
        let intake = to_f64(snap.intake);
        let intake_margin = (constants.intake_max + tol.intake - intake).min(intake);
        let lo = -2.0 * constants.m1_under - tol.curvature;
        let hi = -2.0 * constants.m1_over + tol.curvature;
        let conc_margin = (d2_min - lo).min(hi - d2_max);
        worst_i = worst_i.min(intake_margin);
        worst_c = worst_c.min(conc_margin);
        d3_all = d3_all.max(d3_sup);
        let intake_ok = intake > 0.0 && intake_margin >= 0.0;
        let concavity_ok = conc_margin >= 0.0;
        iv += usize::from(!intake_ok);
        cv += usize::from(!concavity_ok);
        ev += usize::from(!envelope_ok);
        rows.push(SnapshotDiagnostics { t, intake, d2_min, d2_max, d3_sup, envelope_ok, intake_ok, concavity_ok });
    }
    let intake_min = traj.intake.iter().map(|&v| to_f64(v)).fold(f64::INFINITY, f64::min);
    DiagnosticsReport {
        constants,
        snapshots: rows,
        intake_violations: iv,
        concavity_violations: cv,
        envelope_violations: ev,
        worst_intake_margin: worst_i,
        worst_concavity_margin: worst_c,
        d3_sup: d3_all,
        intake_min,
    }
}
