//! First-order correction terms: `K`, the pair `(y, w)` and `J = K + 𝓘'(x̄) y`,
//! giving `I_ε ≈ I + εJ`, `x_ε ≈ x̄ + εy` and `u_ε ≈ u + εw + ε log(r/√ε)`.
//!
//! With `A = -D²u(x̄)` and every `R`-derivative taken at `(x̄, I)`:
//!
//! ```text
//! y' = A⁻¹ (D³u + ∂ₓ∂_I R J + ∂ₓ²R y) + A⁻² ∂ₓR (D³u y + D²w(x̄))
//! ∂t w = 2 ∇u ∇w + Δu + ∂_I R(x, I) J
//! ```
//!
//! started from `y = 0`, `w = 0`. The transport term of `w` is upwinded.

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::limit_solver::{advance_limit, restamp, LimitConfig, LimitState, LimitTrajectory};
use crate::model::{GrowthModel, InitialData, WeightFunction};
use crate::scalar::{lit, to_f64, Real};

const SENSITIVITY_FLOOR: f64 = 1e-12;

/// `K` from the values of the limit solution at `x̄`:
///
/// `K = -(∂_I R)⁻¹ [ (ψ'/ψ ∂ₓR + ½ ∂ₓ²R) / A + ½ D³u ∂ₓR / A² + (∂ₓR)² / (A I ∂_I R) ]`.
pub fn k_formula<F: Real>(
    model: &GrowthModel<F>,
    psi: &WeightFunction<F>,
    xbar: F,
    intake: F,
    d2u: F,
    d3u: F,
) -> Result<F> {
    let a = -d2u;
    if !(a > F::zero()) {
        return Err(Error::Degeneracy(format!("D²u(x̄) = {} is not negative", to_f64(d2u))));
    }
    if !(intake > F::zero()) {
        return Err(Error::Degeneracy(format!("intake {} is not positive", to_f64(intake))));
    }
    let r = model.eval(xbar, intake)?;
    if r.d_i.abs() < lit(SENSITIVITY_FLOOR) {
        return Err(Error::Degeneracy("∂R/∂I vanishes".into()));
    }
    let [p, dp, _, _] = psi.derivatives(xbar);
    let half = lit::<F>(0.5);
    let laplace = (dp / p * r.d_x + half * r.d_xx) / a + half * d3u * r.d_x / (a * a);
    let transport = r.d_x * r.d_x / (a * intake * r.d_i);
    Ok(-(laplace + transport) / r.d_i)
}

pub fn compute_k<F: Real>(limit: &LimitState<F>, model: &GrowthModel<F>, psi: &WeightFunction<F>) -> Result<F> {
    k_formula(model, psi, limit.xbar, limit.intake, limit.d2u_at_xbar, limit.d3u_at_xbar)
}

/// `J = K + 𝓘'(x̄) y`.
pub fn intake_correction_j<F: Real>(k: F, y: F, limit: &LimitState<F>, model: &GrowthModel<F>) -> Result<F> {
    Ok(k + model.optimal_intake(limit.xbar)?.gradient * y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionState<F> {
    pub t: F,
    pub y: F,
    pub w: GridField<F>,
    pub k: F,
    pub j: F,
    pub w_at_xbar: F,
    pub dw_at_xbar: F,
    pub d2w_at_xbar: F,
    pub d3w_at_xbar: F,
}

impl<F: Real> CorrectionState<F> {
    /// `y = 0`, `w ≡ 0` aligned with `limit`.
    pub fn initial(limit: &LimitState<F>, model: &GrowthModel<F>, psi: &WeightFunction<F>) -> Result<Self> {
        Self::assemble(limit.t, F::zero(), GridField::constant(*limit.u.grid(), F::zero()), limit, model, psi)
    }

    fn assemble(
        t: F,
        y: F,
        w: GridField<F>,
        limit: &LimitState<F>,
        model: &GrowthModel<F>,
        psi: &WeightFunction<F>,
    ) -> Result<Self> {
        let k = compute_k(limit, model, psi)?;
        let j = intake_correction_j(k, y, limit, model)?;
        let x = limit.xbar;
        Ok(Self {
            t,
            y,
            k,
            j,
            w_at_xbar: w.sample_at(x)?,
            dw_at_xbar: w.diff(1).sample_at(x)?,
            d2w_at_xbar: w.diff(2).sample_at(x)?,
            d3w_at_xbar: w.diff(3).sample_at(x)?,
            w,
        })
    }
}

/// Right-hand sides of the `(y, w)` system for a given limit state.
fn yw_rhs<F: Real>(
    y: F,
    w: &GridField<F>,
    limit: &LimitState<F>,
    model: &GrowthModel<F>,
    psi: &WeightFunction<F>,
) -> Result<(F, Vec<F>)> {
    let k = compute_k(limit, model, psi)?;
    let j = intake_correction_j(k, y, limit, model)?;
    let r = model.eval(limit.xbar, limit.intake)?;
    let a = -limit.d2u_at_xbar;
    let d2w = w.diff(2).sample_at(limit.xbar)?;
    let dy = (limit.d3u_at_xbar + r.d_ix * j + r.d_xx * y) / a
        + r.d_x * (limit.d3u_at_xbar * y + d2w) / (a * a);

    let du = limit.u.diff(1);
    let d2u = limit.u.diff(2);
    let two = lit::<F>(2.0);
    let dw_dt = w
        .grid()
        .points()
        .enumerate()
        .map(|(i, x)| {
            let ri = model.eval_unchecked(x, limit.intake).d_i;
            let speed = two * du.values()[i];
            speed * upwind_slope(w.values(), i, speed, w.grid().h()) + d2u.values()[i] + ri * j
        })
        .collect();
    Ok((dy, dw_dt))
}

/// Second-order one-sided slope of `v` at node `i`, taken on the side the
/// transport `∂t w = c ∂ₓw` draws from (forward when `c > 0`). Centered
/// slopes leave odd-even modes of `w` undamped.
fn upwind_slope<F: Real>(v: &[F], i: usize, c: F, h: F) -> F {
    let n = v.len();
    let (three, four, two) = (lit::<F>(3.0), lit::<F>(4.0), lit::<F>(2.0));
    let forward = c > F::zero();
    if (forward && i + 2 < n) || (!forward && i < 2) {
        (-three * v[i] + four * v[i + 1] - v[i + 2]) / (two * h)
    } else {
        (three * v[i] - four * v[i - 1] + v[i - 2]) / (two * h)
    }
}

/// One Heun step from `limit_now` to `limit_next` (which must be `dt` apart).
pub fn advance_yw<F: Real>(
    state: &CorrectionState<F>,
    limit_now: &LimitState<F>,
    limit_next: &LimitState<F>,
    dt: F,
    model: &GrowthModel<F>,
    psi: &WeightFunction<F>,
) -> Result<CorrectionState<F>> {
    let gap = (limit_next.t - limit_now.t - dt).abs();
    if gap > lit::<F>(1e-9) * (F::one() + dt) || (state.t - limit_now.t).abs() > lit::<F>(1e-9) {
        return Err(Error::Misalignment(format!(
            "correction at t = {}, limit states at {} and {}, dt = {}",
            to_f64(state.t),
            to_f64(limit_now.t),
            to_f64(limit_next.t),
            to_f64(dt)
        )));
    }
    let grid = *state.w.grid();
    let (dy1, dw1) = yw_rhs(state.y, &state.w, limit_now, model, psi)?;
    let y1 = state.y + dt * dy1;
    let w1 = GridField::from_raw(grid, state.w.values().iter().zip(&dw1).map(|(&w, &d)| w + dt * d).collect());
    let (dy2, dw2) = yw_rhs(y1, &w1, limit_next, model, psi)?;
    let half = lit::<F>(0.5) * dt;
    let y = state.y + half * (dy1 + dy2);
    let w: Vec<F> = state
        .w
        .values()
        .iter()
        .zip(dw1.iter().zip(&dw2))
        .map(|(&w, (&a, &b))| w + half * (a + b))
        .collect();
    if !y.is_finite() || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { step: 0, time: to_f64(limit_next.t) });
    }
    CorrectionState::assemble(limit_next.t, y, GridField::from_raw(grid, w), limit_next, model, psi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionPoint<F> {
    pub t: F,
    pub k: F,
    pub y: F,
    pub j: F,
    pub w_at_xbar: F,
    pub dw_at_xbar: F,
    pub d2w_at_xbar: F,
    pub d3w_at_xbar: F,
}

impl<F: Real> From<&CorrectionState<F>> for CorrectionPoint<F> {
    fn from(s: &CorrectionState<F>) -> Self {
        Self {
            t: s.t,
            k: s.k,
            y: s.y,
            j: s.j,
            w_at_xbar: s.w_at_xbar,
            dw_at_xbar: s.dw_at_xbar,
            d2w_at_xbar: s.d2w_at_xbar,
            d3w_at_xbar: s.d3w_at_xbar,
        }
    }
}

/// Dense `(t, K, y, J, ...)` series and `w` snapshots on the limit snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTrajectory<F> {
    pub dense: Vec<CorrectionPoint<F>>,
    pub snapshots: Vec<CorrectionState<F>>,
}

impl<F: Real> CorrectionTrajectory<F> {
    pub fn max_abs_y(&self) -> F {
        self.dense.iter().fold(F::zero(), |m, p| m.max(p.y.abs()))
    }

    pub fn max_abs_w(&self) -> F {
        self.snapshots
            .iter()
            .flat_map(|s| s.w.values().iter())
            .fold(F::zero(), |m, v| m.max(v.abs()))
    }
}

/// Runs the limit system and the correction system in lockstep.
pub fn run_with_corrections<F: Real>(
    model: &GrowthModel<F>,
    psi: &WeightFunction<F>,
    init: &InitialData<F>,
    cfg: &LimitConfig<F>,
) -> Result<(LimitTrajectory<F>, CorrectionTrajectory<F>)> {
    let mut limit = LimitState::initial(model, init, &cfg.grid)?;
    let mut corr = CorrectionState::initial(&limit, model, psi)?;
    let mut lt = LimitTrajectory::new(limit.clone());
    let mut ct = CorrectionTrajectory { dense: vec![(&corr).into()], snapshots: vec![corr.clone()] };
    for step in 1..=cfg.total_steps() {
        let (mut next, report) = advance_limit(&limit, cfg.dt, model).map_err(|e| restamp(e, step))?;
        next.t = F::from_usize(step).unwrap() * cfg.dt;
        let dt = next.t - limit.t;
        let mut next_corr = advance_yw(&corr, &limit, &next, dt, model, psi).map_err(|e| restamp(e, step))?;
        next_corr.t = next.t;
        let snap = step % cfg.snapshot_stride == 0;
        lt.record(&next, report, snap);
        ct.dense.push((&next_corr).into());
        if snap {
            ct.snapshots.push(next_corr.clone());
        }
        limit = next;
        corr = next_corr;
    }
    Ok((lt, ct))
}

/// First-order predictions on the limit snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderPrediction<F> {
    pub times: Vec<F>,
    pub intake: Vec<F>,
    pub dominant: Vec<F>,
    /// `u + εw + ε log(r/√ε)`.
    pub potential: Vec<GridField<F>>,
}

/// `I + εJ`, `x̄ + εy` and `u + εw + offset`, where `offset = ε log(r/√ε)`.
pub fn assemble_first_order<F: Real>(
    limit: &LimitTrajectory<F>,
    corr: &CorrectionTrajectory<F>,
    eps: F,
    offset: F,
) -> Result<FirstOrderPrediction<F>> {
    if limit.snapshots.len() != corr.snapshots.len() {
        return Err(Error::Misalignment(format!(
            "{} limit snapshots vs {} correction snapshots",
            limit.snapshots.len(),
            corr.snapshots.len()
        )));
    }
    let mut out = FirstOrderPrediction { times: vec![], intake: vec![], dominant: vec![], potential: vec![] };
    for (l, c) in limit.snapshots.iter().zip(&corr.snapshots) {
        if (l.t - c.t).abs() > lit::<F>(1e-9) {
            return Err(Error::Misalignment(format!("t = {} vs {}", to_f64(l.t), to_f64(c.t))));
        }
        out.times.push(l.t);
        out.intake.push(l.intake + eps * c.j);
        out.dominant.push(l.xbar + eps * c.y);
        out.potential.push(l.u.axpby(F::one(), &c.w, eps).map(|v| v + offset));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;

    fn p0() -> GrowthModel<f64> {
        GrowthModel::p0()
    }

    #[test]
    fn k_examples() {
        let one = WeightFunction::ConstantOne;
        assert!((k_formula(&p0(), &one, 0.0, 1.0, -1.0, 0.0).unwrap() + 1.0).abs() < 1e-14);
        let k = k_formula(&p0(), &one, 0.5, 0.75, -1.0, 0.0).unwrap();
        assert!((k + 7.0 / 3.0).abs() < 1e-14, "{k}");
        // flat model: R = 1 - I, no x dependence
        let flat = GrowthModel::new(1.0, 0.0, 1.0, 0.0);
        assert_eq!(k_formula(&flat, &one, 0.3, 1.0, -1.0, 0.0).unwrap(), 0.0);
        let insensitive = GrowthModel::new(1.0, 1.0, 0.0, 0.0);
        assert!(k_formula(&insensitive, &one, 0.0, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn k_matches_gaussian_reduction() {
        // For P0 with L1 = 1/2 the ε-problem keeps n Gaussian with unit-curvature
        // potential centred at m(t) and ε d/dt log I = 1 - ε - m² - I, so the
        // slow manifold gives I = 1 - m² - ε(1 + 4m²/(1 - m²)) + O(ε²).
        for m in [0.0, 0.2, 0.5, 0.7] {
            let i = 1.0 - m * m;
            let k = k_formula(&p0(), &WeightFunction::ConstantOne, m, i, -1.0, 0.0).unwrap();
            let expected = -1.0 - 4.0 * m * m / (1.0 - m * m);
            assert!((k - expected).abs() < 1e-12, "m = {m}: {k} vs {expected}");
        }
    }

    fn stationary() -> (Grid1D<f64>, LimitConfig<f64>, InitialData<f64>) {
        let g = Grid1D::new(-4.0, 4.0, 401).unwrap();
        let cfg = LimitConfig { horizon: 0.5, dt: 1e-3, snapshot_stride: 50, grid: g };
        (g, cfg, InitialData::quadratic(0.5, 0.0, 1.0))
    }

    #[test]
    fn stationary_corrections_vanish() {
        let (_, cfg, init) = stationary();
        let (lt, ct) = run_with_corrections(&p0(), &WeightFunction::ConstantOne, &init, &cfg).unwrap();
        assert!(ct.max_abs_y() <= 1e-8);
        assert!(ct.max_abs_w() <= 1e-8);
        for p in &ct.dense {
            assert!((p.k + 1.0).abs() < 1e-10 && (p.j + 1.0).abs() < 1e-10);
        }
        let pred = assemble_first_order(&lt, &ct, 0.05, 0.0).unwrap();
        for &i in &pred.intake {
            assert!((i - 0.95).abs() < 1e-10);
        }
        let exact = assemble_first_order(&lt, &ct, 0.0, 0.0).unwrap();
        for (p, l) in exact.potential.iter().zip(&lt.snapshots) {
            assert_eq!(p.values(), l.u.values());
        }
    }

    #[test]
    fn zero_forcing_keeps_zero() {
        // R = 1 - I with linear u: Δu = 0, K = 0, every forcing term vanishes
        let flat = GrowthModel::new(1.0, 0.0, 1.0, 0.0);
        let g = Grid1D::new(-2.0, 2.0, 81).unwrap();
        let u = GridField::from_fn(g, |x| -1e-3 * x);
        let limit = LimitState { t: 0.0, u, xbar: 0.0, intake: 1.0, d2u_at_xbar: -1.0, d3u_at_xbar: 0.0 };
        let psi = WeightFunction::ConstantOne;
        let state = CorrectionState::initial(&limit, &flat, &psi).unwrap();
        let next_limit = LimitState { t: 0.01, ..limit.clone() };
        let next = advance_yw(&state, &limit, &next_limit, 0.01, &flat, &psi).unwrap();
        assert_eq!(next.y, 0.0);
        assert!(next.w.values().iter().all(|v: &f64| v.abs() < 1e-15));
    }

    #[test]
    fn transient_w_stays_quadratic() {
        let g = Grid1D::new(-4.0, 4.0, 401).unwrap();
        let cfg = LimitConfig { horizon: 1.0, dt: 5e-4, snapshot_stride: 200, grid: g };
        let init = InitialData::quadratic(0.5, 0.5, 1.0);
        let (_, ct) = run_with_corrections(&p0(), &WeightFunction::ConstantOne, &init, &cfg).unwrap();
        assert!((ct.dense[0].j + 7.0 / 3.0).abs() < 1e-10);
        assert!(ct.dense.iter().all(|p| p.d3w_at_xbar.abs() <= 1e-6));
        let pred0 = ct.dense[0].j * 0.04 + 0.75;
        assert!((pred0 - (0.75 - 0.04 * 7.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn misaligned_states_are_rejected() {
        let (_, cfg, init) = stationary();
        let psi = WeightFunction::ConstantOne;
        let l0 = LimitState::initial(&p0(), &init, &cfg.grid).unwrap();
        let c0 = CorrectionState::initial(&l0, &p0(), &psi).unwrap();
        let l1 = LimitState { t: 0.5, ..l0.clone() };
        assert!(matches!(advance_yw(&c0, &l0, &l1, 1e-3, &p0(), &psi), Err(Error::Misalignment(_))));
    }

    #[test]
    fn heun_order_in_time() {
        let g = Grid1D::new(-4.0, 4.0, 201).unwrap();
        let init = InitialData::quadratic(0.7, 0.5, 1.0);
        let psi = WeightFunction::SmoothPositive { c0: 1.0, c1: 0.3, c2: 0.2, c3: 1.0 };
        // a quadratic model keeps w flat and y at zero, so bend the rate
        let model = p0().with_perturbation(crate::model::Bump::new(0.2, 0.3, 1.0));
        let run = |dt: f64| {
            let cfg = LimitConfig { horizon: 0.4, dt, snapshot_stride: 1, grid: g };
            let (_, ct) = run_with_corrections(&model, &psi, &init, &cfg).unwrap();
            ct.dense.last().unwrap().y
        };
        let (a, b, c) = (run(1e-3), run(5e-4), run(2.5e-4));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(c.abs() > 1e-6, "{c}");
        assert!(ratio >= 3.5, "{ratio}");
    }
}
