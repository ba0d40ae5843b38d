//! ε-sweeps: error norms of the ε-runs against the limit and first-order
//! predictions, empirical convergence orders and discretization-floor flags.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::corrections::{run_with_corrections, CorrectionTrajectory};
use crate::eps_solver::{
    check_bounds, initial_potential, run_eps, stability_limit, BoundsTolerance, DiagnosticsReport, EpsConfig,
    EpsTrajectory, HamiltonianFlux,
};
use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridField};
use crate::limit_solver::{LimitConfig, LimitTrajectory};
use crate::model::{GrowthModel, InitialData, WeightFunction};
use crate::moments::moment_errors;
use crate::report::fmt_f64;

/// Errors below this are treated as exact zeros for fitting purposes.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;
/// Relative change between `h` and `h/2` beyond which a point is floor-contaminated.
pub const REFINE_TOLERANCE: f64 = 0.25;
/// Fitted slopes flatter than this signal a discretization floor.
pub const FLAT_SLOPE: f64 = 0.25;

/// A tracked error quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    IntakeZeroth,
    IntakeFirst,
    TraitZeroth,
    TraitFirst,
    PotentialZeroth,
    PotentialFirst,
    PotentialFirstValue,
    PotentialFirstSlope,
    PotentialFirstCurvature,
    NeutralIntake,
    NeutralIntakeCorrected,
    MeanTrait,
    CentralMoment(usize),
}

impl Quantity {
    pub fn name(&self) -> String {
        match self {
            Self::IntakeZeroth => "intake_zeroth".into(),
            Self::IntakeFirst => "intake_first".into(),
            Self::TraitZeroth => "trait_zeroth".into(),
            Self::TraitFirst => "trait_first".into(),
            Self::PotentialZeroth => "potential_zeroth".into(),
            Self::PotentialFirst => "potential_first_w2inf".into(),
            Self::PotentialFirstValue => "potential_first_value".into(),
            Self::PotentialFirstSlope => "potential_first_d1".into(),
            Self::PotentialFirstCurvature => "potential_first_d2".into(),
            Self::NeutralIntake => "neutral_intake".into(),
            Self::NeutralIntakeCorrected => "neutral_intake_corrected".into(),
            Self::MeanTrait => "mean_trait".into(),
            Self::CentralMoment(j) => format!("central_moment_{j}"),
        }
    }

    /// Human-readable definition, used in summaries.
    pub fn describe(&self) -> String {
        match self {
            Self::IntakeZeroth => "|I_eps - I|".into(),
            Self::IntakeFirst => "|I_eps - I - eps J|".into(),
            Self::TraitZeroth => "|x_eps - xbar|".into(),
            Self::TraitFirst => "|x_eps - xbar - eps y|".into(),
            Self::PotentialZeroth => "window |u_eps - u - eps log(r/sqrt(eps))|".into(),
            Self::PotentialFirst => "window W2,inf |u_eps - u - eps w - eps log(r/sqrt(eps))|".into(),
            Self::PotentialFirstValue => "window |u_eps - u - eps w - offset|".into(),
            Self::PotentialFirstSlope => "window |d/dx (u_eps - u - eps w)|".into(),
            Self::PotentialFirstCurvature => "window |d2/dx2 (u_eps - u - eps w)|".into(),
            Self::NeutralIntake => "|I_eps - I(x_eps)|".into(),
            Self::NeutralIntakeCorrected => "|I_eps - I(x_eps) - eps K|".into(),
            Self::MeanTrait => "|M1_eps - xbar - eps M1|".into(),
            Self::CentralMoment(j) => format!("|Mc{j}_eps - eps^{} M{j}|", j.div_ceil(2)),
        }
    }

    /// Order the asymptotic theory predicts for this error.
    pub fn expected_order(&self) -> f64 {
        match self {
            Self::IntakeZeroth | Self::TraitZeroth | Self::PotentialZeroth | Self::NeutralIntake => 1.0,
            Self::MeanTrait => 1.5,
            Self::CentralMoment(2) => 2.0,
            Self::CentralMoment(j) if j % 2 == 0 => (j / 2) as f64 + 0.5,
            Self::CentralMoment(j) => j.div_ceil(2) as f64,
            _ => 2.0,
        }
    }

    pub fn all(k_max: usize, with_moments: bool) -> Vec<Quantity> {
        let mut q = vec![
            Self::IntakeZeroth,
            Self::IntakeFirst,
            Self::TraitZeroth,
            Self::TraitFirst,
            Self::PotentialZeroth,
            Self::PotentialFirst,
            Self::PotentialFirstValue,
            Self::PotentialFirstSlope,
            Self::PotentialFirstCurvature,
            Self::NeutralIntake,
            Self::NeutralIntakeCorrected,
        ];
        if with_moments {
            q.push(Self::MeanTrait);
            q.extend((2..=k_max).map(Self::CentralMoment));
        }
        q
    }
}

/// Sup-over-snapshot errors of one ε-run, in the order of [`Quantity::all`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSet {
    pub values: Vec<(Quantity, f64)>,
}

impl ErrorSet {
    pub fn get(&self, q: Quantity) -> Option<f64> {
        self.values.iter().find(|(k, _)| *k == q).map(|(_, v)| *v)
    }
}

fn window_sup(field: &GridField<f64>, centre: f64, half_width: f64) -> f64 {
    field
        .grid()
        .points()
        .zip(field.values())
        .filter(|(x, _)| (x - centre).abs() <= half_width)
        .fold(0.0, |m, (_, v)| m.max(v.abs()))
}

/// All error norms of one ε-run. Moment errors are included when `psi ≡ 1`.
#[allow(clippy::too_many_arguments)]
pub fn error_norms(
    eps_traj: &EpsTrajectory<f64>,
    limit: &LimitTrajectory<f64>,
    corr: &CorrectionTrajectory<f64>,
    model: &GrowthModel<f64>,
    psi: &WeightFunction<f64>,
    trust_window: f64,
    k_max: usize,
) -> Result<ErrorSet> {
    let n = eps_traj.snapshots.len();
    if limit.snapshots.len() != n || corr.snapshots.len() != n {
        return Err(Error::Misalignment(format!(
            "{n} ε-snapshots vs {} limit and {} correction snapshots",
            limit.snapshots.len(),
            corr.snapshots.len()
        )));
    }
    let eps = eps_traj.eps;
    let offset = eps_traj.offset();
    let mut sup = [0.0f64; 11];
    for ((s, l), c) in eps_traj.snapshots.iter().zip(&limit.snapshots).zip(&corr.snapshots) {
        if (s.t - l.t).abs() > 1e-9 || (c.t - l.t).abs() > 1e-9 {
            return Err(Error::Misalignment(format!("t = {} vs {}", s.t, l.t)));
        }
        if s.u.grid() != l.u.grid() {
            return Err(Error::Misalignment("ε-run and limit run use different grids".into()));
        }
        let neutral = model.optimal_intake(s.dominant)?;
        let k_at = c.k;
        let zeroth = s.u.axpby(1.0, &l.u, -1.0).map(|v| v - offset);
        let first = zeroth.axpby(1.0, &c.w, -eps);
        let d1 = first.diff(1);
        let d2 = first.diff(2);
        let centre = l.xbar;
        let row = [
            (s.intake - l.intake).abs(),
            (s.intake - l.intake - eps * c.j).abs(),
            (s.dominant - l.xbar).abs(),
            (s.dominant - l.xbar - eps * c.y).abs(),
            window_sup(&zeroth, centre, trust_window),
            0.0,
            window_sup(&first, centre, trust_window),
            window_sup(&d1, centre, trust_window),
            window_sup(&d2, centre, trust_window),
            (s.intake - neutral.intake).abs(),
            (s.intake - neutral.intake - eps * k_at).abs(),
        ];
        for (m, v) in sup.iter_mut().zip(row) {
            *m = m.max(v);
        }
        sup[5] = sup[5].max(row[6] + row[7] + row[8]);
    }
    let mut values: Vec<(Quantity, f64)> = Quantity::all(k_max, false).into_iter().zip(sup).collect();
    if psi.is_constant_one() {
        let m = moment_errors(eps_traj, limit, corr, psi, k_max)?;
        values.push((Quantity::MeanTrait, m.sup_err_mean()));
        values.extend((2..=k_max).map(|j| (Quantity::CentralMoment(j), m.sup_err_central(j))));
    }
    Ok(ErrorSet { values })
}

/// Least-squares fit of `log err = order · log ε + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub order: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    /// Some points were excluded (nonpositive, at the absolute floor or
    /// marked floor-contaminated), or the slope is flat.
    pub floor_flag: bool,
    /// Fewer than three usable points; `order` is NaN.
    pub no_fit: bool,
}

/// Fits an order to `(ε, error, floor-contaminated)` triples.
pub fn fit_order(points: &[(f64, f64, bool)]) -> OrderFit {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, err, floor)| *e > 0.0 && *err > ABSOLUTE_FLOOR && err.is_finite() && !floor)
        .map(|&(e, err, _)| (e.ln(), err.ln()))
        .collect();
    let excluded = usable.len() < points.len();
    if usable.len() < 3 {
        return OrderFit {
            order: f64::NAN,
            intercept: f64::NAN,
            r2: f64::NAN,
            points: usable.len(),
            floor_flag: true,
            no_fit: true,
        };
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    OrderFit { order, intercept, r2, points: usable.len(), floor_flag: excluded || order.abs() < FLAT_SLOPE, no_fit: false }
}

/// How each ε-run picks its time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    /// Largest stable step for the initial datum.
    Auto,
    /// Upper bound on the step; it is shrunk to divide the snapshot interval.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub model: GrowthModel<f64>,
    pub psi: WeightFunction<f64>,
    pub init: InitialData<f64>,
    pub grid: Grid1D<f64>,
    pub horizon: f64,
    pub snapshot_interval: f64,
    pub eps_list: Vec<f64>,
    pub dt_rule: DtRule,
    pub limit_dt: Option<f64>,
    pub flux: HamiltonianFlux,
    pub trust_window: f64,
    pub refine_check: bool,
    pub k_max: usize,
    pub bounds: BoundsTolerance,
    /// Identifier written into reports (the config hash when run from a file).
    pub label: String,
}

impl SweepConfig {
    pub fn check(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.eps_list.is_empty() {
            problems.push("eps_list is empty".to_string());
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0)) {
            problems.push("eps_list entries must be positive".to_string());
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            problems.push("eps_list must be strictly decreasing".to_string());
        }
        if let Some(&min) = self.eps_list.last() {
            if self.grid.h() > 0.2 * min.sqrt() * (1.0 + 1e-12) {
                problems.push(format!(
                    "grid spacing {} does not resolve sqrt(min eps): need h <= {}",
                    self.grid.h(),
                    0.2 * min.sqrt()
                ));
            }
        }
        if !(self.trust_window > 0.0) {
            problems.push("trust_window must be positive".to_string());
        }
        if !(self.snapshot_interval > 0.0) || self.snapshot_interval > self.horizon {
            problems.push("snapshot interval must lie in (0, T]".to_string());
        }
        let ratio = self.horizon / self.snapshot_interval;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            problems.push("T must be a multiple of the snapshot interval".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    fn limit_config(&self, grid: Grid1D<f64>) -> LimitConfig<f64> {
        LimitConfig::aligned(self.horizon, grid, self.snapshot_interval, self.limit_dt, &self.init.sample(&grid))
    }

    /// ε-run configuration on `grid`.
    pub fn eps_config(&self, eps: f64, grid: Grid1D<f64>) -> Result<EpsConfig<f64>> {
        let init = self.init.resolved(&self.model, &self.psi, eps, &grid)?;
        let u0 = initial_potential(&init, eps, &grid)?;
        let mut cfg = match self.dt_rule {
            DtRule::Auto => EpsConfig::aligned(eps, self.horizon, grid, self.snapshot_interval, &u0)?,
            DtRule::Fixed(dt) => {
                let cfg = EpsConfig { eps, horizon: self.horizon, dt, grid, snapshot_stride: 1, flux: self.flux };
                cfg.check_stability(&u0)?;
                EpsConfig::with_max_step(eps, self.horizon, grid, self.snapshot_interval, dt)?
            }
        };
        cfg.flux = self.flux;
        Ok(cfg)
    }

    /// Largest stable ε-step on the base grid, for reporting.
    pub fn stable_dt(&self, eps: f64) -> f64 {
        let u0 = self.init.sample(&self.grid);
        stability_limit(eps, self.grid.h(), crate::eps_solver::max_abs_gradient(&u0))
    }
}

/// Result of one ε in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsOutcome {
    pub eps: f64,
    pub dt: f64,
    pub errors: Option<ErrorSet>,
    pub refined: Option<ErrorSet>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub quantity: Quantity,
    pub eps: f64,
    pub error: f64,
    pub h: f64,
    pub refined_error: Option<f64>,
    pub floor_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub label: String,
    pub h: f64,
    pub trust_window: f64,
    pub wall_time_s: f64,
    pub outcomes: Vec<EpsOutcome>,
    pub rows: Vec<ErrorRow>,
    pub fits: Vec<(Quantity, OrderFit)>,
}

impl ConvergenceReport {
    pub fn fit(&self, q: Quantity) -> Option<OrderFit> {
        self.fits.iter().find(|(k, _)| *k == q).map(|(_, f)| *f)
    }

    pub fn rows_for(&self, q: Quantity) -> impl Iterator<Item = &ErrorRow> + '_ {
        self.rows.iter().filter(move |r| r.quantity == q)
    }

    /// Errors strictly decrease along the ε list over the points that are not floor-flagged.
    pub fn monotone(&self, q: Quantity) -> bool {
        let kept: Vec<f64> = self.rows_for(q).filter(|r| !r.floor_flag).map(|r| r.error).collect();
        kept.windows(2).all(|w| w[1] < w[0])
    }

    pub fn total_bound_violations(&self) -> usize {
        self.outcomes.iter().filter_map(|o| o.diagnostics.as_ref()).map(|d| d.violations()).sum()
    }

    /// `quantity,eps,error,h,floor_flag,error_refined` rows.
    pub fn write_errors_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["quantity", "eps", "error", "h", "floor_flag", "error_refined"])?;
        for r in &self.rows {
            w.write_record([
                r.quantity.name(),
                fmt_f64(r.eps),
                fmt_f64(r.error),
                fmt_f64(r.h),
                u8::from(r.floor_flag).to_string(),
                r.refined_error.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `quantity,fitted_order,intercept,r2,points,floor_flag,no_fit,expected_order` rows.
    pub fn write_orders_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["quantity", "fitted_order", "intercept", "r2", "points", "floor_flag", "no_fit", "expected_order"])?;
        for (q, f) in &self.fits {
            w.write_record([
                q.name(),
                fmt_f64(f.order),
                fmt_f64(f.intercept),
                fmt_f64(f.r2),
                f.points.to_string(),
                u8::from(f.floor_flag).to_string(),
                u8::from(f.no_fit).to_string(),
                fmt_f64(q.expected_order()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-ε status and bound diagnostics.
    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "dt", "status", "bound_violations", "intake_min", "worst_intake_margin", "worst_concavity_margin", "d3u_sup"])?;
        for o in &self.outcomes {
            let d = o.diagnostics.as_ref();
            let num = |f: fn(&DiagnosticsReport) -> f64| d.map(|d| fmt_f64(f(d))).unwrap_or_default();
            w.write_record([
                fmt_f64(o.eps),
                fmt_f64(o.dt),
                o.failure.clone().unwrap_or_else(|| "ok".into()),
                d.map(|d| d.violations().to_string()).unwrap_or_default(),
                num(|d| d.intake_min),
                num(|d| d.worst_intake_margin),
                num(|d| d.worst_concavity_margin),
                num(|d| d.d3_sup),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Limit and correction trajectories for one grid, shared by all ε.
pub struct Reference {
    pub limit: LimitTrajectory<f64>,
    pub corrections: CorrectionTrajectory<f64>,
}

pub fn reference(cfg: &SweepConfig, grid: Grid1D<f64>) -> Result<Reference> {
    let (limit, corrections) = run_with_corrections(&cfg.model, &cfg.psi, &cfg.init, &cfg.limit_config(grid))?;
    Ok(Reference { limit, corrections })
}

fn run_one(cfg: &SweepConfig, eps: f64, grid: Grid1D<f64>, reference: &Reference) -> Result<(f64, ErrorSet, DiagnosticsReport)> {
    let ecfg = cfg.eps_config(eps, grid)?;
    let traj = run_eps(&ecfg, &cfg.model, &cfg.psi, &cfg.init)?;
    let errors = error_norms(&traj, &reference.limit, &reference.corrections, &cfg.model, &cfg.psi, cfg.trust_window, cfg.k_max)?;
    let diag = check_bounds(&traj, &cfg.model, &cfg.init, cfg.bounds);
    Ok((ecfg.dt, errors, diag))
}

/// Runs every ε (concurrently), optionally on `h` and `h/2`, and fits orders.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ConvergenceReport> {
    cfg.check()?;
    let start = Instant::now();
    let base = reference(cfg, cfg.grid)?;
    let fine_grid = cfg.grid.refined();
    let fine = if cfg.refine_check { Some(reference(cfg, fine_grid)?) } else { None };

    let outcomes: Vec<EpsOutcome> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let coarse = run_one(cfg, eps, cfg.grid, &base);
            let refined = fine.as_ref().map(|r| run_one(cfg, eps, fine_grid, r));
            match coarse {
                Ok((dt, errors, diag)) => {
                    let (refined, failure) = match refined {
                        Some(Ok((_, e, _))) => (Some(e), None),
                        Some(Err(e)) => (None, Some(format!("refined run: {e}"))),
                        None => (None, None),
                    };
                    EpsOutcome { eps, dt, errors: Some(errors), refined, diagnostics: Some(diag), failure }
                }
                Err(e) => EpsOutcome { eps, dt: f64::NAN, errors: None, refined: None, diagnostics: None, failure: Some(e.to_string()) },
            }
        })
        .collect();

    let quantities = Quantity::all(cfg.k_max, cfg.psi.is_constant_one());
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &q in &quantities {
        let mut points = Vec::new();
        for o in &outcomes {
            let Some(errors) = &o.errors else { continue };
            let Some(error) = errors.get(q) else { continue };
            let refined_error = o.refined.as_ref().and_then(|r| r.get(q));
            let contaminated = refined_error.is_some_and(|r| {
                let scale = error.abs().max(r.abs());
                scale > 0.0 && (error - r).abs() / scale > REFINE_TOLERANCE
            });
            let floor_flag = contaminated || error <= ABSOLUTE_FLOOR || (cfg.refine_check && refined_error.is_none());
            rows.push(ErrorRow { quantity: q, eps: o.eps, error, h: cfg.grid.h(), refined_error, floor_flag });
            points.push((o.eps, error, floor_flag));
        }
        fits.push((q, fit_order(&points)));
    }

    Ok(ConvergenceReport {
        label: cfg.label.clone(),
        h: cfg.grid.h(),
        trust_window: cfg.trust_window,
        wall_time_s: start.elapsed().as_secs_f64(),
        outcomes,
        rows,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let f = fit_order(&[(0.1, 1e-2, false), (0.05, 2.5e-3, false), (0.025, 6.25e-4, false)]);
        assert!((f.order - 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12 && !f.floor_flag);
        let f = fit_order(&[(0.1, 0.03, false), (0.05, 0.015, false), (0.025, 0.0075, false)]);
        assert!((f.order - 1.0).abs() < 1e-12);
        assert!((f.intercept - 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_errors_are_a_floor() {
        let f = fit_order(&[(0.1, 1e-9, false), (0.05, 1e-9, false), (0.025, 1e-9, false)]);
        assert!(f.order.abs() < 1e-12);
        assert!(f.floor_flag);
    }

    #[test]
    fn too_few_points_do_not_fit() {
        let f = fit_order(&[(0.1, 1e-2, false), (0.05, 0.0, false), (0.025, 1e-3, true)]);
        assert!(f.no_fit && f.order.is_nan() && f.points == 1);
    }

    #[test]
    fn expected_orders() {
        assert_eq!(Quantity::CentralMoment(2).expected_order(), 2.0);
        assert_eq!(Quantity::CentralMoment(3).expected_order(), 2.0);
        assert_eq!(Quantity::CentralMoment(4).expected_order(), 2.5);
        assert_eq!(Quantity::CentralMoment(5).expected_order(), 3.0);
        assert_eq!(Quantity::MeanTrait.expected_order(), 1.5);
    }
}
