//! Phenotypic moments of `q_ε = n_ε / ∫ n_ε`: measured from ε-runs and
//! predicted from the limit and correction solutions.

use crate::corrections::{CorrectionState, CorrectionTrajectory};
use crate::eps_solver::EpsTrajectory;
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::limit_solver::{LimitState, LimitTrajectory};
use crate::model::WeightFunction;
use crate::scalar::{lit, to_f64, Real};

pub const DEFAULT_K_MAX: usize = 5;

/// Mean and central moments `Mc[k]` for `k = 2..=k_max` (indices 0 and 1 unused).
#[derive(Debug, Clone, PartialEq)]
pub struct NumericMoments<F> {
    pub mean: F,
    pub central: Vec<F>,
}

/// Moments of the density proportional to `exp(u / ε)`.
pub fn numeric_moments<F: Real>(
    u: &GridField<F>,
    psi: &WeightFunction<F>,
    eps: F,
    k_max: usize,
) -> Result<NumericMoments<F>> {
    if !psi.is_constant_one() {
        return Err(Error::Misuse("moments are defined for the unweighted intake (psi = 1)".into()));
    }
    let (i, umax) = u.max_sample();
    if i == 0 || i + 1 == u.values().len() {
        return Err(Error::BoundaryContact { x: to_f64(u.grid().x(i)), time: f64::NAN });
    }
    let weights = u.map(|v| ((v - umax) / eps).exp());
    let mass = weights.trapezoid();
    let xs: Vec<F> = u.grid().points().collect();
    let moment = |f: &dyn Fn(F) -> F| {
        let field = GridField::from_raw(*u.grid(), xs.iter().zip(weights.values()).map(|(&x, &w)| f(x) * w).collect());
        field.trapezoid() / mass
    };
    let mean = moment(&|x| x);
    let mut central = vec![F::zero(); k_max.max(1) + 1];
    for (k, c) in central.iter_mut().enumerate().skip(2) {
        *c = moment(&|x| (x - mean).powi(k as i32));
    }
    Ok(NumericMoments { mean, central })
}

/// `(2k)! / (2ᵏ k!) = (2k - 1)!!`.
pub fn double_factorial_odd<F: Real>(k: usize) -> F {
    (1..=k).fold(F::one(), |acc, j| acc * F::from_usize(2 * j - 1).unwrap())
}

/// `Γ_k = √(2π) (2k)!/(2ᵏ k!) M₂^{k + 1/2}`, the integral of `y^{2k} e^{-y²/(2M₂)}`.
pub fn gaussian_gamma<F: Real>(k: usize, m2: F) -> F {
    let two_pi = lit::<F>(2.0) * F::PI();
    two_pi.sqrt() * double_factorial_odd::<F>(k) * m2.powi(k as i32) * m2.sqrt()
}

/// Leading-order moment profiles. `orders[j]` is the coefficient of the `j`-th
/// central moment: `Mc_j ≈ ε^{⌈j/2⌉} orders[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPrediction<F> {
    /// `M₁` in `M_{1,ε} ≈ x̄ + ε M₁`.
    pub m1: F,
    pub orders: Vec<F>,
}

impl<F: Real> MomentPrediction<F> {
    pub fn m2(&self) -> F {
        self.orders[2]
    }
}

/// `ε`-power attached to the `j`-th central moment.
pub fn moment_power(j: usize) -> i32 {
    j.div_ceil(2) as i32
}

/// Predicted moments from `D²u, D³u` at `x̄` and `∇w(x̄)`.
pub fn asymptotic_moments<F: Real>(
    limit: &LimitState<F>,
    corr: &CorrectionState<F>,
    k_max: usize,
) -> Result<MomentPrediction<F>> {
    let a = -limit.d2u_at_xbar;
    if !(a > F::zero()) {
        return Err(Error::Degeneracy(format!("D²u(x̄) = {} is not negative", to_f64(limit.d2u_at_xbar))));
    }
    let d3u = limit.d3u_at_xbar;
    let m2 = a.recip();
    let m1 = lit::<F>(0.5) * d3u / (a * a) + corr.dw_at_xbar / a;
    let mut orders = vec![F::zero(); k_max.max(2) + 1];
    for (j, o) in orders.iter_mut().enumerate().skip(2) {
        let k = j / 2;
        *o = if j % 2 == 0 {
            double_factorial_odd::<F>(k) * m2.powi(k as i32)
        } else {
            F::from_usize(k).unwrap() / lit(3.0) * double_factorial_odd::<F>(k + 1) * d3u * m2.powi(k as i32 + 2)
        };
    }
    Ok(MomentPrediction { m1, orders })
}

/// Per-snapshot moment errors of one ε-run.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub mean_eps: Vec<f64>,
    /// `central_eps[s][j]` for snapshot `s` and order `j`.
    pub central_eps: Vec<Vec<f64>>,
    pub mean_pred: Vec<f64>,
    pub central_pred: Vec<Vec<f64>>,
    pub err_mean: Vec<f64>,
    pub err_central: Vec<Vec<f64>>,
}

impl MomentSeries {
    pub fn sup_err_mean(&self) -> f64 {
        self.err_mean.iter().copied().fold(0.0, f64::max)
    }

    pub fn sup_err_central(&self, j: usize) -> f64 {
        self.err_central.iter().map(|row| row[j]).fold(0.0, f64::max)
    }
}

/// `|M_{1,ε} - x̄ - εM₁|` and `|Mc_{j,ε} - ε^{⌈j/2⌉} M_j|` on the shared snapshots.
pub fn moment_errors<F: Real>(
    eps_traj: &EpsTrajectory<F>,
    limit: &LimitTrajectory<F>,
    corr: &CorrectionTrajectory<F>,
    psi: &WeightFunction<F>,
    k_max: usize,
) -> Result<MomentSeries> {
    let n = eps_traj.snapshots.len();
    if limit.snapshots.len() != n || corr.snapshots.len() != n {
        return Err(Error::Misalignment(format!(
            "{n} ε-snapshots, {} limit, {} correction",
            limit.snapshots.len(),
            corr.snapshots.len()
        )));
    }
    let eps = eps_traj.eps;
    let mut out = MomentSeries {
        times: vec![],
        mean_eps: vec![],
        central_eps: vec![],
        mean_pred: vec![],
        central_pred: vec![],
        err_mean: vec![],
        err_central: vec![],
    };
    for ((s, l), c) in eps_traj.snapshots.iter().zip(&limit.snapshots).zip(&corr.snapshots) {
        if (s.t - l.t).abs() > lit::<F>(1e-9) {
            return Err(Error::Misalignment(format!("t = {} vs {}", to_f64(s.t), to_f64(l.t))));
        }
        let measured = numeric_moments(&s.u, psi, eps, k_max)?;
        let pred = asymptotic_moments(l, c, k_max)?;
        let mean_pred = l.xbar + eps * pred.m1;
        let central_pred: Vec<F> = (0..=k_max)
            .map(|j| if j < 2 { F::zero() } else { eps.powi(moment_power(j)) * pred.orders[j] })
            .collect();
        out.times.push(to_f64(s.t));
        out.mean_eps.push(to_f64(measured.mean));
        out.mean_pred.push(to_f64(mean_pred));
        out.err_mean.push(to_f64((measured.mean - mean_pred).abs()));
        out.err_central.push(
            measured.central.iter().zip(&central_pred).map(|(&m, &p)| to_f64((m - p).abs())).collect(),
        );
        out.central_eps.push(measured.central.iter().map(|&v| to_f64(v)).collect());
        out.central_pred.push(central_pred.iter().map(|&v| to_f64(v)).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use std::f64::consts::PI;

    fn grid() -> Grid1D<f64> {
        Grid1D::new(-4.0, 4.0, 8001).unwrap()
    }

    #[test]
    fn gaussian_moments_examples() {
        let u = GridField::from_fn(grid(), |x| -x * x / 2.0);
        let m = numeric_moments(&u, &WeightFunction::ConstantOne, 0.01, 5).unwrap();
        assert!(m.mean.abs() < 1e-12);
        assert!((m.central[2] - 0.01).abs() < 1e-8);
        assert!(m.central[3].abs() < 1e-10);
        assert!((m.central[4] - 3e-4).abs() < 1e-9);
        let shifted = GridField::from_fn(grid(), |x| -(x - 0.3) * (x - 0.3) / 2.0);
        let s = numeric_moments(&shifted, &WeightFunction::ConstantOne, 0.01, 5).unwrap();
        assert!((s.mean - 0.3).abs() < 1e-10);
        for j in 2..=5 {
            assert!((s.central[j] - m.central[j]).abs() < 1e-10);
        }
        let wide = numeric_moments(&u, &WeightFunction::ConstantOne, 0.04, 2).unwrap();
        assert!((wide.central[2] / m.central[2] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn weighted_moments_are_refused() {
        let u = GridField::from_fn(grid(), |x| -x * x / 2.0);
        let psi = WeightFunction::SmoothPositive { c0: 1.0, c1: 0.1, c2: 0.0, c3: 1.0 };
        assert!(matches!(numeric_moments(&u, &psi, 0.01, 3), Err(Error::Misuse(_))));
    }

    #[test]
    fn gamma_examples() {
        let s = (2.0 * PI).sqrt();
        assert!((gaussian_gamma(0, 1.0) - s).abs() < 1e-15);
        assert!((gaussian_gamma(1, 1.0) - s).abs() < 1e-15);
        assert!((gaussian_gamma(2, 1.0) - 3.0 * s).abs() < 1e-14);
    }

    fn states(d2u: f64, d3u: f64) -> (LimitState<f64>, CorrectionState<f64>) {
        let g = Grid1D::new(-2.0, 2.0, 41).unwrap();
        let u = GridField::from_fn(g, |x| d2u * x * x / 2.0);
        let l = LimitState { t: 0.0, u: u.clone(), xbar: 0.0, intake: 1.0, d2u_at_xbar: d2u, d3u_at_xbar: d3u };
        let c = CorrectionState {
            t: 0.0,
            y: 0.0,
            w: GridField::constant(g, 0.0),
            k: -1.0,
            j: -1.0,
            w_at_xbar: 0.0,
            dw_at_xbar: 0.0,
            d2w_at_xbar: 0.0,
            d3w_at_xbar: 0.0,
        };
        (l, c)
    }

    #[test]
    fn prediction_examples() {
        let (l, c) = states(-1.0, 0.0);
        let p = asymptotic_moments(&l, &c, 5).unwrap();
        assert_eq!((p.m1, p.orders[2], p.orders[3], p.orders[4]), (0.0, 1.0, 0.0, 3.0));
        let (l, c) = states(-2.0, 0.0);
        let p = asymptotic_moments(&l, &c, 4).unwrap();
        assert!((p.orders[2] - 0.5).abs() < 1e-15 && (p.orders[4] - 0.75).abs() < 1e-15);
        let (l, c) = states(-1.0, 0.6);
        let p = asymptotic_moments(&l, &c, 5).unwrap();
        assert!((p.orders[3] - 0.6).abs() < 1e-15);
        assert!((p.orders[5] - 10.0 * 0.6).abs() < 1e-14);
        let (l, c) = states(0.5, 0.0);
        assert!(asymptotic_moments(&l, &c, 3).is_err());
    }
}
