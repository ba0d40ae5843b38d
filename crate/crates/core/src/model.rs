//! Growth-rate families, the weight function ψ, initial data, the neutral
//! intake map `y ↦ 𝓘(y)` and the standing-assumption checks.
//!
//! The growth rate is `R(x, I) = r0 - a (x - theta)^2 + p(x) - b I` with an
//! optional smooth Gaussian bump `p`. All derivatives are analytic.

use crate::error::{Error, Result};
use crate::grid::{logsumexp_integral, Grid1D, GridField};
use crate::numeric::{bracketed_root, golden_section_max};
use crate::scalar::{lit, to_f64, Real};

/// Absolute tolerance on `|R(y, 𝓘(y))|`.
pub const ROOT_TOL: f64 = 1e-12;

/// Gaussian bump `amplitude * exp(-((x - center) / width)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump<F> {
    pub amplitude: F,
    pub center: F,
    pub width: F,
}

impl<F: Real> Bump<F> {
    pub fn new(amplitude: F, center: F, width: F) -> Self {
        Self { amplitude, center, width }
    }

    pub fn value(&self, x: F) -> F {
        let s = (x - self.center) / self.width;
        self.amplitude * (-s * s).exp()
    }

    /// Value and derivatives of order 1 through 6.
    pub fn derivatives(&self, x: F) -> [F; 7] {
        let s = (x - self.center) / self.width;
        let g = self.amplitude * (-s * s).exp();
        // d^k/dx^k e^{-s^2} = (-1)^k H_k(s) e^{-s^2} / w^k  (physicists' Hermite)
        let two = lit::<F>(2.0);
        let mut h = [F::zero(); 7];
        h[0] = F::one();
        h[1] = two * s;
        for k in 1..6 {
            h[k + 1] = two * s * h[k] - two * F::from_usize(k).unwrap() * h[k - 1];
        }
        let mut out = [F::zero(); 7];
        let mut scale = F::one();
        for k in 0..7 {
            let sign = if k % 2 == 0 { F::one() } else { -F::one() };
            out[k] = sign * h[k] * g * scale;
            scale = scale / self.width;
        }
        out
    }
}

/// Growth rate and the derivatives the solvers use, at one `(x, I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthDerivs<F> {
    pub rate: F,
    pub d_x: F,
    pub d_xx: F,
    pub d_xxx: F,
    pub d_i: F,
    pub d_ix: F,
    pub d_ixx: F,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthModel<F> {
    pub r0: F,
    pub a: F,
    pub b: F,
    pub theta: F,
    pub perturbation: Option<Bump<F>>,
}

/// `𝓘(y)` together with its gradient `-∂ₓR / ∂_I R` at `(y, 𝓘(y))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalIntake<F> {
    pub intake: F,
    pub gradient: F,
}

impl<F: Real> GrowthModel<F> {
    pub fn new(r0: F, a: F, b: F, theta: F) -> Self {
        Self { r0, a, b, theta, perturbation: None }
    }

    /// The reference model `r0 = a = b = 1`, `theta = 0`.
    pub fn p0() -> Self {
        Self::new(F::one(), F::one(), F::one(), F::zero())
    }

    pub fn with_perturbation(mut self, bump: Bump<F>) -> Self {
        self.perturbation = Some(bump);
        self
    }

    /// `R(x, I)` without argument checks, for inner loops.
    #[inline]
    pub fn rate(&self, x: F, intake: F) -> F {
        let d = x - self.theta;
        let p = self.perturbation.map_or(F::zero(), |bump| bump.value(x));
        self.r0 - self.a * d * d + p - self.b * intake
    }

    /// `R` and its analytic derivatives.
    pub fn eval(&self, x: F, intake: F) -> Result<GrowthDerivs<F>> {
        if !(intake >= F::zero()) {
            return Err(Error::Domain(format!("negative intake I = {}", to_f64(intake))));
        }
        Ok(self.eval_unchecked(x, intake))
    }

    pub(crate) fn eval_unchecked(&self, x: F, intake: F) -> GrowthDerivs<F> {
        let d = x - self.theta;
        let two = lit::<F>(2.0);
        let p = self.perturbation.map_or([F::zero(); 7], |bump| bump.derivatives(x));
        GrowthDerivs {
            rate: self.r0 - self.a * d * d + p[0] - self.b * intake,
            d_x: -two * self.a * d + p[1],
            d_xx: -two * self.a + p[2],
            d_xxx: p[3],
            d_i: -self.b,
            d_ix: F::zero(),
            d_ixx: F::zero(),
        }
    }

    /// Trait-only part `R(x, 0)`, evaluated on every node of `grid`.
    pub fn rate_profile(&self, grid: &Grid1D<F>, intake: F) -> GridField<F> {
        GridField::from_fn(*grid, |x| self.rate(x, intake))
    }

    /// The intake level at which trait `y` is neutral: `R(y, 𝓘(y)) = 0`.
    pub fn optimal_intake(&self, y: F) -> Result<OptimalIntake<F>> {
        let at_zero = self.rate(y, F::zero());
        if !(at_zero > F::zero()) {
            return Err(Error::OutOfDomain { trait_value: to_f64(y), rate_at_zero: to_f64(at_zero) });
        }
        let mut upper = at_zero / self.b.abs().max(F::epsilon()) + F::one();
        let mut guard = 0;
        while self.rate(y, upper) > F::zero() {
            upper = upper * lit::<F>(2.0);
            guard += 1;
            if guard > 200 {
                return Err(Error::Degeneracy("R(y, ·) does not decrease through zero".into()));
            }
        }
        let intake = bracketed_root(|i| self.rate(y, i), F::zero(), upper, lit(ROOT_TOL))?;
        let d = self.eval_unchecked(y, intake);
        if d.d_i.abs() < lit(1e-12) {
            return Err(Error::Degeneracy("∂R/∂I vanishes".into()));
        }
        Ok(OptimalIntake { intake, gradient: -d.d_x / d.d_i })
    }

    /// Search interval `theta ± span` that contains the trait maximizer of `R`.
    fn search_span(&self) -> F {
        let amp = self.perturbation.map_or(F::zero(), |b| b.amplitude.abs());
        ((lit::<F>(2.0) * amp + self.r0.abs()) / self.a).sqrt() + F::one()
    }

    /// Maximizer over `x` of `R(·, I)` (any `I`; `R` is additive in `I`).
    pub fn optimal_trait(&self) -> F {
        let span = self.search_span();
        golden_section_max(|x| self.rate(x, F::zero()), self.theta - span, self.theta + span, lit(1e-11)).0
    }

    /// `I_M` with `max_x R(x, I_M) = 0`.
    pub fn carrying_intake(&self) -> F {
        let span = self.search_span();
        let (lo, hi) = (self.theta - span, self.theta + span);
        let peak = |i: F| golden_section_max(|x| self.rate(x, i), lo, hi, lit(1e-11)).1;
        let mut upper = (self.r0.abs() + span) / self.b.abs().max(F::epsilon()) + F::one();
        while peak(upper) > F::zero() {
            upper = upper * lit::<F>(2.0);
        }
        bracketed_root(peak, F::zero(), upper, lit(ROOT_TOL)).unwrap_or(F::nan())
    }

    /// `(K̲₁, K̄₁)` with `-2K̲₁ ≤ D²R ≤ -2K̄₁` sampled on the grid.
    pub fn curvature_constants(&self, grid: &Grid1D<F>) -> (F, F) {
        let half = lit::<F>(0.5);
        let mut lo = F::infinity();
        let mut hi = F::neg_infinity();
        for x in grid.points() {
            let d2 = self.eval_unchecked(x, F::zero()).d_xx;
            lo = lo.min(d2);
            hi = hi.max(d2);
        }
        (-half * lo, -half * hi)
    }
}

/// The weight ψ in the intake `I = ∫ ψ n dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFunction<F> {
    ConstantOne,
    /// `c0 + c1 * tanh((x - c2) / c3)`.
    SmoothPositive { c0: F, c1: F, c2: F, c3: F },
}

impl<F: Real> WeightFunction<F> {
    pub fn is_constant_one(&self) -> bool {
        matches!(self, WeightFunction::ConstantOne)
    }

    pub fn value(&self, x: F) -> F {
        self.derivatives(x)[0]
    }

    /// `ψ, ψ', ψ'', ψ'''`.
    pub fn derivatives(&self, x: F) -> [F; 4] {
        match *self {
            WeightFunction::ConstantOne => [F::one(), F::zero(), F::zero(), F::zero()],
            WeightFunction::SmoothPositive { c0, c1, c2, c3 } => {
                let t = ((x - c2) / c3).tanh();
                let sech2 = F::one() - t * t;
                let two = lit::<F>(2.0);
                let d1 = sech2 / c3;
                let d2 = -two * t * sech2 / (c3 * c3);
                let d3 = (lit::<F>(6.0) * t * t - two) * sech2 / (c3 * c3 * c3);
                [c0 + c1 * t, c1 * d1, c1 * d2, c1 * d3]
            }
        }
    }

    pub fn sample(&self, grid: &Grid1D<F>) -> GridField<F> {
        GridField::from_fn(*grid, |x| self.value(x))
    }

    /// `(ψ_m, ψ_M)` sampled on the grid.
    pub fn bounds(&self, grid: &Grid1D<F>) -> (F, F) {
        grid.points().map(|x| self.value(x)).fold((F::infinity(), F::neg_infinity()), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    }
}

/// Prefactor `r` in `n⁰ = (r / √ε) exp(u⁰ / ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassPrefactor<F> {
    Fixed(F),
    /// Chosen per ε so that the initial intake equals `𝓘(x₀) + ε K(0)`,
    /// i.e. the data carry no initial layer at first order.
    Prepared,
}

/// `u⁰(x) = -L₁ (x - x_c)² + q(x) - shift + level`, with `shift` making the
/// maximum of the first three terms zero. `level` is zero for admissible data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData<F> {
    pub l1: F,
    pub x_c: F,
    pub r: MassPrefactor<F>,
    pub perturbation: Option<Bump<F>>,
    pub level: F,
    shift: F,
    peak: F,
}

impl<F: Real> InitialData<F> {
    pub fn new(l1: F, x_c: F, r: MassPrefactor<F>, perturbation: Option<Bump<F>>) -> Self {
        let mut data = Self { l1, x_c, r, perturbation, level: F::zero(), shift: F::zero(), peak: x_c };
        if perturbation.is_some() {
            let amp = perturbation.map_or(F::zero(), |b| b.amplitude.abs());
            let span = (lit::<F>(2.0) * amp / l1).sqrt() + F::one();
            let (x, v) = golden_section_max(|x| data.raw(x), x_c - span, x_c + span, lit(1e-12));
            data.shift = v;
            data.peak = x;
        }
        data
    }

    pub fn quadratic(l1: F, x_c: F, r: F) -> Self {
        Self::new(l1, x_c, MassPrefactor::Fixed(r), None)
    }

    /// Adds a constant to the datum (so `max u⁰ = level`).
    pub fn with_level(mut self, level: F) -> Self {
        self.level = level;
        self
    }

    fn raw(&self, x: F) -> F {
        let d = x - self.x_c;
        -self.l1 * d * d + self.perturbation.map_or(F::zero(), |b| b.value(x))
    }

    pub fn u0(&self, x: F) -> F {
        self.raw(x) - self.shift + self.level
    }

    /// `u⁰, u⁰', u⁰'', u⁰'''`.
    pub fn derivatives(&self, x: F) -> [F; 4] {
        let d = x - self.x_c;
        let two = lit::<F>(2.0);
        let q = self.perturbation.map_or([F::zero(); 7], |b| b.derivatives(x));
        [self.u0(x), -two * self.l1 * d + q[1], -two * self.l1 + q[2], q[3]]
    }

    /// Maximizer `x₀` of `u⁰`.
    pub fn dominant_trait(&self) -> F {
        self.peak
    }

    pub fn sample(&self, grid: &Grid1D<F>) -> GridField<F> {
        GridField::from_fn(*grid, |x| self.u0(x))
    }

    /// `(L̲₁, L̄₁)` with `-2L̲₁ ≤ D²u⁰ ≤ -2L̄₁` sampled on the grid.
    pub fn curvature_constants(&self, grid: &Grid1D<F>) -> (F, F) {
        let half = lit::<F>(0.5);
        let (lo, hi) = grid
            .points()
            .map(|x| self.derivatives(x)[2])
            .fold((F::infinity(), F::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (-half * lo, -half * hi)
    }

    /// Numerical value of `r` for this ε.
    pub fn prefactor(
        &self,
        model: &GrowthModel<F>,
        psi: &WeightFunction<F>,
        eps: F,
        grid: &Grid1D<F>,
    ) -> Result<F> {
        match self.r {
            MassPrefactor::Fixed(r) => Ok(r),
            MassPrefactor::Prepared => {
                let x0 = self.dominant_trait();
                let target = model.optimal_intake(x0)?;
                let [_, _, d2, d3] = self.derivatives(x0);
                let k0 = crate::corrections::k_formula(model, psi, x0, target.intake, d2, d3)?;
                let desired = target.intake + eps * k0;
                let log_mass = logsumexp_integral(&self.sample(grid), &psi.sample(grid), eps);
                Ok(desired * eps.sqrt() * (-log_mass).exp())
            }
        }
    }

    /// Copy with the prefactor resolved to a fixed number for this ε.
    pub fn resolved(
        &self,
        model: &GrowthModel<F>,
        psi: &WeightFunction<F>,
        eps: F,
        grid: &Grid1D<F>,
    ) -> Result<Self> {
        Ok(Self { r: MassPrefactor::Fixed(self.prefactor(model, psi, eps, grid)?), ..*self })
    }
}

/// One row of the validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub id: &'static str,
    pub pass: bool,
    pub constant: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub eps: f64,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} ({} = {})", c.id, c.constant, c.value))
            .collect()
    }

    pub fn get(&self, constant: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.constant == constant).map(|c| c.value)
    }

    pub fn check(&self, id: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Relative slack on the closed upper bound `I_ε(0) ≤ I_M`.
const INTAKE_SLACK: f64 = 1e-9;
/// Initial data must stay `MARGIN_FACTOR · ε log(1/ε)` below its max at the ends.
pub const MARGIN_FACTOR: f64 = 20.0;
const MAX_ZERO_TOL: f64 = 1e-12;

/// Checks the standing assumptions on the grid and reports the constants.
pub fn validate_assumptions<F: Real>(
    model: &GrowthModel<F>,
    psi: &WeightFunction<F>,
    init: &InitialData<F>,
    grid: &Grid1D<F>,
    eps: F,
) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |id, pass, constant, value: f64| checks.push(AssumptionCheck { id, pass, constant, value });

    let (psi_m, psi_max) = psi.bounds(grid);
    push("weight-bounds", psi_m > F::zero(), "psi_m", to_f64(psi_m));
    push("weight-bounds", psi_max.is_finite(), "psi_M", to_f64(psi_max));

    let (k1_under, k1_over) = model.curvature_constants(grid);
    push("growth-concavity", k1_over > F::zero(), "K1_over", to_f64(k1_over));
    push("growth-concavity", k1_under.is_finite() && k1_under >= k1_over, "K1_under", to_f64(k1_under));

    let sensitivity = -model.eval_unchecked(model.theta, F::zero()).d_i;
    push("intake-sensitivity", sensitivity > F::zero(), "K2_under", to_f64(sensitivity));
    push("intake-sensitivity", sensitivity > F::zero(), "K2_over", to_f64(sensitivity));

    let i_max = if model.b > F::zero() { model.carrying_intake() } else { F::nan() };
    push("carrying-intake", i_max > F::zero(), "I_M", to_f64(i_max));

    let span = init.l1.recip().sqrt() + F::one();
    let peak = golden_section_max(|x| init.u0(x), init.dominant_trait() - span, init.dominant_trait() + span, lit(1e-12)).1;
    push("initial-max-zero", peak.abs() <= lit(MAX_ZERO_TOL), "max_u0", to_f64(peak));

    let (l1_under, l1_over) = init.curvature_constants(grid);
    push("initial-concavity", l1_over > F::zero(), "L1_over", to_f64(l1_over));
    push("initial-concavity", l1_under.is_finite() && l1_under >= l1_over, "L1_under", to_f64(l1_under));

    let u0 = init.sample(grid);
    let ends = u0.values()[0].max(*u0.values().last().unwrap());
    let margin = lit::<F>(MARGIN_FACTOR) * eps * eps.recip().ln();
    push("domain-margin", peak - ends >= margin, "boundary_drop", to_f64(peak - ends));

    let psi_field = psi.sample(grid);
    let intake0 = init
        .prefactor(model, psi, eps, grid)
        .map(|r| (r / eps.sqrt()).ln() + logsumexp_integral(&u0, &psi_field, eps))
        .map(|log_i| log_i.exp());
    match intake0 {
        Ok(i0) => {
            let upper = i_max * (F::one() + lit(INTAKE_SLACK));
            push("initial-intake", i0 > F::zero() && i0 <= upper, "I_eps0", to_f64(i0));
            // survival diagnostic: ε⁻¹ (∫ψ R(x, I_ε(0)) n⁰)₋ / I_ε(0)
            let (_, umax) = u0.max_sample();
            let weights = GridField::from_fn(*grid, |x| {
                psi.value(x) * model.rate(x, i0) * ((init.u0(x) - umax) / eps).exp()
            });
            let mass = GridField::from_fn(*grid, |x| psi.value(x) * ((init.u0(x) - umax) / eps).exp());
            let ratio = weights.trapezoid() / mass.trapezoid();
            let negative = (-ratio).max(F::zero()) / eps;
            push("survival-diagnostic", negative.is_finite(), "neg_growth_over_eps", to_f64(negative));
        }
        Err(_) => push("initial-intake", false, "I_eps0", f64::NAN),
    }

    ValidationReport { eps: to_f64(eps), checks }
}
