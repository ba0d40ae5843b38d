//! Uniform 1-D grid, finite-difference stencils, quadrature, interpolation
//! and sub-grid argmax localization.
//!
//! Stencils are second order everywhere: centered in the interior, one-sided
//! at the two ends. The third derivative uses the 5-point centered stencil
//! with 5-point one-sided stencils on the two outermost points of each side.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Smallest grid supporting every stencil.
pub const MIN_POINTS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D<F> {
    x_min: F,
    x_max: F,
    n: usize,
}

impl<F: Real> Grid1D<F> {
    pub fn new(x_min: F, x_max: F, n: usize) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("n = {n} < {MIN_POINTS}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "bounds [{}, {}] are not an increasing finite interval",
                to_f64(x_min),
                to_f64(x_max)
            )));
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn x_min(&self) -> F {
        self.x_min
    }

    pub fn x_max(&self) -> F {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spacing `h = (x_max - x_min) / (n - 1)`.
    pub fn h(&self) -> F {
        (self.x_max - self.x_min) / F::from_usize(self.n - 1).unwrap()
    }

    /// Coordinate of node `i`; the last node is exactly `x_max`.
    pub fn x(&self, i: usize) -> F {
        if i + 1 == self.n {
            self.x_max
        } else {
            self.x_min + F::from_usize(i).unwrap() * self.h()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = F> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    pub fn contains(&self, x: F) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Same interval with twice the resolution (`2n - 1` points, `h / 2`).
    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n - 1, ..*self }
    }
}

/// A scalar function sampled on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<F> {
    grid: Grid1D<F>,
    values: Vec<F>,
}

impl<F: Real> GridField<F> {
    pub fn new(grid: Grid1D<F>, values: Vec<F>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for solver loops that check finiteness themselves.
    pub(crate) fn from_raw(grid: Grid1D<F>, values: Vec<F>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid1D<F>, f: impl Fn(F) -> F) -> Self {
        let values = grid.points().map(f).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid1D<F>, c: F) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &Grid1D<F> {
        &self.grid
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<F> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: F, other: &Self, beta: F) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| alpha * a + beta * b)
            .collect();
        Self { grid: self.grid, values }
    }

    /// Largest sample and its index (first occurrence).
    pub fn max_sample(&self) -> (usize, F) {
        let mut best = (0, self.values[0]);
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// Finite-difference derivative of order 1, 2 or 3.
    pub fn diff(&self, order: u8) -> Self {
        let mut out = vec![F::zero(); self.values.len()];
        match order {
            1 => diff1(&self.values, self.grid.h(), &mut out),
            2 => diff2(&self.values, self.grid.h(), &mut out),
            3 => diff3(&self.values, self.grid.h(), &mut out),
            _ => panic!("diff order must be 1, 2 or 3, got {order}"),
        }
        Self { grid: self.grid, values: out }
    }

    /// Composite trapezoid rule over the whole grid.
    pub fn trapezoid(&self) -> F {
        trapezoid(&self.values, self.grid.h())
    }

    /// Vertex of the parabola through the discrete maximum and its two
    /// neighbours. Exact when the field is quadratic near its maximum.
    pub fn argmax_parabolic(&self) -> Result<(F, F)> {
        let (i, fi) = self.max_sample();
        if i == 0 || i + 1 == self.values.len() {
            return Err(Error::BoundaryContact { x: to_f64(self.grid.x(i)), time: f64::NAN });
        }
        let (fm, fp) = (self.values[i - 1], self.values[i + 1]);
        let curvature = fm - lit::<F>(2.0) * fi + fp;
        if curvature >= F::zero() {
            // flat top: no sub-grid information
            return Ok((self.grid.x(i), fi));
        }
        let half = lit::<F>(0.5);
        let offset = half * (fm - fp) / curvature;
        let value = fi - lit::<F>(0.125) * (fp - fm) * (fp - fm) / curvature;
        Ok((self.grid.x(i) + offset * self.grid.h(), value))
    }

    /// Cubic (4-point Lagrange) interpolation; exact for cubics.
    pub fn sample_at(&self, x: F) -> Result<F> {
        if !self.grid.contains(x) {
            return Err(Error::Domain(format!(
                "x = {} outside grid [{}, {}]",
                to_f64(x),
                to_f64(self.grid.x_min),
                to_f64(self.grid.x_max)
            )));
        }
        Ok(cubic_interp(&self.values, self.grid.x_min, self.grid.h(), x))
    }

    /// Two-column CSV `x,value` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "value"])?;
        for (x, v) in self.grid.points().zip(&self.values) {
            w.write_record([crate::report::fmt_f64(to_f64(x)), crate::report::fmt_f64(to_f64(*v))])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `log ∫ ψ exp(u/ε) dx`, computed with the exponent shifted by `max u` so
/// that nothing overflows.
pub fn logsumexp_integral<F: Real>(u: &GridField<F>, psi: &GridField<F>, eps: F) -> F {
    debug_assert_eq!(u.grid, psi.grid);
    let (_, umax) = u.max_sample();
    let inv = F::one() / eps;
    let h = u.grid.h();
    let n = u.values.len();
    let mut acc = F::zero();
    for i in 0..n {
        let w = if i == 0 || i + 1 == n { lit::<F>(0.5) } else { F::one() };
        acc = acc + w * psi.values[i] * ((u.values[i] - umax) * inv).exp();
    }
    umax * inv + (acc * h).ln()
}

pub(crate) fn trapezoid<F: Real>(v: &[F], h: F) -> F {
    let n = v.len();
    let inner: F = v[1..n - 1].iter().copied().sum();
    h * (inner + lit::<F>(0.5) * (v[0] + v[n - 1]))
}

pub(crate) fn diff1<F: Real>(f: &[F], h: F, out: &mut [F]) {
    let n = f.len();
    let inv2h = F::one() / (lit::<F>(2.0) * h);
    let (c3, c4) = (lit::<F>(3.0), lit::<F>(4.0));
    out[0] = (-c3 * f[0] + c4 * f[1] - f[2]) * inv2h;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) * inv2h;
    }
    out[n - 1] = (c3 * f[n - 1] - c4 * f[n - 2] + f[n - 3]) * inv2h;
}

pub(crate) fn diff2<F: Real>(f: &[F], h: F, out: &mut [F]) {
    let n = f.len();
    let invh2 = F::one() / (h * h);
    let (c2, c4, c5) = (lit::<F>(2.0), lit::<F>(4.0), lit::<F>(5.0));
    out[0] = (c2 * f[0] - c5 * f[1] + c4 * f[2] - f[3]) * invh2;
    for i in 1..n - 1 {
        out[i] = (f[i - 1] - c2 * f[i] + f[i + 1]) * invh2;
    }
    out[n - 1] = (c2 * f[n - 1] - c5 * f[n - 2] + c4 * f[n - 3] - f[n - 4]) * invh2;
}

pub(crate) fn diff3<F: Real>(f: &[F], h: F, out: &mut [F]) {
    let n = f.len();
    let inv2h3 = F::one() / (lit::<F>(2.0) * h * h * h);
    let c = |x: f64| lit::<F>(x);
    // end points: weights (-5, 18, -24, 14, -3)/2h^3; next-to-end: (-3, 10, -12, 6, -1)/2h^3
    out[0] = (c(-5.0) * f[0] + c(18.0) * f[1] - c(24.0) * f[2] + c(14.0) * f[3] - c(3.0) * f[4]) * inv2h3;
    out[1] = (c(-3.0) * f[0] + c(10.0) * f[1] - c(12.0) * f[2] + c(6.0) * f[3] - f[4]) * inv2h3;
    for i in 2..n - 2 {
        out[i] = (-f[i - 2] + c(2.0) * f[i - 1] - c(2.0) * f[i + 1] + f[i + 2]) * inv2h3;
    }
    let m = n - 1;
    out[m] = -(c(-5.0) * f[m] + c(18.0) * f[m - 1] - c(24.0) * f[m - 2] + c(14.0) * f[m - 3]
        - c(3.0) * f[m - 4])
        * inv2h3;
    out[m - 1] = -(c(-3.0) * f[m] + c(10.0) * f[m - 1] - c(12.0) * f[m - 2] + c(6.0) * f[m - 3]
        - f[m - 4])
        * inv2h3;
}

pub(crate) fn cubic_interp<F: Real>(v: &[F], x_min: F, h: F, x: F) -> F {
    let n = v.len();
    let s = (x - x_min) / h;
    let cell = s.floor().to_usize().unwrap_or(0).min(n - 2);
    let start = cell.saturating_sub(1).min(n - 4);
    let t = s - F::from_usize(start).unwrap();
    // Lagrange basis on nodes 0, 1, 2, 3 (relative to `start`)
    let (one, two, three, six) = (F::one(), lit::<F>(2.0), lit::<F>(3.0), lit::<F>(6.0));
    let l0 = -(t - one) * (t - two) * (t - three) / six;
    let l1 = t * (t - two) * (t - three) / two;
    let l2 = -t * (t - one) * (t - three) / two;
    let l3 = t * (t - one) * (t - two) / six;
    l0 * v[start] + l1 * v[start + 1] + l2 * v[start + 2] + l3 * v[start + 3]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, n: usize) -> Grid1D<f64> {
        Grid1D::new(a, b, n).unwrap()
    }

    #[test]
    fn rejects_small_or_inverted_grids() {
        assert!(Grid1D::new(0.0, 1.0, 8).is_err());
        assert!(Grid1D::new(1.0, 0.0, 20).is_err());
        assert!(Grid1D::new(0.0, f64::NAN, 20).is_err());
    }

    #[test]
    fn second_derivative_of_square_is_two_everywhere() {
        let f = GridField::from_fn(grid(-1.3, 2.1, 37), |x| x * x);
        for v in f.diff(2).values() {
            assert!((v - 2.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn third_derivative_of_cube_is_six_everywhere() {
        let f = GridField::from_fn(grid(-1.0, 1.0, 41), |x| x * x * x);
        for v in f.diff(3).values() {
            assert!((v - 6.0).abs() < 1e-7, "{v}");
        }
    }

    #[test]
    fn first_derivative_of_sine_at_origin() {
        let f = GridField::from_fn(grid(-1.0, 1.0, 2001), f64::sin);
        let d = f.diff(1);
        assert!((d.values()[1000] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn boundary_stencils_are_exact_for_quadratics() {
        let f = GridField::from_fn(grid(0.0, 1.0, 11), |x| 3.0 * x * x - x + 2.0);
        let d1 = f.diff(1);
        assert!((d1.values()[0] + 1.0).abs() < 1e-12);
        assert!((d1.values()[10] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_cases() {
        let one = GridField::constant(grid(0.0, 1.0, 11), 1.0);
        assert!((one.trapezoid() - 1.0).abs() < 1e-15);
        let lin = GridField::from_fn(grid(0.0, 1.0, 101), |x| x);
        assert!((lin.trapezoid() - 0.5).abs() < 1e-15);
        let g = GridField::from_fn(grid(-8.0, 8.0, 4001), |x| {
            (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        });
        assert!((g.trapezoid() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn logsumexp_gaussian_and_constant() {
        let g = grid(-4.0, 4.0, 8001);
        let psi = GridField::constant(g, 1.0);
        let eps = 0.01;
        let u = GridField::from_fn(g, |x| -x * x / 2.0);
        let expected = (2.0 * std::f64::consts::PI * eps).sqrt().ln();
        assert!((logsumexp_integral(&u, &psi, eps) - expected).abs() < 1e-8);

        let u2 = GridField::from_fn(g, |x| -x * x / 2.0 + eps * 2f64.ln());
        let l2 = logsumexp_integral(&u2, &psi, eps);
        assert!((l2 - expected - 2f64.ln()).abs() < 1e-8);

        let g01 = grid(0.0, 1.0, 33);
        let zero = GridField::constant(g01, 0.0);
        let one = GridField::constant(g01, 1.0);
        assert!(logsumexp_integral(&zero, &one, 0.3).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_does_not_overflow() {
        let g = grid(-1.0, 1.0, 201);
        let u = GridField::from_fn(g, |x| 50.0 - x * x);
        let psi = GridField::constant(g, 1.0);
        let l = logsumexp_integral(&u, &psi, 1e-3);
        assert!(l.is_finite());
        assert!((l - (50.0 / 1e-3 + (std::f64::consts::PI * 1e-3).sqrt().ln())).abs() < 1e-6);
    }

    #[test]
    fn argmax_parabolic_recovers_quadratic_vertex() {
        let f = GridField::from_fn(grid(-1.0, 1.0, 21), |x| -(x - 0.13) * (x - 0.13));
        let (x, v) = f.argmax_parabolic().unwrap();
        assert!((x - 0.13).abs() < 1e-12);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn argmax_parabolic_symmetric_and_boundary() {
        let g = grid(-0.4, 0.6, 11);
        let mut vals = vec![0.0; 11];
        vals[4] = 3.0;
        vals[5] = 4.0;
        vals[6] = 3.0;
        let f = GridField::new(g, vals).unwrap();
        let (x, v) = f.argmax_parabolic().unwrap();
        assert!((x - 0.1).abs() < 1e-12);
        assert_eq!(v, 4.0);

        let mono = GridField::from_fn(grid(0.0, 1.0, 11), |x| x);
        assert!(matches!(mono.argmax_parabolic(), Err(Error::BoundaryContact { .. })));
    }

    #[test]
    fn sample_at_cases() {
        let g = grid(-1.0, 1.0, 21);
        let cube = GridField::from_fn(g, |x| x * x * x);
        let x = 0.05 + 0.3;
        assert!((cube.sample_at(x).unwrap() - x * x * x).abs() < 1e-14);
        assert!((cube.sample_at(-1.0).unwrap() + 1.0).abs() < 1e-14);
        assert!((cube.sample_at(1.0).unwrap() - 1.0).abs() < 1e-14);
        let c = GridField::constant(g, 2.5);
        assert!((c.sample_at(0.777).unwrap() - 2.5).abs() < 1e-14);
        assert!(c.sample_at(1.5).is_err());

        let e = GridField::from_fn(grid(0.0, 1.0, 1001), f64::exp);
        assert!((e.sample_at(0.1234).unwrap() - 0.1234f64.exp()).abs() < 1e-11);
    }

    #[test]
    fn diff_and_trapezoid_converge_at_second_order() {
        let err_at = |n: usize| {
            let f = GridField::from_fn(grid(0.0, 1.0, n), |x| (3.0 * x).sin());
            let d = f.diff(2);
            let e2 = d
                .grid()
                .points()
                .zip(d.values())
                .map(|(x, v)| (v + 9.0 * (3.0 * x).sin()).abs())
                .fold(0.0, f64::max);
            let exact = (1.0 - 3f64.cos()) / 3.0;
            (e2, (f.trapezoid() - exact).abs())
        };
        let (d_coarse, t_coarse) = err_at(41);
        let (d_fine, t_fine) = err_at(81);
        assert!(d_coarse / d_fine >= 3.5, "{}", d_coarse / d_fine);
        assert!(t_coarse / t_fine >= 3.5, "{}", t_coarse / t_fine);
    }

    #[test]
    fn works_in_single_precision() {
        let g = Grid1D::<f32>::new(-3.0, 3.0, 601).unwrap();
        let u = GridField::from_fn(g, |x| -x * x / 2.0);
        let psi = GridField::constant(g, 1.0f32);
        let l = logsumexp_integral(&u, &psi, 0.1f32);
        let expected = (2.0 * std::f32::consts::PI * 0.1f32).sqrt().ln();
        assert!((l - expected).abs() < 1e-4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn diff_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, order in 1u8..=3) {
                let g = grid(-1.0, 1.0, 41);
                let f = GridField::from_fn(g, |x| (2.0 * x).sin());
                let k = GridField::from_fn(g, |x| x.exp());
                let lhs = f.axpby(a, &k, b).diff(order);
                let rhs = f.diff(order).axpby(a, &k.diff(order), b);
                let scale = 1.0 + a.abs() + b.abs();
                for (l, r) in lhs.values().iter().zip(rhs.values()) {
                    prop_assert!((l - r).abs() <= 1e-9 * scale * (1.0 + l.abs()));
                }
            }

            #[test]
            fn logsumexp_shift_invariance(c in -5.0f64..5.0, eps in 0.01f64..0.5) {
                let g = grid(-3.0, 3.0, 301);
                let u = GridField::from_fn(g, |x| -(x - 0.2) * (x - 0.2) + 0.1 * x.sin());
                let psi = GridField::from_fn(g, |x| 1.0 + 0.3 * x.tanh());
                let base = logsumexp_integral(&u, &psi, eps);
                let shifted = logsumexp_integral(&u.map(|v| v + c), &psi, eps) - c / eps;
                prop_assert!((base - shifted).abs() <= 1e-12 * (1.0 + base.abs()));
            }
        }
    }
}
