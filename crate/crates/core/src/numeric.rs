//! Small scalar numerics: bracketed root finding, golden-section search and
//! an adaptive Dormand–Prince 5(4) integrator for low-dimensional ODEs.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Root of `f` in `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs.
///
/// Illinois-modified regula falsi with a bisection fallback whenever the
/// secant step stalls. Stops when `|f| <= f_tol` or the bracket collapses.
pub fn bracketed_root<F: Real>(f: impl Fn(F) -> F, mut lo: F, mut hi: F, f_tol: F) -> Result<F> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo.abs() <= f_tol {
        return Ok(lo);
    }
    if fhi.abs() <= f_tol {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Domain(format!(
            "root not bracketed on [{}, {}]",
            to_f64(lo),
            to_f64(hi)
        )));
    }
    let half = lit::<F>(0.5);
    let mut side = 0i8;
    for _ in 0..200 {
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        let width = hi - lo;
        if !(x > lo && x < hi) || width <= F::epsilon() * (F::one() + lo.abs().max(hi.abs())) {
            x = half * (lo + hi);
        }
        let fx = f(x);
        if fx.abs() <= f_tol || width <= F::epsilon() * (F::one() + x.abs()) {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi = fhi * half;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo = flo * half;
            }
            side = 1;
        }
    }
    Ok(half * (lo + hi))
}

/// Maximizer and maximum of a unimodal function on `[a, b]`.
pub fn golden_section_max<F: Real>(f: impl Fn(F) -> F, mut a: F, mut b: F, x_tol: F) -> (F, F) {
    let inv_phi = (lit::<F>(5.0).sqrt() - F::one()) * lit::<F>(0.5);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > x_tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = lit::<F>(0.5) * (a + b);
    (x, f(x))
}

/// Adaptive Dormand–Prince 5(4) with standard PI-free step control.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5<F> {
    pub rtol: F,
    pub atol: F,
    pub max_steps: usize,
}

impl<F: Real> Dopri5<F> {
    pub fn new(tol: F) -> Self {
        Self { rtol: tol, atol: tol, max_steps: 1_000_000 }
    }

    /// Integrates from `t0` through each entry of `t_out` (increasing) and
    /// returns the state at each output time.
    pub fn solve<const N: usize>(
        &self,
        rhs: impl Fn(F, &[F; N]) -> [F; N],
        t0: F,
        y0: [F; N],
        t_out: &[F],
    ) -> Result<Vec<[F; N]>> {
        let c = |x: f64| lit::<F>(x);
        let (c2, c3, c4, c5) = (c(1.0 / 5.0), c(3.0 / 10.0), c(4.0 / 5.0), c(8.0 / 9.0));
        let a21 = c(1.0 / 5.0);
        let (a31, a32) = (c(3.0 / 40.0), c(9.0 / 40.0));
        let (a41, a42, a43) = (c(44.0 / 45.0), c(-56.0 / 15.0), c(32.0 / 9.0));
        let (a51, a52, a53, a54) =
            (c(19372.0 / 6561.0), c(-25360.0 / 2187.0), c(64448.0 / 6561.0), c(-212.0 / 729.0));
        let (a61, a62, a63, a64, a65) = (
            c(9017.0 / 3168.0),
            c(-355.0 / 33.0),
            c(46732.0 / 5247.0),
            c(49.0 / 176.0),
            c(-5103.0 / 18656.0),
        );
        let (b1, b3, b4, b5, b6) = (
            c(35.0 / 384.0),
            c(500.0 / 1113.0),
            c(125.0 / 192.0),
            c(-2187.0 / 6784.0),
            c(11.0 / 84.0),
        );
        // error coefficients b - b*
        let (e1, e3, e4, e5, e6, e7) = (
            c(71.0 / 57600.0),
            c(-71.0 / 16695.0),
            c(71.0 / 1920.0),
            c(-17253.0 / 339200.0),
            c(22.0 / 525.0),
            c(-1.0 / 40.0),
        );

        let comb = |y: &[F; N], terms: &[(F, &[F; N])], h: F| -> [F; N] {
            let mut out = *y;
            for (i, o) in out.iter_mut().enumerate() {
                let mut s = F::zero();
                for (coef, k) in terms {
                    s = s + *coef * k[i];
                }
                *o = *o + h * s;
            }
            out
        };

        let mut t = t0;
        let mut y = y0;
        let mut out = Vec::with_capacity(t_out.len());
        let t_end = t_out.last().copied().unwrap_or(t0);
        let mut h = ((t_end - t0).abs() * c(1e-3)).max(c(1e-8));
        let mut steps = 0usize;
        let mut k1 = rhs(t, &y);
        for &target in t_out {
            while t < target {
                if steps >= self.max_steps {
                    return Err(Error::Degeneracy("ODE integrator exceeded step budget".into()));
                }
                steps += 1;
                let last = t + h >= target;
                let step = if last { target - t } else { h };
                let k2 = rhs(t + c2 * step, &comb(&y, &[(a21, &k1)], step));
                let k3 = rhs(t + c3 * step, &comb(&y, &[(a31, &k1), (a32, &k2)], step));
                let k4 = rhs(t + c4 * step, &comb(&y, &[(a41, &k1), (a42, &k2), (a43, &k3)], step));
                let k5 = rhs(
                    t + c5 * step,
                    &comb(&y, &[(a51, &k1), (a52, &k2), (a53, &k3), (a54, &k4)], step),
                );
                let k6 = rhs(
                    t + step,
                    &comb(&y, &[(a61, &k1), (a62, &k2), (a63, &k3), (a64, &k4), (a65, &k5)], step),
                );
                let y_new =
                    comb(&y, &[(b1, &k1), (b3, &k3), (b4, &k4), (b5, &k5), (b6, &k6)], step);
                let k7 = rhs(t + step, &y_new);
                let mut err = F::zero();
                for i in 0..N {
                    let e = step
                        * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
                    let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                    err = err.max((e / scale).abs());
                }
                if !err.is_finite() {
                    return Err(Error::BlowUp { step: steps, time: to_f64(t) });
                }
                if err <= F::one() {
                    t = if last { target } else { t + step };
                    y = y_new;
                    k1 = k7;
                }
                let factor = if err == F::zero() {
                    c(5.0)
                } else {
                    (c(0.9) * err.powf(c(-0.2))).max(c(0.2)).min(c(5.0))
                };
                h = step * factor;
            }
            out.push(y);
        }
        Ok(out)
    }
}
