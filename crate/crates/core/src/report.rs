//! CSV emission. Every number is written with 17 significant digits so files
//! round-trip exactly and compare byte-for-byte across runs.

use std::io::Write;

use crate::corrections::CorrectionTrajectory;
use crate::eps_solver::{DiagnosticsReport, EpsTrajectory};
use crate::error::Result;
use crate::limit_solver::LimitTrajectory;
use crate::model::ValidationReport;
use crate::moments::MomentSeries;
use crate::scalar::{to_f64, Real};

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

fn row<W: Write>(w: &mut csv::Writer<W>, values: &[f64]) -> Result<()> {
    w.write_record(values.iter().map(|&v| fmt_f64(v)))?;
    Ok(())
}

pub fn write_validation<W: Write>(report: &ValidationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["assumption", "pass", "constant", "value"])?;
    for c in &report.checks {
        w.write_record([c.id, if c.pass { "true" } else { "false" }, c.constant, &fmt_f64(c.value)])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, I_eps, x_eps, max_u` for every step.
pub fn write_eps_trajectory<F: Real, W: Write>(traj: &EpsTrajectory<F>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "I_eps", "x_eps", "max_u"])?;
    for i in 0..traj.times.len() {
        row(&mut w, &[traj.times[i], traj.intake[i], traj.dominant[i], traj.max_u[i]].map(to_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics<W: Write>(diag: &DiagnosticsReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "I_eps", "d2u_min", "d2u_max", "d3u_sup", "intake_ok", "concavity_ok", "envelope_ok"])?;
    for s in &diag.snapshots {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        row(
            &mut w,
            &[s.t, s.intake, s.d2_min, s.d2_max, s.d3_sup, flag(s.intake_ok), flag(s.concavity_ok), flag(s.envelope_ok)],
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `t, xbar, I, d2u, d3u, constraint_drift, argmax_gap` for every step.
pub fn write_limit_trajectory<F: Real, W: Write>(traj: &LimitTrajectory<F>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "xbar", "I", "d2u", "d3u", "constraint_drift", "argmax_gap"])?;
    for p in &traj.dense {
        row(&mut w, &[p.t, p.xbar, p.intake, p.d2u, p.d3u, p.drift, p.argmax_gap].map(to_f64))?;
    }
    w.flush()?;
    Ok(())
}

/// `t, K, y, J, w_at_xbar, dw_at_xbar, d2w_at_xbar` for every step.
pub fn write_corrections<F: Real, W: Write>(traj: &CorrectionTrajectory<F>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "K", "y", "J", "w_at_xbar", "dw_at_xbar", "d2w_at_xbar"])?;
    for p in &traj.dense {
        row(&mut w, &[p.t, p.k, p.y, p.j, p.w_at_xbar, p.dw_at_xbar, p.d2w_at_xbar].map(to_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_moments<W: Write>(series: &MomentSeries, out: W) -> Result<()> {
    let k_max = series.central_eps.first().map_or(1, |r| r.len() - 1);
    let mut header = vec!["t".to_string(), "M1_eps".to_string()];
    header.extend((2..=k_max).map(|j| format!("Mc{j}_eps")));
    header.push("M1_pred".into());
    header.extend((2..=k_max).map(|j| format!("Mc{j}_pred")));
    header.push("err_m1".into());
    header.extend((2..=k_max).map(|j| format!("err_mc{j}")));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for s in 0..series.times.len() {
        let mut values = vec![series.times[s], series.mean_eps[s]];
        values.extend(&series.central_eps[s][2..]);
        values.push(series.mean_pred[s]);
        values.extend(&series.central_pred[s][2..]);
        values.push(series.err_mean[s]);
        values.extend(&series.err_central[s][2..]);
        row(&mut w, &values)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
        for x in [std::f64::consts::PI, 1e-300, 123456.789, -7.0 / 3.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }
}
