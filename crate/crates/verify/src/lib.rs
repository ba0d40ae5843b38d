//! Shared plumbing for the acceptance suite in `tests/acceptance.rs`: verdict
//! lines, cached preset sweeps and order-band checks.

use std::io::Write;
use std::sync::OnceLock;

use selmut_core::harness::{run_sweep, ConvergenceReport, OrderFit, Quantity};
use selmut_core::{preset, RunConfig};

/// Writes to the real stdout, which the test harness does not capture.
pub fn say(line: String) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

pub fn verdict(n: u32, title: &str, pass: bool, detail: String) {
    say(format!("criterion {n:>2} [{}] {title}: {detail}", if pass { "PASS" } else { "FAIL" }));
}

pub fn supplement(n: u32, detail: String) {
    say(format!("criterion {n:>2} supplement: {detail}"));
}

pub fn config(name: &str) -> RunConfig {
    RunConfig::parse(preset(name).unwrap()).unwrap()
}

pub fn sweep(name: &str) -> ConvergenceReport {
    run_sweep(&config(name).sweep_config()).unwrap()
}

pub fn transient() -> &'static ConvergenceReport {
    static R: OnceLock<ConvergenceReport> = OnceLock::new();
    R.get_or_init(|| sweep("p0_transient"))
}

pub fn perturbed() -> &'static ConvergenceReport {
    static R: OnceLock<ConvergenceReport> = OnceLock::new();
    R.get_or_init(|| sweep("p0_perturbed"))
}

pub fn stationary() -> &'static ConvergenceReport {
    static R: OnceLock<ConvergenceReport> = OnceLock::new();
    R.get_or_init(|| sweep("p0_stationary"))
}

pub fn fit(report: &ConvergenceReport, q: Quantity) -> OrderFit {
    report.fit(q).unwrap_or_else(|| panic!("{} missing from report", q.name()))
}

pub fn show(q: Quantity, f: &OrderFit) -> String {
    if f.no_fit {
        format!("{} no fit ({} usable points)", q.name(), f.points)
    } else {
        format!("{} {:.3}{}", q.name(), f.order, if f.floor_flag { " [floor]" } else { "" })
    }
}

/// Checks each quantity's fitted order against `band`; returns (all ok, summary).
pub fn in_band(report: &ConvergenceReport, qs: &[Quantity], band: (f64, f64), forbid_floor: bool) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &q in qs {
        let f = fit(report, q);
        let good = !f.no_fit && f.order >= band.0 && f.order <= band.1 && !(forbid_floor && f.floor_flag);
        ok &= good;
        parts.push(show(q, &f));
    }
    (ok, format!("{} (band [{}, {}])", parts.join(", "), band.0, band.1))
}
