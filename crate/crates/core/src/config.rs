//! Run configuration in a flat `section.key = value` text format.
//!
//! ```text
//! # reference model, transient start
//! model.r0 = 1
//! model.a = 1
//! model.b = 1
//! model.theta = 0
//! psi.kind = one
//! init.L1 = 0.5
//! init.x_c = 0.5
//! init.r = prepared
//! grid.x_min = -4
//! grid.x_max = 4
//! grid.n = 801
//! time.T = 1
//! time.snapshot_interval = 0.01
//! sweep.eps_list = 0.08, 0.04, 0.02, 0.01
//! output.dir = out
//! ```
//!
//! Parsing reports every problem at once, each with its line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::eps_solver::{BoundsTolerance, HamiltonianFlux};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::harness::{DtRule, SweepConfig};
use crate::model::{Bump, GrowthModel, InitialData, MassPrefactor, WeightFunction};
use crate::moments::DEFAULT_K_MAX;

const REQUIRED_SECTIONS: [&str; 7] = ["model", "psi", "init", "grid", "time", "sweep", "output"];

const KNOWN_KEYS: [&str; 33] = [
    "model.r0",
    "model.a",
    "model.b",
    "model.theta",
    "model.bump_amplitude",
    "model.bump_center",
    "model.bump_width",
    "psi.kind",
    "psi.c0",
    "psi.c1",
    "psi.c2",
    "psi.c3",
    "init.L1",
    "init.x_c",
    "init.r",
    "init.bump_amplitude",
    "init.bump_center",
    "init.bump_width",
    "grid.x_min",
    "grid.x_max",
    "grid.n",
    "time.T",
    "time.dt_rule",
    "time.snapshot_interval",
    "time.limit_dt",
    "sweep.eps_list",
    "sweep.trust_window",
    "sweep.refine_check",
    "sweep.k_max",
    "solver.flux",
    "output.dir",
    "output.emit_svg",
    "output.label",
];

/// Bundled presets, by name.
pub const PRESETS: [(&str, &str); 3] = [
    ("p0_stationary", include_str!("../presets/p0_stationary.cfg")),
    ("p0_transient", include_str!("../presets/p0_transient.cfg")),
    ("p0_perturbed", include_str!("../presets/p0_perturbed.cfg")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: GrowthModel<f64>,
    pub psi: WeightFunction<f64>,
    pub init: InitialData<f64>,
    pub grid: Grid1D<f64>,
    pub horizon: f64,
    pub snapshot_interval: f64,
    pub dt_rule: DtRule,
    pub limit_dt: Option<f64>,
    pub eps_list: Vec<f64>,
    pub trust_window: f64,
    pub refine_check: bool,
    pub k_max: usize,
    pub flux: HamiltonianFlux,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
    /// Free-form name for reports; does not enter the hash.
    pub label: Option<String>,
}

struct Entry {
    line: usize,
    value: String,
}

/// Collects values and problems while walking the key table.
struct Reader {
    entries: BTreeMap<String, Entry>,
    problems: Vec<String>,
}

impl Reader {
    fn at(&self, key: &str) -> String {
        match self.entries.get(key) {
            Some(e) => format!("line {}: {key}", e.line),
            None => key.to_string(),
        }
    }

    fn fail(&mut self, key: &str, msg: impl std::fmt::Display) {
        let at = self.at(key);
        self.problems.push(format!("{at}: {msg}"));
    }

    fn raw(&mut self, key: &str, required: bool) -> Option<String> {
        match self.entries.get(key) {
            Some(e) => Some(e.value.clone()),
            None => {
                if required {
                    self.problems.push(format!("missing key {key}"));
                }
                None
            }
        }
    }

    fn number(&mut self, key: &str, required: bool) -> Option<f64> {
        let raw = self.raw(key, required)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.fail(key, format!("expected a finite number, got {raw:?}"));
                None
            }
        }
    }

    fn integer(&mut self, key: &str, required: bool) -> Option<usize> {
        let raw = self.raw(key, required)?;
        raw.parse::<usize>().map_err(|_| self.fail(key, format!("expected a non-negative integer, got {raw:?}"))).ok()
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        let raw = self.raw(key, false)?;
        match raw.as_str() {
            "true" => Some(true),
            "false" => Some(false),
            _ => {
                self.fail(key, format!("expected true or false, got {raw:?}"));
                None
            }
        }
    }

    /// `cond` must hold, otherwise `msg` is recorded against `key`.
    fn require(&mut self, key: &str, cond: bool, msg: &str) {
        if !cond {
            self.fail(key, msg);
        }
    }

    fn bump(&mut self, section: &str) -> Option<Bump<f64>> {
        let keys = ["bump_amplitude", "bump_center", "bump_width"].map(|k| format!("{section}.{k}"));
        let present = keys.iter().filter(|k| self.entries.contains_key(k.as_str())).count();
        if present == 0 {
            return None;
        }
        if present < 3 {
            let at = self.at(&keys[0]);
            self.problems.push(format!("{at}: {section} bump needs amplitude, center and width together"));
            return None;
        }
        let [amp, center, width] = keys.clone().map(|k| self.number(&k, true));
        let (amp, center, width) = (amp?, center?, width?);
        self.require(&keys[2], width > 0.0, "bump width must be positive");
        Some(Bump::new(amp, center, width))
    }
}

fn tokenize(text: &str) -> (BTreeMap<String, Entry>, Vec<String>) {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut problems = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            problems.push(format!("line {line}: expected `section.key = value`, got {content:?}"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            problems.push(format!("line {line}: unknown key {key:?}"));
            continue;
        }
        if value.is_empty() {
            problems.push(format!("line {line}: {key}: empty value"));
            continue;
        }
        if let Some(prev) = entries.get(key) {
            problems.push(format!("line {line}: {key}: duplicate (first set on line {})", prev.line));
            continue;
        }
        entries.insert(key.to_string(), Entry { line, value: value.to_string() });
    }
    for section in REQUIRED_SECTIONS {
        let prefix = format!("{section}.");
        if !entries.keys().any(|k| k.starts_with(&prefix)) {
            problems.push(format!("missing section {section}"));
        }
    }
    (entries, problems)
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates; on failure every problem is listed.
    pub fn parse(text: &str) -> Result<Self> {
        let (entries, problems) = tokenize(text);
        let mut r = Reader { entries, problems };

        let r0 = r.number("model.r0", true);
        let a = r.number("model.a", true);
        let b = r.number("model.b", true);
        let theta = r.number("model.theta", true);
        if let Some(v) = r0 {
            r.require("model.r0", v > 0.0, "carrying-intake: r0 must be positive so the optimum is viable");
        }
        if let Some(v) = a {
            r.require("model.a", v > 0.0, "growth-concavity: a must be positive");
        }
        if let Some(v) = b {
            r.require("model.b", v > 0.0, "intake-sensitivity: growth must decrease in intake (b > 0)");
        }
        let model_bump = r.bump("model");

        let psi = match r.raw("psi.kind", true).as_deref() {
            Some("one") => {
                for k in ["psi.c0", "psi.c1", "psi.c2", "psi.c3"] {
                    if r.entries.contains_key(k) {
                        r.fail(k, "only used with psi.kind = smooth");
                    }
                }
                Some(WeightFunction::ConstantOne)
            }
            Some("smooth") => {
                let [c0, c1, c2, c3] = ["psi.c0", "psi.c1", "psi.c2", "psi.c3"].map(|k| r.number(k, true));
                match (c0, c1, c2, c3) {
                    (Some(c0), Some(c1), Some(c2), Some(c3)) => {
                        r.require("psi.c3", c3 > 0.0, "c3 must be positive");
                        r.require("psi.c1", c0 - c1.abs() > 0.0, "weight-bounds: psi must stay positive (c0 > |c1|)");
                        Some(WeightFunction::SmoothPositive { c0, c1, c2, c3 })
                    }
                    _ => None,
                }
            }
            Some(other) => {
                r.fail("psi.kind", format!("expected one or smooth, got {other:?}"));
                None
            }
            None => None,
        };

        let l1 = r.number("init.L1", true);
        if let Some(v) = l1 {
            r.require("init.L1", v > 0.0, "initial-concavity: L1 must be positive");
        }
        let x_c = r.number("init.x_c", true);
        let prefactor = match r.raw("init.r", true) {
            Some(s) if s == "prepared" => Some(MassPrefactor::Prepared),
            Some(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Some(MassPrefactor::Fixed(v)),
                _ => {
                    r.fail("init.r", format!("expected a positive number or `prepared`, got {s:?}"));
                    None
                }
            },
            None => None,
        };
        let init_bump = r.bump("init");

        let x_min = r.number("grid.x_min", true);
        let x_max = r.number("grid.x_max", true);
        let n = r.integer("grid.n", true);
        let grid = match (x_min, x_max, n) {
            (Some(lo), Some(hi), Some(n)) => {
                r.require("grid.n", n >= 5, "need at least 5 grid points");
                r.require("grid.x_max", hi > lo, "x_max must exceed x_min");
                if n >= 5 && hi > lo {
                    Grid1D::new(lo, hi, n).map_err(|e| r.fail("grid.n", e)).ok()
                } else {
                    None
                }
            }
            _ => None,
        };
        if let (Some(g), Some(x)) = (grid, x_c) {
            r.require("init.x_c", g.contains(x), "x_c must lie inside the grid");
        }

        let horizon = r.number("time.T", true);
        if let Some(v) = horizon {
            r.require("time.T", v > 0.0, "T must be positive");
        }
        let snapshot_interval = r.number("time.snapshot_interval", true);
        if let (Some(t), Some(s)) = (horizon, snapshot_interval) {
            let ratio = t / s;
            r.require(
                "time.snapshot_interval",
                s > 0.0 && s <= t && (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0),
                "must be positive and divide T",
            );
        }
        let dt_rule = match r.raw("time.dt_rule", false) {
            None => Some(DtRule::Auto),
            Some(s) if s == "auto" => Some(DtRule::Auto),
            Some(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Some(DtRule::Fixed(v)),
                _ => {
                    r.fail("time.dt_rule", format!("expected `auto` or a positive step, got {s:?}"));
                    None
                }
            },
        };
        let limit_dt = r.number("time.limit_dt", false);
        if let Some(v) = limit_dt {
            r.require("time.limit_dt", v > 0.0, "must be positive");
        }

        let eps_list = r.raw("sweep.eps_list", true).and_then(|s| {
            let parsed: std::result::Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) => Some(v),
                Err(_) => {
                    r.fail("sweep.eps_list", format!("expected comma-separated numbers, got {s:?}"));
                    None
                }
            }
        });
        if let Some(list) = &eps_list {
            r.require("sweep.eps_list", list.iter().all(|&e| e.is_finite() && e > 0.0), "entries must be positive");
            r.require("sweep.eps_list", list.windows(2).all(|w| w[1] < w[0]), "must be strictly decreasing");
            if let (Some(g), Some(&min)) = (grid, list.last()) {
                if min > 0.0 && g.h() > 0.2 * min.sqrt() * (1.0 + 1e-12) {
                    r.fail("grid.n", format!("h = {} does not resolve sqrt(min eps): need h <= {}", g.h(), 0.2 * min.sqrt()));
                }
            }
        }
        let trust_window = r.number("sweep.trust_window", false).unwrap_or(1.0);
        r.require("sweep.trust_window", trust_window > 0.0, "must be positive");
        let refine_check = r.boolean("sweep.refine_check").unwrap_or(false);
        let k_max = r.integer("sweep.k_max", false).unwrap_or(DEFAULT_K_MAX);
        r.require("sweep.k_max", (2..=8).contains(&k_max), "must lie in 2..=8");

        let flux = match r.raw("solver.flux", false).as_deref() {
            None | Some("centered") => HamiltonianFlux::Centered,
            Some("llf") => HamiltonianFlux::LocalLaxFriedrichs,
            Some(other) => {
                r.fail("solver.flux", format!("expected centered or llf, got {other:?}"));
                HamiltonianFlux::Centered
            }
        };

        let output_dir = r.raw("output.dir", true).map(PathBuf::from);
        let emit_svg = r.boolean("output.emit_svg").unwrap_or(false);
        let label = r.raw("output.label", false);

        if !r.problems.is_empty() {
            return Err(Error::Validation(r.problems));
        }
        let mut model = GrowthModel::new(r0.unwrap(), a.unwrap(), b.unwrap(), theta.unwrap());
        if let Some(bump) = model_bump {
            model = model.with_perturbation(bump);
        }
        Ok(RunConfig {
            model,
            psi: psi.unwrap(),
            init: InitialData::new(l1.unwrap(), x_c.unwrap(), prefactor.unwrap(), init_bump),
            grid: grid.unwrap(),
            horizon: horizon.unwrap(),
            snapshot_interval: snapshot_interval.unwrap(),
            dt_rule: dt_rule.unwrap(),
            limit_dt,
            eps_list: eps_list.unwrap(),
            trust_window,
            refine_check,
            k_max,
            flux,
            output_dir: output_dir.unwrap(),
            emit_svg,
            label,
        })
    }

    /// Every key, defaults included, in a fixed order. Numbers use the
    /// shortest representation that parses back to the same value.
    pub fn to_canonical(&self) -> String {
        let mut s = self.numeric_part();
        writeln!(s, "output.dir = {}", self.output_dir.display()).unwrap();
        writeln!(s, "output.emit_svg = {}", self.emit_svg).unwrap();
        if let Some(label) = &self.label {
            writeln!(s, "output.label = {label}").unwrap();
        }
        s
    }

    fn numeric_part(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        let m = &self.model;
        kv("model.r0", format!("{:?}", m.r0));
        kv("model.a", format!("{:?}", m.a));
        kv("model.b", format!("{:?}", m.b));
        kv("model.theta", format!("{:?}", m.theta));
        if let Some(b) = m.perturbation {
            kv("model.bump_amplitude", format!("{:?}", b.amplitude));
            kv("model.bump_center", format!("{:?}", b.center));
            kv("model.bump_width", format!("{:?}", b.width));
        }
        match self.psi {
            WeightFunction::ConstantOne => kv("psi.kind", "one".into()),
            WeightFunction::SmoothPositive { c0, c1, c2, c3 } => {
                kv("psi.kind", "smooth".into());
                kv("psi.c0", format!("{c0:?}"));
                kv("psi.c1", format!("{c1:?}"));
                kv("psi.c2", format!("{c2:?}"));
                kv("psi.c3", format!("{c3:?}"));
            }
        }
        let i = &self.init;
        kv("init.L1", format!("{:?}", i.l1));
        kv("init.x_c", format!("{:?}", i.x_c));
        kv(
            "init.r",
            match i.r {
                MassPrefactor::Fixed(r) => format!("{r:?}"),
                MassPrefactor::Prepared => "prepared".into(),
            },
        );
        if let Some(b) = i.perturbation {
            kv("init.bump_amplitude", format!("{:?}", b.amplitude));
            kv("init.bump_center", format!("{:?}", b.center));
            kv("init.bump_width", format!("{:?}", b.width));
        }
        kv("grid.x_min", format!("{:?}", self.grid.x_min()));
        kv("grid.x_max", format!("{:?}", self.grid.x_max()));
        kv("grid.n", self.grid.len().to_string());
        kv("time.T", format!("{:?}", self.horizon));
        kv(
            "time.dt_rule",
            match self.dt_rule {
                DtRule::Auto => "auto".into(),
                DtRule::Fixed(dt) => format!("{dt:?}"),
            },
        );
        kv("time.snapshot_interval", format!("{:?}", self.snapshot_interval));
        if let Some(dt) = self.limit_dt {
            kv("time.limit_dt", format!("{dt:?}"));
        }
        let eps: Vec<String> = self.eps_list.iter().map(|e| format!("{e:?}")).collect();
        kv("sweep.eps_list", eps.join(", "));
        kv("sweep.trust_window", format!("{:?}", self.trust_window));
        kv("sweep.refine_check", self.refine_check.to_string());
        kv("sweep.k_max", self.k_max.to_string());
        kv(
            "solver.flux",
            match self.flux {
                HamiltonianFlux::Centered => "centered".into(),
                HamiltonianFlux::LocalLaxFriedrichs => "llf".into(),
            },
        );
        s
    }

    /// SHA-256 of the canonical form without the `output` section, so the
    /// hash names the numerical content only.
    pub fn hash(&self) -> String {
        Sha256::digest(self.numeric_part().as_bytes()).iter().fold(String::new(), |mut acc, b| {
            write!(acc, "{b:02x}").unwrap();
            acc
        })
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            model: self.model,
            psi: self.psi,
            init: self.init,
            grid: self.grid,
            horizon: self.horizon,
            snapshot_interval: self.snapshot_interval,
            eps_list: self.eps_list.clone(),
            dt_rule: self.dt_rule,
            limit_dt: self.limit_dt,
            flux: self.flux,
            trust_window: self.trust_window,
            refine_check: self.refine_check,
            k_max: self.k_max,
            bounds: BoundsTolerance::default(),
            label: self.label.clone().unwrap_or_else(|| self.short_hash()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transient() -> &'static str {
        preset("p0_transient").unwrap()
    }

    fn problems(text: &str) -> Vec<String> {
        match RunConfig::parse(text) {
            Err(Error::Validation(p)) => p,
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn presets_parse_and_round_trip() {
        for (name, text) in PRESETS {
            let cfg = RunConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let again = RunConfig::parse(&cfg.to_canonical()).unwrap();
            assert_eq!(cfg, again, "{name}");
            assert_eq!(cfg.hash(), again.hash());
            assert_eq!(cfg.hash().len(), 64);
            cfg.sweep_config().check().unwrap();
        }
    }

    #[test]
    fn hash_ignores_output_but_not_numbers() {
        let base = RunConfig::parse(transient()).unwrap();
        let moved = RunConfig::parse(&transient().replace("output.dir = out/p0_transient", "output.dir = elsewhere")).unwrap();
        assert_eq!(base.hash(), moved.hash());
        let shifted = RunConfig::parse(&transient().replace("init.x_c = 0.5", "init.x_c = 0.25")).unwrap();
        assert_ne!(base.hash(), shifted.hash());
    }

    #[test]
    fn negative_b_names_the_assumption() {
        let p = problems(&transient().replace("model.b = 1", "model.b = -1"));
        assert_eq!(p.len(), 1);
        assert!(p[0].contains("intake-sensitivity") && p[0].starts_with("line "), "{p:?}");
    }

    #[test]
    fn increasing_eps_list_is_rejected() {
        let p = problems(&transient().replace("0.08, 0.04, 0.02, 0.01", "0.01, 0.02"));
        assert!(p.iter().any(|m| m.contains("strictly decreasing")), "{p:?}");
    }

    #[test]
    fn all_problems_are_reported_with_lines() {
        let text = transient()
            .replace("model.a = 1", "model.a = one")
            .replace("grid.n = 801", "grid.n = 801\ngrid.spacing = 3")
            .replace("psi.kind = one\n", "");
        let p = problems(&text);
        assert!(p.iter().any(|m| m.contains("model.a") && m.contains("finite number")), "{p:?}");
        assert!(p.iter().any(|m| m.contains("unknown key \"grid.spacing\"")), "{p:?}");
        assert!(p.iter().any(|m| m == "missing key psi.kind"), "{p:?}");
        assert!(p.iter().any(|m| m == "missing section psi"), "{p:?}");
    }

    #[test]
    fn duplicates_and_malformed_lines() {
        let p = problems(&format!("{}\nmodel.a = 2\njust words\n", transient()));
        assert!(p.iter().any(|m| m.contains("duplicate")));
        assert!(p.iter().any(|m| m.contains("expected `section.key = value`")));
    }

    #[test]
    fn coarse_grid_is_refused() {
        let p = problems(&transient().replace("grid.n = 801", "grid.n = 101"));
        assert!(p.iter().any(|m| m.contains("sqrt(min eps)")), "{p:?}");
    }

    #[test]
    fn smooth_weight_needs_positive_coefficients() {
        let text = transient().replace("psi.kind = one", "psi.kind = smooth\npsi.c0 = 1\npsi.c1 = 1.5\npsi.c2 = 0\npsi.c3 = 1");
        let p = problems(&text);
        assert!(p.iter().any(|m| m.contains("weight-bounds")), "{p:?}");
    }
}
