//! `selmut`: batch front end. Every subcommand reads one configuration (a file
//! or a bundled preset), runs the corresponding pipeline and writes CSV (and
//! optionally SVG) under `output.dir`. File names carry the config hash.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use selmut_core::eps_solver::{check_bounds, run_eps};
use selmut_core::harness::{reference, run_sweep};
use selmut_core::limit_solver::{run_limit, LimitConfig};
use selmut_core::moments::moment_errors;
use selmut_core::report::{self, fmt_f64};
use selmut_core::svg::{self, Axes, Plot, Series};
use selmut_core::{preset, validate_assumptions, Error, RunConfig, PRESETS};

#[derive(Parser)]
#[command(name = "selmut", version, about = "Selection-mutation solvers, Hamilton-Jacobi limit and convergence sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions for every eps and write the report.
    Validate(Source),
    /// Integrate the eps-problem for every eps (or only `--eps`).
    RunEps {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Integrate the constrained limit problem.
    RunLimit(Source),
    /// Integrate the limit problem together with its first-order corrections.
    RunCorrections(Source),
    /// Compare measured and predicted phenotypic moments for every eps.
    Moments(Source),
    /// Full convergence sweep with fitted orders.
    Sweep(Source),
    /// Print the names of the bundled presets, or one preset's text.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct Source {
    /// Configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::from_path(path)?,
            (None, Some(name)) => {
                let text = preset(name).ok_or_else(|| Error::Validation(vec![format!("unknown preset {name:?}")]))?;
                RunConfig::parse(text)?
            }
            (None, None) => unreachable!("clap requires one source"),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) => 2,
        Error::BlowUp { .. } => 3,
        Error::BoundaryContact { .. } => 4,
        Error::Degeneracy(_) => 5,
        _ => 1,
    }
}

/// Collects output files and writes them in one place, in order.
struct Output {
    dir: PathBuf,
    hash: String,
    svg: bool,
}

impl Output {
    fn new(cfg: &RunConfig) -> Result<Self, Error> {
        fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::Io(format!("{}: {e}", cfg.output_dir.display())))?;
        let out = Self { dir: cfg.output_dir.clone(), hash: cfg.short_hash(), svg: cfg.emit_svg };
        out.write_text(&format!("config_{}.cfg", out.hash), &cfg.to_canonical())?;
        Ok(out)
    }

    fn name(&self, stem: &str, eps: Option<f64>, ext: &str) -> String {
        match eps {
            Some(e) => format!("{stem}_{}_eps{e:?}.{ext}", self.hash),
            None => format!("{stem}_{}.{ext}", self.hash),
        }
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn write_text(&self, file: &str, text: &str) -> Result<(), Error> {
        fs::write(self.path(file), text).map_err(|e| Error::Io(format!("{file}: {e}")))
    }

    fn csv(&self, file: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<(), Error>) -> Result<(), Error> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        fs::write(self.path(file), buf).map_err(|e| Error::Io(format!("{file}: {e}")))
    }

    fn plot(&self, file: &str, plot: Result<String, Error>) -> Result<(), Error> {
        if self.svg {
            self.write_text(file, &plot?)?;
        }
        Ok(())
    }
}

fn time_plot(title: &str, series: Vec<(&str, Vec<(f64, f64)>)>) -> Result<String, Error> {
    svg::render(&Plot {
        title: title.into(),
        x_label: "t".into(),
        y_label: title.into(),
        axes: Axes::Linear,
        series: series.into_iter().map(|(l, p)| Series { markers: false, ..Series::points(l, p) }).collect(),
        annotation: None,
    })
}

fn validate(cfg: &RunConfig) -> Result<ExitCode, Error> {
    let out = Output::new(cfg)?;
    let mut failed = Vec::new();
    for &eps in &cfg.eps_list {
        let rep = validate_assumptions(&cfg.model, &cfg.psi, &cfg.init, &cfg.grid, eps);
        out.csv(&out.name("validation", Some(eps), "csv"), |w| report::write_validation(&rep, w))?;
        let verdict = if rep.all_pass() { "ok" } else { "FAILED" };
        println!("eps {eps:<8} assumptions {verdict} ({} checks)", rep.checks.len());
        for f in rep.failures() {
            println!("  {f}");
            failed.push(format!("eps {eps}: {f}"));
        }
    }
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::Validation(failed))
    }
}

fn run_eps_cmd(cfg: &RunConfig, only: Option<f64>) -> Result<ExitCode, Error> {
    let out = Output::new(cfg)?;
    let sweep = cfg.sweep_config();
    let list = only.map_or_else(|| cfg.eps_list.clone(), |e| vec![e]);
    for eps in list {
        let ecfg = sweep.eps_config(eps, cfg.grid)?;
        let traj = run_eps(&ecfg, &cfg.model, &cfg.psi, &cfg.init)?;
        let diag = check_bounds(&traj, &cfg.model, &cfg.init, sweep.bounds);
        out.csv(&out.name("eps_trajectory", Some(eps), "csv"), |w| report::write_eps_trajectory(&traj, w))?;
        out.csv(&out.name("bounds", Some(eps), "csv"), |w| report::write_diagnostics(&diag, w))?;
        let pts = |v: &[f64]| traj.times.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
        out.plot(&out.name("intake", Some(eps), "svg"), time_plot("I_eps", vec![("I_eps", pts(&traj.intake))]))?;
        println!(
            "eps {eps:<8} dt {:.3e}  I(T) {:.6}  x(T) {:.6}  bound violations {}",
            traj.dt,
            traj.intake.last().unwrap(),
            traj.dominant.last().unwrap(),
            diag.violations()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn limit_config(cfg: &RunConfig) -> LimitConfig<f64> {
    LimitConfig::aligned(cfg.horizon, cfg.grid, cfg.snapshot_interval, cfg.limit_dt, &cfg.init.sample(&cfg.grid))
}

fn run_limit_cmd(cfg: &RunConfig) -> Result<ExitCode, Error> {
    let out = Output::new(cfg)?;
    let traj = run_limit(&cfg.model, &cfg.init, &limit_config(cfg))?;
    out.csv(&out.name("limit", None, "csv"), |w| report::write_limit_trajectory(&traj, w))?;
    let series = |f: fn(&selmut_core::limit_solver::LimitPoint<f64>) -> f64| traj.dense.iter().map(|p| (p.t, f(p))).collect();
    out.plot(&out.name("limit_xbar", None, "svg"), time_plot("xbar", vec![("xbar", series(|p| p.xbar))]))?;
    out.plot(&out.name("limit_intake", None, "svg"), time_plot("I", vec![("I", series(|p| p.intake))]))?;
    let last = traj.dense.last().unwrap();
    println!("xbar(T) {}  I(T) {}", fmt_f64(last.xbar), fmt_f64(last.intake));
    println!("max constraint drift {:.3e}  max argmax gap {:.3e}", traj.max_drift(), traj.max_argmax_gap());
    Ok(ExitCode::SUCCESS)
}

fn run_corrections_cmd(cfg: &RunConfig) -> Result<ExitCode, Error> {
    let out = Output::new(cfg)?;
    let r = reference(&cfg.sweep_config(), cfg.grid)?;
    out.csv(&out.name("limit", None, "csv"), |w| report::write_limit_trajectory(&r.limit, w))?;
    out.csv(&out.name("corrections", None, "csv"), |w| report::write_corrections(&r.corrections, w))?;
    let dense = &r.corrections.dense;
    out.plot(
        &out.name("corrections", None, "svg"),
        time_plot(
            "first-order corrections",
            vec![("J", dense.iter().map(|p| (p.t, p.j)).collect()), ("y", dense.iter().map(|p| (p.t, p.y)).collect())],
        ),
    )?;
    let (first, last) = (dense.first().unwrap(), dense.last().unwrap());
    println!("K(0) {}  J(0) {}", fmt_f64(first.k), fmt_f64(first.j));
    println!("J(T) {}  y(T) {}  max|w| {:.3e}", fmt_f64(last.j), fmt_f64(last.y), r.corrections.max_abs_w());
    Ok(ExitCode::SUCCESS)
}

fn moments_cmd(cfg: &RunConfig) -> Result<ExitCode, Error> {
    let out = Output::new(cfg)?;
    let sweep = cfg.sweep_config();
    let r = reference(&sweep, cfg.grid)?;
    for &eps in &cfg.eps_list {
        let traj = run_eps(&sweep.eps_config(eps, cfg.grid)?, &cfg.model, &cfg.psi, &cfg.init)?;
        let series = moment_errors(&traj, &r.limit, &r.corrections, &cfg.psi, cfg.k_max)?;
        out.csv(&out.name("moments", Some(eps), "csv"), |w| report::write_moments(&series, w))?;
        let central: Vec<String> =
            (2..=cfg.k_max).map(|j| format!("Mc{j} {:.3e}", series.sup_err_central(j))).collect();
        println!("eps {eps:<8} sup errors: M1 {:.3e}  {}", series.sup_err_mean(), central.join("  "));
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(cfg: &RunConfig) -> Result<ExitCode, Error> {
    let out = Output::new(cfg)?;
    let start = Instant::now();
    let rep = run_sweep(&cfg.sweep_config())?;
    out.csv(&out.name("errors", None, "csv"), |w| rep.write_errors_csv(w))?;
    out.csv(&out.name("orders", None, "csv"), |w| rep.write_orders_csv(w))?;
    out.csv(&out.name("runs", None, "csv"), |w| rep.write_runs_csv(w))?;
    for (q, fit) in &rep.fits {
        let pts: Vec<(f64, f64)> = rep.rows_for(*q).map(|r| (r.eps, r.error)).collect();
        if out.svg && pts.iter().any(|&(_, e)| e > 0.0) {
            out.plot(&out.name(&format!("order_{}", q.name()), None, "svg"), svg::order_plot(&q.name(), &pts, Some(fit), q.expected_order()))?;
        }
        let order = if fit.no_fit { "no fit".to_string() } else { format!("{:6.3}", fit.order) };
        let floor = if fit.floor_flag { "  [floor]" } else { "" };
        println!("{:26} order {order} (expected {}){floor}", q.name(), q.expected_order());
    }
    let failures: Vec<&str> = rep.outcomes.iter().filter_map(|o| o.failure.as_deref()).collect();
    for f in &failures {
        println!("run failed: {f}");
    }
    println!(
        "bound violations {}  trust window {}  wall time {:.1}s",
        rep.total_bound_violations(),
        rep.trust_window,
        start.elapsed().as_secs_f64()
    );
    Ok(if failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let load = |s: &Source| s.load();
    match cli.command {
        Command::Validate(s) => validate(&load(&s)?),
        Command::RunEps { source, eps } => run_eps_cmd(&load(&source)?, eps),
        Command::RunLimit(s) => run_limit_cmd(&load(&s)?),
        Command::RunCorrections(s) => run_corrections_cmd(&load(&s)?),
        Command::Moments(s) => moments_cmd(&load(&s)?),
        Command::Sweep(s) => sweep_cmd(&load(&s)?),
        Command::Presets { name: None } => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { name: Some(name) } => {
            let text = preset(&name).ok_or_else(|| Error::Validation(vec![format!("unknown preset {name:?}")]))?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
