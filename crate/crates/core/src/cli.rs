//! Command-line front end: `solve`, `curve` and `simulate` over JSON
//! problem configs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mc::{simulate_value, McError, SimConfig, ThresholdStrategy};
use crate::problem::{parse_problem, ProblemError, ProblemSpec};
use crate::solve::{solve_problem, Regime, RegimeTag, SolveError, Solved, SolverOptions};
use crate::valuefn::{verification_audit, AuditReport, ThresholdStrategyValue, ValueError, ValueFunction};

/// Every failure a command can report, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("solve: {0}")]
    Solve(#[from] SolveError),
    #[error("valuefn: {0}")]
    Value(#[from] ValueError),
    #[error("mc: {0}")]
    Mc(#[from] McError),
    #[error("report: {0}")]
    Report(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "impulse", version, about = "Optimal threshold impulse control via expected suprema")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem, run the verification audit and write a JSON report.
    Solve(SolveArgs),
    /// Emit value-function samples `x,v,Mv,g` as CSV.
    Curve(CurveArgs),
    /// Compare simulated threshold strategies with the analytic value.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Problem configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Bisection tolerance of the fixed point.
    #[arg(long, default_value_t = 1e-11)]
    pub tol_fixed_point: f64,
    /// Grid size of the Assumption 2 audit.
    #[arg(long, default_value_t = 256)]
    pub grid_assumption2: usize,
}

impl SolverFlags {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            fixed_point_tol: self.tol_fixed_point,
            assumption2_grid: self.grid_assumption2,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CurveFlags {
    /// `lo,hi`; defaults depend on the regime.
    #[arg(long, value_parser = parse_range)]
    pub curve_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 300)]
    pub curve_points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub curve: CurveFlags,
    /// Report path; defaults to `<config stem>.report.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub curve: CurveFlags,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0.02)]
    pub dt: f64,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    /// Threshold multipliers of `x*`; absolute thresholds when the problem
    /// has no optimal threshold (default `4, 2, 1` times `10 sigma sqrt(dt)`).
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    /// Report path; only the table is printed when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("bad lower end `{a}`: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("bad upper end `{b}`: {e}"))?;
    if !(lo < hi) {
        return Err(format!("empty range {lo},{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    /// Multiple of `x*`, or `None` for absolute thresholds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
    pub threshold: f64,
    pub analytic_v0: f64,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: ProblemSpec,
    pub regime: RegimeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xstar: Option<f64>,
    /// `v(0)`, present whenever the value is finite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_at_0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumption2_verified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth_fit_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_path: Option<PathBuf>,
    #[serde(default)]
    pub simulations: Vec<SimulationRow>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunReport {
    /// 0 when solved and verified, 2 when Assumption 2 stayed unverified.
    pub fn exit_code(&self) -> i32 {
        if self.assumption2_verified == Some(false) {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text)?)
    }

    /// Short plain-text summary for the terminal.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "process  {}", self.problem.process.name());
        let _ = writeln!(s, "rate     {}", self.problem.rate);
        let _ = writeln!(s, "regime   {:?}", self.regime);
        if let Some(c) = self.chat {
            let _ = writeln!(s, "c_hat    {c:.12}");
        }
        if let Some(x) = self.xstar {
            let _ = writeln!(s, "x*       {x:.12}");
        }
        if let Some(v) = self.value_at_0 {
            let _ = writeln!(s, "v(0)     {v:.12}");
        }
        if let Some(ok) = self.assumption2_verified {
            let _ = writeln!(s, "assumption 2 {}", if ok { "verified" } else { "UNVERIFIED" });
        }
        if let Some(a) = &self.audit {
            let _ = writeln!(
                s,
                "audit    {} points, max(Mv - v) = {:.3e}, equality failures {}, {}",
                a.points,
                a.max_violation,
                a.equality_failures,
                if a.passed { "passed" } else { "FAILED" }
            );
        }
        if let Some(p) = &self.curve_path {
            let _ = writeln!(s, "curve    {}", p.display());
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

pub fn load_problem(path: &Path) -> Result<ProblemSpec, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_problem(&text)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Audit grid: 256 points over `[lo, max(2 x*, x* + 2)]`, starting at
/// the lower boundary or at -2.
pub fn audit_grid(vf: &ValueFunction) -> Vec<f64> {
    let lo = vf.law().lower_boundary().max(-2.0);
    let t = vf.threshold();
    let hi = (2.0 * t).max(t + 2.0);
    let n = 256;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn base_report(solved: &Solved) -> RunReport {
    let sol = &solved.solution;
    let mut report = RunReport {
        problem: solved.spec.clone(),
        regime: sol.regime.tag(),
        chat: None,
        xstar: None,
        value_at_0: None,
        assumption2_verified: None,
        fixed_point_residual: None,
        smooth_fit_gap: None,
        audit: None,
        curve_path: None,
        simulations: Vec::new(),
        warnings: sol.diagnostics.warnings.clone(),
    };
    match &sol.regime {
        Regime::InfiniteValue => {}
        Regime::Degenerate { value_at_0, .. } => report.value_at_0 = Some(*value_at_0),
        Regime::Threshold {
            chat,
            xstar,
            assumption2,
            ..
        } => {
            report.chat = Some(*chat);
            report.xstar = Some(*xstar);
            report.value_at_0 = Some(*chat);
            report.assumption2_verified = Some(assumption2.verified);
            report.fixed_point_residual = sol.diagnostics.fixed_point.as_ref().map(|f| f.residual);
        }
    }
    report
}

fn default_curve_range(vf: &ValueFunction) -> (f64, f64) {
    let t = vf.threshold();
    let lo = vf.law().lower_boundary().max(if t > 0.0 { 0.0 } else { -2.0 });
    (lo, (2.0 * t).max(lo + 3.0).max(2.0))
}

/// `%.12g`-style formatting.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..12).contains(&e) {
        let s = format!("{:.*}", (11 - e).max(0) as usize, x);
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        // rounding can bump the exponent, e.g. 9.99999999999951 -> 10.0000000000
        if s.replace(['-', '.'], "").trim_start_matches('0').len() > 12 {
            return format!("{x:.11e}");
        }
        s
    } else {
        format!("{x:.11e}")
    }
}

pub fn curve_csv(vf: &ValueFunction, lo: f64, hi: f64, n: usize) -> Result<String, Error> {
    let mut s = String::from("x,v,Mv,g\n");
    for p in vf.curve(lo, hi, n)? {
        let _ = writeln!(s, "{},{},{},{}", fmt_sig(p.x), fmt_sig(p.v), fmt_sig(p.mv), fmt_sig(p.g));
    }
    Ok(s)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<RunReport, Error> {
    let spec = load_problem(&args.solver.config)?;
    let solved = solve_problem(&spec, &args.solver.options())?;
    let mut report = base_report(&solved);
    if solved.solution.regime.tag() != RegimeTag::InfiniteValue {
        let vf = ValueFunction::from_solved(&solved)?;
        report.audit = Some(verification_audit(&vf, &audit_grid(&vf))?);
        if vf.kind() == crate::valuefn::ValueKind::Threshold && vf.law().psi().is_some() {
            report.smooth_fit_gap = vf.smooth_fit_gap(1e-4).ok();
        }
        if let Some((lo, hi)) = args.curve.curve_range {
            let path = report_path(args).with_extension("curve.csv");
            write_file(&path, &curve_csv(&vf, lo, hi, args.curve.curve_points)?)?;
            report.curve_path = Some(path);
        }
    }
    write_file(&report_path(args), &report.to_json()?)?;
    info!("report written to {}", report_path(args).display());
    Ok(report)
}

fn report_path(args: &SolveArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| {
        let stem = args.solver.config.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        PathBuf::from(format!("{stem}.report.json"))
    })
}

/// The CSV text and the exit code of the solve it rests on.
pub fn cmd_curve(args: &CurveArgs) -> Result<(String, i32), Error> {
    let spec = load_problem(&args.solver.config)?;
    let solved = solve_problem(&spec, &args.solver.options())?;
    let code = base_report(&solved).exit_code();
    let vf = ValueFunction::from_solved(&solved)?;
    let (lo, hi) = args.curve.curve_range.unwrap_or_else(|| default_curve_range(&vf));
    let csv = curve_csv(&vf, lo, hi, args.curve.curve_points)?;
    if let Some(p) = &args.out {
        write_file(p, &csv)?;
    }
    Ok((csv, code))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunReport, Error> {
    let spec = load_problem(&args.solver.config)?;
    let solved = solve_problem(&spec, &args.solver.options())?;
    let mut report = base_report(&solved);
    let cfg = SimConfig {
        dt: args.dt,
        n_paths: args.paths,
        seed: args.seed,
        ..SimConfig::default()
    };
    let min_eps = 10.0 * spec.process.sigma() * cfg.dt.sqrt();
    let thresholds: Vec<(Option<f64>, f64)> = match (&solved.solution.regime, &args.sweep) {
        (Regime::Threshold { xstar, .. }, Some(s)) => s.iter().map(|&m| (Some(m), m * xstar)).collect(),
        (Regime::Threshold { xstar, .. }, None) => vec![(Some(1.0), *xstar)],
        (_, Some(s)) => s.iter().map(|&e| (None, e)).collect(),
        (_, None) => [4.0, 2.0, 1.0].iter().map(|&k| (None, k * min_eps)).collect(),
    };
    let g = |x: f64| spec.reward.eval(x);
    for (multiplier, threshold) in thresholds {
        if multiplier.is_none() && threshold < min_eps {
            return Err(McError::EpsilonTooSmall {
                eps: threshold,
                min: min_eps,
            }
            .into());
        }
        let analytic =
            ThresholdStrategyValue::new(solved.law.clone(), solved.f.clone(), spec.reward.clone(), threshold)?.v0();
        let est = simulate_value(&spec.process, &g, ThresholdStrategy::new(threshold)?, spec.rate, &cfg)?;
        info!(
            "threshold {threshold}: {} paths in {:.2} s",
            est.n_paths, est.elapsed
        );
        report.warnings.extend(est.warnings.iter().cloned());
        report.simulations.push(SimulationRow {
            multiplier,
            threshold,
            analytic_v0: analytic,
            mean: est.mean,
            stderr: est.stderr,
            z: (est.mean - analytic) / est.stderr,
            n_paths: est.n_paths,
            seed: est.seed,
            dt: est.dt,
        });
    }
    report.warnings.dedup();
    if let Some(p) = &args.out {
        write_file(p, &report.to_json()?)?;
    }
    Ok(report)
}

/// CSV comparison table of a simulate run.
pub fn simulation_table(rows: &[SimulationRow]) -> String {
    let mut s = String::from("multiplier,threshold,analytic_v0,mean,stderr,z,n,seed,dt\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.multiplier.map(fmt_sig).unwrap_or_default(),
            fmt_sig(r.threshold),
            fmt_sig(r.analytic_v0),
            fmt_sig(r.mean),
            fmt_sig(r.stderr),
            fmt_sig(r.z),
            r.n_paths,
            r.seed,
            r.dt
        );
    }
    s
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a).map(|r| {
            print!("{}", r.summary());
            r.exit_code()
        }),
        Command::Curve(a) => cmd_curve(a).map(|(csv, code)| {
            if a.out.is_none() {
                print!("{csv}");
            }
            code
        }),
        Command::Simulate(a) => cmd_simulate(a).map(|r| {
            print!("{}", simulation_table(&r.simulations));
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            r.exit_code()
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
