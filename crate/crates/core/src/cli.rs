//! Command-line front end.
//!
//! Every subcommand prints a `key=value` report on standard output. With
//! `--out` it also writes a CSV file and a `<out>.meta.json` sidecar echoing
//! the parsed arguments; on failure the CSV holds only its header and the
//! sidecar carries the error.

use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::entry_exit::{predict_exit_with, ExitPrediction};
use crate::error::{Error, Result};
use crate::harness::{
    eps_family, figure_setup, run_figure, sweep, write_output, CylinderRadius, Figure, FigureData, SimConfig,
    FAMILY_HEADER, SWEEP_HEADER,
};
use crate::numeric::interior_grid;
use crate::odeint::{detect_exit, fmt_num, integrate_full, Tolerances, TRACE_HEADER};
use crate::polar::{CollisionRoute, PolarAnalysis, LAMBDA_TOL};
use crate::spectral::assumption_report;
use crate::system::{load_system, make_builtin, BuiltinName, FastSlowSystem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const PREDICT_HEADER: [&str; 9] =
    ["x0", "case", "x_tilde", "x1", "lambda", "s0_invariant", "z0_invariant", "x_star", "assumption_failures"];
const ANALYZE_HEADER: [&str; 2] = ["quantity", "value"];
const CHECK_HEADER: [&str; 4] = ["item", "pass", "detail", "witnesses"];

#[derive(Debug, Parser)]
#[command(name = "delayexit", version, about = "Entry-exit predictions for fast-slow systems with crossing eigenvalues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Collision point, collision angle, coefficients, lambda and branch invariance.
    Analyze(AnalyzeArgs),
    /// Predicted exit point for one entry point.
    Predict(PredictArgs),
    /// Simulate from (x0, z1, z2) and report the cylinder entry and exit.
    Simulate(SimulateArgs),
    /// Prediction against simulation over a grid of entry points, or over eps.
    Sweep(SweepArgs),
    /// Regenerate the data behind one of the canned figures.
    Figure(FigureArgs),
    /// Verdicts on the six standing assumptions.
    Check(CheckArgs),
}

#[derive(Debug, Args, Serialize)]
struct SystemArgs {
    /// Builtin system: one_way_coupled, eps_coupled or nonlinear.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    system: Option<BuiltinName>,
    /// TOML file describing a polynomial system.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter a of the nonlinear builtin [default: 4].
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
struct TolArgs {
    /// Relative integration tolerance.
    #[arg(long, default_value = "1e-9")]
    rtol: f64,
    /// Absolute integration tolerance.
    #[arg(long, default_value = "1e-12")]
    atol: f64,
}

impl TolArgs {
    fn tolerances(&self) -> Result<Tolerances> {
        let tol = Tolerances { rtol: self.rtol, atol: self.atol };
        tol.validate()?;
        Ok(tol)
    }
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    system: SystemArgs,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[command(flatten)]
    #[serde(flatten)]
    system: SystemArgs,
    /// Entry point.
    #[arg(long, allow_negative_numbers = true)]
    x0: f64,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    system: SystemArgs,
    /// Initial slow variable.
    #[arg(long, allow_negative_numbers = true)]
    x0: f64,
    /// Initial fast variables z1,z2.
    #[arg(long, default_value = "1,1", allow_hyphen_values = true)]
    init: Pair,
    /// Time-scale ratio eps.
    #[arg(long, default_value = "0.01")]
    eps: f64,
    /// Cylinder radius, or `init` for the initial distance to the manifold.
    #[arg(long, default_value = "0.1")]
    delta: CylinderRadius,
    /// Integrate up to this x and write the whole trace instead of stopping at the exit.
    #[arg(long, allow_negative_numbers = true)]
    x_stop: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    tol: TolArgs,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    system: SystemArgs,
    /// Entry points lo:hi:n, n points strictly inside (lo, hi).
    #[arg(long, default_value = "-2:-0.25:36", allow_hyphen_values = true)]
    grid: Grid,
    /// Time-scale ratio eps.
    #[arg(long, default_value = "0.01")]
    eps: f64,
    /// Strictly decreasing eps values; runs an eps family at --x0 instead of a grid sweep.
    #[arg(long, value_delimiter = ',', requires = "x0", conflicts_with = "grid")]
    eps_list: Option<Vec<f64>>,
    /// Entry point for --eps-list.
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    /// Initial fast variables z1,z2.
    #[arg(long, default_value = "1,1", allow_hyphen_values = true)]
    init: Pair,
    /// Cylinder radius, or `init` for the initial distance to the manifold.
    #[arg(long, default_value = "0.1")]
    delta: CylinderRadius,
    #[command(flatten)]
    #[serde(flatten)]
    tol: TolArgs,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct FigureArgs {
    /// fig7, fig8 or fig9.
    figure: Figure,
    #[command(flatten)]
    #[serde(flatten)]
    tol: TolArgs,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    system: SystemArgs,
    /// Entry point.
    #[arg(long, allow_negative_numbers = true)]
    x0: f64,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Pair([f64; 2]);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').collect();
        let [a, b] = parts.as_slice() else {
            return Err(format!("expected two comma-separated numbers, got `{s}`"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        Ok(Pair([num(a)?, num(b)?]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(format!("expected lo:hi:n, got `{s}`"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        let (lo, hi) = (num(lo)?, num(hi)?);
        let n = n.trim().parse::<usize>().map_err(|e| format!("`{n}`: {e}"))?;
        if !(lo < hi) || n == 0 {
            return Err(format!("grid needs lo < hi and n >= 1, got `{s}`"));
        }
        Ok(Grid { lo, hi, n })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

impl Command {
    fn out(&self) -> Option<&Path> {
        match self {
            Command::Analyze(a) => a.out.as_deref(),
            Command::Predict(a) => a.out.as_deref(),
            Command::Simulate(a) => a.out.as_deref(),
            Command::Sweep(a) => a.out.as_deref(),
            Command::Figure(a) => a.out.as_deref(),
            Command::Check(a) => a.out.as_deref(),
        }
    }

    fn header(&self) -> &'static [&'static str] {
        match self {
            Command::Analyze(_) => &ANALYZE_HEADER,
            Command::Predict(_) => &PREDICT_HEADER,
            Command::Simulate(_) => &TRACE_HEADER,
            Command::Sweep(a) if a.eps_list.is_some() => &FAMILY_HEADER,
            Command::Sweep(_) => &SWEEP_HEADER,
            Command::Figure(a) if a.figure == Figure::Fig8 => &FAMILY_HEADER,
            Command::Figure(_) => &SWEEP_HEADER,
            Command::Check(_) => &CHECK_HEADER,
        }
    }
}

struct Report {
    text: String,
    rows: Vec<Vec<String>>,
    meta: Value,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("--{name} must be positive, got {v}")))
    }
}

fn build_system(args: &SystemArgs) -> Result<FastSlowSystem> {
    match (&args.system, &args.config) {
        (Some(name), None) => make_builtin(*name, args.a),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
            load_system(&text)
        }
        _ => Err(Error::InvalidInput("give exactly one of --system and --config".into())),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b { "true" } else { "false" }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |v| v.to_string())
}

/// Which exit formula applies left of `x*`.
fn route_label(analysis: &PolarAnalysis) -> &'static str {
    match analysis.lambda() {
        Err(_) => "degenerate",
        Ok(l) if (l - 1.0).abs() > LAMBDA_TOL => "trans",
        Ok(_) => match (analysis.s0_invariant, analysis.z0_invariant) {
            (true, false) => "invar",
            (false, true) => "trans",
            (true, true) => "ambiguous",
            (false, false) => "uncovered",
        },
    }
}

fn route_text(out: &mut String, label: &str, route: &CollisionRoute) {
    let c = route.coeffs;
    let _ = writeln!(out, "{label}.theta*={}", route.theta_star);
    let _ = writeln!(out, "{label}.alpha={}", c.alpha);
    let _ = writeln!(out, "{label}.beta={}", c.beta);
    let _ = writeln!(out, "{label}.gamma={}", c.gamma);
    let _ = writeln!(out, "{label}.delta_c={}", c.coef_delta);
    let _ = writeln!(out, "{label}.lambda={}", opt(route.lambda));
    for check in &route.corollary_report.checks {
        let verdict = if check.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{label}.corollary.{}={verdict} ({:e})", check.condition, check.value);
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<Report> {
    let sys = build_system(&args.system)?;
    let a = PolarAnalysis::from_system(&sys)?;
    let p = a.profile();
    let mut text = String::new();
    let _ = writeln!(text, "system={}", sys.name());
    let _ = writeln!(text, "x*={}", a.x_star);
    let _ = writeln!(text, "xi*={}", p.xi_star);
    let _ = writeln!(text, "x+={}", opt(p.x_plus));
    let _ = writeln!(text, "x-={}", opt(p.x_minus));
    let _ = writeln!(text, "geometric_multiplicity={}", a.geometric_multiplicity);
    let _ = writeln!(text, "lambda={}", opt(a.primary.lambda));
    route_text(&mut text, "primary", &a.primary);
    if let Some(alt) = &a.alternate {
        route_text(&mut text, "alternate", alt);
    }
    let _ = writeln!(text, "S0 invariant={} (residual {:e})", yes_no(a.s0_invariant), a.s0_residual);
    let _ = writeln!(text, "Z0 invariant={} (residual {:e})", yes_no(a.z0_invariant), a.z0_residual);
    let case = route_label(&a);
    let _ = writeln!(text, "case={case}");

    let c = a.primary.coeffs;
    let mut rows: Vec<(String, String)> = vec![
        ("x_star".into(), fmt_num(a.x_star)),
        ("theta_star".into(), fmt_num(a.primary.theta_star)),
        ("alpha".into(), fmt_num(c.alpha)),
        ("beta".into(), fmt_num(c.beta)),
        ("gamma".into(), fmt_num(c.gamma)),
        ("delta_c".into(), fmt_num(c.coef_delta)),
        ("lambda".into(), a.primary.lambda.map(fmt_num).unwrap_or_default()),
        ("geometric_multiplicity".into(), a.geometric_multiplicity.to_string()),
        ("s0_invariant".into(), yes_no(a.s0_invariant).into()),
        ("z0_invariant".into(), yes_no(a.z0_invariant).into()),
        ("case".into(), case.into()),
    ];
    for check in &a.primary.corollary_report.checks {
        rows.push((format!("corollary.{}", check.condition), yes_no(check.pass).into()));
    }
    Ok(Report {
        text,
        rows: rows.into_iter().map(|(k, v)| vec![k, v]).collect(),
        meta: serde_json::to_value(&a)?,
    })
}

fn prediction_row(p: &ExitPrediction) -> Vec<String> {
    vec![
        fmt_num(p.x0),
        p.case.to_string(),
        p.x_tilde.map(fmt_num).unwrap_or_default(),
        fmt_num(p.x1),
        if p.lambda_used.is_nan() { String::new() } else { fmt_num(p.lambda_used) },
        yes_no(p.invariance_flags.s0).into(),
        yes_no(p.invariance_flags.z0).into(),
        fmt_num(p.x_star),
        p.assumption_failures.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
    ]
}

fn predict(args: &PredictArgs) -> Result<Report> {
    let sys = build_system(&args.system)?;
    let analysis = PolarAnalysis::from_system(&sys)?;
    let p = predict_exit_with(&analysis, args.x0)?;
    let mut text = String::new();
    let _ = writeln!(text, "system={}", sys.name());
    let _ = writeln!(text, "x0={}", p.x0);
    let _ = writeln!(text, "case={}", p.case);
    if let Some(xt) = p.x_tilde {
        let _ = writeln!(text, "x_tilde={xt}");
    }
    let _ = writeln!(text, "x1={}", p.x1);
    let _ = writeln!(text, "x*={}", p.x_star);
    let _ = writeln!(text, "lambda={}", p.lambda_used);
    let _ = writeln!(text, "S0 invariant={}", yes_no(p.invariance_flags.s0));
    let _ = writeln!(text, "Z0 invariant={}", yes_no(p.invariance_flags.z0));
    if !p.assumption_failures.is_empty() {
        let _ = writeln!(text, "assumption failures={:?}", p.assumption_failures);
    }
    Ok(Report { text, rows: vec![prediction_row(&p)], meta: serde_json::to_value(&p)? })
}

fn simulate(args: &SimulateArgs) -> Result<Report> {
    let tol = args.tol.tolerances()?;
    positive("eps", args.eps)?;
    let sys = build_system(&args.system)?;
    let [z1, z2] = args.init.0;
    let init = [args.x0, z1, z2];
    let mut text = String::new();
    let _ = writeln!(text, "system={}", sys.name());
    let (trace, meta) = if let Some(x_stop) = args.x_stop {
        let trace = integrate_full(&sys, init, args.eps, x_stop, tol)?;
        let last = trace.last();
        let _ = writeln!(text, "x={} z1={:e} z2={:e}", last.x, last.z1, last.z2);
        let stop = serde_json::to_value(trace.stop_reason)?;
        let _ = writeln!(text, "stop={}", stop.as_str().unwrap_or_default());
        (trace, json!({ "stop_reason": stop }))
    } else {
        let delta = args.delta.resolve(args.init.0);
        let d = detect_exit(&sys, init, args.eps, delta, tol)?;
        let _ = writeln!(text, "delta={delta}");
        let _ = writeln!(text, "entry.x={}{}", d.entry.x_event, if d.entry.synthesized { " (start)" } else { "" });
        let _ = writeln!(text, "exit.x={}", d.exit.x_event);
        let meta = json!({ "delta": delta, "entry": d.entry, "exit": d.exit });
        (d.trace, meta)
    };
    let _ = writeln!(text, "steps accepted={} rejected={}", trace.accepted, trace.rejected);
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok(Report { text, rows, meta })
}

fn sweep_cmd(args: &SweepArgs) -> Result<Report> {
    let tol = args.tol.tolerances()?;
    let sys = build_system(&args.system)?;
    let config = SimConfig {
        init_fast: args.init.0,
        cylinder_radius: args.delta,
        rtol: tol.rtol,
        atol: tol.atol,
    };
    let mut text = String::new();
    let _ = writeln!(text, "system={}", sys.name());
    if let Some(list) = &args.eps_list {
        let x0 = args.x0.ok_or_else(|| Error::InvalidInput("--eps-list needs --x0".into()))?;
        let family = eps_family(&sys, x0, list, config)?;
        family_text(&mut text, &FigureData::Family(family.clone()));
        return Ok(Report { text, rows: family.csv_rows(), meta: serde_json::to_value(&family)? });
    }
    positive("eps", args.eps)?;
    let grid = interior_grid(args.grid.lo, args.grid.hi, args.grid.n);
    let result = sweep(&sys, &grid, args.eps, config)?;
    family_text(&mut text, &FigureData::Sweep(result.clone()));
    let meta = json!({ "max_abs_err": result.max_abs_error(), "failed_rows": result.failed_rows() });
    Ok(Report { text, rows: result.csv_rows(), meta })
}

fn family_text(text: &mut String, data: &FigureData) {
    match data {
        FigureData::Sweep(s) => {
            for r in &s.rows {
                let case = r.case.map_or("-".to_string(), |c| c.to_string());
                let _ = writeln!(
                    text,
                    "x0={:.6} case={case} x1_pred={} x1_sim={} abs_err={}{}",
                    r.x0,
                    opt(r.x1_pred),
                    opt(r.x1_sim),
                    opt(r.abs_err),
                    r.error.as_ref().map(|e| format!(" error=\"{e}\"")).unwrap_or_default()
                );
            }
            let _ = writeln!(text, "max_abs_err={}", opt(s.max_abs_error()));
        }
        FigureData::Family(f) => {
            for r in &f.rows {
                let _ = writeln!(
                    text,
                    "eps={} x1_sim={}{}",
                    r.eps,
                    opt(r.x1_sim),
                    r.error.as_ref().map(|e| format!(" error=\"{e}\"")).unwrap_or_default()
                );
            }
        }
    }
}

fn figure(args: &FigureArgs) -> Result<Report> {
    let tol = args.tol.tolerances()?;
    let setup = figure_setup(args.figure, tol);
    let data = run_figure(&setup)?;
    let mut text = String::new();
    let _ = writeln!(text, "figure={:?} system={}", args.figure, setup.system);
    family_text(&mut text, &data);
    Ok(Report { text, rows: data.csv_rows(), meta: json!({ "setup": setup }) })
}

fn check(args: &CheckArgs) -> Result<Report> {
    let sys = build_system(&args.system)?;
    let report = assumption_report(&sys, args.x0)?;
    let mut text = String::new();
    let _ = writeln!(text, "system={}", sys.name());
    let _ = writeln!(text, "x0={}", args.x0);
    let mut rows = Vec::new();
    for item in &report.items {
        let verdict = if item.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(text, "item {}: {verdict} {}", item.item, item.detail);
        rows.push(vec![
            item.item.to_string(),
            yes_no(item.pass).into(),
            item.detail.clone(),
            item.witnesses.iter().map(|w| fmt_num(*w)).collect::<Vec<_>>().join(" "),
        ]);
    }
    let failed = report.failed();
    if failed.is_empty() {
        let _ = writeln!(text, "verdict=PASS");
    } else {
        let _ = writeln!(text, "verdict=FAIL {failed:?}");
    }
    Ok(Report { text, rows, meta: serde_json::to_value(&report)? })
}

fn execute(command: &Command) -> Result<Report> {
    match command {
        Command::Analyze(a) => analyze(a),
        Command::Predict(a) => predict(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Figure(a) => figure(a),
        Command::Check(a) => check(a),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on domain errors, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let command = &cli.command;
    let args = serde_json::to_value(command).unwrap_or(Value::Null);
    match execute(command) {
        Ok(report) => {
            print!("{}", report.text);
            if let Some(out) = command.out() {
                let meta = json!({ "args": args, "result": report.meta });
                if let Err(e) = write_output(out, command.header(), &report.rows, meta) {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(out) = command.out() {
                let meta = json!({ "args": args, "error": e.to_string() });
                if let Err(w) = write_output(out, command.header(), &[], meta) {
                    eprintln!("error: {w}");
                }
            }
            if e.is_domain_error() { EXIT_DOMAIN } else { EXIT_USAGE }
        }
    }
}
