//! Prediction-versus-simulation tables: sweeps over entry points, families
//! over `eps`, and the canned figure configurations.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use serde_json::json;

use crate::entry_exit::{predict_exit_with, ExitCase};
use crate::error::{Error, Result};
use crate::numeric::interior_grid;
use crate::odeint::{detect_exit, fmt_num, Tolerances, DEFAULT_CYLINDER_RADIUS};
use crate::polar::PolarAnalysis;
use crate::system::{make_builtin, BuiltinName, FastSlowSystem};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_GRID: (f64, f64, usize) = (-2.0, -0.25, 36);
pub const FIG8_EPS: [f64; 4] = [0.05, 0.02, 0.01, 0.005];

/// Radius of the cylinder whose crossings define entry and exit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CylinderRadius {
    Fixed(f64),
    /// The initial distance `|(z1, z2)|` from the manifold, so the trajectory
    /// starts on the cylinder.
    InitialRadius,
}

impl Default for CylinderRadius {
    fn default() -> Self {
        CylinderRadius::Fixed(DEFAULT_CYLINDER_RADIUS)
    }
}

impl CylinderRadius {
    pub fn resolve(&self, init_fast: [f64; 2]) -> f64 {
        match *self {
            CylinderRadius::Fixed(d) => d,
            CylinderRadius::InitialRadius => init_fast[0].hypot(init_fast[1]),
        }
    }
}

impl fmt::Display for CylinderRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CylinderRadius::Fixed(d) => write!(f, "{d}"),
            CylinderRadius::InitialRadius => f.write_str("init"),
        }
    }
}

impl FromStr for CylinderRadius {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "init" {
            return Ok(CylinderRadius::InitialRadius);
        }
        match s.parse::<f64>() {
            Ok(d) if d > 0.0 && d.is_finite() => Ok(CylinderRadius::Fixed(d)),
            _ => Err(Error::InvalidInput(format!("cylinder radius must be a positive number or `init`, got `{s}`"))),
        }
    }
}

impl Serialize for CylinderRadius {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CylinderRadius::Fixed(d) => s.serialize_f64(*d),
            CylinderRadius::InitialRadius => s.serialize_str("init"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub init_fast: [f64; 2],
    pub cylinder_radius: CylinderRadius,
    pub rtol: f64,
    pub atol: f64,
}

impl SimConfig {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances { rtol: self.rtol, atol: self.atol }
    }

    fn exit_x(&self, sys: &FastSlowSystem, x0: f64, eps: f64) -> Result<f64> {
        let [z1, z2] = self.init_fast;
        let delta = self.cylinder_radius.resolve(self.init_fast);
        Ok(detect_exit(sys, [x0, z1, z2], eps, delta, self.tolerances())?.exit.x_event)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub x0: f64,
    pub case: Option<ExitCase>,
    pub x_tilde: Option<f64>,
    pub x1_pred: Option<f64>,
    pub x1_sim: Option<f64>,
    pub abs_err: Option<f64>,
    /// Prediction fell outside the theorem (`lambda = 1`, no invariant branch).
    pub uncovered: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub system: String,
    pub eps: f64,
    pub config: SimConfig,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: [&str; 7] = ["x0", "x1_pred", "x1_sim", "abs_err", "case", "x_tilde", "error"];
pub const FAMILY_HEADER: [&str; 3] = ["eps", "x1_sim", "error"];

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

impl SweepResult {
    /// Largest `|x1_sim - x1_pred|` over rows where both exist.
    pub fn max_abs_error(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.abs_err).reduce(f64::max)
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.abs_err.is_none()).count()
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    fmt_num(r.x0),
                    opt_num(r.x1_pred),
                    opt_num(r.x1_sim),
                    opt_num(r.abs_err),
                    r.case.map(|c| c.to_string()).unwrap_or_default(),
                    opt_num(r.x_tilde),
                    r.error.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }
}

/// Predicts and simulates the exit for every `x0` in `grid`. Rows are
/// computed in parallel and returned sorted by `x0`; failures are recorded
/// per row.
pub fn sweep(sys: &FastSlowSystem, grid: &[f64], eps: f64, config: SimConfig) -> Result<SweepResult> {
    let dom = sys.domain();
    if let Some(x) = grid.iter().find(|x| !dom.contains(**x)) {
        return Err(Error::InvalidInput(format!("grid point {x} lies outside [{}, {}]", dom.lo, dom.hi)));
    }
    config.tolerances().validate()?;
    let analysis = PolarAnalysis::from_system(sys);
    let mut rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&x0| {
            let mut row = SweepRow {
                x0,
                case: None,
                x_tilde: None,
                x1_pred: None,
                x1_sim: None,
                abs_err: None,
                uncovered: false,
                error: None,
            };
            let mut errors = Vec::new();
            match analysis.as_ref().map_err(|e| e.to_string()) {
                Ok(a) => match predict_exit_with(a, x0) {
                    Ok(p) => {
                        row.case = Some(p.case);
                        row.x_tilde = p.x_tilde;
                        row.x1_pred = Some(p.x1);
                    }
                    Err(e) => {
                        row.uncovered = matches!(e, Error::UncoveredCase { .. });
                        errors.push(format!("prediction: {e}"));
                    }
                },
                Err(e) => errors.push(format!("prediction: {e}")),
            }
            match config.exit_x(sys, x0, eps) {
                Ok(x1) => row.x1_sim = Some(x1),
                Err(e) => errors.push(format!("simulation: {e}")),
            }
            if let (Some(p), Some(s)) = (row.x1_pred, row.x1_sim) {
                row.abs_err = Some((s - p).abs());
            }
            if !errors.is_empty() {
                row.error = Some(errors.join("; "));
            }
            row
        })
        .collect();
    rows.sort_by(|a, b| a.x0.total_cmp(&b.x0));
    Ok(SweepResult { system: sys.name().to_string(), eps, config, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyRow {
    pub eps: f64,
    pub x1_sim: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsFamily {
    pub system: String,
    pub x0: f64,
    pub config: SimConfig,
    pub rows: Vec<FamilyRow>,
}

impl EpsFamily {
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| vec![fmt_num(r.eps), opt_num(r.x1_sim), r.error.clone().unwrap_or_default()])
            .collect()
    }

    pub fn x1(&self, eps: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.eps == eps).and_then(|r| r.x1_sim)
    }
}

/// Simulated exit point for each `eps` (positive, strictly decreasing).
pub fn eps_family(sys: &FastSlowSystem, x0: f64, eps_list: &[f64], config: SimConfig) -> Result<EpsFamily> {
    let ok = !eps_list.is_empty()
        && eps_list.iter().all(|e| *e > 0.0 && e.is_finite())
        && eps_list.windows(2).all(|w| w[0] > w[1]);
    if !ok {
        return Err(Error::InvalidInput("eps list must be positive and strictly decreasing".into()));
    }
    config.tolerances().validate()?;
    let rows = eps_list
        .par_iter()
        .map(|&eps| match config.exit_x(sys, x0, eps) {
            Ok(x1) => FamilyRow { eps, x1_sim: Some(x1), error: None },
            Err(e) => FamilyRow { eps, x1_sim: None, error: Some(e.to_string()) },
        })
        .collect();
    Ok(EpsFamily { system: sys.name().to_string(), x0, config, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig7,
    Fig8,
    Fig9,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig7" => Ok(Figure::Fig7),
            "fig8" => Ok(Figure::Fig8),
            "fig9" => Ok(Figure::Fig9),
            _ => Err(Error::InvalidInput(format!("unknown figure `{s}` (expected fig7, fig8 or fig9)"))),
        }
    }
}

/// Canned configuration of one figure.
#[derive(Debug, Clone, Serialize)]
pub struct FigureSetup {
    pub figure: Figure,
    pub system: BuiltinName,
    pub a: Option<f64>,
    pub eps: Vec<f64>,
    pub grid: Vec<f64>,
    pub config: SimConfig,
}

pub fn default_grid() -> Vec<f64> {
    interior_grid(DEFAULT_GRID.0, DEFAULT_GRID.1, DEFAULT_GRID.2)
}

/// Figure setups. The cylinder is the one through the initial condition.
pub fn figure_setup(figure: Figure, tol: Tolerances) -> FigureSetup {
    let config = |z: [f64; 2]| SimConfig {
        init_fast: z,
        cylinder_radius: CylinderRadius::InitialRadius,
        rtol: tol.rtol,
        atol: tol.atol,
    };
    match figure {
        Figure::Fig7 => FigureSetup {
            figure,
            system: BuiltinName::EpsCoupled,
            a: None,
            eps: vec![0.01],
            grid: default_grid(),
            config: config([1.0, 1.0]),
        },
        Figure::Fig8 => FigureSetup {
            figure,
            system: BuiltinName::EpsCoupled,
            a: None,
            eps: FIG8_EPS.to_vec(),
            grid: vec![-2.0],
            config: config([1.0, 1.0]),
        },
        Figure::Fig9 => FigureSetup {
            figure,
            system: BuiltinName::Nonlinear,
            a: Some(4.0),
            eps: vec![0.01],
            grid: default_grid(),
            config: config([0.5, 0.5]),
        },
    }
}

#[derive(Debug, Clone)]
pub enum FigureData {
    Sweep(SweepResult),
    Family(EpsFamily),
}

impl FigureData {
    pub fn header(&self) -> &'static [&'static str] {
        match self {
            FigureData::Sweep(_) => &SWEEP_HEADER,
            FigureData::Family(_) => &FAMILY_HEADER,
        }
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        match self {
            FigureData::Sweep(s) => s.csv_rows(),
            FigureData::Family(f) => f.csv_rows(),
        }
    }
}

pub fn run_figure(setup: &FigureSetup) -> Result<FigureData> {
    let sys = make_builtin(setup.system, setup.a)?;
    Ok(match setup.figure {
        Figure::Fig8 => FigureData::Family(eps_family(&sys, setup.grid[0], &setup.eps, setup.config)?),
        _ => FigureData::Sweep(sweep(&sys, &setup.grid, setup.eps[0], setup.config)?),
    })
}

/// Runs a figure configuration and writes its CSV and metadata sidecar.
pub fn reproduce_figure(figure: Figure, out: &Path, tol: Tolerances) -> Result<FigureData> {
    let setup = figure_setup(figure, tol);
    let data = run_figure(&setup)?;
    let meta = json!({ "command": "figure", "setup": setup, "rows": data.csv_rows().len() });
    write_output(out, data.header(), &data.csv_rows(), meta)?;
    Ok(data)
}

/// Path of the metadata sidecar written next to `out`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `out` (CSV) and its sidecar, each via a temporary file and rename.
/// The sidecar always carries the library version.
pub fn write_output(out: &Path, header: &[&str], rows: &[Vec<String>], meta: serde_json::Value) -> Result<()> {
    let mut meta = meta;
    if let serde_json::Value::Object(m) = &mut meta {
        m.insert("version".into(), json!(VERSION));
    }
    write_atomic(out, &csv_bytes(header, rows)?)?;
    write_atomic(&sidecar_path(out), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(z: [f64; 2]) -> SimConfig {
        SimConfig { init_fast: z, cylinder_radius: CylinderRadius::default(), rtol: 1e-9, atol: 1e-12 }
    }

    #[test]
    fn radius_parsing() {
        assert_eq!("init".parse::<CylinderRadius>().unwrap(), CylinderRadius::InitialRadius);
        assert_eq!("0.25".parse::<CylinderRadius>().unwrap(), CylinderRadius::Fixed(0.25));
        assert!("-1".parse::<CylinderRadius>().is_err());
        assert!((CylinderRadius::InitialRadius.resolve([1.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn one_way_prediction_is_eps_independent() {
        let sys = make_builtin(BuiltinName::OneWayCoupled, None).unwrap();
        for eps in [0.05, 0.02] {
            let s = sweep(&sys, &[-2.0], eps, config([1.0, 1.0])).unwrap();
            assert!((s.rows[0].x1_pred.unwrap() - 2.0).abs() < 1e-10);
            assert!(s.rows[0].abs_err.unwrap() < 0.2);
        }
    }

    #[test]
    fn rows_sorted_and_flagged() {
        let sys = make_builtin(BuiltinName::EpsCoupled, None).unwrap();
        let s = sweep(&sys, &[-0.5, -2.0, 0.5], 0.05, config([1.0, 1.0])).unwrap();
        let xs: Vec<f64> = s.rows.iter().map(|r| r.x0).collect();
        assert_eq!(xs, vec![-2.0, -0.5, 0.5]);
        assert!(s.rows[2].error.is_some());
        assert!(s.rows[0].error.is_none());
    }

    #[test]
    fn family_rejects_unsorted() {
        let sys = make_builtin(BuiltinName::EpsCoupled, None).unwrap();
        assert!(eps_family(&sys, -2.0, &[0.01, 0.02], config([1.0, 1.0])).is_err());
    }

    #[test]
    fn output_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("t.csv");
        write_output(&out, &["a", "b"], &[vec!["1".into(), "".into()]], json!({"k": 1})).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "a,b\n1,\n");
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(sidecar_path(&out)).unwrap()).unwrap();
        assert_eq!(meta["version"], VERSION);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
