use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foeim::StudyRow;
use crate::store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Galerkin projection with full quadrature for the nonlinear terms.
    Gn,
    /// Galerkin projection with interpolated nonlinear terms.
    FoeimGn,
}

/// One reduced model evaluated over the test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomRow {
    pub method: Method,
    pub n: usize,
    /// Interpolation points per nonlinear term (FOEIM-GN only).
    pub m: Option<usize>,
    /// The M rule entry, e.g. `2N`.
    pub m_label: Option<String>,
    pub l: Option<usize>,
    /// `ε̄^u`: test mean of the time-averaged mass-norm field error.
    pub field_error: f64,
    /// `ε̄^s`: test mean of the time-averaged output error.
    pub output_error: f64,
    pub max_field_error: f64,
    pub newton_iterations: f64,
    /// Seconds spent building this model, snapshots included.
    pub offline_time: f64,
    /// Seconds of reduced time stepping summed over the test sample (median
    /// of the timing repeats per parameter).
    pub online_time: f64,
    /// Full-order time over the same sweep divided by `online_time`.
    pub speedup: f64,
}

/// Column order of `rom.csv`.
pub const ROM_COLUMNS: [&str; 12] = [
    "method",
    "n",
    "m",
    "m_label",
    "l",
    "field_error",
    "output_error",
    "max_field_error",
    "newton_iterations",
    "offline_time",
    "online_time",
    "speedup",
];

/// Column order of `study.csv`.
pub const STUDY_COLUMNS: [&str; 11] = [
    "j",
    "m",
    "l",
    "p",
    "mean_error",
    "mean_estimate",
    "mean_effectivity",
    "min_effectivity",
    "max_effectivity",
    "bound_fraction",
    "condition",
];

/// Column order of the long-format `curves.csv`.
pub const CURVE_COLUMNS: [&str; 6] = ["method", "m_label", "l", "n", "metric", "value"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub version: String,
}

impl MachineInfo {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub case: String,
    /// Free finite element unknowns `𝒩` (quadrature points for the 1D study).
    pub dofs: usize,
    pub quadrature_points: usize,
    pub steps: usize,
    pub final_time: f64,
    pub training: Vec<f64>,
    pub test: Vec<f64>,
    /// Numerical rank of the training snapshots.
    pub pod_rank: Option<usize>,
    /// Full-order wall time over the test sample.
    pub fom_time: Option<f64>,
    pub fom_newton_iterations: Option<f64>,
    pub rom: Vec<RomRow>,
    pub study: Vec<StudyRow>,
    /// Wall seconds per pipeline stage.
    pub stage_times: BTreeMap<String, f64>,
    pub machine: MachineInfo,
}

impl BenchReport {
    pub fn new(case: &str) -> Self {
        Self {
            case: case.into(),
            dofs: 0,
            quadrature_points: 0,
            steps: 0,
            final_time: 0.0,
            training: Vec::new(),
            test: Vec::new(),
            pod_rank: None,
            fom_time: None,
            fom_newton_iterations: None,
            rom: Vec::new(),
            study: Vec::new(),
            stage_times: BTreeMap::new(),
            machine: MachineInfo::current(),
        }
    }

    pub fn row(&self, method: Method, n: usize, m: Option<usize>, l: Option<usize>) -> Option<&RomRow> {
        self.rom
            .iter()
            .find(|r| r.method == method && r.n == n && r.m == m && r.l == l)
    }

    /// Rejects non-finite numbers and nonpositive speedups.
    pub fn validate(&self) -> Result<()> {
        for r in &self.rom {
            let values = [
                r.field_error,
                r.output_error,
                r.max_field_error,
                r.newton_iterations,
                r.offline_time,
                r.online_time,
                r.speedup,
            ];
            if values.iter().any(|v| !v.is_finite()) || !(r.speedup > 0.0) {
                return Err(Error::Config(format!(
                    "report row {:?} N = {} M = {:?} L = {:?} has non-finite or nonpositive entries",
                    r.method, r.n, r.m, r.l
                )));
            }
        }
        for r in &self.study {
            if ![r.mean_error, r.mean_estimate, r.mean_effectivity].iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!(
                    "study row J = {} M = {} L = {} is not finite",
                    r.j, r.m, r.l
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    /// `rom.csv` and `study.csv`, one row per configuration.
    Csv,
    /// `report.json`, the whole report.
    Json,
    /// `curves.csv`, error against `N` in long format.
    Long,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Gn => "gn",
        Method::FoeimGn => "foeim_gn",
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn csv_bytes<'a>(header: &[&str], rows: impl Iterator<Item = Vec<String>> + 'a) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn rom_csv(report: &BenchReport) -> Result<Vec<u8>> {
    csv_bytes(
        &ROM_COLUMNS,
        report.rom.iter().map(|r| {
            vec![
                method_name(r.method).to_string(),
                r.n.to_string(),
                opt(&r.m),
                opt(&r.m_label),
                opt(&r.l),
                num(r.field_error),
                num(r.output_error),
                num(r.max_field_error),
                num(r.newton_iterations),
                num(r.offline_time),
                num(r.online_time),
                num(r.speedup),
            ]
        }),
    )
}

fn study_csv(report: &BenchReport) -> Result<Vec<u8>> {
    csv_bytes(
        &STUDY_COLUMNS,
        report.study.iter().map(|r| {
            vec![
                r.j.to_string(),
                r.m.to_string(),
                r.l.to_string(),
                r.p.to_string(),
                num(r.mean_error),
                num(r.mean_estimate),
                num(r.mean_effectivity),
                num(r.min_effectivity),
                num(r.max_effectivity),
                num(r.bound_fraction),
                num(r.condition),
            ]
        }),
    )
}

fn curves_csv(report: &BenchReport) -> Result<Vec<u8>> {
    let mut rows: Vec<&RomRow> = report.rom.iter().collect();
    rows.sort_by(|a, b| (a.method, &a.m_label, a.l, a.n).cmp(&(b.method, &b.m_label, b.l, b.n)));
    csv_bytes(
        &CURVE_COLUMNS,
        rows.into_iter().flat_map(|r| {
            [("field_error", r.field_error), ("output_error", r.output_error)]
                .into_iter()
                .map(move |(metric, v)| {
                    vec![
                        method_name(r.method).to_string(),
                        opt(&r.m_label),
                        opt(&r.l),
                        r.n.to_string(),
                        metric.to_string(),
                        num(v),
                    ]
                })
        }),
    )
}

/// Writes the requested tables into `dir` and returns their paths.
pub fn emit_tables(report: &BenchReport, dir: &Path, formats: &[TableFormat]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        store::atomic_write(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    for f in formats {
        match f {
            TableFormat::Csv => {
                put("rom.csv", rom_csv(report)?)?;
                put("study.csv", study_csv(report)?)?;
            }
            TableFormat::Json => put("report.json", serde_json::to_vec_pretty(report)?)?,
            TableFormat::Long => put("curves.csv", curves_csv(report)?)?,
        }
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<BenchReport> {
    store::read_json(path)
}
