use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{build_space, FeSpace};
use crate::fom::NewtonConfig;
use crate::problem::{allen_cahn, buckley_leverett, ProblemDef, TimeGrid};
use crate::snapshots::uniform_sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Analytic 1D logistic profile with `g = exp`, interpolation study only.
    Testcase1d,
    BuckleyLeverett,
    AllenCahn,
}

impl CaseKind {
    pub fn name(self) -> &'static str {
        match self {
            CaseKind::Testcase1d => "testcase1d",
            CaseKind::BuckleyLeverett => "buckley_leverett",
            CaseKind::AllenCahn => "allen_cahn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Cells per axis (one entry in 1D).
    pub cells: Vec<usize>,
    #[serde(default = "default_degree")]
    pub degree: usize,
}

fn default_degree() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub final_time: f64,
    pub steps: usize,
}

/// How many interpolation points each nonlinear term gets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MRule {
    /// The same list for every `N`.
    Absolute { values: Vec<usize> },
    /// `M = factor · N` for every factor.
    Multiple { factors: Vec<usize> },
}

impl MRule {
    pub fn values(&self, n: usize) -> Vec<usize> {
        match self {
            MRule::Absolute { values } => values.clone(),
            MRule::Multiple { factors } => factors.iter().map(|f| f * n).collect(),
        }
    }

    /// Label of the rule entry that produced `m` at `n`, e.g. `2N` or `40`.
    pub fn label(&self, n: usize, m: usize) -> String {
        match self {
            MRule::Absolute { .. } => m.to_string(),
            MRule::Multiple { .. } if n > 0 && m.is_multiple_of(n) => format!("{}N", m / n),
            MRule::Multiple { .. } => m.to_string(),
        }
    }
}

/// Field dumps of one lifted FOEIM-GN trajectory, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpConfig {
    pub parameter: f64,
    pub steps: Vec<usize>,
    pub n: usize,
    pub m: usize,
    pub l: usize,
}

/// Everything a run needs. Serialized as JSON or TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: CaseKind,
    pub mesh: MeshConfig,
    pub grid: GridConfig,
    /// Training sample `S_J`.
    pub training: Vec<f64>,
    /// Size of the inclusive uniform test sample over the parameter domain.
    pub test_count: usize,
    /// Reduced dimensions (ignored by the 1D study).
    #[serde(default)]
    pub n_list: Vec<usize>,
    pub m_rule: MRule,
    pub l_list: Vec<usize>,
    /// Reserve points for the interpolation error estimate.
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub newton: NewtonConfig,
    /// Allen-Cahn interface width.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Allen-Cahn reaction scaling `1/ε^r`.
    #[serde(default = "default_exponent")]
    pub reaction_exponent: i32,
    /// Also solve with the full-quadrature reference.
    #[serde(default = "default_true")]
    pub reference: bool,
    /// Online solves per test parameter; the median wall time is kept.
    #[serde(default = "default_repeats")]
    pub timing_repeats: usize,
    #[serde(default)]
    pub dump: Option<DumpConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Reserved; the pipeline has no randomness.
    #[serde(default)]
    pub seed: u64,
}

fn default_epsilon() -> f64 {
    0.015
}

fn default_exponent() -> i32 {
    2
}

fn default_true() -> bool {
    true
}

fn default_repeats() -> usize {
    3
}

impl ExperimentConfig {
    /// Reads JSON (`.json`) or TOML (anything else).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parameter_domain(&self) -> (f64, f64) {
        match self.case {
            CaseKind::Testcase1d => (0.0, 10.0),
            CaseKind::BuckleyLeverett => (0.03, 0.1),
            CaseKind::AllenCahn => (0.25, 0.35),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let (a, b) = self.parameter_domain();
        if self.training.is_empty() {
            return bad("empty training sample".into());
        }
        if let Some(mu) = self.training.iter().find(|&&m| !(m >= a && m <= b)) {
            return bad(format!("training parameter {mu} outside [{a}, {b}]"));
        }
        if self.test_count == 0 {
            return bad("test_count must be at least 1".into());
        }
        if self.l_list.is_empty() || self.l_list.iter().any(|&l| l == 0 || l > self.training.len()) {
            return bad(format!("every L must lie in [1, {}]", self.training.len()));
        }
        if self.grid.steps == 0 || !(self.grid.final_time > 0.0) {
            return bad("grid needs T > 0 and I >= 1".into());
        }
        if self.timing_repeats == 0 {
            return bad("timing_repeats must be at least 1".into());
        }
        let expected_dim = if self.case == CaseKind::Testcase1d { 1 } else { 2 };
        if self.mesh.cells.len() != expected_dim || self.mesh.cells.contains(&0) {
            return bad(format!("{} needs {expected_dim} positive cell counts", self.case.name()));
        }
        match self.case {
            CaseKind::Testcase1d => {
                if self.m_values(0).is_empty() {
                    return bad("empty M list".into());
                }
                if self.p == 0 {
                    return bad("the interpolation study needs P >= 1".into());
                }
            }
            _ => {
                if self.n_list.is_empty() || self.n_list.contains(&0) {
                    return bad("N list must be nonempty and positive".into());
                }
                if self.n_list.iter().any(|&n| self.m_values(n).is_empty()) {
                    return bad("empty M list".into());
                }
            }
        }
        let m_zero = match self.case {
            CaseKind::Testcase1d => self.m_values(0).contains(&0),
            _ => self.n_list.iter().any(|&n| self.m_values(n).contains(&0)),
        };
        if m_zero {
            return bad("M must be at least 1 for every nonlinear term".into());
        }
        if let Some(d) = &self.dump {
            if d.steps.iter().any(|&i| i > self.grid.steps) {
                return bad(format!("dump steps must not exceed I = {}", self.grid.steps));
            }
            if !(d.parameter >= a && d.parameter <= b) {
                return bad(format!("dump parameter {} outside [{a}, {b}]", d.parameter));
            }
            if !self.n_list.contains(&d.n) || !self.m_values(d.n).contains(&d.m) || !self.l_list.contains(&d.l) {
                return bad(format!("dump model N = {}, M = {}, L = {} is not part of the run", d.n, d.m, d.l));
            }
        }
        Ok(())
    }

    pub fn m_values(&self, n: usize) -> Vec<usize> {
        self.m_rule.values(n)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.final_time, self.grid.steps)
    }

    pub fn test_sample(&self) -> Vec<f64> {
        let (a, b) = self.parameter_domain();
        uniform_sample(a, b, self.test_count)
    }

    /// Problem definition of a finite element case.
    pub fn problem(&self) -> Result<ProblemDef> {
        match self.case {
            CaseKind::Testcase1d => Err(Error::Config("the 1D test case has no finite element problem".into())),
            CaseKind::BuckleyLeverett => Ok(buckley_leverett()),
            CaseKind::AllenCahn => Ok(allen_cahn(self.epsilon, self.reaction_exponent)),
        }
    }

    pub fn space(&self, problem: &ProblemDef) -> Result<FeSpace> {
        build_space(&problem.domain, &self.mesh.cells, self.mesh.degree, problem.bc)
    }
}
