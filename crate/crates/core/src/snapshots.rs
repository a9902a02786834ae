//! Snapshot sets, their inner products and persistence, and the analytic
//! one-dimensional provider used to study interpolation in isolation.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{build_space, BcKind, FeSpace};
use crate::linalg::CsrMatrix;
use crate::nonlinear::Nonlinearity;
use crate::problem::TimeGrid;
use crate::store;

/// What the entries of a snapshot vector are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Finite element coefficients over the free dofs.
    FeCoefficients,
    /// Field values at the quadrature points of a space.
    QuadratureValues,
}

/// Inner product used to compare snapshots.
#[derive(Debug, Clone)]
pub enum InnerProduct {
    /// `xᵀ M y` with a finite element mass matrix.
    Mass(CsrMatrix),
    /// `Σ w_q x_q y_q` with positive weights.
    Weights(DVector<f64>),
    Euclidean,
}

impl InnerProduct {
    /// `W x`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            InnerProduct::Mass(m) => m.mul_vec(x),
            InnerProduct::Weights(w) => x.component_mul(w),
            InnerProduct::Euclidean => x.clone(),
        }
    }

    pub fn dot(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match self {
            InnerProduct::Mass(m) => m.mul_vec(x).dot(y),
            InnerProduct::Weights(w) => x.iter().zip(w.iter()).zip(y.iter()).map(|((a, w), b)| a * w * b).sum(),
            InnerProduct::Euclidean => x.dot(y),
        }
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.dot(x, x).max(0.0).sqrt()
    }

    /// Vector length this inner product accepts, if fixed.
    pub fn len(&self) -> Option<usize> {
        match self {
            InnerProduct::Mass(m) => Some(m.nrows()),
            InnerProduct::Weights(w) => Some(w.len()),
            InnerProduct::Euclidean => None,
        }
    }
}

/// Time index `i` and parameter index `j` of a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SnapshotTag {
    pub i: usize,
    pub j: usize,
}

/// The `K` snapshots `ζ_k = u(t_i, µ_j)` with their tags, plus the `t_0`
/// fields of every parameter point (kept out of `K`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub representation: Representation,
    pub parameters: Vec<Vec<f64>>,
    pub grid: TimeGrid,
    pub initial: Vec<DVector<f64>>,
    snapshots: Vec<DVector<f64>>,
    tags: Vec<SnapshotTag>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotIndex {
    representation: Representation,
    parameters: Vec<Vec<f64>>,
    final_time: f64,
    steps: usize,
    times: Vec<f64>,
    dofs: usize,
    tags: Vec<SnapshotTag>,
    initial: Vec<usize>,
}

fn snapshot_file(i: usize, j: usize) -> String {
    format!("mu{j}_t{i}.bin")
}

impl SnapshotSet {
    pub fn new(representation: Representation, parameters: Vec<Vec<f64>>, grid: TimeGrid) -> Self {
        Self {
            representation,
            parameters,
            grid,
            initial: Vec::new(),
            snapshots: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub fn push(&mut self, tag: SnapshotTag, snapshot: DVector<f64>) {
        self.snapshots.push(snapshot);
        self.tags.push(tag);
    }

    /// `K`
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.len())
    }

    pub fn snapshots(&self) -> &[DVector<f64>] {
        &self.snapshots
    }

    pub fn tags(&self) -> &[SnapshotTag] {
        &self.tags
    }

    /// Snapshots of parameter points `0..j_count` only, preserving order.
    pub fn restrict_parameters(&self, j_count: usize) -> Self {
        let mut out = Self::new(self.representation, self.parameters[..j_count].to_vec(), self.grid);
        out.initial = self.initial.iter().take(j_count).cloned().collect();
        for (t, s) in self.tags.iter().zip(&self.snapshots) {
            if t.j < j_count {
                out.push(*t, s.clone());
            }
        }
        out
    }

    /// Snapshot values at the quadrature points of `space`.
    pub fn values_at_quadrature(&self, space: &FeSpace) -> Result<Vec<DVector<f64>>> {
        match self.representation {
            Representation::FeCoefficients => self
                .snapshots
                .iter()
                .map(|s| {
                    space.check_coeffs(s)?;
                    Ok(space.eval_at_quadrature(s))
                })
                .collect(),
            Representation::QuadratureValues => {
                if self.dim() != space.n_quadrature() {
                    return Err(Error::DimensionMismatch(format!(
                        "snapshots have {} values, space has {} quadrature points",
                        self.dim(),
                        space.n_quadrature()
                    )));
                }
                Ok(self.snapshots.clone())
            }
        }
    }

    /// Writes `dir/mu<j>_t<i>.bin` for every snapshot and `t_0` field, and
    /// `dir/index.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (t, s) in self.tags.iter().zip(&self.snapshots) {
            store::write_vector(&dir.join(snapshot_file(t.i, t.j)), s)?;
        }
        for (j, s) in self.initial.iter().enumerate() {
            store::write_vector(&dir.join(snapshot_file(0, j)), s)?;
        }
        let index = SnapshotIndex {
            representation: self.representation,
            parameters: self.parameters.clone(),
            final_time: self.grid.final_time,
            steps: self.grid.steps,
            times: (0..=self.grid.steps).map(|i| self.grid.time(i)).collect(),
            dofs: self.dim(),
            tags: self.tags.clone(),
            initial: (0..self.initial.len()).collect(),
        };
        store::write_json(&dir.join("index.json"), &index)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index: SnapshotIndex = store::read_json(&dir.join("index.json"))?;
        let grid = TimeGrid::new(index.final_time, index.steps)?;
        let mut set = Self::new(index.representation, index.parameters, grid);
        for j in index.initial {
            set.initial.push(store::read_vector(&dir.join(snapshot_file(0, j)))?);
        }
        for t in index.tags {
            let s = store::read_vector(&dir.join(snapshot_file(t.i, t.j)))?;
            if s.len() != index.dofs {
                return Err(Error::DimensionMismatch(format!(
                    "snapshot (i = {}, j = {}) has {} entries, index says {}",
                    t.i,
                    t.j,
                    s.len(),
                    index.dofs
                )));
            }
            set.push(t, s);
        }
        Ok(set)
    }
}

/// Exact field `u(x, t, µ)` sampled at quadrature points, standing in for a
/// full-order solver.
pub struct AnalyticProvider {
    space: FeSpace,
    abscissae: Vec<f64>,
    field: Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    nonlinearity: Nonlinearity,
    grid: TimeGrid,
    parameter_domain: (f64, f64),
}

impl std::fmt::Debug for AnalyticProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticProvider")
            .field("space", &self.space)
            .field("nonlinearity", &self.nonlinearity)
            .field("grid", &self.grid)
            .finish()
    }
}

/// `x / ((µ+1)(1 + sqrt((µ+1)/exp(t/2)) exp(t x²/(µ+1))))`, evaluated in
/// log form so that large `t x²` does not overflow.
pub fn logistic_profile(x: f64, t: f64, mu: f64) -> f64 {
    let a = mu + 1.0;
    let z = 0.5 * a.ln() - 0.25 * t + t * x * x / a;
    let denom = if z > 0.0 {
        // 1 + e^z = e^z (1 + e^-z)
        a * z.exp() * (1.0 + (-z).exp())
    } else {
        a * (1.0 + z.exp())
    };
    x / denom
}

impl AnalyticProvider {
    pub fn new(
        space: FeSpace,
        field: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        nonlinearity: Nonlinearity,
        grid: TimeGrid,
        parameter_domain: (f64, f64),
    ) -> Self {
        let abscissae = (0..space.n_quadrature()).map(|q| space.quadrature_point(q)[0]).collect();
        Self {
            space,
            abscissae,
            field: Box::new(field),
            nonlinearity,
            grid,
            parameter_domain,
        }
    }

    /// `[0, 2]` with `elements` linear elements, `T = 100`, `steps` steps,
    /// `g = exp`, `µ ∈ [0, 10]`.
    pub fn logistic(elements: usize, steps: usize) -> Result<Self> {
        let space = build_space(&[(0.0, 2.0)], &[elements], 1, BcKind::NeumannHomogeneous)?;
        Ok(Self::new(
            space,
            logistic_profile,
            Nonlinearity::exp(),
            TimeGrid::new(100.0, steps)?,
            (0.0, 10.0),
        ))
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn parameter_domain(&self) -> (f64, f64) {
        self.parameter_domain
    }

    /// Quadrature-weighted discrete L2 product.
    pub fn inner_product(&self) -> InnerProduct {
        InnerProduct::Weights(self.space.quadrature_weights())
    }

    pub fn field_at_quadrature(&self, t: f64, mu: f64) -> DVector<f64> {
        DVector::from_iterator(self.abscissae.len(), self.abscissae.iter().map(|&x| (self.field)(x, t, mu)))
    }

    /// `u(t_i, µ_j)` for `i = 1..I`, `j` outer, plus the `t_0` fields.
    pub fn snapshots(&self, sample: &[f64]) -> Result<SnapshotSet> {
        if sample.is_empty() {
            return Err(Error::InvalidParameter("empty parameter sample".into()));
        }
        let (lo, hi) = self.parameter_domain;
        let params = sample
            .iter()
            .map(|&m| {
                if m < lo || m > hi {
                    Err(Error::InvalidParameter(format!("µ = {m} outside [{lo}, {hi}]")))
                } else {
                    Ok(vec![m])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut set = SnapshotSet::new(Representation::QuadratureValues, params, self.grid);
        for (j, &mu) in sample.iter().enumerate() {
            set.initial.push(self.field_at_quadrature(0.0, mu));
            for i in 1..=self.grid.steps {
                set.push(SnapshotTag { i, j }, self.field_at_quadrature(self.grid.time(i), mu));
            }
        }
        Ok(set)
    }
}

/// The hierarchical twelve-point sample of `[0, 10]`; `S_J` is its first `J`
/// entries.
pub const LOGISTIC_SAMPLE: [f64; 12] = [0.0, 10.0, 1.4, 8.6, 4.2, 5.8, 0.5, 9.5, 2.7, 7.3, 0.15, 9.85];

/// `count` equispaced points of `[a, b]`, endpoints included.
pub fn uniform_sample(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..count)
            .map(|i| if i + 1 == count { b } else { a + (b - a) * i as f64 / (count - 1) as f64 })
            .collect(),
    }
}
