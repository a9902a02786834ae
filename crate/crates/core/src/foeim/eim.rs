use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::NonlinearSnapshotSet;
use crate::error::{Error, Result};
use crate::linalg::condition_number;
use crate::pod::{pod_basis_with_tolerance, PodTarget};
use crate::snapshots::InnerProduct;
use crate::store;

/// Greedy stops when the largest residual falls below this fraction of the
/// first one.
pub const DEGENERATE_RESIDUAL: f64 = 1e-13;

/// Relative eigenvalue cutoff for the modes offered to the greedy. Every
/// mode with a positive eigenvalue is kept; the greedy's own residual guard
/// rejects directions that add nothing.
pub const POOL_RANK_TOLERANCE: f64 = 0.0;

/// One step of the greedy selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub step: usize,
    /// Index `j_m` of the pool mode whose residual was largest.
    pub mode: usize,
    /// Global quadrature index of `x_m`.
    pub point: usize,
    /// `‖r_m‖_∞` over quadrature points.
    pub residual: f64,
}

/// Interpolation basis `ψ_1 … ψ_{M+P}` (values at quadrature points) with
/// points `x_1 … x_{M+P}`. The first `M` pairs interpolate; the last `P` are
/// held in reserve for the error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EimSystem {
    pub name: String,
    basis: DMatrix<f64>,
    points: Vec<usize>,
    m: usize,
    p: usize,
    /// Scaled POD modes `√λ_l φ_l` the greedy chose from.
    pub modes: DMatrix<f64>,
    /// Eigenvalues of the nonlinear snapshot correlation matrix.
    pub eigenvalues: Vec<f64>,
    pub log: Vec<SelectionStep>,
    /// Condition number of `B_M`.
    pub condition: f64,
}

#[derive(Serialize, Deserialize)]
struct EimManifest {
    name: String,
    m: usize,
    p: usize,
    quadrature_points: usize,
    points: Vec<usize>,
    condition: f64,
    eigenvalues: Vec<f64>,
    log: Vec<SelectionStep>,
}

/// POD of the nonlinear snapshots in the quadrature-weighted inner product,
/// followed by the greedy over the leading `M + P` scaled modes.
pub fn eim_select(snapshots: &NonlinearSnapshotSet, weights: &DVector<f64>, m: usize, p: usize) -> Result<EimSystem> {
    let pool = pod_modes(snapshots, weights, m + p, POOL_RANK_TOLERANCE)?;
    eim_from_modes(&snapshots.name, pool.0.columns(0, m + p).into_owned(), pool.1, m, p)
}

/// Scaled modes `√λ_l φ_l`, `l < count`, and all eigenvalues. Modes whose
/// eigenvalue is at most `rank_tolerance · λ_1` are unavailable.
pub fn pod_modes(
    snapshots: &NonlinearSnapshotSet,
    weights: &DVector<f64>,
    count: usize,
    rank_tolerance: f64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let ip = InnerProduct::Weights(weights.clone());
    let basis = pod_basis_with_tolerance(&snapshots.values, &ip, PodTarget::Modes(count), rank_tolerance).map_err(
        |e| match e {
            Error::RankExceeded { requested, rank } => Error::RankDeficient {
                requested,
                achieved: rank,
            },
            other => other,
        },
    )?;
    let mut modes = basis.vectors;
    for (j, mut col) in modes.column_iter_mut().enumerate() {
        col *= basis.eigenvalues[j].sqrt();
    }
    Ok((modes, basis.eigenvalues))
}

/// Greedy selection over the columns of `modes`: `M + P` points and basis
/// functions. Ties go to the smallest mode or point index; selected modes
/// and points are skipped.
pub fn eim_from_modes(name: &str, modes: DMatrix<f64>, eigenvalues: Vec<f64>, m: usize, p: usize) -> Result<EimSystem> {
    let total = m + p;
    let (nq, pool) = modes.shape();
    if total == 0 {
        return Err(Error::InvalidParameter("empirical interpolation needs M + P >= 1".into()));
    }
    if pool < total || nq < total {
        return Err(Error::RankDeficient {
            requested: total,
            achieved: pool.min(nq),
        });
    }
    let mut residuals = modes.clone();
    let mut mode_used = vec![false; pool];
    let mut point_used = vec![false; nq];
    let mut basis = DMatrix::zeros(nq, total);
    let mut points = Vec::with_capacity(total);
    let mut log = Vec::with_capacity(total);
    let mut first = 0.0;
    for step in 0..total {
        let mut best: Option<(usize, f64)> = None;
        for l in (0..pool).filter(|&l| !mode_used[l]) {
            let col = residuals.column(l);
            let norm = (0..nq).filter(|&q| !point_used[q]).fold(0.0f64, |acc, q| acc.max(col[q].abs()));
            if best.is_none_or(|(_, b)| norm > b) {
                best = Some((l, norm));
            }
        }
        let (mode, value) = best.expect("pool has an unused mode");
        if step == 0 {
            first = value;
        }
        if !(value > DEGENERATE_RESIDUAL * first) || value == 0.0 {
            return Err(Error::RankDeficient {
                requested: total,
                achieved: step,
            });
        }
        let r = residuals.column(mode).into_owned();
        let mut point = usize::MAX;
        let mut top = -1.0;
        for q in (0..nq).filter(|&q| !point_used[q]) {
            if r[q].abs() > top {
                top = r[q].abs();
                point = q;
            }
        }
        let psi = &r / r[point];
        for l in (0..pool).filter(|&l| !mode_used[l]) {
            let c = residuals[(point, l)];
            if c != 0.0 {
                residuals.column_mut(l).axpy(-c, &psi, 1.0);
            }
        }
        mode_used[mode] = true;
        point_used[point] = true;
        basis.set_column(step, &psi);
        points.push(point);
        log.push(SelectionStep {
            step,
            mode,
            point,
            residual: value,
        });
    }
    let mut sys = EimSystem {
        name: name.to_string(),
        basis,
        points,
        m,
        p,
        modes,
        eigenvalues,
        log,
        condition: 1.0,
    };
    sys.condition = if m > 0 { condition_number(&sys.b_matrix()) } else { 1.0 };
    if !sys.condition.is_finite() {
        return Err(Error::SingularInterpolation {
            condition: sys.condition,
        });
    }
    Ok(sys)
}

impl EimSystem {
    /// `M`
    pub fn m(&self) -> usize {
        self.m
    }

    /// `P`
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_quadrature(&self) -> usize {
        self.basis.nrows()
    }

    /// Interpolation points `x_1 … x_M` as quadrature indices.
    pub fn points(&self) -> &[usize] {
        &self.points[..self.m]
    }

    /// Reserve points `x_{M+1} … x_{M+P}`.
    pub fn reserve_points(&self) -> &[usize] {
        &self.points[self.m..]
    }

    /// `ψ_1 … ψ_M` as columns of quadrature values.
    pub fn basis(&self) -> nalgebra::DMatrixView<'_, f64> {
        self.basis.columns(0, self.m)
    }

    /// All `M + P` basis functions.
    pub fn full_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `B_pm = ψ_m(x_p)`, lower triangular with unit diagonal.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |p, m| self.basis[(self.points[p], m)])
    }

    fn reserve_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| self.basis[(self.points[self.m + i], self.m + j)])
    }

    /// The same construction without the reserve: first `m' ≤ M + P` pairs.
    pub fn with_split(&self, m: usize, p: usize) -> Result<Self> {
        if m + p > self.points.len() {
            return Err(Error::RankDeficient {
                requested: m + p,
                achieved: self.points.len(),
            });
        }
        let mut out = self.clone();
        out.basis = self.basis.columns(0, m + p).into_owned();
        out.points.truncate(m + p);
        out.log.truncate(m + p);
        out.m = m;
        out.p = p;
        out.condition = if m > 0 { condition_number(&out.b_matrix()) } else { 1.0 };
        Ok(out)
    }

    /// `β = B_M⁻¹ b`
    pub fn coefficients(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.m {
            return Err(Error::DimensionMismatch(format!("{} point values for M = {}", b.len(), self.m)));
        }
        let beta = self
            .b_matrix()
            .solve_lower_triangular(b)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularInterpolation {
                condition: self.condition,
            })?;
        Ok(beta)
    }

    /// `Σ β_m ψ_m` at every quadrature point.
    pub fn evaluate(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.basis() * beta
    }

    /// Interpolant of the field whose values at the points are `b`.
    pub fn interpolate(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.evaluate(&self.coefficients(b)?))
    }

    /// Values of a full quadrature field at the interpolation points.
    pub fn sample(&self, field: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m, self.points().iter().map(|&q| field[q]))
    }

    /// `ε̂ = Σ_j |e_j|` where `Σ_j ψ_{M+j}(x_{M+i}) e_j = g(x_{M+i}) − g_M(x_{M+i})`.
    pub fn error_estimate(&self, g_reserve: &[f64], gm_reserve: &[f64]) -> Result<(f64, DVector<f64>)> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("error estimate needs P >= 1 reserve points".into()));
        }
        if g_reserve.len() != self.p || gm_reserve.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "reserve values of length {} and {} for P = {}",
                g_reserve.len(),
                gm_reserve.len(),
                self.p
            )));
        }
        let rhs = DVector::from_iterator(self.p, g_reserve.iter().zip(gm_reserve).map(|(a, b)| a - b));
        let e = self
            .reserve_matrix()
            .solve_lower_triangular(&rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularInterpolation { condition: f64::INFINITY })?;
        Ok((e.iter().map(|v| v.abs()).sum(), e))
    }

    /// Interpolates a full quadrature field and returns
    /// `(true L∞ error, estimate)`.
    pub fn assess(&self, field: &DVector<f64>) -> Result<(f64, f64)> {
        let beta = self.coefficients(&self.sample(field))?;
        let gm = self.evaluate(&beta);
        let err = (field - &gm).amax();
        let g_res: Vec<f64> = self.reserve_points().iter().map(|&q| field[q]).collect();
        let gm_res: Vec<f64> = self.reserve_points().iter().map(|&q| gm[q]).collect();
        let (est, _) = self.error_estimate(&g_res, &gm_res)?;
        Ok((err, est))
    }

    /// Selection log as CSV; `per_cell` converts point indices to
    /// `(cell, local point)`.
    pub fn log_csv(&self, per_cell: usize) -> String {
        let mut out = String::from("step,mode,point,cell,local_point,residual,reserve\n");
        for s in &self.log {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:e},{}",
                s.step + 1,
                s.mode + 1,
                s.point,
                s.point / per_cell.max(1),
                s.point % per_cell.max(1),
                s.residual,
                s.step >= self.m
            );
        }
        out
    }

    pub fn save(&self, dir: &Path, per_cell: usize) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        store::write_matrix(&dir.join("basis.bin"), &self.basis)?;
        store::write_matrix(&dir.join("modes.bin"), &self.modes)?;
        store::write_matrix(&dir.join("b_matrix.bin"), &self.b_matrix())?;
        store::atomic_write(&dir.join("selection.csv"), self.log_csv(per_cell).as_bytes())?;
        store::write_json(
            &dir.join("eim.json"),
            &EimManifest {
                name: self.name.clone(),
                m: self.m,
                p: self.p,
                quadrature_points: self.n_quadrature(),
                points: self.points.clone(),
                condition: self.condition,
                eigenvalues: self.eigenvalues.clone(),
                log: self.log.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let man: EimManifest = store::read_json(&dir.join("eim.json"))?;
        let basis = store::read_matrix(&dir.join("basis.bin"))?;
        let modes = store::read_matrix(&dir.join("modes.bin"))?;
        if basis.shape() != (man.quadrature_points, man.m + man.p) || man.points.len() != man.m + man.p {
            return Err(Error::DimensionMismatch(format!(
                "interpolation basis {:?} disagrees with manifest (M = {}, P = {})",
                basis.shape(),
                man.m,
                man.p
            )));
        }
        Ok(Self {
            name: man.name,
            basis,
            points: man.points,
            m: man.m,
            p: man.p,
            modes,
            eigenvalues: man.eigenvalues,
            log: man.log,
            condition: man.condition,
        })
    }
}
