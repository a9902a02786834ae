use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{eim_from_modes, nearest_parameters, pod_modes, taylor_snapshots, EimSystem};
use crate::error::{Error, Result};
use crate::linalg::matmul;
use crate::snapshots::AnalyticProvider;

/// Mean interpolation error, estimate and effectivity of one `(J, M, L)`
/// combination over a test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub j: usize,
    pub m: usize,
    pub l: usize,
    pub p: usize,
    pub mean_error: f64,
    pub mean_estimate: f64,
    pub mean_effectivity: f64,
    pub min_effectivity: f64,
    pub max_effectivity: f64,
    /// Fraction of `(t, µ)` pairs where `ε̂ ≥ ε`.
    pub bound_fraction: f64,
    pub condition: f64,
}

/// Error and estimate tables of an interpolation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InterpolationErrorReport {
    pub rows: Vec<StudyRow>,
}

impl InterpolationErrorReport {
    pub fn row(&self, j: usize, m: usize, l: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.j == j && r.m == m && r.l == l)
    }
}

/// Builds one interpolation system per `(M, L)` from the provider's
/// snapshots at `sample` and measures it on every `(t_i, µ)`, `i ≥ 1`,
/// `µ ∈ test`.
pub fn evaluate_interpolation_study(
    provider: &AnalyticProvider,
    sample: &[f64],
    test: &[f64],
    m_list: &[usize],
    l_list: &[usize],
    p: usize,
    rank_tolerance: f64,
) -> Result<InterpolationErrorReport> {
    if p == 0 {
        return Err(Error::InvalidParameter("the study needs P >= 1".into()));
    }
    let snaps = provider.snapshots(sample)?;
    let weights = provider.space().quadrature_weights();
    let g = provider.nonlinearity();
    let max_m = m_list.iter().copied().max().unwrap_or(0);
    let mut systems: Vec<(usize, EimSystem)> = Vec::new();
    for &l in l_list {
        let map = nearest_parameters(&snaps.parameters, l)?;
        let set = taylor_snapshots(snaps.snapshots(), snaps.tags(), &map, g)?;
        let (modes, eigenvalues) = pod_modes(&set, &weights, max_m + p, rank_tolerance)?;
        for &m in m_list {
            let sys = eim_from_modes(&set.name, modes.columns(0, m + p).into_owned(), eigenvalues.clone(), m, p)?;
            systems.push((l, sys));
        }
    }
    let grid = provider.grid();
    let steps = grid.steps;
    let n_pairs = steps * test.len();
    let mut acc = vec![Accumulator::default(); systems.len()];
    for &mu in test {
        let g_values = DMatrix::from_columns(
            &(1..=steps)
                .map(|i| provider.field_at_quadrature(grid.time(i), mu).map(|u| g.value(u)))
                .collect::<Vec<DVector<f64>>>(),
        );
        for ((_, sys), acc) in systems.iter().zip(acc.iter_mut()) {
            assess_batch(sys, &g_values, acc)?;
        }
    }
    let rows = systems
        .iter()
        .zip(acc)
        .map(|((l, sys), a)| StudyRow {
            j: sample.len(),
            m: sys.m(),
            l: *l,
            p,
            mean_error: a.error / n_pairs as f64,
            mean_estimate: a.estimate / n_pairs as f64,
            mean_effectivity: a.effectivity / a.counted.max(1) as f64,
            min_effectivity: a.min_eff,
            max_effectivity: a.max_eff,
            bound_fraction: a.bounded as f64 / n_pairs as f64,
            condition: sys.condition,
        })
        .collect();
    Ok(InterpolationErrorReport { rows })
}

#[derive(Debug, Clone)]
struct Accumulator {
    error: f64,
    estimate: f64,
    effectivity: f64,
    counted: usize,
    bounded: usize,
    min_eff: f64,
    max_eff: f64,
}

impl Default for Accumulator {
    fn default() -> Self {
        Self {
            error: 0.0,
            estimate: 0.0,
            effectivity: 0.0,
            counted: 0,
            bounded: 0,
            min_eff: f64::INFINITY,
            max_eff: 0.0,
        }
    }
}

/// Error and estimate for every column of `g` (fields at quadrature points).
fn assess_batch(sys: &EimSystem, g: &DMatrix<f64>, acc: &mut Accumulator) -> Result<()> {
    let (m, p) = (sys.m(), sys.p());
    let cols = g.ncols();
    let b = DMatrix::from_fn(m, cols, |r, c| g[(sys.points()[r], c)]);
    let beta = sys
        .b_matrix()
        .solve_lower_triangular(&b)
        .ok_or(Error::SingularInterpolation { condition: sys.condition })?;
    let gm = matmul(&sys.basis().into_owned(), &beta);
    let full = sys.full_basis();
    let reserve = DMatrix::from_fn(p, p, |i, j| full[(sys.reserve_points()[i], m + j)]);
    let rhs = DMatrix::from_fn(p, cols, |i, c| {
        let q = sys.reserve_points()[i];
        g[(q, c)] - gm[(q, c)]
    });
    let e = reserve
        .solve_lower_triangular(&rhs)
        .ok_or(Error::SingularInterpolation { condition: f64::INFINITY })?;
    for c in 0..cols {
        let err = (g.column(c) - gm.column(c)).amax();
        let est: f64 = e.column(c).iter().map(|v| v.abs()).sum();
        acc.error += err;
        acc.estimate += est;
        if est >= err {
            acc.bounded += 1;
        }
        if err > 0.0 {
            let eta = est / err;
            acc.effectivity += eta;
            acc.counted += 1;
            acc.min_eff = acc.min_eff.min(eta);
            acc.max_eff = acc.max_eff.max(eta);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foeim::POOL_RANK_TOLERANCE;
    use crate::snapshots::{uniform_sample, LOGISTIC_SAMPLE};

    #[test]
    fn batch_assessment_matches_single_field_path() {
        let provider = AnalyticProvider::logistic(200, 20).unwrap();
        let snaps = provider.snapshots(&LOGISTIC_SAMPLE[..4]).unwrap();
        let map = nearest_parameters(&snaps.parameters, 2).unwrap();
        let set = taylor_snapshots(snaps.snapshots(), snaps.tags(), &map, provider.nonlinearity()).unwrap();
        let (modes, ev) = pod_modes(&set, &provider.space().quadrature_weights(), 12, POOL_RANK_TOLERANCE).unwrap();
        let sys = eim_from_modes("g", modes, ev, 8, 4).unwrap();
        let fields: Vec<DVector<f64>> = [3.0, 40.0, 90.0]
            .iter()
            .map(|&t| provider.field_at_quadrature(t, 6.1).map(f64::exp))
            .collect();
        let mut acc = Accumulator::default();
        assess_batch(&sys, &DMatrix::from_columns(&fields), &mut acc).unwrap();
        let (mut err, mut est) = (0.0, 0.0);
        for f in &fields {
            let (a, b) = sys.assess(f).unwrap();
            err += a;
            est += b;
        }
        assert!((acc.error - err).abs() < 1e-12 * err.max(1e-300));
        assert!((acc.estimate - est).abs() < 1e-10 * est.max(1e-300));
    }

    #[test]
    fn small_study_has_sane_effectivities() {
        let provider = AnalyticProvider::logistic(200, 20).unwrap();
        let report =
            evaluate_interpolation_study(&provider, &LOGISTIC_SAMPLE[..6], &uniform_sample(0.0, 10.0, 7), &[5, 10], &[1, 2], 3, POOL_RANK_TOLERANCE)
                .unwrap();
        assert_eq!(report.rows.len(), 4);
        for r in &report.rows {
            assert!(r.mean_estimate.is_finite() && r.mean_estimate >= 0.0);
            assert!(r.mean_effectivity.is_finite());
        }
        let a = report.row(6, 5, 2).unwrap().mean_error;
        let b = report.row(6, 10, 2).unwrap().mean_error;
        assert!(b < a);
    }
}
