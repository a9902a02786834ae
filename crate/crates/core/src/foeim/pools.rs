use nalgebra::{DMatrix, DVector};

use super::{eim_from_modes, nearest_parameters, pod_modes, taylor_snapshots, EimSystem};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::problem::ProblemDef;
use crate::rom::NonlinearSystems;
use crate::snapshots::SnapshotSet;

/// Scaled POD modes of one nonlinear integrand's snapshot set, from which
/// interpolation systems of any size up to the pool size are drawn.
#[derive(Debug, Clone)]
pub struct ModePool {
    pub name: String,
    pub modes: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Number of nonlinear snapshots behind the pool.
    pub snapshot_count: usize,
}

impl ModePool {
    pub fn len(&self) -> usize {
        self.modes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.ncols() == 0
    }

    /// Greedy over the leading `m + p` modes.
    pub fn system(&self, m: usize, p: usize) -> Result<EimSystem> {
        if m + p > self.len() {
            return Err(Error::RankDeficient {
                requested: m + p,
                achieved: self.len(),
            });
        }
        eim_from_modes(&self.name, self.modes.columns(0, m + p).into_owned(), self.eigenvalues.clone(), m, p)
    }
}

/// Mode pools for the reaction and every flux component of a problem.
#[derive(Debug, Clone, Default)]
pub struct NonlinearPools {
    pub reaction: Option<ModePool>,
    pub flux: Vec<ModePool>,
}

impl NonlinearPools {
    /// Builds Taylor-enriched snapshot sets with `L` neighbors from finite
    /// element snapshots and keeps `size` scaled modes per term (fewer if
    /// the rank runs out).
    pub fn build(
        space: &FeSpace,
        problem: &ProblemDef,
        snapshots: &SnapshotSet,
        l: usize,
        size: usize,
        rank_tolerance: f64,
    ) -> Result<Self> {
        let values = snapshots.values_at_quadrature(space)?;
        let map = nearest_parameters(&snapshots.parameters, l)?;
        let weights = space.quadrature_weights();
        let pool = |g: &crate::nonlinear::Nonlinearity| -> Result<ModePool> {
            let set = taylor_snapshots(&values, snapshots.tags(), &map, g)?;
            let (modes, eigenvalues) = pool_modes(&set, &weights, size, rank_tolerance)?;
            Ok(ModePool {
                name: set.name.clone(),
                modes,
                eigenvalues,
                snapshot_count: set.len(),
            })
        };
        Ok(Self {
            reaction: problem.reaction.as_ref().map(&pool).transpose()?,
            flux: problem.flux.iter().map(&pool).collect::<Result<_>>()?,
        })
    }

    /// Interpolation systems with `m` points per term and `p` reserve points.
    pub fn systems(&self, m: usize, p: usize) -> Result<NonlinearSystems> {
        Ok(NonlinearSystems {
            reaction: self.reaction.as_ref().map(|pool| pool.system(m, p)).transpose()?,
            flux: self.flux.iter().map(|pool| pool.system(m, p)).collect::<Result<_>>()?,
        })
    }

    /// Largest `M + P` every term supports.
    pub fn capacity(&self) -> usize {
        self.reaction.iter().chain(&self.flux).map(ModePool::len).min().unwrap_or(0)
    }
}

fn pool_modes(
    set: &super::NonlinearSnapshotSet,
    weights: &DVector<f64>,
    size: usize,
    rank_tolerance: f64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    match pod_modes(set, weights, size, rank_tolerance) {
        Err(Error::RankDeficient { achieved, .. }) if achieved > 0 => pod_modes(set, weights, achieved, rank_tolerance),
        other => other,
    }
}
