//! Shared fixtures for the solver benchmarks.

use foeim_core::fem::build_space;
use foeim_core::foeim::{NonlinearPools, POOL_RANK_TOLERANCE};
use foeim_core::fom::{FullOrderModel, NewtonConfig};
use foeim_core::pod::{pod_basis, PodTarget, ReducedBasis};
use foeim_core::problem::{buckley_leverett, TimeGrid};
use foeim_core::rom::{offline_assemble, RomOperators};
use foeim_core::snapshots::{InnerProduct, SnapshotSet};

/// Buckley-Leverett on a `cells × cells` Q2 mesh with desk-scale training
/// snapshots (`I = 25`, six parameters).
pub struct Fixture {
    pub fom: FullOrderModel,
    pub grid: TimeGrid,
    pub snapshots: SnapshotSet,
}

impl Fixture {
    pub fn buckley_leverett(cells: usize) -> Self {
        let problem = buckley_leverett();
        let space = build_space(&problem.domain, &[cells, cells], 2, problem.bc).expect("space");
        let fom = FullOrderModel::new(space, problem).expect("model");
        let grid = TimeGrid::new(1.0, 25).expect("grid");
        let sample: Vec<Vec<f64>> = (0..6).map(|j| vec![0.03 + 0.014 * j as f64]).collect();
        let snapshots = fom.harvest(&sample, &grid, &NewtonConfig::default()).expect("snapshots");
        Self { fom, grid, snapshots }
    }

    pub fn basis(&self, n: usize) -> ReducedBasis {
        let ip = InnerProduct::Mass(self.fom.mass().clone());
        pod_basis(self.snapshots.snapshots(), &ip, PodTarget::Modes(n)).expect("basis")
    }

    pub fn pools(&self, l: usize, size: usize) -> NonlinearPools {
        NonlinearPools::build(self.fom.space(), self.fom.problem(), &self.snapshots, l, size, POOL_RANK_TOLERANCE)
            .expect("pools")
    }

    /// Reduced operators with `N = n`, `M = m` from `L = l` neighbors.
    pub fn rom(&self, n: usize, m: usize, l: usize) -> (ReducedBasis, RomOperators) {
        let basis = self.basis(n);
        let systems = self.pools(l, m).systems(m, 0).expect("systems");
        let ops = offline_assemble(self.fom.space(), self.fom.problem(), &basis, &systems).expect("operators");
        (basis, ops)
    }
}
