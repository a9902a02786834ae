//! First-order empirical interpolation: Taylor-enriched nonlinear snapshot
//! sets, greedy point selection, interpolation and its a posteriori error
//! estimate.

mod eim;
mod neighbors;
mod pools;
mod study;

pub use eim::{eim_from_modes, eim_select, pod_modes, EimSystem, SelectionStep, DEGENERATE_RESIDUAL, POOL_RANK_TOLERANCE};
pub use neighbors::{nearest_parameters, taylor_snapshots, NeighborMap, NonlinearSnapshotSet};
pub use pools::{ModePool, NonlinearPools};
pub use study::{evaluate_interpolation_study, InterpolationErrorReport, StudyRow};
