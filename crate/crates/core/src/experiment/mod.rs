//! Configuration-driven experiment pipeline and its tables and dumps.

mod config;
mod dump;
mod report;
mod run;

pub use config::{CaseKind, DumpConfig, ExperimentConfig, GridConfig, MRule, MeshConfig};
pub use dump::{
    field_stem, interface_metrics, interface_table, node_lattice, snapshot_field_dump, InterfaceMetrics, INTERFACE_RAYS,
};
pub use report::{
    emit_tables, load_report, BenchReport, MachineInfo, Method, RomRow, TableFormat, CURVE_COLUMNS, ROM_COLUMNS,
    STUDY_COLUMNS,
};
pub use run::{run_case, stage_eim, stage_fom, stage_offline, stage_online, stage_pod, Layout, PdeCase, StageOutcome};
