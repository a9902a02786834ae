use std::path::{Path, PathBuf};

use foeim_core::experiment::{
    emit_tables, field_stem, interface_table, load_report, node_lattice, run_case, snapshot_field_dump, BenchReport,
    ExperimentConfig, Method, TableFormat, CURVE_COLUMNS, ROM_COLUMNS, STUDY_COLUMNS,
};
use foeim_core::fem::build_space;
use foeim_core::fom::{FullOrderModel, NewtonConfig};
use foeim_core::problem::{allen_cahn, TimeGrid};

const TINY_AC: &str = r#"
case = "allen_cahn"
training = [0.25, 0.3, 0.35]
test_count = 3
n_list = [3, 5]
l_list = [1, 2]
epsilon = 0.1
timing_repeats = 1

[mesh]
cells = [6, 6]

[grid]
final_time = 0.004
steps = 8

[m_rule]
kind = "multiple"
factors = [2]

[dump]
parameter = 0.34
steps = [0, 8]
n = 5
m = 10
l = 2
"#;

fn tiny(dir: &Path) -> ExperimentConfig {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY_AC).unwrap();
    ExperimentConfig::load(&path).unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn shipped_configs_load_and_validate() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 8);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, format!("{TINY_AC}\nbogus = 1\n")).unwrap();
    assert!(ExperimentConfig::load(&path).is_err());
}

#[test]
fn empty_report_gives_header_only_tables() {
    let dir = tempfile::tempdir().unwrap();
    let written = emit_tables(&BenchReport::new("empty"), dir.path(), &[TableFormat::Csv, TableFormat::Long]).unwrap();
    assert_eq!(written.len(), 3);
    for (name, columns) in [("rom.csv", &ROM_COLUMNS[..]), ("study.csv", &STUDY_COLUMNS[..]), ("curves.csv", &CURVE_COLUMNS[..])] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
        assert_eq!(header(&dir.path().join(name)), columns);
    }
}

#[test]
fn pipeline_writes_tables_fields_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let a = run_case(&cfg, &dir.path().join("a")).unwrap();
    let b = run_case(&cfg, &dir.path().join("b")).unwrap();

    let out = dir.path().join("a");
    assert_eq!(header(&out.join("rom.csv")), ROM_COLUMNS);
    assert_eq!(header(&out.join("curves.csv")), CURVE_COLUMNS);
    let reloaded = load_report(&out.join("report.json")).unwrap();
    assert_eq!(reloaded, a);

    // GN for every N, FOEIM-GN for every (N, M, L)
    assert_eq!(a.rom.iter().filter(|r| r.method == Method::Gn).count(), 2);
    assert_eq!(a.rom.iter().filter(|r| r.method == Method::FoeimGn).count(), 4);
    assert!(a.rom.iter().all(|r| r.speedup > 0.0 && r.field_error.is_finite()));

    // everything but wall times is reproducible
    assert_eq!(a.rom.len(), b.rom.len());
    for (x, y) in a.rom.iter().zip(&b.rom) {
        assert_eq!((x.method, x.n, x.m, x.l), (y.method, y.n, y.m, y.l));
        assert_eq!(x.field_error, y.field_error);
        assert_eq!(x.output_error, y.output_error);
        assert_eq!(x.max_field_error, y.max_field_error);
        assert_eq!(x.newton_iterations, y.newton_iterations);
    }
    assert_eq!(a.test, b.test);

    let fields = std::fs::read_dir(out.join("fields")).unwrap().next().unwrap().unwrap().path();
    for i in [0, 8] {
        assert!(fields.join(format!("{}.csv", field_stem(i))).is_file());
        assert!(fields.join(format!("{}.bin", field_stem(i))).is_file());
    }
    let interface = std::fs::read_to_string(fields.join("interface.csv")).unwrap();
    assert_eq!(interface.lines().count(), 1 + 9);
}

#[test]
fn dumped_lattice_holds_the_coefficients() {
    let problem = allen_cahn(0.1, 2);
    let space = build_space(&problem.domain, &[4, 4], 2, problem.bc).unwrap();
    let fom = FullOrderModel::new(space.clone(), problem).unwrap();
    let traj = fom.solve(&[0.3], &TimeGrid::new(0.002, 2).unwrap(), &NewtonConfig::default()).unwrap();

    let lattice = node_lattice(&space, &traj.states[1]).unwrap();
    assert_eq!(lattice.shape(), (9, 9));
    // Neumann: every node is a dof, numbered along x first
    let flat: Vec<f64> = lattice.transpose().iter().copied().collect();
    assert_eq!(flat, traj.states[1].as_slice());

    let dir = tempfile::tempdir().unwrap();
    let written = snapshot_field_dump(&space, &traj, &[0, 2], dir.path()).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["field_t0000.csv", "field_t0000.bin", "field_t0002.csv", "field_t0002.bin"]);
    assert!(snapshot_field_dump(&space, &traj, &[3], dir.path()).is_err());

    let text = std::fs::read_to_string(dir.path().join("field_t0000.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,u"));
    assert_eq!(text.lines().count(), 1 + 81);
}

#[test]
fn initial_star_dump_stays_in_phase_range() {
    let problem = allen_cahn(0.015, 2);
    let space = build_space(&problem.domain, &[80, 80], 2, problem.bc).unwrap();
    let fom = FullOrderModel::new(space.clone(), problem).unwrap();
    let u0 = fom.initial_state(&[0.34]).unwrap();
    let traj = foeim_core::fom::Trajectory {
        parameter: vec![0.34],
        times: vec![0.0],
        outputs: vec![fom.output(&u0)],
        states: vec![u0],
        newton_iterations: vec![],
        wall_time: 0.0,
    };
    let dir = tempfile::tempdir().unwrap();
    snapshot_field_dump(&space, &traj, &[0], dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("field_t0000.csv")).unwrap();
    let u: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(u.len(), 161 * 161);
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo >= -1.01 && hi <= 1.01, "[{lo}, {hi}]");
    // both phases present
    assert!(lo < -0.99 && hi > 0.99);
}

#[test]
fn interface_of_a_disc_is_round() {
    let problem = allen_cahn(0.1, 2);
    let space = build_space(&problem.domain, &[24, 24], 2, problem.bc).unwrap();
    let disc = |x: &[f64]| 0.3 - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
    let nodes: usize = space.nodes_per_axis().iter().product();
    let mut u = nalgebra::DVector::zeros(space.n_dofs());
    for node in 0..nodes {
        if let Some(d) = space.node_dof(node) {
            u[d] = disc(&space.node_coords(node));
        }
    }
    let traj = foeim_core::fom::Trajectory {
        parameter: vec![0.3],
        times: vec![0.0],
        outputs: vec![0.0],
        states: vec![u],
        newton_iterations: vec![],
        wall_time: 0.0,
    };
    let (metrics, csv) = interface_table(&space, &traj).unwrap();
    let m = metrics[0];
    assert!((m.area - std::f64::consts::PI * 0.09).abs() < 2e-3, "{}", m.area);
    assert!((m.centroid[0] - 0.5).abs() < 1e-6 && (m.centroid[1] - 0.5).abs() < 1e-6);
    assert!((m.min_radius - 0.3).abs() < 1e-3 && (m.max_radius - 0.3).abs() < 1e-3);
    assert!(m.asphericity < 1.01);
    assert_eq!(csv.lines().count(), 2);
}
