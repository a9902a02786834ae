use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nalgebra::DVector;

use super::config::{CaseKind, ExperimentConfig};
use super::dump::{interface_table, snapshot_field_dump};
use super::report::{emit_tables, BenchReport, Method, RomRow, TableFormat};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::foeim::{
    eim_from_modes, evaluate_interpolation_study, nearest_parameters, pod_modes, taylor_snapshots, EimSystem,
    NonlinearPools, POOL_RANK_TOLERANCE,
};
use crate::fom::{FullOrderModel, NewtonConfig, Trajectory};
use crate::nonlinear::Nonlinearity;
use crate::pod::{pod_basis, PodTarget, ReducedBasis};
use crate::problem::{ProblemDef, TimeGrid};
use crate::rom::{
    compare_errors, offline_assemble, online_solve, GalerkinReference, InitialProjector, NonlinearSystems,
    RomOperators,
};
use crate::snapshots::{logistic_profile, AnalyticProvider, InnerProduct, SnapshotSet};
use crate::store;

/// Where each stage keeps its artifacts under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn snapshots(&self) -> PathBuf {
        self.root.join("snapshots")
    }

    pub fn basis(&self) -> PathBuf {
        self.root.join("basis")
    }

    /// Interpolation systems with `M = m` built from `L = l` neighbors.
    pub fn eim(&self, l: usize, m: usize) -> PathBuf {
        self.root.join("eim").join(format!("L{l}")).join(format!("M{m}"))
    }

    pub fn rom(&self, n: usize, m: usize, l: usize) -> PathBuf {
        self.root.join("rom").join(format!("N{n}_M{m}_L{l}"))
    }

    pub fn initial(&self, n: usize) -> PathBuf {
        self.root.join("rom").join(format!("N{n}_initial"))
    }

    pub fn fields(&self, n: usize, m: usize, l: usize, mu: f64) -> PathBuf {
        self.root.join("fields").join(format!("N{n}_M{m}_L{l}_mu{mu}"))
    }
}

/// Stage timings and a short description of what was written.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub seconds: f64,
    pub summary: String,
}

fn tagged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Problem, space and full-order model of a finite element case.
pub struct PdeCase {
    pub cfg: ExperimentConfig,
    pub problem: ProblemDef,
    pub space: FeSpace,
    pub fom: FullOrderModel,
    pub grid: TimeGrid,
}

impl PdeCase {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let problem = cfg.problem()?;
        let space = cfg.space(&problem)?;
        let fom = FullOrderModel::new(space.clone(), problem.clone())?;
        Ok(Self {
            cfg: cfg.clone(),
            grid: cfg.time_grid()?,
            problem,
            space,
            fom,
        })
    }

    fn training(&self) -> Vec<Vec<f64>> {
        self.cfg.training.iter().map(|&m| vec![m]).collect()
    }

    fn harvest(&self) -> Result<(SnapshotSet, f64)> {
        let start = Instant::now();
        let snaps = self.fom.harvest(&self.training(), &self.grid, &self.cfg.newton)?;
        Ok((snaps, start.elapsed().as_secs_f64()))
    }

    fn basis(&self, snaps: &SnapshotSet) -> Result<(ReducedBasis, f64)> {
        let start = Instant::now();
        let n_max = self.cfg.n_list.iter().copied().max().unwrap_or(0);
        let ip = InnerProduct::Mass(self.fom.mass().clone());
        let basis = pod_basis(snaps.snapshots(), &ip, PodTarget::Modes(n_max))?;
        Ok((basis, start.elapsed().as_secs_f64()))
    }

    fn all_m(&self) -> Vec<usize> {
        let mut ms: Vec<usize> = self.cfg.n_list.iter().flat_map(|&n| self.cfg.m_values(n)).collect();
        ms.sort_unstable();
        ms.dedup();
        ms
    }

    /// Interpolation systems for every `M` of the run at one `L`, with the
    /// seconds spent on the mode pool and on each greedy.
    fn systems(&self, snaps: &SnapshotSet, l: usize) -> Result<(BTreeMap<usize, NonlinearSystems>, f64, BTreeMap<usize, f64>)> {
        let ms = self.all_m();
        let size = ms.last().copied().unwrap_or(0) + self.cfg.p;
        let start = Instant::now();
        let pools = NonlinearPools::build(&self.space, &self.problem, snaps, l, size, POOL_RANK_TOLERANCE)?;
        let pool_time = start.elapsed().as_secs_f64();
        let mut systems = BTreeMap::new();
        let mut times = BTreeMap::new();
        for m in ms {
            let start = Instant::now();
            systems.insert(m, pools.systems(m, self.cfg.p)?);
            times.insert(m, start.elapsed().as_secs_f64());
        }
        Ok((systems, pool_time, times))
    }
}

fn save_systems(systems: &NonlinearSystems, dir: &Path, per_cell: usize) -> Result<()> {
    if let Some(s) = &systems.reaction {
        s.save(&dir.join("reaction"), per_cell)?;
    }
    for (d, s) in systems.flux.iter().enumerate() {
        s.save(&dir.join(format!("flux{d}")), per_cell)?;
    }
    Ok(())
}

fn load_systems(problem: &ProblemDef, dir: &Path) -> Result<NonlinearSystems> {
    Ok(NonlinearSystems {
        reaction: problem
            .reaction
            .as_ref()
            .map(|_| EimSystem::load(&dir.join("reaction")))
            .transpose()?,
        flux: (0..problem.flux.len())
            .map(|d| EimSystem::load(&dir.join(format!("flux{d}"))))
            .collect::<Result<_>>()?,
    })
}

fn logistic_provider(cfg: &ExperimentConfig) -> Result<AnalyticProvider> {
    let space = crate::fem::build_space(&[(0.0, 2.0)], &cfg.mesh.cells, cfg.mesh.degree, crate::fem::BcKind::NeumannHomogeneous)?;
    Ok(AnalyticProvider::new(
        space,
        logistic_profile,
        Nonlinearity::exp(),
        cfg.time_grid()?,
        cfg.parameter_domain(),
    ))
}

/// Training snapshots: full-order trajectories, or exact fields for the 1D
/// study.
pub fn stage_fom(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageOutcome> {
    let start = Instant::now();
    let snaps = tagged("fom", (|| {
        if cfg.case == CaseKind::Testcase1d {
            cfg.validate()?;
            logistic_provider(cfg)?.snapshots(&cfg.training)
        } else {
            Ok(PdeCase::new(cfg)?.harvest()?.0)
        }
    })())?;
    tagged("fom", snaps.save(&layout.snapshots()))?;
    Ok(StageOutcome {
        stage: "fom",
        seconds: start.elapsed().as_secs_f64(),
        summary: format!("{} snapshots of length {} in {}", snaps.len(), snaps.dim(), layout.snapshots().display()),
    })
}

fn pde_only(cfg: &ExperimentConfig, stage: &'static str) -> Result<()> {
    if cfg.case == CaseKind::Testcase1d {
        return Err(Error::Config(format!("stage `{stage}` needs a finite element case")).in_stage(stage));
    }
    Ok(())
}

pub fn stage_pod(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageOutcome> {
    pde_only(cfg, "pod")?;
    let start = Instant::now();
    let basis = tagged("pod", (|| {
        let case = PdeCase::new(cfg)?;
        let snaps = SnapshotSet::load(&layout.snapshots())?;
        let (basis, _) = case.basis(&snaps)?;
        basis.save(&layout.basis())?;
        Ok(basis)
    })())?;
    Ok(StageOutcome {
        stage: "pod",
        seconds: start.elapsed().as_secs_f64(),
        summary: format!("N = {} of rank {} in {}", basis.len(), basis.rank, layout.basis().display()),
    })
}

pub fn stage_eim(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageOutcome> {
    let start = Instant::now();
    let count = tagged("eim", (|| {
        let snaps = SnapshotSet::load(&layout.snapshots())?;
        let mut count = 0;
        if cfg.case == CaseKind::Testcase1d {
            cfg.validate()?;
            let provider = logistic_provider(cfg)?;
            let weights = provider.space().quadrature_weights();
            let ms = cfg.m_values(0);
            let size = ms.iter().max().copied().unwrap_or(0) + cfg.p;
            for &l in &cfg.l_list {
                let map = nearest_parameters(&snaps.parameters, l)?;
                let set = taylor_snapshots(snaps.snapshots(), snaps.tags(), &map, provider.nonlinearity())?;
                let (modes, eigenvalues) = pod_modes(&set, &weights, size, POOL_RANK_TOLERANCE)?;
                for &m in &ms {
                    let sys =
                        eim_from_modes(&set.name, modes.columns(0, m + cfg.p).into_owned(), eigenvalues.clone(), m, cfg.p)?;
                    sys.save(&layout.eim(l, m).join("reaction"), provider.space().n_quadrature_per_cell())?;
                    count += 1;
                }
            }
        } else {
            let case = PdeCase::new(cfg)?;
            for &l in &cfg.l_list {
                let (systems, _, _) = case.systems(&snaps, l)?;
                for (m, s) in &systems {
                    save_systems(s, &layout.eim(l, *m), case.space.n_quadrature_per_cell())?;
                    count += 1;
                }
            }
        }
        Ok(count)
    })())?;
    Ok(StageOutcome {
        stage: "eim",
        seconds: start.elapsed().as_secs_f64(),
        summary: format!("{count} interpolation system sets under {}", layout.root.join("eim").display()),
    })
}

pub fn stage_offline(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageOutcome> {
    pde_only(cfg, "offline")?;
    let start = Instant::now();
    let count = tagged("offline", (|| {
        let case = PdeCase::new(cfg)?;
        let basis = ReducedBasis::load(&layout.basis())?;
        let mut count = 0;
        for &n in &cfg.n_list {
            let basis_n = basis.truncate(n)?;
            InitialProjector::new(&case.space, &basis_n)?.save(&layout.initial(n))?;
            for m in cfg.m_values(n) {
                for &l in &cfg.l_list {
                    let systems = load_systems(&case.problem, &layout.eim(l, m))?;
                    offline_assemble(&case.space, &case.problem, &basis_n, &systems)?.save(&layout.rom(n, m, l))?;
                    count += 1;
                }
            }
        }
        Ok(count)
    })())?;
    Ok(StageOutcome {
        stage: "offline",
        seconds: start.elapsed().as_secs_f64(),
        summary: format!("{count} reduced models under {}", layout.root.join("rom").display()),
    })
}

/// Solves every stored reduced model over the test sample from the
/// persisted operators alone and writes `online.csv`.
pub fn stage_online(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageOutcome> {
    pde_only(cfg, "online")?;
    let start = Instant::now();
    let rows = tagged("online", (|| {
        cfg.validate()?;
        let problem = cfg.problem()?;
        let grid = cfg.time_grid()?;
        let test = cfg.test_sample();
        let mut csv = String::from("n,m,l,mu,online_time,newton_iterations,final_output\n");
        let mut rows = 0;
        for &n in &cfg.n_list {
            let projector = InitialProjector::load(&layout.initial(n))?;
            for m in cfg.m_values(n) {
                for &l in &cfg.l_list {
                    let ops = RomOperators::load(&layout.rom(n, m, l))?;
                    for &mu in &test {
                        let a0 = projector.project(&problem, &[mu]);
                        let (traj, time) = timed_online(&ops, &problem, mu, &grid, &a0, &cfg.newton, cfg.timing_repeats)?;
                        let _ = writeln!(
                            csv,
                            "{n},{m},{l},{mu:e},{time:e},{:e},{:e}",
                            traj.mean_newton_iterations(),
                            traj.outputs.last().copied().unwrap_or(0.0)
                        );
                        rows += 1;
                    }
                }
            }
        }
        store::atomic_write(&layout.root.join("online.csv"), csv.as_bytes())?;
        Ok(rows)
    })())?;
    Ok(StageOutcome {
        stage: "online",
        seconds: start.elapsed().as_secs_f64(),
        summary: format!("{rows} reduced trajectories in {}", layout.root.join("online.csv").display()),
    })
}

fn timed_online(
    ops: &RomOperators,
    problem: &ProblemDef,
    mu: f64,
    grid: &TimeGrid,
    a0: &DVector<f64>,
    newton: &NewtonConfig,
    repeats: usize,
) -> Result<(Trajectory, f64)> {
    let mut times = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats {
        let traj = online_solve(ops, problem, &[mu], grid, a0, newton)?;
        times.push(traj.wall_time);
        last = Some(traj);
    }
    Ok((last.expect("at least one repeat"), median(times)))
}

/// Per-parameter error and timing accumulators of one reduced model.
#[derive(Default)]
struct Sweep {
    field: Vec<f64>,
    output: Vec<f64>,
    max_field: f64,
    newton: Vec<f64>,
    online: f64,
}

impl Sweep {
    fn add(&mut self, fom: &Trajectory, rom: &Trajectory, time: f64, basis: &ReducedBasis, case: &PdeCase) -> Result<()> {
        let e = compare_errors(fom, rom, basis, case.fom.mass())?;
        self.field.push(e.mean_field());
        self.output.push(e.mean_output());
        self.max_field = self.max_field.max(e.max_field());
        self.newton.push(rom.mean_newton_iterations());
        self.online += time;
        Ok(())
    }

    fn row(self, method: Method, n: usize, ml: Option<(usize, String, usize)>, offline: f64, fom_time: f64) -> RomRow {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let (m, m_label, l) = match ml {
            Some((m, label, l)) => (Some(m), Some(label), Some(l)),
            None => (None, None, None),
        };
        RomRow {
            method,
            n,
            m,
            m_label,
            l,
            field_error: mean(&self.field),
            output_error: mean(&self.output),
            max_field_error: self.max_field,
            newton_iterations: mean(&self.newton),
            offline_time: offline,
            online_time: self.online,
            speedup: fom_time / self.online.max(f64::MIN_POSITIVE),
        }
    }
}

/// Full pipeline: full-order training sweep, POD, interpolation systems,
/// offline assembly, online and reference sweeps over the test sample,
/// tables and optional field dumps. Artifacts land under `out`; a failing
/// stage aborts with its tag and leaves earlier artifacts in place.
pub fn run_case(cfg: &ExperimentConfig, out: &Path) -> Result<BenchReport> {
    tagged("config", cfg.validate())?;
    std::fs::create_dir_all(out)?;
    store::write_json(&out.join("config.json"), cfg)?;
    let report = match cfg.case {
        CaseKind::Testcase1d => run_study(cfg, out)?,
        _ => run_pde(cfg, out)?,
    };
    tagged("report", report.validate())?;
    tagged("report", emit_tables(&report, out, &[TableFormat::Csv, TableFormat::Json, TableFormat::Long]))?;
    Ok(report)
}

fn run_study(cfg: &ExperimentConfig, out: &Path) -> Result<BenchReport> {
    let layout = Layout::new(out);
    let mut report = BenchReport::new(cfg.case.name());
    let provider = tagged("fom", logistic_provider(cfg))?;
    let start = Instant::now();
    let snaps = tagged("fom", provider.snapshots(&cfg.training))?;
    tagged("fom", snaps.save(&layout.snapshots()))?;
    report.stage_times.insert("fom".into(), start.elapsed().as_secs_f64());

    let test = cfg.test_sample();
    let start = Instant::now();
    let study = tagged(
        "eim",
        evaluate_interpolation_study(&provider, &cfg.training, &test, &cfg.m_values(0), &cfg.l_list, cfg.p, POOL_RANK_TOLERANCE),
    )?;
    report.stage_times.insert("eim".into(), start.elapsed().as_secs_f64());
    report.dofs = provider.space().n_quadrature();
    report.quadrature_points = provider.space().n_quadrature();
    report.steps = cfg.grid.steps;
    report.final_time = cfg.grid.final_time;
    report.training = cfg.training.clone();
    report.test = test;
    report.study = study.rows;
    Ok(report)
}

fn run_pde(cfg: &ExperimentConfig, out: &Path) -> Result<BenchReport> {
    let layout = Layout::new(out);
    let case = tagged("fom", PdeCase::new(cfg))?;
    let mut report = BenchReport::new(cfg.case.name());
    report.dofs = case.space.n_dofs();
    report.quadrature_points = case.space.n_quadrature();
    report.steps = cfg.grid.steps;
    report.final_time = cfg.grid.final_time;
    report.training = cfg.training.clone();
    let test = cfg.test_sample();
    report.test = test.clone();
    let per_cell = case.space.n_quadrature_per_cell();

    info!("{}: {} dofs, training sweep", cfg.case.name(), case.space.n_dofs());
    let (snaps, harvest_time) = tagged("fom", case.harvest())?;
    tagged("fom", snaps.save(&layout.snapshots()))?;
    report.stage_times.insert("fom".into(), harvest_time);

    let (basis, pod_time) = tagged("pod", case.basis(&snaps))?;
    tagged("pod", basis.save(&layout.basis()))?;
    report.pod_rank = Some(basis.rank);
    report.stage_times.insert("pod".into(), pod_time);

    let start = Instant::now();
    let mut by_l = BTreeMap::new();
    for &l in &cfg.l_list {
        let (systems, pool_time, select) = tagged("eim", case.systems(&snaps, l))?;
        for (m, s) in &systems {
            tagged("eim", save_systems(s, &layout.eim(l, *m), per_cell))?;
        }
        by_l.insert(l, (systems, pool_time, select));
    }
    report.stage_times.insert("eim".into(), start.elapsed().as_secs_f64());
    drop(snaps);

    let start = Instant::now();
    let mut models = BTreeMap::new();
    let mut projectors = BTreeMap::new();
    for &n in &cfg.n_list {
        let basis_n = tagged("offline", basis.truncate(n))?;
        let projector = tagged("offline", InitialProjector::new(&case.space, &basis_n))?;
        tagged("offline", projector.save(&layout.initial(n)))?;
        for m in cfg.m_values(n) {
            for &l in &cfg.l_list {
                let (systems, pool_time, select) = &by_l[&l];
                let t = Instant::now();
                let ops = tagged("offline", offline_assemble(&case.space, &case.problem, &basis_n, &systems[&m]))?;
                let offline = harvest_time + pod_time + pool_time + select[&m] + t.elapsed().as_secs_f64();
                tagged("offline", ops.save(&layout.rom(n, m, l)))?;
                models.insert((n, m, l), (ops, offline));
            }
        }
        projectors.insert(n, (basis_n, projector));
    }
    report.stage_times.insert("offline".into(), start.elapsed().as_secs_f64());

    // full-order reference sweep over the test sample
    let start = Instant::now();
    let fom_runs = tagged(
        "fom",
        test.iter()
            .map(|&mu| case.fom.solve(&[mu], &case.grid, &cfg.newton))
            .collect::<Result<Vec<_>>>(),
    )?;
    let fom_time: f64 = fom_runs.iter().map(|t| t.wall_time).sum();
    report.fom_time = Some(fom_time);
    report.fom_newton_iterations =
        Some(fom_runs.iter().map(Trajectory::mean_newton_iterations).sum::<f64>() / fom_runs.len() as f64);
    *report.stage_times.entry("fom".into()).or_default() += start.elapsed().as_secs_f64();

    let start = Instant::now();
    for &n in &cfg.n_list {
        let (basis_n, projector) = &projectors[&n];
        for m in cfg.m_values(n) {
            for &l in &cfg.l_list {
                let (ops, offline) = &models[&(n, m, l)];
                let mut sweep = Sweep::default();
                for (fom_traj, &mu) in fom_runs.iter().zip(&test) {
                    let a0 = projector.project(&case.problem, &[mu]);
                    let (traj, time) = tagged(
                        "online",
                        timed_online(ops, &case.problem, mu, &case.grid, &a0, &cfg.newton, cfg.timing_repeats),
                    )?;
                    tagged("online", sweep.add(fom_traj, &traj, time, basis_n, &case))?;
                }
                let label = cfg.m_rule.label(n, m);
                let row = sweep.row(Method::FoeimGn, n, Some((m, label, l)), *offline, fom_time);
                info!("FOEIM-GN N={n} M={m} L={l}: error {:.3e}, speedup {:.1}", row.field_error, row.speedup);
                report.rom.push(row);
            }
        }
        if cfg.reference {
            let t = Instant::now();
            let gn = tagged("online", GalerkinReference::new(&case.space, &case.problem, basis_n))?;
            let offline = harvest_time + pod_time + t.elapsed().as_secs_f64();
            let mut sweep = Sweep::default();
            for (fom_traj, &mu) in fom_runs.iter().zip(&test) {
                let a0 = projector.project(&case.problem, &[mu]);
                let mut times = Vec::new();
                let mut last = None;
                for _ in 0..cfg.timing_repeats {
                    let traj = tagged("online", gn.solve(&[mu], &case.grid, &a0, &cfg.newton))?;
                    times.push(traj.wall_time);
                    last = Some(traj);
                }
                let traj = last.expect("at least one repeat");
                tagged("online", sweep.add(fom_traj, &traj, median(times), basis_n, &case))?;
            }
            let row = sweep.row(Method::Gn, n, None, offline, fom_time);
            info!("GN N={n}: error {:.3e}, speedup {:.1}", row.field_error, row.speedup);
            report.rom.push(row);
        }
    }
    report.stage_times.insert("online".into(), start.elapsed().as_secs_f64());

    if let Some(d) = &cfg.dump {
        tagged("dump", (|| {
            let (basis_n, projector) = &projectors[&d.n];
            let (ops, _) = &models[&(d.n, d.m, d.l)];
            let a0 = projector.project(&case.problem, &[d.parameter]);
            let rom = online_solve(ops, &case.problem, &[d.parameter], &case.grid, &a0, &cfg.newton)?;
            let lifted = Trajectory {
                states: rom.states.iter().map(|a| basis_n.lift(a)).collect::<Result<_>>()?,
                ..rom
            };
            let dir = layout.fields(d.n, d.m, d.l, d.parameter);
            snapshot_field_dump(&case.space, &lifted, &d.steps, &dir)?;
            if cfg.case == CaseKind::AllenCahn {
                let (_, csv) = interface_table(&case.space, &lifted)?;
                store::atomic_write(&dir.join("interface.csv"), csv.as_bytes())?;
            }
            Ok(())
        })())?;
    }
    Ok(report)
}
