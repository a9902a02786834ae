//! Full-order Backward-Euler finite element solver with Newton linearization.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_linear, assemble_nonlinear, project_l2, FeSpace, LinearOperators};
use crate::linalg::{CsrMatrix, SparseLu};
use crate::problem::{ProblemDef, TimeGrid};
use crate::snapshots::{Representation, SnapshotSet, SnapshotTag};

/// Newton stopping rule shared by the full and reduced solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Absolute residual 2-norm tolerance.
    pub tol_abs: f64,
    /// Tolerance relative to the residual of the initial guess.
    pub tol_rel: f64,
    /// Increment 2-norm tolerance used by the reduced solvers.
    pub tol_step: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol_abs: 1e-10,
            tol_rel: 1e-8,
            tol_step: 1e-10,
            max_iter: 50,
        }
    }
}

/// Outcome of one implicit step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: DVector<f64>,
    /// Number of linear solves performed.
    pub iterations: usize,
    /// Residual 2-norm before each solve and after the last one.
    pub residual_history: Vec<f64>,
}

/// States `t_0 ... t_I`, either finite element coefficients or reduced
/// coefficients, with the output time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub parameter: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<f64>,
    pub newton_iterations: Vec<usize>,
    pub wall_time: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn mean_newton_iterations(&self) -> f64 {
        if self.newton_iterations.is_empty() {
            0.0
        } else {
            self.newton_iterations.iter().sum::<usize>() as f64 / self.newton_iterations.len() as f64
        }
    }
}

/// Finite element model of one problem on one space, with the
/// parameter-independent operators assembled once.
#[derive(Debug, Clone)]
pub struct FullOrderModel {
    space: FeSpace,
    problem: ProblemDef,
    ops: LinearOperators,
    source: DVector<f64>,
    output: DVector<f64>,
}

impl FullOrderModel {
    pub fn new(space: FeSpace, problem: ProblemDef) -> Result<Self> {
        if space.bc() != problem.bc {
            return Err(Error::Config(format!(
                "space boundary condition {:?} does not match problem {}",
                space.bc(),
                problem.name
            )));
        }
        if space.dim() != problem.domain.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}D space for a {}D problem",
                space.dim(),
                problem.domain.len()
            )));
        }
        let ops = assemble_linear(&space);
        let source = problem.source_vector(&space);
        let output = problem.output_vector(&space);
        Ok(Self {
            space,
            problem,
            ops,
            source,
            output,
        })
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn problem(&self) -> &ProblemDef {
        &self.problem
    }

    pub fn operators(&self) -> &LinearOperators {
        &self.ops
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.ops.mass
    }

    pub fn source_vector(&self) -> &DVector<f64> {
        &self.source
    }

    pub fn output_vector(&self) -> &DVector<f64> {
        &self.output
    }

    /// `ℓ^O(u)`
    pub fn output(&self, u: &DVector<f64>) -> f64 {
        self.output.dot(u)
    }

    /// L2 projection of `u₀(·, µ)`.
    pub fn initial_state(&self, mu: &[f64]) -> Result<DVector<f64>> {
        let init = self.problem.initial.clone();
        project_l2(&self.space, &self.ops.mass, |x| init(x, mu))
    }

    /// `R(u) = K u + Δt (g(u) + f(u)) − Δt ℓ − M u_prev` where
    /// `K = M + Δt Σ Θ^q A^q`.
    pub fn residual(
        &self,
        implicit: &CsrMatrix,
        dt: f64,
        u: &DVector<f64>,
        u_prev: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let mut r = implicit.mul_vec(u) - self.ops.mass.mul_vec(u_prev) - &self.source * dt;
        if self.problem.has_nonlinearity() {
            let nl = assemble_nonlinear(
                &self.space,
                u,
                self.problem.reaction.as_ref(),
                &self.problem.flux,
                false,
            )?;
            r += (nl.reaction + nl.flux) * dt;
        }
        Ok(r)
    }

    fn residual_and_jacobian(
        &self,
        implicit: &CsrMatrix,
        dt: f64,
        u: &DVector<f64>,
        u_prev: &DVector<f64>,
    ) -> Result<(DVector<f64>, CsrMatrix)> {
        let mut r = implicit.mul_vec(u) - self.ops.mass.mul_vec(u_prev) - &self.source * dt;
        let mut jac = implicit.clone();
        if self.problem.has_nonlinearity() {
            let nl = assemble_nonlinear(
                &self.space,
                u,
                self.problem.reaction.as_ref(),
                &self.problem.flux,
                true,
            )?;
            r += (nl.reaction + nl.flux) * dt;
            if let Some(e) = &nl.reaction_jacobian {
                jac.add_scaled(dt, e);
            }
            if let Some(d) = &nl.flux_jacobian {
                jac.add_scaled(dt, d);
            }
        }
        Ok((r, jac))
    }

    /// Newton Jacobian `K + Δt (E + D)` at `u`.
    pub fn jacobian(&self, implicit: &CsrMatrix, dt: f64, u: &DVector<f64>) -> Result<CsrMatrix> {
        Ok(self.residual_and_jacobian(implicit, dt, u, u)?.1)
    }

    /// One Backward-Euler step from `u_prev`, Newton warm-started at `u_prev`.
    pub fn step(&self, mu: &[f64], dt: f64, u_prev: &DVector<f64>, cfg: &NewtonConfig) -> Result<StepOutcome> {
        let implicit = self.problem.implicit_operator(&self.ops, mu, dt);
        self.step_with(&implicit, None, dt, u_prev, cfg)
    }

    fn step_with(
        &self,
        implicit: &CsrMatrix,
        linear_lu: Option<&SparseLu>,
        dt: f64,
        u_prev: &DVector<f64>,
        cfg: &NewtonConfig,
    ) -> Result<StepOutcome> {
        self.space.check_coeffs(u_prev)?;
        let mut u = u_prev.clone();
        let mut history = Vec::new();
        let mut tol = f64::NAN;
        for it in 0..=cfg.max_iter {
            let (r, jac) = if linear_lu.is_some() {
                (self.residual(implicit, dt, &u, u_prev)?, None)
            } else {
                let (r, j) = self.residual_and_jacobian(implicit, dt, &u, u_prev)?;
                (r, Some(j))
            };
            let norm = r.norm();
            history.push(norm);
            if !norm.is_finite() {
                break;
            }
            if it == 0 {
                tol = cfg.tol_abs + cfg.tol_rel * norm;
            }
            if norm <= tol {
                return Ok(StepOutcome {
                    state: u,
                    iterations: it,
                    residual_history: history,
                });
            }
            if it == cfg.max_iter {
                break;
            }
            let delta = match (linear_lu, jac) {
                (Some(lu), _) => lu.solve(&r)?,
                (None, Some(j)) => j.solve(&r)?,
                (None, None) => unreachable!(),
            };
            u -= delta;
        }
        Err(Error::NewtonDiverged {
            iterations: history.len().saturating_sub(1),
            history,
        })
    }

    /// Full trajectory from the projected initial condition.
    pub fn solve(&self, mu: &[f64], grid: &TimeGrid, cfg: &NewtonConfig) -> Result<Trajectory> {
        self.problem.check_parameter(mu)?;
        let start = Instant::now();
        let dt = grid.dt();
        let implicit = self.problem.implicit_operator(&self.ops, mu, dt);
        let linear_lu = if self.problem.has_nonlinearity() {
            None
        } else {
            Some(implicit.lu()?)
        };
        let u0 = self.initial_state(mu)?;
        let mut states = Vec::with_capacity(grid.steps + 1);
        let mut outputs = Vec::with_capacity(grid.steps + 1);
        let mut iters = Vec::with_capacity(grid.steps);
        outputs.push(self.output(&u0));
        states.push(u0);
        for i in 1..=grid.steps {
            let out = self
                .step_with(&implicit, linear_lu.as_ref(), dt, &states[i - 1], cfg)
                .map_err(|e| e.at_step(i))?;
            outputs.push(self.output(&out.state));
            iters.push(out.iterations);
            states.push(out.state);
        }
        Ok(Trajectory {
            parameter: mu.to_vec(),
            times: (0..=grid.steps).map(|i| grid.time(i)).collect(),
            states,
            outputs,
            newton_iterations: iters,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }

    /// Solves every parameter of the training sample and collects the
    /// `K = I J` snapshots `u(t_i, µ_j)`, `i ≥ 1`, ordered with `j` outer.
    /// The `t_0` states are kept separately.
    pub fn harvest(&self, sample: &[Vec<f64>], grid: &TimeGrid, cfg: &NewtonConfig) -> Result<SnapshotSet> {
        use rayon::prelude::*;
        if sample.is_empty() {
            return Err(Error::InvalidParameter("empty parameter sample".into()));
        }
        let trajectories: Vec<Result<Trajectory>> =
            sample.par_iter().map(|mu| self.solve(mu, grid, cfg)).collect();
        let mut set = SnapshotSet::new(Representation::FeCoefficients, sample.to_vec(), *grid);
        for (j, traj) in trajectories.into_iter().enumerate() {
            let traj = traj.map_err(|e| match e {
                Error::Step { step, source } => Error::Snapshot { i: step, j, source },
                other => Error::Snapshot {
                    i: 0,
                    j,
                    source: Box::new(other),
                },
            })?;
            let mut states = traj.states.into_iter();
            set.initial.push(states.next().expect("trajectory has t0"));
            for (i, s) in states.enumerate() {
                set.push(SnapshotTag { i: i + 1, j }, s);
            }
        }
        Ok(set)
    }
}
