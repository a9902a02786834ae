use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::newton::{self, NonlinearPart};
use super::offline::{InterpolatedTerm, RomOperators};
use super::RomStep;
use crate::error::{Error, Result};
use crate::fom::{NewtonConfig, Trajectory};
use crate::nonlinear::Nonlinearity;
use crate::problem::{ProblemDef, TimeGrid};

fn check_terms(ops: &RomOperators, problem: &ProblemDef) -> Result<()> {
    if problem.reaction.is_some() != ops.reaction.is_some() || problem.flux.len() != ops.flux.len() {
        return Err(Error::DimensionMismatch(format!(
            "reduced operators do not carry the nonlinear terms of {}",
            problem.name
        )));
    }
    Ok(())
}

/// Adds `operator · h(trace α)` and, if requested, `operator · diag(h') · trace`.
fn add_term(
    term: &InterpolatedTerm,
    h: &Nonlinearity,
    alpha: &DVector<f64>,
    out: &mut DVector<f64>,
    jac: Option<&mut DMatrix<f64>>,
) -> Result<()> {
    let u = &term.trace * alpha;
    let mut b = DVector::zeros(u.len());
    for (m, &v) in u.iter().enumerate() {
        b[m] = h.value(v);
        if !b[m].is_finite() {
            return Err(Error::NonFinite {
                point: term.points[m],
                value: v,
            });
        }
    }
    out.gemv(1.0, &term.operator, &b, 1.0);
    if let Some(jac) = jac {
        let mut scaled = term.trace.clone();
        for (m, mut row) in scaled.row_iter_mut().enumerate() {
            let d = h.derivative(u[m]);
            if !d.is_finite() {
                return Err(Error::NonFinite {
                    point: term.points[m],
                    value: u[m],
                });
            }
            row *= d;
        }
        jac.gemm(1.0, &term.operator, &scaled, 1.0);
    }
    Ok(())
}

fn nonlinear_part<'a>(ops: &'a RomOperators, problem: &'a ProblemDef) -> Box<NonlinearPart<'a>> {
    Box::new(move |alpha: &DVector<f64>, want_jac: bool| {
        let n = alpha.len();
        let mut out = DVector::zeros(n);
        let mut jac = want_jac.then(|| DMatrix::zeros(n, n));
        if let (Some(term), Some(g)) = (&ops.reaction, &problem.reaction) {
            add_term(term, g, alpha, &mut out, jac.as_mut())?;
        }
        for (term, f) in ops.flux.iter().zip(&problem.flux) {
            add_term(term, f, alpha, &mut out, jac.as_mut())?;
        }
        Ok((out, jac))
    })
}

/// Hyperreduced residual
/// `ρ(α) = (M_N/Δt + Σ Θ^q A^q_N) α + G b(α) + Σ_d F^d c^d(α) − l_N − (M_N/Δt) α_prev`
/// and its Jacobian.
pub fn online_residual(
    ops: &RomOperators,
    problem: &ProblemDef,
    mu: &[f64],
    dt: f64,
    alpha: &DVector<f64>,
    alpha_prev: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_terms(ops, problem)?;
    let k = ops.implicit_operator(&problem.thetas(mu), dt)?;
    let (nl, jn) = nonlinear_part(ops, problem)(alpha, true)?;
    let r = &k * alpha + nl - &ops.source - &ops.mass * alpha_prev / dt;
    Ok((r, k + jn.expect("Jacobian requested")))
}

/// One Backward-Euler step of the hyperreduced model from `α_prev`.
pub fn online_step(
    ops: &RomOperators,
    problem: &ProblemDef,
    mu: &[f64],
    dt: f64,
    alpha_prev: &DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<RomStep> {
    check_terms(ops, problem)?;
    check_len(ops, alpha_prev)?;
    let k = ops.implicit_operator(&problem.thetas(mu), dt)?;
    step_with(ops, problem, &k, dt, alpha_prev, cfg)
}

fn check_len(ops: &RomOperators, alpha: &DVector<f64>) -> Result<()> {
    if alpha.len() != ops.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} reduced coefficients for N = {}",
            alpha.len(),
            ops.n()
        )));
    }
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite reduced state".into()));
    }
    Ok(())
}

fn step_with(
    ops: &RomOperators,
    problem: &ProblemDef,
    k: &DMatrix<f64>,
    dt: f64,
    alpha_prev: &DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<RomStep> {
    let c = &ops.source + &ops.mass * alpha_prev / dt;
    let nl = problem.has_nonlinearity().then(|| nonlinear_part(ops, problem));
    newton::solve(k, &c, alpha_prev, nl.as_deref(), cfg)
}

/// Time series of the hyperreduced model from `α(t_0) = alpha0`. The wall
/// time covers the time loop only.
pub fn online_solve(
    ops: &RomOperators,
    problem: &ProblemDef,
    mu: &[f64],
    grid: &TimeGrid,
    alpha0: &DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<Trajectory> {
    check_terms(ops, problem)?;
    check_len(ops, alpha0)?;
    problem.check_parameter(mu)?;
    let start = Instant::now();
    let dt = grid.dt();
    let k = ops.implicit_operator(&problem.thetas(mu), dt)?;
    let mut states = Vec::with_capacity(grid.steps + 1);
    let mut iters = Vec::with_capacity(grid.steps);
    states.push(alpha0.clone());
    for i in 1..=grid.steps {
        let out = step_with(ops, problem, &k, dt, &states[i - 1], cfg).map_err(|e| e.at_step(i))?;
        iters.push(out.iterations);
        states.push(out.alpha);
    }
    let wall_time = start.elapsed().as_secs_f64();
    Ok(Trajectory {
        parameter: mu.to_vec(),
        times: (0..=grid.steps).map(|i| grid.time(i)).collect(),
        outputs: states.iter().map(|a| ops.output_of(a)).collect(),
        states,
        newton_iterations: iters,
        wall_time,
    })
}
