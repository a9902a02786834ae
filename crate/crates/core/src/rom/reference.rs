use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::newton::{self, NonlinearPart};
use super::RomStep;
use crate::error::{Error, Result};
use crate::fem::{assemble_linear, FeSpace};
use crate::fom::{NewtonConfig, Trajectory};
use crate::pod::ReducedBasis;
use crate::problem::{ProblemDef, TimeGrid};

/// Galerkin projection of the full model onto a reduced basis with
/// nonlinear terms integrated over every quadrature point. Online cost
/// grows with the number of quadrature points; it serves as the accuracy
/// reference for the hyperreduced model.
#[derive(Debug, Clone)]
pub struct GalerkinReference {
    problem: ProblemDef,
    /// `Φ(x_q)`, `n_q × N`.
    values: DMatrix<f64>,
    /// `W Φ(x_q)`
    weighted_values: DMatrix<f64>,
    /// `W ∂_d Φ(x_q)` per axis.
    weighted_gradients: Vec<DMatrix<f64>>,
    pub mass: DMatrix<f64>,
    pub affine: Vec<DMatrix<f64>>,
    pub source: DVector<f64>,
    pub output: DVector<f64>,
}

fn weighted(mut a: DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    for mut col in a.column_iter_mut() {
        col.component_mul_assign(w);
    }
    a
}

impl GalerkinReference {
    pub fn new(space: &FeSpace, problem: &ProblemDef, basis: &ReducedBasis) -> Result<Self> {
        if basis.dim() != space.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "basis vectors of length {} for {} free dofs",
                basis.dim(),
                space.n_dofs()
            )));
        }
        let phi = &basis.vectors;
        let ops = assemble_linear(space);
        let w = space.quadrature_weights();
        let values = space.value_operator().mul_dense(phi);
        let weighted_gradients = if problem.flux.is_empty() {
            Vec::new()
        } else {
            (0..space.dim())
                .map(|d| weighted(space.gradient_operator(d).mul_dense(phi), &w))
                .collect()
        };
        Ok(Self {
            mass: phi.tr_mul(&ops.mass.mul_dense(phi)),
            affine: problem
                .affine
                .iter()
                .map(|t| phi.tr_mul(&problem.operator(&ops, t.form).mul_dense(phi)))
                .collect(),
            source: phi.tr_mul(&problem.source_vector(space)),
            output: phi.tr_mul(&problem.output_vector(space)),
            weighted_values: weighted(values.clone(), &w),
            values,
            weighted_gradients,
            problem: problem.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    pub fn problem(&self) -> &ProblemDef {
        &self.problem
    }

    fn implicit_operator(&self, mu: &[f64], dt: f64) -> DMatrix<f64> {
        let mut k = &self.mass / dt;
        for (a, t) in self.affine.iter().zip(self.problem.thetas(mu)) {
            k += a * t;
        }
        k
    }

    /// `g_N + f_N` and `E_N + D_N` by full quadrature.
    pub fn nonlinear(&self, alpha: &DVector<f64>, want_jac: bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        let n = self.n();
        let u = &self.values * alpha;
        let nq = u.len();
        let mut out = DVector::zeros(n);
        let mut jac = want_jac.then(|| DMatrix::zeros(n, n));
        let mut vals = DVector::zeros(nq);
        let mut ders = DVector::zeros(nq);
        let mut accumulate = |h: &crate::nonlinear::Nonlinearity, test: &DMatrix<f64>| -> Result<()> {
            for q in 0..nq {
                vals[q] = h.value(u[q]);
                ders[q] = if want_jac { h.derivative(u[q]) } else { 0.0 };
                if !vals[q].is_finite() || !ders[q].is_finite() {
                    return Err(Error::NonFinite { point: q, value: u[q] });
                }
            }
            out.gemv_tr(1.0, test, &vals, 1.0);
            if let Some(jac) = jac.as_mut() {
                let mut scaled = self.values.clone();
                for (q, mut row) in scaled.row_iter_mut().enumerate() {
                    row *= ders[q];
                }
                jac.gemm_tr(1.0, test, &scaled, 1.0);
            }
            Ok(())
        };
        if let Some(g) = &self.problem.reaction {
            accumulate(g, &self.weighted_values)?;
        }
        for (f, grads) in self.problem.flux.iter().zip(&self.weighted_gradients) {
            accumulate(f, grads)?;
        }
        Ok((out, jac))
    }

    /// `ρ_GN(α) = (M_N/Δt + Σ Θ^q A^q_N) α + g_N(α) + f_N(α) − l_N − (M_N/Δt) α_prev`
    /// and its Jacobian.
    pub fn residual(
        &self,
        mu: &[f64],
        dt: f64,
        alpha: &DVector<f64>,
        alpha_prev: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let k = self.implicit_operator(mu, dt);
        let (nl, jn) = self.nonlinear(alpha, true)?;
        let r = &k * alpha + nl - &self.source - &self.mass * alpha_prev / dt;
        Ok((r, k + jn.expect("Jacobian requested")))
    }

    pub fn step(&self, mu: &[f64], dt: f64, alpha_prev: &DVector<f64>, cfg: &NewtonConfig) -> Result<RomStep> {
        let k = self.implicit_operator(mu, dt);
        self.step_with(&k, dt, alpha_prev, cfg)
    }

    fn step_with(&self, k: &DMatrix<f64>, dt: f64, alpha_prev: &DVector<f64>, cfg: &NewtonConfig) -> Result<RomStep> {
        if alpha_prev.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} reduced coefficients for N = {}",
                alpha_prev.len(),
                self.n()
            )));
        }
        let c = &self.source + &self.mass * alpha_prev / dt;
        let nl: Option<Box<NonlinearPart<'_>>> = self
            .problem
            .has_nonlinearity()
            .then(|| Box::new(|a: &DVector<f64>, j: bool| self.nonlinear(a, j)) as Box<NonlinearPart<'_>>);
        newton::solve(k, &c, alpha_prev, nl.as_deref(), cfg)
    }

    pub fn solve(&self, mu: &[f64], grid: &TimeGrid, alpha0: &DVector<f64>, cfg: &NewtonConfig) -> Result<Trajectory> {
        self.problem.check_parameter(mu)?;
        let start = Instant::now();
        let dt = grid.dt();
        let k = self.implicit_operator(mu, dt);
        let mut states = Vec::with_capacity(grid.steps + 1);
        let mut iters = Vec::with_capacity(grid.steps);
        states.push(alpha0.clone());
        for i in 1..=grid.steps {
            let out = self.step_with(&k, dt, &states[i - 1], cfg).map_err(|e| e.at_step(i))?;
            iters.push(out.iterations);
            states.push(out.alpha);
        }
        let wall_time = start.elapsed().as_secs_f64();
        Ok(Trajectory {
            parameter: mu.to_vec(),
            times: (0..=grid.steps).map(|i| grid.time(i)).collect(),
            outputs: states.iter().map(|a| self.output.dot(a)).collect(),
            states,
            newton_iterations: iters,
            wall_time,
        })
    }
}
