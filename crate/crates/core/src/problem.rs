//! Problem definitions: affine linear forms, nonlinear integrands, initial
//! data and the built-in benchmark problems.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{BcKind, FeSpace, LinearOperators};
use crate::linalg::CsrMatrix;
use crate::nonlinear::Nonlinearity;

pub type ParamFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SpatialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `u₀(x, µ)`
pub type InitialFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Which parameter-independent bilinear form an affine term multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearForm {
    /// `∫ w v`
    Mass,
    /// `∫ ∇w · ∇v`
    Stiffness,
}

/// `Θ^q(µ) a^q(w, v)`
#[derive(Clone)]
pub struct AffineTerm {
    pub theta: ParamFn,
    pub form: LinearForm,
}

impl AffineTerm {
    pub fn new(form: LinearForm, theta: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            theta: Arc::new(theta),
            form,
        }
    }

    pub fn constant(form: LinearForm, value: f64) -> Self {
        Self::new(form, move |_| value)
    }
}

/// Weak-form ingredients of
/// `m(∂u/∂t, v) + Σ_q Θ^q(µ) a^q(u, v) + ∫ g(u) v + ∫ f(u)·∇v = ℓ(v)`.
///
/// The output functional is the domain average `∫ u / |Ω|`. Nonlinearities
/// do not depend on `µ`.
#[derive(Clone)]
pub struct ProblemDef {
    pub name: String,
    pub domain: Vec<(f64, f64)>,
    pub bc: BcKind,
    pub affine: Vec<AffineTerm>,
    pub reaction: Option<Nonlinearity>,
    /// One component per spatial axis, or empty.
    pub flux: Vec<Nonlinearity>,
    pub source: Option<SpatialFn>,
    pub initial: InitialFn,
    pub parameter_domain: Vec<(f64, f64)>,
}

impl fmt::Debug for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDef")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("bc", &self.bc)
            .field("affine_terms", &self.affine.len())
            .field("reaction", &self.reaction)
            .field("flux", &self.flux)
            .field("parameter_domain", &self.parameter_domain)
            .finish()
    }
}

impl ProblemDef {
    pub fn n_affine(&self) -> usize {
        self.affine.len()
    }

    pub fn thetas(&self, mu: &[f64]) -> Vec<f64> {
        self.affine.iter().map(|t| (t.theta)(mu)).collect()
    }

    pub fn has_nonlinearity(&self) -> bool {
        self.reaction.is_some() || !self.flux.is_empty()
    }

    pub fn check_parameter(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.parameter_domain.len() {
            return Err(Error::InvalidParameter(format!(
                "{} expects {} parameters, got {}",
                self.name,
                self.parameter_domain.len(),
                mu.len()
            )));
        }
        for (&m, &(a, b)) in mu.iter().zip(&self.parameter_domain) {
            let tol = 1e-12 * (b - a).abs().max(1.0);
            if !(m >= a - tol && m <= b + tol) {
                return Err(Error::InvalidParameter(format!(
                    "µ = {m} outside [{a}, {b}] for {}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn operator<'a>(&self, ops: &'a LinearOperators, form: LinearForm) -> &'a CsrMatrix {
        match form {
            LinearForm::Mass => &ops.mass,
            LinearForm::Stiffness => &ops.stiffness,
        }
    }

    /// `M + Δt Σ_q Θ^q(µ) A^q`
    pub fn implicit_operator(&self, ops: &LinearOperators, mu: &[f64], dt: f64) -> CsrMatrix {
        let mut k = ops.mass.clone();
        for term in &self.affine {
            k.add_scaled(dt * (term.theta)(mu), self.operator(ops, term.form));
        }
        k
    }

    /// `ℓ(φ_j)`
    pub fn source_vector(&self, space: &FeSpace) -> DVector<f64> {
        match &self.source {
            Some(s) => {
                let vals = crate::fem::sample_at_quadrature(space, |x| s(x));
                crate::fem::load_vector(space, &vals)
            }
            None => DVector::zeros(space.n_dofs()),
        }
    }

    /// `ℓ^O(φ_j) = ∫ φ_j / |Ω|`
    pub fn output_vector(&self, space: &FeSpace) -> DVector<f64> {
        let ones = vec![1.0; space.n_quadrature()];
        crate::fem::load_vector(space, &ones) / space.mesh().domain_measure()
    }

    /// Problem with the same physics but a different initial condition.
    pub fn with_initial(mut self, initial: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.initial = Arc::new(initial);
        self
    }
}

/// Uniform time grid `t_i = i T / I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub final_time: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time grid needs T > 0 and I >= 1 (T = {final_time}, I = {steps})"
            )));
        }
        Ok(Self { final_time, steps })
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.final_time
        } else {
            i as f64 * self.dt()
        }
    }
}

/// Two-phase flow with linear diffusion and a nonlinear convective flux,
/// `∂u/∂t − µ Δu + ∇·f(u) = 0` on `(-1.5, 1.5)²`, homogeneous Dirichlet,
/// `µ ∈ [0.03, 0.1]`. The weak convection term is `−∫ f(u)·∇v`.
pub fn buckley_leverett() -> ProblemDef {
    ProblemDef {
        name: "buckley_leverett".into(),
        domain: vec![(-1.5, 1.5), (-1.5, 1.5)],
        bc: BcKind::DirichletHomogeneous,
        affine: vec![AffineTerm::new(LinearForm::Stiffness, |mu| mu[0])],
        reaction: None,
        flux: vec![
            Nonlinearity::fractional_flow().scaled(-1.0),
            Nonlinearity::gravity_flow().scaled(-1.0),
        ],
        source: None,
        initial: Arc::new(|x, _| (-16.0 * (x[0] * x[0] + x[1] * x[1])).exp()),
        parameter_domain: vec![(0.03, 0.1)],
    }
}

/// Phase-field equation `∂u/∂t − Δu + (u³ − u)/ε^r = 0` on `(0, 1)²` with
/// homogeneous Neumann data and a star-shaped initial interface of mean
/// radius `µ ∈ [0.25, 0.35]`. The strong form has `r = 2`.
pub fn allen_cahn(epsilon: f64, reaction_exponent: i32) -> ProblemDef {
    let scale = epsilon.powi(reaction_exponent).recip();
    ProblemDef {
        name: "allen_cahn".into(),
        domain: vec![(0.0, 1.0), (0.0, 1.0)],
        bc: BcKind::NeumannHomogeneous,
        affine: vec![
            AffineTerm::constant(LinearForm::Stiffness, 1.0),
            AffineTerm::constant(LinearForm::Mass, -scale),
        ],
        reaction: Some(Nonlinearity::power(3).scaled(scale)),
        flux: Vec::new(),
        source: None,
        initial: Arc::new(move |x, mu| star_profile(x, mu[0], epsilon)),
        parameter_domain: vec![(0.25, 0.35)],
    }
}

/// `tanh((µ + 0.1 cos 6θ − r) / (√2 ε))` about the point `(0.5, 0.5)`.
pub fn star_profile(x: &[f64], mu: f64, epsilon: f64) -> f64 {
    let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
    let theta = dy.atan2(dx);
    let r = (dx * dx + dy * dy).sqrt();
    ((mu + 0.1 * (6.0 * theta).cos() - r) / (std::f64::consts::SQRT_2 * epsilon)).tanh()
}

/// Heat equation `∂u/∂t − Δu = 0`, used for linear reference checks.
pub fn heat(domain: Vec<(f64, f64)>, bc: BcKind) -> ProblemDef {
    ProblemDef {
        name: "heat".into(),
        domain,
        bc,
        affine: vec![AffineTerm::constant(LinearForm::Stiffness, 1.0)],
        reaction: None,
        flux: Vec::new(),
        source: None,
        initial: Arc::new(|_, _| 0.0),
        parameter_domain: vec![(0.0, 1.0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_endpoints() {
        let g = TimeGrid::new(0.02, 200).unwrap();
        assert_eq!(g.time(200), 0.02);
        assert!((g.dt() - 1e-4).abs() < 1e-18);
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(-1.0, 3).is_err());
    }

    #[test]
    fn parameter_domain_check() {
        let p = buckley_leverett();
        assert!(p.check_parameter(&[0.05]).is_ok());
        assert!(p.check_parameter(&[0.2]).is_err());
        assert!(p.check_parameter(&[0.05, 0.1]).is_err());
    }

    #[test]
    fn star_initial_condition_is_bounded() {
        for i in 0..50 {
            let x = [i as f64 / 49.0, 0.3];
            let v = star_profile(&x, 0.34, 0.015);
            assert!(v.abs() <= 1.0);
        }
        assert!(star_profile(&[0.5, 0.5], 0.3, 0.015) > 0.99);
        assert!(star_profile(&[0.0, 0.0], 0.3, 0.015) < -0.99);
    }
}
