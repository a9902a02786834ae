use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_linear, FeSpace};
use crate::foeim::EimSystem;
use crate::pod::ReducedBasis;
use crate::problem::ProblemDef;
use crate::store;

/// Interpolation systems for every nonlinear integrand of a problem: one
/// for the reaction `g` and one per flux component `f^d`.
#[derive(Debug, Clone, Default)]
pub struct NonlinearSystems {
    pub reaction: Option<EimSystem>,
    pub flux: Vec<EimSystem>,
}

/// A hyperreduced nonlinear term `operator · h(trace · α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedTerm {
    /// Quadrature indices of the interpolation points.
    pub points: Vec<usize>,
    /// `Φ(x_m)`, `M × N`.
    pub trace: DMatrix<f64>,
    /// `H_jm = ∫ ψ_m v_j` with `v_j = φ_j` (reaction) or `∂_d φ_j` (flux).
    pub projection: DMatrix<f64>,
    /// `H B_M⁻¹`, `N × M`.
    pub operator: DMatrix<f64>,
}

impl InterpolatedTerm {
    pub fn m(&self) -> usize {
        self.points.len()
    }

    fn build(system: &EimSystem, values: &DMatrix<f64>, test: &DMatrix<f64>, weights: &DVector<f64>) -> Result<Self> {
        let m = system.m();
        let psi = system.basis();
        let mut wpsi = psi.into_owned();
        for mut col in wpsi.column_iter_mut() {
            col.component_mul_assign(weights);
        }
        let projection = test.tr_mul(&wpsi);
        // H B⁻¹ = (B⁻ᵀ Hᵀ)ᵀ and B is unit lower triangular
        let operator = system
            .b_matrix()
            .transpose()
            .solve_upper_triangular(&projection.transpose())
            .ok_or(Error::SingularInterpolation {
                condition: system.condition,
            })?
            .transpose();
        let points = system.points().to_vec();
        let trace = DMatrix::from_fn(m, values.ncols(), |r, c| values[(points[r], c)]);
        Ok(Self {
            points,
            trace,
            projection,
            operator,
        })
    }
}

/// Parameter-independent reduced operators. Nothing here refers to the
/// mesh or the finite element space.
#[derive(Debug, Clone, PartialEq)]
pub struct RomOperators {
    /// `M_N`
    pub mass: DMatrix<f64>,
    /// `A^q_N`, in the order of the problem's affine terms.
    pub affine: Vec<DMatrix<f64>>,
    /// `l_N`
    pub source: DVector<f64>,
    /// `l^O_N`
    pub output: DVector<f64>,
    pub reaction: Option<InterpolatedTerm>,
    pub flux: Vec<InterpolatedTerm>,
}

#[derive(Serialize, Deserialize)]
struct TermManifest {
    m: usize,
    points: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RomManifest {
    n: usize,
    q: usize,
    reaction: Option<TermManifest>,
    flux: Vec<TermManifest>,
}

/// Projects the linear forms onto the basis and combines each
/// interpolation system with the basis into `G = H B⁻¹` / `F^d`.
pub fn offline_assemble(
    space: &FeSpace,
    problem: &ProblemDef,
    basis: &ReducedBasis,
    systems: &NonlinearSystems,
) -> Result<RomOperators> {
    if basis.dim() != space.n_dofs() {
        return Err(Error::DimensionMismatch(format!(
            "basis vectors of length {} for {} free dofs",
            basis.dim(),
            space.n_dofs()
        )));
    }
    if problem.reaction.is_some() != systems.reaction.is_some() || problem.flux.len() != systems.flux.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} needs {} reaction and {} flux interpolation systems, got {} and {}",
            problem.name,
            problem.reaction.is_some() as usize,
            problem.flux.len(),
            systems.reaction.is_some() as usize,
            systems.flux.len()
        )));
    }
    let nq = space.n_quadrature();
    for sys in systems.reaction.iter().chain(&systems.flux) {
        if sys.n_quadrature() != nq {
            return Err(Error::DimensionMismatch(format!(
                "interpolation system `{}` has {} quadrature values, space has {nq}",
                sys.name,
                sys.n_quadrature()
            )));
        }
    }
    let phi = &basis.vectors;
    let ops = assemble_linear(space);
    let project = |a: &crate::linalg::CsrMatrix| phi.tr_mul(&a.mul_dense(phi));
    let mass = project(&ops.mass);
    let affine = problem
        .affine
        .iter()
        .map(|t| project(problem.operator(&ops, t.form)))
        .collect();
    let source = phi.tr_mul(&problem.source_vector(space));
    let output = phi.tr_mul(&problem.output_vector(space));

    let values = space.value_operator().mul_dense(phi);
    let weights = space.quadrature_weights();
    let reaction = systems
        .reaction
        .as_ref()
        .map(|sys| InterpolatedTerm::build(sys, &values, &values, &weights))
        .transpose()?;
    let flux = systems
        .flux
        .iter()
        .enumerate()
        .map(|(d, sys)| {
            let grads = space.gradient_operator(d).mul_dense(phi);
            InterpolatedTerm::build(sys, &values, &grads, &weights)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RomOperators {
        mass,
        affine,
        source,
        output,
        reaction,
        flux,
    })
}

impl RomOperators {
    /// `N`
    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    /// `Q`
    pub fn q(&self) -> usize {
        self.affine.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &InterpolatedTerm> {
        self.reaction.iter().chain(&self.flux)
    }

    /// `s_N = (l^O_N)ᵀ α`
    pub fn output_of(&self, alpha: &DVector<f64>) -> f64 {
        self.output.dot(alpha)
    }

    /// `M_N / Δt + Σ_q Θ^q A^q_N`
    pub fn implicit_operator(&self, thetas: &[f64], dt: f64) -> Result<DMatrix<f64>> {
        if thetas.len() != self.q() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} affine terms",
                thetas.len(),
                self.q()
            )));
        }
        let mut k = &self.mass / dt;
        for (a, &t) in self.affine.iter().zip(thetas) {
            k += a * t;
        }
        Ok(k)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        store::write_matrix(&dir.join("mass.bin"), &self.mass)?;
        for (q, a) in self.affine.iter().enumerate() {
            store::write_matrix(&dir.join(format!("affine{q}.bin")), a)?;
        }
        store::write_vector(&dir.join("source.bin"), &self.source)?;
        store::write_vector(&dir.join("output.bin"), &self.output)?;
        let write_term = |prefix: &str, t: &InterpolatedTerm| -> Result<TermManifest> {
            store::write_matrix(&dir.join(format!("{prefix}_trace.bin")), &t.trace)?;
            store::write_matrix(&dir.join(format!("{prefix}_projection.bin")), &t.projection)?;
            store::write_matrix(&dir.join(format!("{prefix}_operator.bin")), &t.operator)?;
            Ok(TermManifest {
                m: t.m(),
                points: t.points.clone(),
            })
        };
        let manifest = RomManifest {
            n: self.n(),
            q: self.q(),
            reaction: self.reaction.as_ref().map(|t| write_term("reaction", t)).transpose()?,
            flux: self
                .flux
                .iter()
                .enumerate()
                .map(|(d, t)| write_term(&format!("flux{d}"), t))
                .collect::<Result<_>>()?,
        };
        store::write_json(&dir.join("rom.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: RomManifest = store::read_json(&dir.join("rom.json"))?;
        let read_term = |prefix: &str, t: TermManifest| -> Result<InterpolatedTerm> {
            let term = InterpolatedTerm {
                trace: store::read_matrix(&dir.join(format!("{prefix}_trace.bin")))?,
                projection: store::read_matrix(&dir.join(format!("{prefix}_projection.bin")))?,
                operator: store::read_matrix(&dir.join(format!("{prefix}_operator.bin")))?,
                points: t.points,
            };
            if term.trace.shape() != (t.m, manifest.n) || term.operator.shape() != (manifest.n, t.m) {
                return Err(Error::DimensionMismatch(format!("{prefix} arrays disagree with the manifest")));
            }
            Ok(term)
        };
        let ops = Self {
            mass: store::read_matrix(&dir.join("mass.bin"))?,
            affine: (0..manifest.q)
                .map(|q| store::read_matrix(&dir.join(format!("affine{q}.bin"))))
                .collect::<Result<_>>()?,
            source: store::read_vector(&dir.join("source.bin"))?,
            output: store::read_vector(&dir.join("output.bin"))?,
            reaction: manifest.reaction.map(|t| read_term("reaction", t)).transpose()?,
            flux: manifest
                .flux
                .into_iter()
                .enumerate()
                .map(|(d, t)| read_term(&format!("flux{d}"), t))
                .collect::<Result<_>>()?,
        };
        let n = manifest.n;
        if ops.mass.shape() != (n, n)
            || ops.affine.iter().any(|a| a.shape() != (n, n))
            || ops.source.len() != n
            || ops.output.len() != n
        {
            return Err(Error::DimensionMismatch("reduced operators disagree with the manifest".into()));
        }
        Ok(ops)
    }
}

/// Offline data for `α(t_0)`: `α_n = ∫ u₀(·, µ) φ_n` by quadrature. Holds
/// quadrature points and weighted basis values, not the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialProjector {
    /// One row per quadrature point.
    pub points: DMatrix<f64>,
    /// `W Φ(x_q)`, `n_q × N`.
    pub weighted: DMatrix<f64>,
}

impl InitialProjector {
    pub fn new(space: &FeSpace, basis: &ReducedBasis) -> Result<Self> {
        if basis.dim() != space.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "basis vectors of length {} for {} free dofs",
                basis.dim(),
                space.n_dofs()
            )));
        }
        let dim = space.dim();
        let points = DMatrix::from_fn(space.n_quadrature(), dim, |q, d| space.quadrature_point(q)[d]);
        let mut weighted = space.value_operator().mul_dense(&basis.vectors);
        let w = space.quadrature_weights();
        for mut col in weighted.column_iter_mut() {
            col.component_mul_assign(&w);
        }
        Ok(Self { points, weighted })
    }

    pub fn project(&self, problem: &ProblemDef, mu: &[f64]) -> DVector<f64> {
        let init = &problem.initial;
        let values = DVector::from_fn(self.points.nrows(), |q, _| {
            let x: Vec<f64> = self.points.row(q).iter().copied().collect();
            init(&x, mu)
        });
        self.weighted.tr_mul(&values)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        store::write_matrix(&dir.join("initial_points.bin"), &self.points)?;
        store::write_matrix(&dir.join("initial_weighted_modes.bin"), &self.weighted)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let points = store::read_matrix(&dir.join("initial_points.bin"))?;
        let weighted = store::read_matrix(&dir.join("initial_weighted_modes.bin"))?;
        if points.nrows() != weighted.nrows() {
            return Err(Error::DimensionMismatch("initial projector arrays disagree".into()));
        }
        Ok(Self { points, weighted })
    }
}
