use nalgebra::{DMatrix, DVector};

use super::space::FeSpace;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::nonlinear::Nonlinearity;
use crate::quadrature::LagrangeBasis1d;

/// Mass and stiffness matrices over the free dofs of a space.
#[derive(Debug, Clone)]
pub struct LinearOperators {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

fn scatter(space: &FeSpace, local: &DMatrix<f64>, cell: usize, target: &mut CsrMatrix) {
    let n = space.n_local();
    let values = target.values_mut();
    for (k, idx) in space.cell_scatter(cell).iter().enumerate() {
        if let Some(idx) = idx {
            values[*idx] += local[(k / n, k % n)];
        }
    }
}

/// `M_ij = ∫ φ_i φ_j` and `A_ij = ∫ ∇φ_i · ∇φ_j`; Dirichlet rows and columns
/// are eliminated by construction of the free-dof numbering.
pub fn assemble_linear(space: &FeSpace) -> LinearOperators {
    let n = space.n_local();
    let dim = space.dim();
    let w = space.cell_weights();
    // all cells are congruent, so one element matrix serves every cell
    let mut m_loc = DMatrix::zeros(n, n);
    let mut a_loc = DMatrix::zeros(n, n);
    for (q, &wq) in w.iter().enumerate() {
        for a in 0..n {
            for b in 0..n {
                m_loc[(a, b)] += wq * space.shape_value(q, a) * space.shape_value(q, b);
                let mut g = 0.0;
                for d in 0..dim {
                    g += space.shape_grad(q, a, d) * space.shape_grad(q, b, d);
                }
                a_loc[(a, b)] += wq * g;
            }
        }
    }
    let mut mass = CsrMatrix::zeros(space.pattern().clone());
    let mut stiffness = CsrMatrix::zeros(space.pattern().clone());
    for cell in 0..space.mesh().n_cells() {
        scatter(space, &m_loc, cell, &mut mass);
        scatter(space, &a_loc, cell, &mut stiffness);
    }
    LinearOperators { mass, stiffness }
}

/// `rhs_j = ∫ f φ_j` for a function given at all quadrature points.
pub fn load_vector(space: &FeSpace, values_at_quadrature: &[f64]) -> DVector<f64> {
    let w = space.quadrature_weights();
    let weighted: Vec<f64> = values_at_quadrature
        .iter()
        .zip(w.iter())
        .map(|(v, w)| v * w)
        .collect();
    space.value_operator().transpose_mul_vec(&weighted)
}

/// Samples a pointwise function at every quadrature point.
pub fn sample_at_quadrature(space: &FeSpace, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let dim = space.dim();
    (0..space.n_quadrature())
        .map(|gq| f(&space.quadrature_point(gq)[..dim]))
        .collect()
}

/// L2 projection: solves `M c = (∫ f φ_j)_j`.
pub fn project_l2(space: &FeSpace, mass: &CsrMatrix, f: impl Fn(&[f64]) -> f64) -> Result<DVector<f64>> {
    let rhs = load_vector(space, &sample_at_quadrature(space, f));
    mass.solve(&rhs)
}

/// Nonlinear integrals of the weak form and, optionally, their Jacobians.
#[derive(Debug, Clone)]
pub struct NonlinearAssembly {
    /// `∫ g(u_h) φ_j`
    pub reaction: DVector<f64>,
    /// `Σ_d ∫ f^d(u_h) ∂_d φ_j`
    pub flux: DVector<f64>,
    /// `E_jn = ∫ g'(u_h) φ_n φ_j`
    pub reaction_jacobian: Option<CsrMatrix>,
    /// `D_jn = Σ_d ∫ f^d'(u_h) φ_n ∂_d φ_j`
    pub flux_jacobian: Option<CsrMatrix>,
}

/// Assembles `∫ g(u_h) φ_j` and `∫ f(u_h)·∇φ_j` by quadrature. The flux slice
/// holds one function per spatial axis (empty when there is no convection).
pub fn assemble_nonlinear(
    space: &FeSpace,
    coeffs: &DVector<f64>,
    reaction: Option<&Nonlinearity>,
    flux: &[Nonlinearity],
    want_jacobian: bool,
) -> Result<NonlinearAssembly> {
    space.check_coeffs(coeffs)?;
    if !flux.is_empty() && flux.len() != space.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} flux components in {} dimensions",
            flux.len(),
            space.dim()
        )));
    }
    let n = space.n_local();
    let nq = space.n_quadrature_per_cell();
    let dim = space.dim();
    let w = space.cell_weights();
    let u_q = space.eval_at_quadrature(coeffs);

    let mut g_vec = DVector::zeros(space.n_dofs());
    let mut f_vec = DVector::zeros(space.n_dofs());
    let mut e_mat = (want_jacobian && reaction.is_some())
        .then(|| CsrMatrix::zeros(space.pattern().clone()));
    let mut d_mat = (want_jacobian && !flux.is_empty())
        .then(|| CsrMatrix::zeros(space.pattern().clone()));
    let mut e_loc = DMatrix::zeros(n, n);
    let mut d_loc = DMatrix::zeros(n, n);
    let mut g_loc = vec![0.0; n];
    let mut f_loc = vec![0.0; n];
    let mut fv = [0.0; 2];
    let mut fd = [0.0; 2];

    for cell in 0..space.mesh().n_cells() {
        g_loc.iter_mut().for_each(|v| *v = 0.0);
        f_loc.iter_mut().for_each(|v| *v = 0.0);
        e_loc.fill(0.0);
        d_loc.fill(0.0);
        for q in 0..nq {
            let gq = cell * nq + q;
            let u = u_q[gq];
            let wq = w[q];
            if let Some(g) = reaction {
                let gv = g.value(u);
                let gd = if want_jacobian { g.derivative(u) } else { 0.0 };
                if !gv.is_finite() || !gd.is_finite() {
                    return Err(Error::NonFinite { point: gq, value: u });
                }
                for a in 0..n {
                    let pa = space.shape_value(q, a);
                    g_loc[a] += wq * gv * pa;
                    if want_jacobian {
                        for b in 0..n {
                            e_loc[(a, b)] += wq * gd * pa * space.shape_value(q, b);
                        }
                    }
                }
            }
            if !flux.is_empty() {
                for d in 0..dim {
                    fv[d] = flux[d].value(u);
                    fd[d] = if want_jacobian { flux[d].derivative(u) } else { 0.0 };
                    if !fv[d].is_finite() || !fd[d].is_finite() {
                        return Err(Error::NonFinite { point: gq, value: u });
                    }
                }
                for a in 0..n {
                    let mut s = 0.0;
                    let mut sd = 0.0;
                    for d in 0..dim {
                        let ga = space.shape_grad(q, a, d);
                        s += fv[d] * ga;
                        sd += fd[d] * ga;
                    }
                    f_loc[a] += wq * s;
                    if want_jacobian {
                        for b in 0..n {
                            d_loc[(a, b)] += wq * sd * space.shape_value(q, b);
                        }
                    }
                }
            }
        }
        for (a, dof) in space.cell_dofs(cell).iter().enumerate() {
            if let Some(dof) = dof {
                g_vec[*dof] += g_loc[a];
                f_vec[*dof] += f_loc[a];
            }
        }
        if let Some(e) = e_mat.as_mut() {
            scatter(space, &e_loc, cell, e);
        }
        if let Some(dm) = d_mat.as_mut() {
            scatter(space, &d_loc, cell, dm);
        }
    }
    Ok(NonlinearAssembly {
        reaction: g_vec,
        flux: f_vec,
        reaction_jacobian: e_mat,
        flux_jacobian: d_mat,
    })
}

/// Values (and optionally gradients) of every basis function at a set of
/// points: row `m` holds `φ_n(x_m)` over the free dofs.
#[derive(Debug, Clone)]
pub struct BasisTrace {
    pub values: CsrMatrix,
    pub gradients: Option<Vec<CsrMatrix>>,
}

impl BasisTrace {
    /// Evaluates a field at the traced points.
    pub fn evaluate(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.values.mul_vec(coeffs)
    }
}

/// Traces the basis at arbitrary points of the closed domain.
pub fn trace_at_points(space: &FeSpace, points: &[Vec<f64>], with_gradients: bool) -> Result<BasisTrace> {
    let dim = space.dim();
    let basis = LagrangeBasis1d::new(space.degree());
    let n1 = space.degree() + 1;
    let h = [
        space.mesh().cell_size(0),
        if dim == 2 { space.mesh().cell_size(1) } else { 1.0 },
    ];
    let mut vt = Vec::new();
    let mut gt = vec![Vec::new(); dim];
    for (m, p) in points.iter().enumerate() {
        let (cell, xi) = space.mesh().locate(p)?;
        for (a, dof) in space.cell_dofs(cell).iter().enumerate() {
            let Some(dof) = *dof else { continue };
            let (lx, ly) = (a % n1, a / n1);
            let (vx, dx) = (basis.value(lx, xi[0]), basis.derivative(lx, xi[0]));
            let (vy, dy) = if dim == 2 {
                (basis.value(ly, xi[1]), basis.derivative(ly, xi[1]))
            } else {
                (1.0, 0.0)
            };
            vt.push((m, dof, vx * vy));
            if with_gradients {
                gt[0].push((m, dof, dx * vy / h[0]));
                if dim == 2 {
                    gt[1].push((m, dof, vx * dy / h[1]));
                }
            }
        }
    }
    let n = space.n_dofs();
    Ok(BasisTrace {
        values: CsrMatrix::from_triplets(points.len(), n, &vt),
        gradients: with_gradients.then(|| {
            gt.iter()
                .map(|t| CsrMatrix::from_triplets(points.len(), n, t))
                .collect()
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::space::{build_space, BcKind};

    fn unit_square(cells: usize, degree: usize, bc: BcKind) -> FeSpace {
        build_space(&[(0.0, 1.0), (0.0, 1.0)], &[cells, cells], degree, bc).unwrap()
    }

    #[test]
    fn mass_and_stiffness_basic_identities() {
        let s = unit_square(3, 2, BcKind::NeumannHomogeneous);
        let ops = assemble_linear(&s);
        let ones = DVector::from_element(s.n_dofs(), 1.0);
        assert!((ops.mass.quad_form(&ones) - 1.0).abs() < 1e-12);
        assert!(ops.stiffness.mul_vec(&ones).amax() < 1e-12);
        let md = ops.mass.to_dense();
        let ad = ops.stiffness.to_dense();
        assert!((&md - md.transpose()).amax() < 1e-15);
        assert!((&ad - ad.transpose()).amax() < 1e-15);
        let eig = md.symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
        let eig = ad.symmetric_eigenvalues();
        assert!(eig.min() > -1e-12);
    }

    #[test]
    fn one_dimensional_mass_by_hand() {
        let s = build_space(&[(0.0, 1.0)], &[2], 1, BcKind::NeumannHomogeneous).unwrap();
        let m = assemble_linear(&s).mass.to_dense();
        let expect = DMatrix::from_row_slice(3, 3, &[2., 1., 0., 1., 4., 1., 0., 1., 2.]) / 12.0;
        assert!((m - expect).amax() < 1e-15);
    }

    #[test]
    fn dirichlet_elimination_keeps_mass_spd() {
        let s = unit_square(3, 2, BcKind::DirichletHomogeneous);
        let ops = assemble_linear(&s);
        assert_eq!(ops.mass.nrows(), 25);
        assert!(ops.mass.to_dense().symmetric_eigenvalues().min() > 0.0);
        assert!(ops.stiffness.to_dense().symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn projections() {
        let s = unit_square(3, 2, BcKind::NeumannHomogeneous);
        let ops = assemble_linear(&s);
        let c = project_l2(&s, &ops.mass, |_| 1.0).unwrap();
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-10));

        // a member of the space projects onto itself
        let mut e5 = DVector::zeros(s.n_dofs());
        e5[5] = 1.0;
        let trace_fn = |x: &[f64]| {
            let t = trace_at_points(&s, &[x.to_vec()], false).unwrap();
            t.evaluate(&e5)[0]
        };
        let c = project_l2(&s, &ops.mass, trace_fn).unwrap();
        assert!((c - &e5).amax() < 1e-10);
    }

    #[test]
    fn projection_preserves_the_mean() {
        let s = build_space(&[(-1.5, 1.5), (-1.5, 1.5)], &[8, 8], 2, BcKind::NeumannHomogeneous)
            .unwrap();
        let ops = assemble_linear(&s);
        let f = |x: &[f64]| (-16.0 * (x[0] * x[0] + x[1] * x[1])).exp();
        let c = project_l2(&s, &ops.mass, f).unwrap();
        let ones = DVector::from_element(s.n_dofs(), 1.0);
        let int_proj = ops.mass.mul_vec(&c).dot(&ones);
        let int_f = s.integrate(&sample_at_quadrature(&s, f));
        assert!((int_proj - int_f).abs() < 1e-8);
    }

    #[test]
    fn linear_reaction_is_mass_action() {
        let s = unit_square(4, 2, BcKind::NeumannHomogeneous);
        let ops = assemble_linear(&s);
        let c = DVector::from_fn(s.n_dofs(), |i, _| (i as f64 * 0.37).sin());
        let nl = assemble_nonlinear(&s, &c, Some(&Nonlinearity::linear(1.0)), &[], false).unwrap();
        assert!((nl.reaction - ops.mass.mul_vec(&c)).amax() < 1e-12);
    }

    #[test]
    fn constant_flux_vanishes_on_interior_dofs() {
        let s = unit_square(4, 2, BcKind::NeumannHomogeneous);
        let c = DVector::from_element(s.n_dofs(), 0.7);
        let flux = [Nonlinearity::power(2), Nonlinearity::linear(0.0)];
        let nl = assemble_nonlinear(&s, &c, None, &flux, false).unwrap();
        let boundary: std::collections::HashSet<_> = s.boundary_nodes().iter().collect();
        for dof in 0..s.n_dofs() {
            if !boundary.contains(&s.dof_node(dof)) {
                assert!(nl.flux[dof].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_evaluation_is_reported() {
        let s = unit_square(2, 1, BcKind::NeumannHomogeneous);
        let c = DVector::from_element(s.n_dofs(), -1.0);
        let log = Nonlinearity::new("ln", f64::ln, |u| 1.0 / u);
        let err = assemble_nonlinear(&s, &c, Some(&log), &[], false).unwrap_err();
        assert!(matches!(err, Error::NonFinite { point: 0, .. }));
    }

    #[test]
    fn traces() {
        let s = build_space(&[(0.0, 1.0)], &[4], 1, BcKind::NeumannHomogeneous).unwrap();
        let t = trace_at_points(&s, &[vec![0.125], vec![0.5]], false).unwrap();
        let row: Vec<_> = t.values.row_entries(0).filter(|(_, v)| *v != 0.0).collect();
        assert_eq!(row.len(), 2);
        assert!(row.iter().all(|(_, v)| (v - 0.5).abs() < 1e-15));
        let row: Vec<_> = t.values.row_entries(1).filter(|(_, v)| v.abs() > 1e-15).collect();
        assert_eq!(row, vec![(2, 1.0)]);
        assert!(trace_at_points(&s, &[vec![1.5]], false).is_err());
    }

    #[test]
    fn trace_rows_sum_to_one_at_nodes_and_quadrature_points() {
        let s = unit_square(3, 2, BcKind::NeumannHomogeneous);
        let pts: Vec<Vec<f64>> = (0..s.n_dofs())
            .step_by(5)
            .map(|d| s.dof_coords(d).to_vec())
            .collect();
        let t = trace_at_points(&s, &pts, true).unwrap();
        for (m, d) in (0..s.n_dofs()).step_by(5).enumerate() {
            let row: Vec<_> = t.values.row_entries(m).filter(|(_, v)| v.abs() > 1e-13).collect();
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].0, d);
            assert!((row[0].1 - 1.0).abs() < 1e-12);
        }
        let grads = t.gradients.unwrap();
        let ones = DVector::from_element(s.n_dofs(), 1.0);
        assert!(grads[0].mul_vec(&ones).amax() < 1e-11);
    }
}
