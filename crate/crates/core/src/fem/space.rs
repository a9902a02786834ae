use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparsityPattern};
use crate::quadrature::{gauss_legendre_unit, LagrangeBasis1d};

/// Boundary treatment of the space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcKind {
    /// Homogeneous Dirichlet: boundary nodes are eliminated.
    DirichletHomogeneous,
    /// Homogeneous Neumann: every node is a degree of freedom.
    NeumannHomogeneous,
}

/// Continuous tensor-product Lagrange space of a given degree per axis on a
/// structured mesh, with a tensor Gauss-Legendre rule of `degree + 2` points
/// per axis attached to every cell.
///
/// Coefficient vectors are indexed by *free* dofs: all nodes for Neumann,
/// interior nodes for Dirichlet.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Mesh,
    degree: usize,
    bc: BcKind,
    nodes_per_axis: [usize; 2],
    n_nodes: usize,
    node_to_dof: Vec<Option<usize>>,
    dof_to_node: Vec<usize>,
    boundary_nodes: Vec<usize>,
    n_local: usize,
    cell_dofs: Vec<Option<usize>>,
    cell_scatter: Vec<Option<usize>>,
    n_qp_cell: usize,
    qp_ref: Vec<[f64; 2]>,
    qp_weights: Vec<f64>,
    shape_values: Vec<f64>,
    shape_grads: Vec<f64>,
    pattern: Arc<SparsityPattern>,
    value_op: CsrMatrix,
    grad_ops: Vec<CsrMatrix>,
}

impl FeSpace {
    pub fn new(mesh: Mesh, degree: usize, bc: BcKind) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidMesh("polynomial degree must be at least 1".into()));
        }
        let dim = mesh.dim();
        let cells = mesh.cells_per_axis().to_vec();
        let mut nodes_per_axis = [1usize; 2];
        for d in 0..dim {
            nodes_per_axis[d] = degree * cells[d] + 1;
        }
        let n_nodes = nodes_per_axis[0] * nodes_per_axis[1];

        let mut boundary_nodes = Vec::new();
        for node in 0..n_nodes {
            let (ix, iy) = (node % nodes_per_axis[0], node / nodes_per_axis[0]);
            let on_x = ix == 0 || ix == nodes_per_axis[0] - 1;
            let on_y = dim == 2 && (iy == 0 || iy == nodes_per_axis[1] - 1);
            if on_x || on_y {
                boundary_nodes.push(node);
            }
        }
        let mut node_to_dof = vec![None; n_nodes];
        let mut dof_to_node = Vec::with_capacity(n_nodes);
        let mut is_boundary = vec![false; n_nodes];
        for &b in &boundary_nodes {
            is_boundary[b] = true;
        }
        for node in 0..n_nodes {
            if bc == BcKind::NeumannHomogeneous || !is_boundary[node] {
                node_to_dof[node] = Some(dof_to_node.len());
                dof_to_node.push(node);
            }
        }
        let n_dofs = dof_to_node.len();
        if n_dofs == 0 {
            return Err(Error::InvalidMesh("space has no free degrees of freedom".into()));
        }

        let n1 = degree + 1;
        let n_local = if dim == 1 { n1 } else { n1 * n1 };
        let n_cells = mesh.n_cells();
        let mut cell_dofs = Vec::with_capacity(n_cells * n_local);
        for cell in 0..n_cells {
            let [ci, cj] = mesh.cell_multi_index(cell);
            for a in 0..n_local {
                let (lx, ly) = (a % n1, a / n1);
                let node = (ci * degree + lx) + (cj * degree + ly) * nodes_per_axis[0];
                cell_dofs.push(node_to_dof[node]);
            }
        }

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_dofs];
        for cell in 0..n_cells {
            let local = &cell_dofs[cell * n_local..(cell + 1) * n_local];
            for &ra in local.iter().flatten() {
                rows[ra].extend(local.iter().flatten());
            }
        }
        let pattern = Arc::new(SparsityPattern::from_rows(n_dofs, rows));
        let mut cell_scatter = Vec::with_capacity(n_cells * n_local * n_local);
        for cell in 0..n_cells {
            let local = &cell_dofs[cell * n_local..(cell + 1) * n_local];
            for a in local {
                for b in local {
                    cell_scatter.push(match (a, b) {
                        (Some(ra), Some(cb)) => pattern.index_of(*ra, *cb),
                        _ => None,
                    });
                }
            }
        }

        let basis = LagrangeBasis1d::new(degree);
        let (gx, gw) = gauss_legendre_unit(degree + 2);
        let nq1 = gx.len();
        let n_qp_cell = if dim == 1 { nq1 } else { nq1 * nq1 };
        let h = [mesh.cell_size(0), if dim == 2 { mesh.cell_size(1) } else { 1.0 }];
        let measure = mesh.cell_measure();
        let mut qp_ref = Vec::with_capacity(n_qp_cell);
        let mut qp_weights = Vec::with_capacity(n_qp_cell);
        let mut shape_values = Vec::with_capacity(n_qp_cell * n_local);
        let mut shape_grads = Vec::with_capacity(n_qp_cell * n_local * dim);
        for q in 0..n_qp_cell {
            let (qx, qy) = (q % nq1, q / nq1);
            let xi = [gx[qx], if dim == 2 { gx[qy] } else { 0.0 }];
            let w = gw[qx] * if dim == 2 { gw[qy] } else { 1.0 };
            qp_ref.push(xi);
            qp_weights.push(w * measure);
            for a in 0..n_local {
                let (lx, ly) = (a % n1, a / n1);
                let (vx, dx) = (basis.value(lx, xi[0]), basis.derivative(lx, xi[0]));
                if dim == 1 {
                    shape_values.push(vx);
                    shape_grads.push(dx / h[0]);
                } else {
                    let (vy, dy) = (basis.value(ly, xi[1]), basis.derivative(ly, xi[1]));
                    shape_values.push(vx * vy);
                    shape_grads.push(dx * vy / h[0]);
                    shape_grads.push(vx * dy / h[1]);
                }
            }
        }

        let n_qp = n_cells * n_qp_cell;
        let mut value_trip = Vec::with_capacity(n_qp * n_local);
        let mut grad_trip = vec![Vec::with_capacity(n_qp * n_local); dim];
        for cell in 0..n_cells {
            let local = &cell_dofs[cell * n_local..(cell + 1) * n_local];
            for q in 0..n_qp_cell {
                let gq = cell * n_qp_cell + q;
                for (a, dof) in local.iter().enumerate() {
                    if let Some(dof) = *dof {
                        value_trip.push((gq, dof, shape_values[q * n_local + a]));
                        for (d, trip) in grad_trip.iter_mut().enumerate() {
                            trip.push((gq, dof, shape_grads[(q * n_local + a) * dim + d]));
                        }
                    }
                }
            }
        }
        let value_op = CsrMatrix::from_triplets(n_qp, n_dofs, &value_trip);
        let grad_ops = grad_trip
            .iter()
            .map(|t| CsrMatrix::from_triplets(n_qp, n_dofs, t))
            .collect();

        Ok(Self {
            mesh,
            degree,
            bc,
            nodes_per_axis,
            n_nodes,
            node_to_dof,
            dof_to_node,
            boundary_nodes,
            n_local,
            cell_dofs,
            cell_scatter,
            n_qp_cell,
            qp_ref,
            qp_weights,
            shape_values,
            shape_grads,
            pattern,
            value_op,
            grad_ops,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn bc(&self) -> BcKind {
        self.bc
    }

    /// Total node count before boundary elimination.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of free degrees of freedom (length of coefficient vectors).
    pub fn n_dofs(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes_per_axis[..self.dim()]
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = (node % self.nodes_per_axis[0], node / self.nodes_per_axis[0]);
        let mut x = [0.0; 2];
        let idx = [ix, iy];
        for (d, xd) in x.iter_mut().enumerate().take(self.dim()) {
            let (a, b) = self.mesh.bounds()[d];
            *xd = a + (b - a) * idx[d] as f64 / (self.nodes_per_axis[d] - 1) as f64;
        }
        x
    }

    pub fn dof_node(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    pub fn node_dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn dof_coords(&self, dof: usize) -> [f64; 2] {
        self.node_coords(self.dof_to_node[dof])
    }

    pub fn n_local(&self) -> usize {
        self.n_local
    }

    pub fn cell_dofs(&self, cell: usize) -> &[Option<usize>] {
        &self.cell_dofs[cell * self.n_local..(cell + 1) * self.n_local]
    }

    pub(crate) fn cell_scatter(&self, cell: usize) -> &[Option<usize>] {
        let n2 = self.n_local * self.n_local;
        &self.cell_scatter[cell * n2..(cell + 1) * n2]
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n_quadrature_per_cell(&self) -> usize {
        self.n_qp_cell
    }

    pub fn n_quadrature(&self) -> usize {
        self.mesh.n_cells() * self.n_qp_cell
    }

    /// Physical weights of the per-cell rule (identical on every cell).
    pub fn cell_weights(&self) -> &[f64] {
        &self.qp_weights
    }

    /// Weights of all quadrature points in global order
    /// `cell * n_quadrature_per_cell + q`.
    pub fn quadrature_weights(&self) -> DVector<f64> {
        let n = self.n_qp_cell;
        DVector::from_fn(self.n_quadrature(), |gq, _| self.qp_weights[gq % n])
    }

    pub fn quadrature_point(&self, gq: usize) -> [f64; 2] {
        let cell = gq / self.n_qp_cell;
        let xi = self.qp_ref[gq % self.n_qp_cell];
        let o = self.mesh.cell_origin(cell);
        let mut x = [0.0; 2];
        for d in 0..self.dim() {
            x[d] = o[d] + xi[d] * self.mesh.cell_size(d);
        }
        x
    }

    #[inline]
    pub fn shape_value(&self, q: usize, a: usize) -> f64 {
        self.shape_values[q * self.n_local + a]
    }

    #[inline]
    pub fn shape_grad(&self, q: usize, a: usize, d: usize) -> f64 {
        self.shape_grads[(q * self.n_local + a) * self.dim() + d]
    }

    /// Sparse map from coefficients to values at all quadrature points.
    pub fn value_operator(&self) -> &CsrMatrix {
        &self.value_op
    }

    /// Sparse map from coefficients to the `axis` derivative at all
    /// quadrature points.
    pub fn gradient_operator(&self, axis: usize) -> &CsrMatrix {
        &self.grad_ops[axis]
    }

    pub fn eval_at_quadrature(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.value_op.mul_vec(coeffs)
    }

    /// `∫ v` for values given at all quadrature points.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let n = self.n_qp_cell;
        values
            .iter()
            .enumerate()
            .map(|(gq, v)| self.qp_weights[gq % n] * v)
            .sum()
    }

    pub fn check_coeffs(&self, coeffs: &DVector<f64>) -> Result<()> {
        if coeffs.len() == self.n_dofs() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "field has {} coefficients, space has {} free dofs",
                coeffs.len(),
                self.n_dofs()
            )))
        }
    }
}

/// Convenience constructor for a structured space.
pub fn build_space(
    bounds: &[(f64, f64)],
    cells_per_axis: &[usize],
    degree: usize,
    bc: BcKind,
) -> Result<FeSpace> {
    FeSpace::new(Mesh::new(bounds, cells_per_axis)?, degree, bc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_counts() {
        let s = build_space(&[(0.0, 1.0), (0.0, 1.0)], &[2, 2], 1, BcKind::NeumannHomogeneous)
            .unwrap();
        assert_eq!(s.n_nodes(), 9);
        assert_eq!(s.n_dofs(), 9);
        assert_eq!(s.mesh().n_cells(), 4);

        let s = build_space(&[(-1.5, 1.5), (-1.5, 1.5)], &[2, 2], 2, BcKind::DirichletHomogeneous)
            .unwrap();
        assert_eq!(s.n_nodes(), 25);
        assert_eq!(s.boundary_nodes().len(), 16);
        assert_eq!(s.n_dofs(), 9);

        let s = build_space(&[(0.0, 2.0)], &[1000], 1, BcKind::NeumannHomogeneous).unwrap();
        assert_eq!(s.n_nodes(), 1001);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(build_space(&[(1.0, 1.0), (0.0, 1.0)], &[2, 2], 1, BcKind::NeumannHomogeneous)
            .is_err());
        assert!(build_space(&[(0.0, 1.0)], &[2], 0, BcKind::NeumannHomogeneous).is_err());
    }

    #[test]
    fn weights_sum_to_cell_measure_and_partition_of_unity() {
        for degree in 1..=3 {
            let s = build_space(&[(0.0, 2.0), (-1.0, 0.5)], &[3, 2], degree, BcKind::NeumannHomogeneous)
                .unwrap();
            let w: f64 = s.cell_weights().iter().sum();
            assert!((w - s.mesh().cell_measure()).abs() < 1e-14);
            assert!(s.cell_weights().iter().all(|&w| w > 0.0));
            for q in 0..s.n_quadrature_per_cell() {
                let sum: f64 = (0..s.n_local()).map(|a| s.shape_value(q, a)).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
            let ones = DVector::from_element(s.n_dofs(), 1.0);
            let vals = s.eval_at_quadrature(&ones);
            assert!(vals.iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert_eq!(
                s.n_nodes(),
                (degree * 3 + 1) * (degree * 2 + 1),
                "dof count formula"
            );
        }
    }

    #[test]
    fn quadrature_is_exact_up_to_degree_2p_plus_1() {
        let (ax, bx, ay, by) = (-0.5, 1.5, 0.25, 1.0);
        for degree in 1..=3 {
            let s = build_space(&[(ax, bx), (ay, by)], &[3, 2], degree, BcKind::NeumannHomogeneous)
                .unwrap();
            let max = 2 * degree + 1;
            for a in 0..=max {
                for b in 0..=(max - a) {
                    let vals: Vec<f64> = (0..s.n_quadrature())
                        .map(|gq| {
                            let x = s.quadrature_point(gq);
                            x[0].powi(a as i32) * x[1].powi(b as i32)
                        })
                        .collect();
                    let q = s.integrate(&vals);
                    let ia = (bx.powi(a as i32 + 1) - ax.powi(a as i32 + 1)) / (a as f64 + 1.0);
                    let ib = (by.powi(b as i32 + 1) - ay.powi(b as i32 + 1)) / (b as f64 + 1.0);
                    let exact: f64 = ia * ib;
                    assert!(
                        (q - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                        "x^{a} y^{b}: {q} vs {exact}"
                    );
                }
            }
        }
    }
}
