use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structured, axis-aligned mesh of intervals (1D) or quadrilaterals (2D).
///
/// Cells are numbered lexicographically with the first axis running fastest;
/// vertices likewise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    bounds: Vec<(f64, f64)>,
    cells_per_axis: Vec<usize>,
}

impl Mesh {
    pub fn new(bounds: &[(f64, f64)], cells_per_axis: &[usize]) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > 2 {
            return Err(Error::InvalidMesh(format!(
                "dimension must be 1 or 2, got {}",
                bounds.len()
            )));
        }
        if bounds.len() != cells_per_axis.len() {
            return Err(Error::InvalidMesh(
                "bounds and cells_per_axis differ in length".into(),
            ));
        }
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidMesh(format!(
                    "axis {axis} has degenerate bounds ({a}, {b})"
                )));
            }
        }
        if let Some(axis) = cells_per_axis.iter().position(|&n| n == 0) {
            return Err(Error::InvalidMesh(format!("axis {axis} has zero cells")));
        }
        Ok(Self {
            bounds: bounds.to_vec(),
            cells_per_axis: cells_per_axis.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    pub fn cell_size(&self, axis: usize) -> f64 {
        let (a, b) = self.bounds[axis];
        (b - a) / self.cells_per_axis[axis] as f64
    }

    pub fn cell_measure(&self) -> f64 {
        (0..self.dim()).map(|d| self.cell_size(d)).product()
    }

    pub fn domain_measure(&self) -> f64 {
        self.bounds.iter().map(|(a, b)| b - a).product()
    }

    /// Per-axis cell indices of a cell.
    pub fn cell_multi_index(&self, cell: usize) -> [usize; 2] {
        let nx = self.cells_per_axis[0];
        [cell % nx, cell / nx]
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> [f64; 2] {
        let idx = self.cell_multi_index(cell);
        let mut o = [0.0; 2];
        for d in 0..self.dim() {
            o[d] = self.bounds[d].0 + idx[d] as f64 * self.cell_size(d);
        }
        o
    }

    /// Vertex ids of a cell in lexicographic local order.
    pub fn cell_vertices(&self, cell: usize) -> Vec<usize> {
        let [i, j] = self.cell_multi_index(cell);
        match self.dim() {
            1 => vec![i, i + 1],
            _ => {
                let vx = self.cells_per_axis[0] + 1;
                vec![j * vx + i, j * vx + i + 1, (j + 1) * vx + i, (j + 1) * vx + i + 1]
            }
        }
    }

    /// Finds the cell containing `point` and its local coordinates in
    /// `[0, 1]^dim`. Points on shared faces go to the cell with the larger
    /// index, except on the upper domain boundary.
    pub fn locate(&self, point: &[f64]) -> Result<(usize, [f64; 2])> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point of dimension {} in a {}D mesh",
                point.len(),
                self.dim()
            )));
        }
        let mut idx = [0usize; 2];
        let mut local = [0.0; 2];
        for d in 0..self.dim() {
            let (a, b) = self.bounds[d];
            let tol = 1e-12 * (b - a);
            let x = point[d];
            if !(x >= a - tol && x <= b + tol) {
                return Err(Error::PointOutsideDomain {
                    point: point.to_vec(),
                });
            }
            let n = self.cells_per_axis[d];
            let s = ((x - a) / self.cell_size(d)).clamp(0.0, n as f64);
            let c = (s.floor() as usize).min(n - 1);
            idx[d] = c;
            local[d] = (s - c as f64).clamp(0.0, 1.0);
        }
        let cell = idx[0] + idx[1] * self.cells_per_axis[0];
        Ok((cell, local))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_tile_the_domain() {
        let m = Mesh::new(&[(-1.5, 1.5), (0.0, 2.0)], &[7, 3]).unwrap();
        assert_eq!(m.n_cells(), 21);
        let total = m.cell_measure() * m.n_cells() as f64;
        assert!((total - m.domain_measure()).abs() <= 1e-12 * m.domain_measure());
        assert!(m.cell_measure() > 0.0);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(Mesh::new(&[(0.0, 0.0)], &[4]).is_err());
        assert!(Mesh::new(&[(0.0, 1.0)], &[0]).is_err());
        assert!(Mesh::new(&[(0.0, 1.0), (1.0, 0.5)], &[2, 2]).is_err());
        assert!(Mesh::new(&[(0.0, 1.0); 3], &[1, 1, 1]).is_err());
    }

    #[test]
    fn locate_points() {
        let m = Mesh::new(&[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
        let (c, l) = m.locate(&[0.3, 0.9]).unwrap();
        assert_eq!(m.cell_multi_index(c), [1, 3]);
        assert!((l[0] - 0.2).abs() < 1e-12 && (l[1] - 0.6).abs() < 1e-12);
        let (c, l) = m.locate(&[1.0, 1.0]).unwrap();
        assert_eq!(c, 15);
        assert_eq!(l, [1.0, 1.0]);
        assert!(m.locate(&[1.1, 0.5]).is_err());
        assert_eq!(m.cell_vertices(0), vec![0, 1, 5, 6]);
    }
}
