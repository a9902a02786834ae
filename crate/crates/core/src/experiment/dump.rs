use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{trace_at_points, FeSpace};
use crate::fom::Trajectory;
use crate::store;

/// Name stem of the dump of step `i`: `field_t0007`.
pub fn field_stem(i: usize) -> String {
    format!("field_t{i:04}")
}

/// Field values on the node lattice of the space, one row per `y` line.
/// Nodes without a dof (Dirichlet boundary) hold zero.
pub fn node_lattice(space: &FeSpace, coeffs: &DVector<f64>) -> Result<DMatrix<f64>> {
    space.check_coeffs(coeffs)?;
    let per_axis = space.nodes_per_axis();
    let (nx, ny) = (per_axis[0], per_axis.get(1).copied().unwrap_or(1));
    Ok(DMatrix::from_fn(ny, nx, |iy, ix| {
        space.node_dof(iy * nx + ix).map_or(0.0, |d| coeffs[d])
    }))
}

/// Writes `field_tNNNN.csv` (`x[,y],u`) and `field_tNNNN.bin` (lattice
/// matrix, `ny × nx`) for every requested step of a finite element
/// trajectory. The lattice is the uniform grid of Lagrange nodes, so dumped
/// values are the coefficients themselves.
pub fn snapshot_field_dump(space: &FeSpace, trajectory: &Trajectory, steps: &[usize], dir: &Path) -> Result<Vec<PathBuf>> {
    if let Some(&i) = steps.iter().find(|&&i| i >= trajectory.len()) {
        return Err(Error::InvalidParameter(format!(
            "dump step {i} outside a trajectory of {} states",
            trajectory.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let dim = space.dim();
    let mut written = Vec::with_capacity(2 * steps.len());
    for &i in steps {
        let lattice = node_lattice(space, &trajectory.states[i])?;
        let mut csv = String::from(if dim == 1 { "x,u\n" } else { "x,y,u\n" });
        for iy in 0..lattice.nrows() {
            for ix in 0..lattice.ncols() {
                let x = space.node_coords(iy * lattice.ncols() + ix);
                if dim == 1 {
                    let _ = writeln!(csv, "{:e},{:e}", x[0], lattice[(iy, ix)]);
                } else {
                    let _ = writeln!(csv, "{:e},{:e},{:e}", x[0], x[1], lattice[(iy, ix)]);
                }
            }
        }
        let stem = field_stem(i);
        let csv_path = dir.join(format!("{stem}.csv"));
        store::atomic_write(&csv_path, csv.as_bytes())?;
        let bin_path = dir.join(format!("{stem}.bin"));
        store::write_matrix(&bin_path, &lattice)?;
        written.push(csv_path);
        written.push(bin_path);
    }
    Ok(written)
}

/// Geometry of the region `{u > 0}` of a 2D field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceMetrics {
    /// Quadrature measure of `{u > 0}`.
    pub area: f64,
    pub centroid: [f64; 2],
    /// Extreme distances from the centroid to the zero level set.
    pub min_radius: f64,
    pub max_radius: f64,
    /// `max_radius / min_radius`
    pub asphericity: f64,
}

/// Number of rays cast from the centroid.
pub const INTERFACE_RAYS: usize = 360;

/// Area and centroid by quadrature; radii by marching rays from the
/// centroid to the first sign change, located by linear interpolation
/// between samples spaced a quarter node spacing apart. A ray that reaches
/// the boundary inside the region counts the boundary distance.
pub fn interface_metrics(space: &FeSpace, coeffs: &DVector<f64>) -> Result<InterfaceMetrics> {
    if space.dim() != 2 {
        return Err(Error::InvalidParameter("interface metrics need a 2D field".into()));
    }
    space.check_coeffs(coeffs)?;
    let u = space.eval_at_quadrature(coeffs);
    let w = space.quadrature_weights();
    let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for q in 0..u.len() {
        if u[q] > 0.0 {
            let x = space.quadrature_point(q);
            area += w[q];
            cx += w[q] * x[0];
            cy += w[q] * x[1];
        }
    }
    if area <= 0.0 {
        return Err(Error::InvalidParameter("field has no positive region".into()));
    }
    let c = [cx / area, cy / area];
    let bounds = space.mesh().bounds();
    let h = (0..2)
        .map(|d| space.mesh().cell_size(d) / space.degree().max(1) as f64)
        .fold(f64::INFINITY, f64::min)
        / 4.0;

    let mut rays = Vec::with_capacity(INTERFACE_RAYS);
    let mut points = Vec::new();
    for k in 0..INTERFACE_RAYS {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / INTERFACE_RAYS as f64;
        let dir = [theta.cos(), theta.sin()];
        // distance to the box boundary, pulled in so every sample locates
        let reach = (0..2)
            .map(|d| match dir[d] {
                v if v > 1e-14 => (bounds[d].1 - c[d]) / v,
                v if v < -1e-14 => (bounds[d].0 - c[d]) / v,
                _ => f64::INFINITY,
            })
            .fold(f64::INFINITY, f64::min)
            * (1.0 - 1e-12);
        let samples = (reach / h).ceil().max(1.0) as usize;
        let start = points.len();
        for s in 0..=samples {
            let r = reach * s as f64 / samples as f64;
            points.push(vec![c[0] + r * dir[0], c[1] + r * dir[1]]);
        }
        rays.push((start, samples, reach));
    }
    let values = trace_at_points(space, &points, false)?.evaluate(coeffs);
    if !(values[0] > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "centroid ({:.4}, {:.4}) lies outside the positive region",
            c[0], c[1]
        )));
    }
    let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
    for &(start, samples, reach) in &rays {
        let v = |s: usize| values[start + s];
        let dr = reach / samples as f64;
        let radius = (1..=samples)
            .find(|&s| v(s) <= 0.0)
            .map_or(reach, |s| {
                let (a, b) = (v(s - 1), v(s));
                dr * ((s - 1) as f64 + a / (a - b))
            });
        rmin = rmin.min(radius);
        rmax = rmax.max(radius);
    }
    Ok(InterfaceMetrics {
        area,
        centroid: c,
        min_radius: rmin,
        max_radius: rmax,
        asphericity: rmax / rmin,
    })
}

/// Interface metrics of every state, as `interface.csv` rows.
pub fn interface_table(space: &FeSpace, trajectory: &Trajectory) -> Result<(Vec<InterfaceMetrics>, String)> {
    let mut csv = String::from("step,time,area,centroid_x,centroid_y,min_radius,max_radius,asphericity\n");
    let mut metrics = Vec::with_capacity(trajectory.len());
    for (i, (u, t)) in trajectory.states.iter().zip(&trajectory.times).enumerate() {
        let m = interface_metrics(space, u).map_err(|e| e.at_step(i))?;
        let _ = writeln!(
            csv,
            "{i},{t:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            m.area, m.centroid[0], m.centroid[1], m.min_radius, m.max_radius, m.asphericity
        );
        metrics.push(m);
    }
    Ok((metrics, csv))
}
