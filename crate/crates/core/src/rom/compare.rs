use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::Trajectory;
use crate::linalg::CsrMatrix;
use crate::pod::ReducedBasis;

/// Field and output errors of a reduced trajectory at `t_0 … t_I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    /// `‖u(t_i) − Φ α(t_i)‖` in the norm induced by the given matrix.
    pub field: Vec<f64>,
    /// `|s(t_i) − s_N(t_i)|`
    pub output: Vec<f64>,
}

impl ErrorSeries {
    /// Mean field error over `t_1 … t_I`.
    pub fn mean_field(&self) -> f64 {
        mean_after_first(&self.field)
    }

    /// Mean output error over `t_1 … t_I`.
    pub fn mean_output(&self) -> f64 {
        mean_after_first(&self.output)
    }

    pub fn max_field(&self) -> f64 {
        self.field[1..].iter().fold(0.0, |a: f64, &b| a.max(b))
    }
}

fn mean_after_first(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    v[1..].iter().sum::<f64>() / (v.len() - 1) as f64
}

/// Compares a full-order trajectory with a reduced one step by step. `norm`
/// is usually the mass matrix.
pub fn compare_errors(fom: &Trajectory, rom: &Trajectory, basis: &ReducedBasis, norm: &CsrMatrix) -> Result<ErrorSeries> {
    if fom.len() != rom.len() || fom.times.iter().zip(&rom.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(Error::DimensionMismatch(format!(
            "trajectories on different time grids ({} and {} states)",
            fom.len(),
            rom.len()
        )));
    }
    let mut field = Vec::with_capacity(fom.len());
    for (u, alpha) in fom.states.iter().zip(&rom.states) {
        let e = u - basis.lift(alpha)?;
        field.push(norm.quad_form(&e).max(0.0).sqrt());
    }
    let output = fom.outputs.iter().zip(&rom.outputs).map(|(a, b)| (a - b).abs()).collect();
    Ok(ErrorSeries { field, output })
}
