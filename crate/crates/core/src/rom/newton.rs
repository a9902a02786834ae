use nalgebra::{DMatrix, DVector};

use super::RomStep;
use crate::error::{Error, Result};
use crate::fom::NewtonConfig;

/// Nonlinear part of a reduced residual and, on request, its Jacobian.
pub(crate) type NonlinearPart<'a> = dyn Fn(&DVector<f64>, bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> + 'a;

/// Newton on `K α + n(α) − c = 0`, warm-started at `start`. Converges on
/// the residual (absolute plus relative to the first residual) or on an
/// increment below `tol_step · max(1, ‖α‖)`.
pub(crate) fn solve(
    k: &DMatrix<f64>,
    c: &DVector<f64>,
    start: &DVector<f64>,
    nonlinear: Option<&NonlinearPart<'_>>,
    cfg: &NewtonConfig,
) -> Result<RomStep> {
    let Some(nonlinear) = nonlinear else {
        let lu = k.clone().lu();
        let alpha = lu
            .solve(c)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::LinearSolve("singular reduced operator".into()))?;
        let r = (k * &alpha - c).norm();
        return Ok(RomStep {
            alpha,
            iterations: 1,
            residual_history: vec![r],
        });
    };
    let mut alpha = start.clone();
    let mut history = Vec::new();
    let mut tol = f64::NAN;
    for it in 0..=cfg.max_iter {
        let (n, jn) = nonlinear(&alpha, it < cfg.max_iter)?;
        let r = k * &alpha + n - c;
        let norm = r.norm();
        history.push(norm);
        if !norm.is_finite() {
            break;
        }
        if it == 0 {
            tol = cfg.tol_abs + cfg.tol_rel * norm;
        }
        if norm <= tol {
            return Ok(RomStep {
                alpha,
                iterations: it,
                residual_history: history,
            });
        }
        let Some(jn) = jn else { break };
        let delta = (k + jn)
            .lu()
            .solve(&r)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::LinearSolve("singular reduced Jacobian".into()))?;
        alpha -= &delta;
        if delta.norm() <= cfg.tol_step * alpha.norm().max(1.0) {
            return Ok(RomStep {
                alpha,
                iterations: it + 1,
                residual_history: history,
            });
        }
    }
    Err(Error::NewtonDiverged {
        iterations: history.len().saturating_sub(1),
        history,
    })
}
