//! Independent optimality check. Deliberately written against the raw
//! compressed arrays so it shares no arithmetic with the solver loop.

use super::{QpError, QpProblem};

/// Returns `(primal, dual)` residuals of a candidate primal/dual pair:
///
/// * primal = ‖clamp(A x, l, u) − A x‖∞
/// * dual   = ‖P x + q + Aᵀ y‖∞
pub fn kkt_residuals(problem: &QpProblem, x: &[f64], y: &[f64]) -> Result<(f64, f64), QpError> {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    if x.len() != n || y.len() != m {
        return Err(QpError::DimensionMismatch(format!(
            "expected x of length {n} and y of length {m}, got {} and {}",
            x.len(),
            y.len()
        )));
    }

    let a = problem.constraints();
    let mut ax = vec![0.0f64; m];
    let mut grad: Vec<f64> = problem.linear().to_vec();
    for col in 0..n {
        for k in a.col_ptr[col]..a.col_ptr[col + 1] {
            let row = a.row_idx[k];
            ax[row] += a.values[k] * x[col];
            grad[col] += a.values[k] * y[row];
        }
    }
    let p = problem.hessian();
    for col in 0..n {
        for k in p.col_ptr[col]..p.col_ptr[col + 1] {
            let row = p.row_idx[k];
            grad[row] += p.values[k] * x[col];
            if row != col {
                grad[col] += p.values[k] * x[row];
            }
        }
    }

    let primal = ax
        .iter()
        .zip(problem.lower().iter().zip(problem.upper()))
        .map(|(&v, (&lo, &hi))| {
            if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                0.0
            }
        })
        .fold(0.0f64, f64::max);
    let dual = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
    Ok((primal, dual))
}
