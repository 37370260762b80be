//! Convex quadratic programs in the canonical form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! shared by the guide-line smoother and the piecewise-jerk path optimizer.
//! [`solve`] runs an operator-splitting (ADMM) iteration on a banded KKT
//! factorization and finishes with an active-set polish; [`kkt_residuals`]
//! is an independent checker that certifies any returned point.

mod admm;
mod check;
mod csc;
mod dump;
mod ldl;

pub use check::kkt_residuals;
pub use csc::CscMatrix;
pub use ldl::{SkylineLdl, ZeroPivot};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("KKT factorization hit a zero pivot at index {0}")]
    Factorization(usize),
}

/// Quadratic program with two-sided linear constraints.
///
/// `p` stores only the upper triangle of the symmetric Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    p: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl QpProblem {
    pub fn new(
        p: CscMatrix,
        q: Vec<f64>,
        a: CscMatrix,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, QpError> {
        let n = q.len();
        if p.nrows != n || p.ncols != n {
            return Err(QpError::DimensionMismatch(format!(
                "P is {}x{} but q has {n} entries",
                p.nrows, p.ncols
            )));
        }
        if a.ncols != n {
            return Err(QpError::DimensionMismatch(format!(
                "A has {} columns, expected {n}",
                a.ncols
            )));
        }
        let m = a.nrows;
        if lower.len() != m || upper.len() != m {
            return Err(QpError::DimensionMismatch(format!(
                "A has {m} rows but bounds have {} and {} entries",
                lower.len(),
                upper.len()
            )));
        }
        if !p.is_upper_triangular() {
            return Err(QpError::InvalidProblem(
                "P must be stored as its upper triangle".into(),
            ));
        }
        if p.values
            .iter()
            .chain(&a.values)
            .chain(&q)
            .any(|v| !v.is_finite())
        {
            return Err(QpError::InvalidProblem(
                "non-finite entry in P, q or A".into(),
            ));
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(QpError::InvalidProblem(format!("NaN bound in row {i}")));
            }
            if l > u {
                return Err(QpError::InvalidProblem(format!(
                    "row {i}: lower {l} exceeds upper {u}"
                )));
            }
            if l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(QpError::InvalidProblem(format!(
                    "row {i}: unsatisfiable infinite bound"
                )));
            }
        }
        Ok(Self {
            p,
            q,
            a,
            lower,
            upper,
        })
    }

    /// Builds a problem from triplets. Hessian triplets may come from either
    /// triangle (or both); they are folded onto the upper triangle, so pass
    /// each off-diagonal coupling once.
    pub fn from_triplets(
        n: usize,
        p_triplets: &[(usize, usize, f64)],
        q: Vec<f64>,
        m: usize,
        a_triplets: &[(usize, usize, f64)],
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, QpError> {
        let upper_p: Vec<(usize, usize, f64)> = p_triplets
            .iter()
            .map(|&(r, c, v)| (r.min(c), r.max(c), v))
            .collect();
        if upper_p.iter().any(|&(r, c, _)| r >= n || c >= n)
            || a_triplets.iter().any(|&(r, c, _)| r >= m || c >= n)
        {
            return Err(QpError::DimensionMismatch(
                "triplet index out of range".into(),
            ));
        }
        let p = CscMatrix::from_triplets(n, n, &upper_p);
        let a = CscMatrix::from_triplets(m, n, a_triplets);
        Self::new(p, q, a, lower, upper)
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows
    }

    pub fn hessian(&self) -> &CscMatrix {
        &self.p
    }

    pub fn linear(&self) -> &[f64] {
        &self.q
    }

    pub fn constraints(&self) -> &CscMatrix {
        &self.a
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// ½ xᵀ P x + qᵀ x
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; x.len()];
        self.p.sym_upper_mul_vec(x, &mut px);
        x.iter()
            .zip(&px)
            .zip(&self.q)
            .map(|((xi, pxi), qi)| 0.5 * xi * pxi + qi * xi)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum QpStatus {
    Solved,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Constraint multipliers; stationarity reads P x + q + Aᵀ y = 0. For an
    /// infeasible problem, the dual ray that certifies it.
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// True when the returned point came from the active-set polish.
    pub polished: bool,
}

/// Solver diagnostics without the solution vectors.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolveStats {
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
}

impl From<&QpSolution> for SolveStats {
    fn from(s: &QpSolution) -> Self {
        Self {
            status: s.status,
            iterations: s.iterations,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            polished: s.polished,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iterations: usize,
    pub warm_start_x: Option<Vec<f64>>,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_infeasible: f64,
    pub scaling_iterations: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_primal: 1e-6,
            eps_dual: 1e-6,
            max_iterations: 20_000,
            warm_start_x: None,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_infeasible: 1e-5,
            scaling_iterations: 10,
            polish: true,
        }
    }
}

impl QpSettings {
    fn validate(&self, n: usize) -> Result<(), QpError> {
        if !(self.eps_primal > 0.0 && self.eps_dual > 0.0) {
            return Err(QpError::InvalidProblem(
                "tolerances must be positive".into(),
            ));
        }
        if !(self.rho > 0.0 && self.sigma > 0.0 && self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(QpError::InvalidProblem(
                "rho, sigma must be positive and alpha in (0, 2)".into(),
            ));
        }
        if let Some(ws) = &self.warm_start_x {
            if ws.len() != n {
                return Err(QpError::DimensionMismatch(format!(
                    "warm start has {} entries, expected {n}",
                    ws.len()
                )));
            }
        }
        Ok(())
    }
}

/// Solves the problem. Infeasibility and iteration exhaustion are reported
/// through [`QpSolution::status`]; `Err` is reserved for malformed input.
///
/// When the `PLANNER_DUMP_QP` environment variable names a directory, the
/// problem is written there as a plain-text matrix dump before solving.
pub fn solve(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    settings.validate(problem.num_vars())?;
    dump::maybe_dump(problem);
    admm::solve(problem, settings)
}
