//! Plain-text problem dumps for debugging, enabled by `PLANNER_DUMP_QP`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{CscMatrix, QpProblem};

pub const DUMP_ENV: &str = "PLANNER_DUMP_QP";

static COUNTER: AtomicUsize = AtomicUsize::new(0);

pub(super) fn maybe_dump(problem: &QpProblem) {
    let Some(dir) = std::env::var_os(DUMP_ENV) else {
        return;
    };
    let dir = PathBuf::from(dir);
    let seq = COUNTER.fetch_add(1, Ordering::Relaxed);
    let path = dir.join(format!("qp-{}-{seq:05}.mtx", std::process::id()));
    if let Err(err) =
        std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(&path, render(problem)))
    {
        log::warn!("could not dump QP to {}: {err}", path.display());
    }
}

fn write_matrix(out: &mut String, name: &str, m: &CscMatrix) {
    let _ = writeln!(out, "%% {name}");
    let _ = writeln!(out, "{} {} {}", m.nrows, m.ncols, m.nnz());
    for (r, c, v) in m.iter() {
        let _ = writeln!(out, "{} {} {:e}", r + 1, c + 1, v);
    }
}

fn write_vector(out: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(out, "%% {name}");
    let _ = writeln!(out, "{}", v.len());
    for x in v {
        let _ = writeln!(out, "{x:e}");
    }
}

/// Matrix-market style coordinate listing of P (upper), q, A, l and u.
pub(super) fn render(problem: &QpProblem) -> String {
    let mut out = String::from("%%MatrixMarket-like quadratic program dump\n");
    write_matrix(&mut out, "P (upper triangle)", problem.hessian());
    write_vector(&mut out, "q", problem.linear());
    write_matrix(&mut out, "A", problem.constraints());
    write_vector(&mut out, "l", problem.lower());
    write_vector(&mut out, "u", problem.upper());
    out
}
