//! Operator-splitting iteration (OSQP-style ADMM) with Ruiz equilibration,
//! adaptive step size and a primal infeasibility certificate. The iterate's
//! active-set guess seeds a dual active-set finisher (the polish) that
//! returns an exact KKT point; attempts back off geometrically on failure.

mod active;

use active::Finish;

use super::ldl::SkylineLdl;
use super::{CscMatrix, QpError, QpProblem, QpSettings, QpSolution, QpStatus};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const CHECK_INTERVAL: usize = 5;
const POLISH_INTERVAL: usize = 25;
const ADAPT_INTERVAL: usize = 50;

/// Problem data after equilibration: P̄ = c·D P D, q̄ = c·D q, Ā = E A D.
struct Scaled {
    p: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    equality: Vec<bool>,
}

fn limit(norm: f64) -> f64 {
    if norm < MIN_SCALING {
        1.0
    } else {
        norm.min(MAX_SCALING)
    }
}

fn scale_problem(problem: &QpProblem, iterations: usize) -> Scaled {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    let mut p = problem.hessian().clone();
    let mut a = problem.constraints().clone();
    let mut q = problem.linear().to_vec();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let mut c = 1.0;

    for _ in 0..iterations {
        let pn = p.sym_upper_col_inf_norms();
        let an = a.col_inf_norms();
        let dd: Vec<f64> = pn
            .iter()
            .zip(&an)
            .map(|(x, y)| 1.0 / limit(x.max(*y)).sqrt())
            .collect();
        let ee: Vec<f64> = a
            .row_inf_norms()
            .iter()
            .map(|r| 1.0 / limit(*r).sqrt())
            .collect();
        p.scale(&dd, &dd);
        a.scale(&ee, &dd);
        q.iter_mut().zip(&dd).for_each(|(qi, di)| *qi *= di);
        d.iter_mut().zip(&dd).for_each(|(x, s)| *x *= s);
        e.iter_mut().zip(&ee).for_each(|(x, s)| *x *= s);

        let pn = p.sym_upper_col_inf_norms();
        let mean = if n > 0 {
            pn.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };
        let qn = q.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let gamma = 1.0 / limit(mean.max(qn));
        p.values.iter_mut().for_each(|v| *v *= gamma);
        q.iter_mut().for_each(|v| *v *= gamma);
        c *= gamma;
    }

    let equality: Vec<bool> = problem
        .lower()
        .iter()
        .zip(problem.upper())
        .map(|(l, u)| l == u)
        .collect();
    let l = problem.lower().iter().zip(&e).map(|(l, s)| l * s).collect();
    let u = problem.upper().iter().zip(&e).map(|(u, s)| u * s).collect();
    Scaled {
        p,
        q,
        a,
        l,
        u,
        d,
        e,
        c,
        equality,
    }
}

/// Ordering that places every constraint row right after the last variable
/// it touches, which keeps banded problems banded.
fn kkt_ordering(n: usize, row_max_col: &[Option<usize>]) -> Vec<usize> {
    let mut keys: Vec<(usize, u8, usize)> = (0..n).map(|j| (j, 0, j)).collect();
    keys.extend(
        row_max_col
            .iter()
            .enumerate()
            .map(|(i, c)| (c.unwrap_or(0), 1, i)),
    );
    keys.sort_unstable();
    keys.into_iter()
        .map(|(_, kind, idx)| if kind == 0 { idx } else { n + idx })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

struct Workspace<'a> {
    s: &'a Scaled,
    sigma: f64,
    rho: Vec<f64>,
    rho_base: f64,
    order: Vec<usize>,
    factor: SkylineLdl,
}

impl<'a> Workspace<'a> {
    fn rho_vector(s: &Scaled, base: f64) -> Vec<f64> {
        (0..s.l.len())
            .map(|i| {
                if s.l[i] == f64::NEG_INFINITY && s.u[i] == f64::INFINITY {
                    RHO_MIN
                } else if s.equality[i] {
                    RHO_EQ_FACTOR * base
                } else {
                    base
                }
            })
            .collect()
    }

    fn factorize(
        s: &Scaled,
        order: &[usize],
        sigma: f64,
        rho: &[f64],
    ) -> Result<SkylineLdl, QpError> {
        let n = s.q.len();
        let mut entries: Vec<(usize, usize, f64)> =
            Vec::with_capacity(s.p.nnz() + s.a.nnz() + n + rho.len());
        entries.extend(s.p.iter());
        entries.extend((0..n).map(|j| (j, j, sigma)));
        entries.extend(s.a.iter().map(|(r, c, v)| (n + r, c, v)));
        entries.extend(
            rho.iter()
                .enumerate()
                .map(|(i, r)| (n + i, n + i, -1.0 / r)),
        );
        SkylineLdl::factor(n + rho.len(), order.to_vec(), &entries)
            .map_err(|zp| QpError::Factorization(zp.index))
    }

    fn new(s: &'a Scaled, settings: &QpSettings) -> Result<Self, QpError> {
        let n = s.q.len();
        let order = kkt_ordering(n, &s.a.row_max_col());
        let rho_base = settings.rho;
        let rho = Self::rho_vector(s, rho_base);
        let factor = Self::factorize(s, &order, settings.sigma, &rho)?;
        Ok(Self {
            s,
            sigma: settings.sigma,
            rho,
            rho_base,
            order,
            factor,
        })
    }

    fn set_rho(&mut self, base: f64) -> Result<(), QpError> {
        self.rho_base = base;
        self.rho = Self::rho_vector(self.s, base);
        self.factor = Self::factorize(self.s, &self.order, self.sigma, &self.rho)?;
        Ok(())
    }
}

/// Unscaled residuals of a scaled iterate.
struct Residuals {
    primal: f64,
    dual: f64,
    /// Scaled quantities for step-size adaptation.
    primal_scaled: f64,
    dual_scaled: f64,
    primal_norm: f64,
    dual_norm: f64,
}

fn residuals(s: &Scaled, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
    let n = x.len();
    let m = z.len();
    let mut ax = vec![0.0; m];
    s.a.mul_vec(x, &mut ax);
    let mut px = vec![0.0; n];
    s.p.sym_upper_mul_vec(x, &mut px);
    let mut aty = vec![0.0; n];
    s.a.mul_t_vec(y, &mut aty);

    let mut primal = 0.0f64;
    let mut primal_scaled = 0.0f64;
    for i in 0..m {
        let r = ax[i] - z[i];
        primal_scaled = primal_scaled.max(r.abs());
        primal = primal.max((r / s.e[i]).abs());
    }
    let mut dual = 0.0f64;
    let mut dual_scaled = 0.0f64;
    for j in 0..n {
        let r = px[j] + s.q[j] + aty[j];
        dual_scaled = dual_scaled.max(r.abs());
        dual = dual.max((r / (s.c * s.d[j])).abs());
    }
    Residuals {
        primal,
        dual,
        primal_scaled,
        dual_scaled,
        primal_norm: inf_norm(&ax).max(inf_norm(z)),
        dual_norm: inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&s.q)),
    }
}

/// Primal infeasibility certificate on a dual increment: Aᵀδy ≈ 0 together
/// with uᵀ(δy)₊ + lᵀ(δy)₋ < 0.
fn certifies_infeasibility(s: &Scaled, dy: &[f64], eps: f64) -> bool {
    // Work on the unscaled increment E δȳ (the 1/c factor cancels).
    let dy_u: Vec<f64> = dy.iter().zip(&s.e).map(|(v, e)| v * e).collect();
    let norm = inf_norm(&dy_u);
    if norm < 1e-30 {
        return false;
    }
    let mut atdy = vec![0.0; s.q.len()];
    s.a.mul_t_vec(dy, &mut atdy);
    let at_norm = atdy
        .iter()
        .zip(&s.d)
        .fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs()));
    if at_norm > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let v = dy_u[i];
        if v > 0.0 {
            if s.u[i] == f64::INFINITY {
                return false;
            }
            support += s.u[i] / s.e[i] * v;
        } else if v < 0.0 {
            if s.l[i] == f64::NEG_INFINITY {
                return false;
            }
            support += s.l[i] / s.e[i] * v;
        }
    }
    support < -eps * norm
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Active {
    Inactive,
    Lower,
    Upper,
    Equality,
}

/// Active-set guess from an ADMM iterate: a row is taken as active when its
/// slack is smaller than its multiplier.
fn guess_active(s: &Scaled, z: &[f64], y: &[f64]) -> Vec<Active> {
    (0..s.l.len())
        .map(|i| {
            if s.equality[i] {
                Active::Equality
            } else if z[i] - s.l[i] < -y[i] {
                Active::Lower
            } else if s.u[i] - z[i] < y[i] {
                Active::Upper
            } else {
                Active::Inactive
            }
        })
        .collect()
}

fn unscale(s: &Scaled, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let xu = x.iter().zip(&s.d).map(|(v, d)| v * d).collect();
    let yu = y.iter().zip(&s.e).map(|(v, e)| v * e / s.c).collect();
    (xu, yu)
}

fn clamp_into(v: &[f64], l: &[f64], u: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(l.iter().zip(u))
        .map(|(x, (lo, hi))| x.max(*lo).min(*hi))
        .collect()
}

enum Polished {
    Point(QpSolution),
    /// Verified scaled infeasibility ray.
    Ray(Vec<f64>),
}

/// Tries the polish and returns an unscaled solution when it meets the
/// tolerances, or a dual ray that passes the infeasibility certificate.
fn try_polish(
    s: &Scaled,
    z: &[f64],
    y: &[f64],
    settings: &QpSettings,
    iterations: usize,
) -> Option<Polished> {
    if !settings.polish {
        return None;
    }
    let (xp, yp) = match active::finish(s, &guess_active(s, z, y), settings.eps_primal)? {
        Finish::Solved(x, y) => (x, y),
        Finish::Infeasible(ray) => {
            return certifies_infeasibility(s, &ray, settings.eps_infeasible)
                .then_some(Polished::Ray(ray));
        }
    };
    let mut ax = vec![0.0; s.l.len()];
    s.a.mul_vec(&xp, &mut ax);
    let zp = clamp_into(&ax, &s.l, &s.u);
    let r = residuals(s, &xp, &zp, &yp);
    if r.primal <= settings.eps_primal && r.dual <= settings.eps_dual {
        let (x, y) = unscale(s, &xp, &yp);
        Some(Polished::Point(QpSolution {
            x,
            y,
            status: QpStatus::Solved,
            iterations,
            primal_residual: r.primal,
            dual_residual: r.dual,
            polished: true,
        }))
    } else {
        None
    }
}

/// Infeasible result carrying the certifying ray as its multipliers.
fn infeasible(s: &Scaled, x: &[f64], ray: &[f64], iterations: usize, r: &Residuals) -> QpSolution {
    let (x, y) = unscale(s, x, ray);
    QpSolution {
        x,
        y,
        status: QpStatus::Infeasible,
        iterations,
        primal_residual: r.primal,
        dual_residual: r.dual,
        polished: false,
    }
}

pub(super) fn solve(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let s = scale_problem(problem, settings.scaling_iterations);
    let n = s.q.len();
    let m = s.l.len();
    let mut ws = Workspace::new(&s, settings)?;

    let mut x: Vec<f64> = match &settings.warm_start_x {
        Some(w) => w.iter().zip(&s.d).map(|(v, d)| v / d).collect(),
        None => vec![0.0; n],
    };
    let mut z = {
        let mut ax = vec![0.0; m];
        s.a.mul_vec(&x, &mut ax);
        clamp_into(&ax, &s.l, &s.u)
    };
    let mut y = vec![0.0; m];
    let alpha = settings.alpha;
    let mut rhs = vec![0.0; n + m];
    let mut last = residuals(&s, &x, &z, &y);
    // Failed polish attempts push the next one further out.
    let mut next_polish = POLISH_INTERVAL;
    let mut polish_gap = POLISH_INTERVAL;
    let mut dy = vec![0.0; m];

    for iter in 1..=settings.max_iterations {
        for j in 0..n {
            rhs[j] = ws.sigma * x[j] - s.q[j];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / ws.rho[i];
        }
        ws.factor.solve_in_place(&mut rhs);

        for j in 0..n {
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let z_tilde = z[i] + (rhs[n + i] - y[i]) / ws.rho[i];
            let z_relaxed = alpha * z_tilde + (1.0 - alpha) * z[i];
            let z_new = (z_relaxed + y[i] / ws.rho[i]).max(s.l[i]).min(s.u[i]);
            dy[i] = ws.rho[i] * (z_relaxed - z_new);
            y[i] += dy[i];
            z[i] = z_new;
        }

        if iter % CHECK_INTERVAL == 0 || iter == settings.max_iterations {
            last = residuals(&s, &x, &z, &y);
            if last.primal <= settings.eps_primal && last.dual <= settings.eps_dual {
                if let Some(Polished::Point(p)) = try_polish(&s, &z, &y, settings, iter) {
                    return Ok(p);
                }
                let (xu, yu) = unscale(&s, &x, &y);
                return Ok(QpSolution {
                    x: xu,
                    y: yu,
                    status: QpStatus::Solved,
                    iterations: iter,
                    primal_residual: last.primal,
                    dual_residual: last.dual,
                    polished: false,
                });
            }
            if certifies_infeasibility(&s, &dy, settings.eps_infeasible) {
                return Ok(infeasible(&s, &x, &dy, iter, &last));
            }
        }

        if iter == next_polish {
            match try_polish(&s, &z, &y, settings, iter) {
                Some(Polished::Point(p)) => return Ok(p),
                Some(Polished::Ray(ray)) => {
                    return Ok(infeasible(&s, &x, &ray, iter, &residuals(&s, &x, &z, &y)))
                }
                None => {}
            }
            polish_gap *= 2;
            next_polish += polish_gap;
        }

        if iter % ADAPT_INTERVAL == 0 {
            let r = residuals(&s, &x, &z, &y);
            let pr = r.primal_scaled / (r.primal_norm + 1e-30);
            let du = r.dual_scaled / (r.dual_norm + 1e-30);
            if pr > 0.0 && du > 0.0 {
                let proposed = (ws.rho_base * (pr / du).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if proposed > 5.0 * ws.rho_base || proposed < 0.2 * ws.rho_base {
                    ws.set_rho(proposed)?;
                }
            }
        }
    }

    let (xu, yu) = unscale(&s, &x, &y);
    Ok(QpSolution {
        x: xu,
        y: yu,
        status: QpStatus::MaxIterations,
        iterations: settings.max_iterations,
        primal_residual: last.primal,
        dual_residual: last.dual,
        polished: false,
    })
}
