//! Dual active-set finisher in the Goldfarb–Idnani style.
//!
//! Starting from an active-set guess, inequalities with wrong-sign
//! multipliers are released until the equality-constrained minimizer is dual
//! feasible. Violated rows are then added one at a time; each addition moves
//! along the primal-dual direction and drops any row whose multiplier would
//! cross zero. Every working-set change is a fresh banded KKT factorization.

use super::{inf_norm, kkt_ordering, Active, Scaled};
use crate::qp::ldl::SkylineLdl;

/// Primal and dual regularization of the working-set KKT matrix, removed
/// again by iterative refinement. Large multipliers can stall the refinement;
/// the factorization is then redone with a hundredfold smaller shift.
const DELTA: f64 = 1e-7;
const MIN_DELTA: f64 = 1e-13;
const REFINE_STEPS: usize = 12;
/// Working-set factorizations allowed per call. A good guess needs a handful;
/// running out hands control back to the ADMM iteration.
const MAX_FACTORIZATIONS: usize = 200;

struct Row {
    index: usize,
    /// +1 for an upper bound, −1 for a lower bound; equalities use +1.
    sign: f64,
    equality: bool,
}

/// Working-set KKT matrix [P Bᵀ; B 0] with B the signed active rows.
struct Kkt {
    n: usize,
    order: Vec<usize>,
    exact: Vec<(usize, usize, f64)>,
    delta: f64,
    factor: SkylineLdl,
}

impl Kkt {
    fn new(
        s: &Scaled,
        rows_of: &[Vec<(usize, f64)>],
        row_max: &[Option<usize>],
        work: &[Row],
    ) -> Option<Self> {
        let n = s.q.len();
        let mut exact: Vec<(usize, usize, f64)> = s.p.iter().collect();
        let mut max_col = Vec::with_capacity(work.len());
        for (slot, r) in work.iter().enumerate() {
            exact.extend(
                rows_of[r.index]
                    .iter()
                    .map(|&(c, v)| (n + slot, c, r.sign * v)),
            );
            max_col.push(row_max[r.index]);
        }
        let order = kkt_ordering(n, &max_col);
        let factor = Self::factor(n, &order, &exact, DELTA)?;
        Some(Self {
            n,
            order,
            exact,
            delta: DELTA,
            factor,
        })
    }

    fn factor(n: usize, order: &[usize], exact: &[(usize, usize, f64)], delta: f64) -> Option<SkylineLdl> {
        let dim = order.len();
        let mut entries = exact.to_vec();
        entries.extend((0..n).map(|j| (j, j, delta)));
        entries.extend((n..dim).map(|j| (j, j, -delta)));
        SkylineLdl::factor(dim, order.to_vec(), &entries).ok()
    }

    fn residual(&self, rhs: &[f64], sol: &[f64]) -> Vec<f64> {
        let mut r = rhs.to_vec();
        for &(a, b, v) in &self.exact {
            if a == b {
                r[a] -= v * sol[a];
            } else {
                r[a] -= v * sol[b];
                r[b] -= v * sol[a];
            }
        }
        r
    }

    fn solve(&mut self, rhs: &[f64]) -> Option<Vec<f64>> {
        let scale = inf_norm(rhs).max(1.0);
        loop {
            let mut sol = rhs.to_vec();
            self.factor.solve_in_place(&mut sol);
            let mut r = self.residual(rhs, &sol);
            for _ in 0..REFINE_STEPS {
                if inf_norm(&r) <= 1e-15 * scale {
                    break;
                }
                self.factor.solve_in_place(&mut r);
                sol.iter_mut().zip(&r).for_each(|(s, d)| *s += d);
                r = self.residual(rhs, &sol);
            }
            if !sol.iter().all(|v| v.is_finite()) {
                return None;
            }
            if inf_norm(&r) <= 1e-10 * scale || self.delta <= MIN_DELTA {
                return Some(sol);
            }
            self.delta *= 1e-2;
            self.factor = Self::factor(self.n, &self.order, &self.exact, self.delta)?;
        }
    }

    /// Minimizer with every working row held at its bound: (x, multipliers).
    fn stationary_point(&mut self, s: &Scaled, work: &[Row]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let mut rhs = vec![0.0; n + work.len()];
        for j in 0..n {
            rhs[j] = -s.q[j];
        }
        for (slot, r) in work.iter().enumerate() {
            let b = if r.sign > 0.0 {
                s.u[r.index]
            } else {
                s.l[r.index]
            };
            rhs[n + slot] = r.sign * b;
        }
        let sol = self.solve(&rhs)?;
        Some((sol[..n].to_vec(), sol[n..].to_vec()))
    }
}

pub(super) enum Finish {
    /// Scaled (x, y).
    Solved(Vec<f64>, Vec<f64>),
    /// Scaled dual ray δy with Aᵀδy = 0 and negative support, still to be
    /// checked by the caller.
    Infeasible(Vec<f64>),
}

/// `None` when the working set degenerates or the factorization budget runs
/// out.
pub(super) fn finish(s: &Scaled, guess: &[Active], eps_primal: f64) -> Option<Finish> {
    let n = s.q.len();
    let m = s.l.len();
    let mut rows_of: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (r, c, v) in s.a.iter() {
        rows_of[r].push((c, v));
    }
    let row_max = s.a.row_max_col();
    let mut work: Vec<Row> = guess
        .iter()
        .enumerate()
        .filter(|(i, _)| !rows_of[*i].is_empty())
        .filter_map(|(i, a)| match a {
            Active::Inactive => None,
            Active::Equality => Some(Row {
                index: i,
                sign: 1.0,
                equality: true,
            }),
            Active::Lower => Some(Row {
                index: i,
                sign: -1.0,
                equality: false,
            }),
            Active::Upper => Some(Row {
                index: i,
                sign: 1.0,
                equality: false,
            }),
        })
        .collect();

    let mut factorizations = 0;
    let mut factor = |work: &[Row]| {
        factorizations += 1;
        if factorizations > MAX_FACTORIZATIONS {
            return None;
        }
        Kkt::new(s, &rows_of, &row_max, work)
    };

    // Release wrong-sign rows until the working-set minimizer is dual feasible.
    let (mut x, mut lambda) = loop {
        let mut kkt = factor(&work)?;
        let (x, lambda) = kkt.stationary_point(s, &work)?;
        let before = work.len();
        let mut slot = 0;
        work.retain(|r| {
            let keep = r.equality || lambda[slot] >= 0.0;
            slot += 1;
            keep
        });
        if work.len() == before {
            break (x, lambda);
        }
    };

    let mut kkt = factor(&work)?;
    let mut in_work = vec![false; m];
    work.iter().for_each(|r| in_work[r.index] = true);
    let mut ax = vec![0.0; m];
    loop {
        s.a.mul_vec(&x, &mut ax);
        // Most violated row outside the working set.
        let mut pick: Option<(usize, f64, f64)> = None;
        for i in 0..m {
            if in_work[i] || rows_of[i].is_empty() {
                continue;
            }
            let tol = 0.01 * eps_primal * s.e[i];
            let (viol, sign) = if ax[i] < s.l[i] - tol {
                (s.l[i] - ax[i], -1.0)
            } else if ax[i] > s.u[i] + tol {
                (ax[i] - s.u[i], 1.0)
            } else {
                continue;
            };
            if pick.map_or(true, |(_, v, _)| viol > v) {
                pick = Some((i, viol, sign));
            }
        }
        let Some((p, _, sign)) = pick else {
            let mut y = vec![0.0; m];
            for (r, l) in work.iter().zip(&lambda) {
                y[r.index] = r.sign * l;
            }
            return Some(Finish::Solved(x, y));
        };

        // Raise the multiplier of p until its row is satisfied with equality,
        // dropping rows whose multipliers reach zero on the way.
        let mut lambda_p = 0.0;
        loop {
            let mut rhs = vec![0.0; n + work.len()];
            for &(c, v) in &rows_of[p] {
                rhs[c] = -sign * v;
            }
            let dir = kkt.solve(&rhs)?;
            let (z, w) = dir.split_at(n);
            let ap_x: f64 = rows_of[p].iter().map(|&(c, v)| v * x[c]).sum();
            let ap_z: f64 = rows_of[p].iter().map(|&(c, v)| v * z[c]).sum();
            let slope = sign * ap_z;
            let bound = if sign > 0.0 { s.u[p] } else { s.l[p] };
            let remaining = sign * (ap_x - bound);
            let z_scale = inf_norm(z);
            // A vanishing primal direction means a_p lies in the span of the
            // working rows: only the multipliers move.
            let dual_only = z_scale <= 10.0 * DELTA * inf_norm(w).max(1.0);
            let t_full = if !dual_only && slope < -1e-12 * z_scale {
                remaining / -slope
            } else {
                f64::INFINITY
            };
            let mut t_drop = f64::INFINITY;
            let mut blocking = None;
            for (slot, r) in work.iter().enumerate() {
                if !r.equality && w[slot] < 0.0 {
                    let t = -lambda[slot] / w[slot];
                    if t < t_drop {
                        t_drop = t;
                        blocking = Some(slot);
                    }
                }
            }
            let t = t_full.min(t_drop);
            if !t.is_finite() {
                if !dual_only {
                    return None;
                }
                let mut ray = vec![0.0; m];
                ray[p] = sign;
                for (r, wj) in work.iter().zip(w) {
                    ray[r.index] += r.sign * wj;
                }
                return Some(Finish::Infeasible(ray));
            }
            if !dual_only {
                x.iter_mut().zip(z).for_each(|(xi, zi)| *xi += t * zi);
            }
            lambda.iter_mut().zip(w).for_each(|(li, wi)| *li += t * wi);
            lambda_p += t;
            if t_full <= t_drop {
                work.push(Row {
                    index: p,
                    sign,
                    equality: false,
                });
                lambda.push(lambda_p);
                in_work[p] = true;
                kkt = factor(&work)?;
                // Re-solve to shed the drift accumulated along the steps.
                (x, lambda) = kkt.stationary_point(s, &work)?;
                break;
            }
            let slot = blocking.expect("finite drop step has a blocking row");
            in_work[work[slot].index] = false;
            work.remove(slot);
            lambda.remove(slot);
            kkt = factor(&work)?;
        }
    }
}
