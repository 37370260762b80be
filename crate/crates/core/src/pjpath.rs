//! Piecewise-jerk lateral path: (l, l′, l″) at uniform stations joined by
//! constant-jerk cubic segments, optimized as a QP inside a path boundary.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::PathBoundary;
use crate::format::sig;
use crate::geometry::{
    frenet_to_cartesian, CartesianPose, FrenetState, GeometryError, VehicleParams,
};
use crate::qp::{self, QpError, QpProblem, QpSettings, QpStatus, SolveStats};
use crate::smoother::{GuideLine, SmoothError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("invalid path configuration: {0}")]
    InvalidConfig(String),
    #[error("station mismatch: {0}")]
    StationMismatch(String),
    #[error("initial offset {l} outside the first boundary interval [{lo}, {hi}]")]
    InitialStateOutOfBounds { l: f64, lo: f64, hi: f64 },
    #[error("guide curvature {kappa_r} at station {station} (s = {s}) cannot be followed anywhere in the corridor")]
    InfeasibleGuideLine {
        station: usize,
        s: f64,
        kappa_r: f64,
    },
    #[error("no path reaches station {station} (s = {s}) within the slope and curvature bounds")]
    Unreachable { station: usize, s: f64 },
    #[error("path QP is infeasible")]
    PathInfeasible,
    #[error("path QP did not converge in {iterations} iterations (primal {primal_residual:e}, dual {dual_residual:e})")]
    SolverFailed {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },
    #[error("continuity residual {residual:e} at junction {junction}")]
    ContinuityViolated { junction: usize, residual: f64 },
    #[error("station {s} outside the path range [{start}, {end}]")]
    OutOfRange { s: f64, start: f64, end: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    GuideLine(#[from] SmoothError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PjConfig {
    #[serde(rename = "ds_m")]
    pub ds: f64,
    pub w_l: f64,
    pub w_dl: f64,
    pub w_ddl: f64,
    pub w_dddl: f64,
    pub w_obs: f64,
    pub dl_bound: f64,
    #[serde(rename = "ddl_bound_per_m")]
    pub ddl_bound: f64,
}

impl Default for PjConfig {
    fn default() -> Self {
        Self {
            ds: 0.5,
            w_l: 1.0,
            w_dl: 20.0,
            w_ddl: 1000.0,
            w_dddl: 50000.0,
            w_obs: 0.0,
            dl_bound: 2.0,
            ddl_bound: 0.5,
        }
    }
}

impl PjConfig {
    pub fn validate(&self) -> Result<(), PathError> {
        if !(self.ds.is_finite() && self.ds > 0.0) {
            return Err(PathError::InvalidConfig(format!(
                "ds = {} must be > 0",
                self.ds
            )));
        }
        for (name, w) in [
            ("w_l", self.w_l),
            ("w_dl", self.w_dl),
            ("w_ddl", self.w_ddl),
            ("w_dddl", self.w_dddl),
            ("w_obs", self.w_obs),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(PathError::InvalidConfig(format!(
                    "{name} = {w} must be finite and >= 0"
                )));
            }
        }
        if self.w_l <= 0.0 && self.w_obs <= 0.0 {
            return Err(PathError::InvalidConfig(
                "one of w_l, w_obs must be > 0".into(),
            ));
        }
        for (name, b) in [("dl_bound", self.dl_bound), ("ddl_bound", self.ddl_bound)] {
            if !(b > 0.0) {
                return Err(PathError::InvalidConfig(format!(
                    "{name} = {b} must be > 0"
                )));
            }
        }
        Ok(())
    }
}

/// l‴ on the segment from station i to i+1.
pub fn jerk_between(ddl_i: f64, ddl_next: f64, ds: f64) -> f64 {
    (ddl_next - ddl_i) / ds
}

/// Advances (l, l′, l″) by `ds` under constant jerk.
pub fn propagate(l: f64, dl: f64, ddl: f64, jerk: f64, ds: f64) -> (f64, f64, f64) {
    (
        l + dl * ds + 0.5 * ddl * ds * ds + jerk * ds * ds * ds / 6.0,
        dl + ddl * ds + 0.5 * jerk * ds * ds,
        ddl + jerk * ds,
    )
}

/// Linearized steering limit at a station: the row `a·l ≤ u` with
/// a = tan(α_max)·κ_r and u = tan(α_max) − |κ_r|·L, which is
/// κ_r / (1 − κ_r·l) ≤ κ_max multiplied through.
pub fn curvature_constraint_row(kappa_r: f64, vehicle: &VehicleParams) -> (f64, f64) {
    let t = vehicle.max_steer.tan();
    (t * kappa_r, t - kappa_r.abs() * vehicle.wheelbase)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseJerkPath {
    pub s0: f64,
    pub ds: f64,
    pub l: Vec<f64>,
    pub dl: Vec<f64>,
    pub ddl: Vec<f64>,
}

/// A sampled path pose at station `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub s: f64,
    pub pose: CartesianPose,
}

impl PiecewiseJerkPath {
    pub fn len(&self) -> usize {
        self.l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l.is_empty()
    }

    pub fn station(&self, i: usize) -> f64 {
        self.s0 + i as f64 * self.ds
    }

    pub fn end_s(&self) -> f64 {
        self.station(self.len() - 1)
    }

    pub fn jerk(&self, i: usize) -> f64 {
        jerk_between(self.ddl[i], self.ddl[i + 1], self.ds)
    }

    /// |propagate(station i) − station i+1| per component, per junction.
    pub fn continuity_residuals(&self) -> Vec<[f64; 3]> {
        (0..self.len().saturating_sub(1))
            .map(|i| {
                let (l, dl, ddl) =
                    propagate(self.l[i], self.dl[i], self.ddl[i], self.jerk(i), self.ds);
                [
                    (l - self.l[i + 1]).abs(),
                    (dl - self.dl[i + 1]).abs(),
                    (ddl - self.ddl[i + 1]).abs(),
                ]
            })
            .collect()
    }

    /// (l, l′, l″) at station `s` on the cubic segment containing it; knots
    /// return their stored values.
    pub fn evaluate(&self, s: f64) -> Result<(f64, f64, f64), PathError> {
        let (start, end) = (self.s0, self.end_s());
        if !(s >= start - 1e-9 && s <= end + 1e-9) {
            return Err(PathError::OutOfRange { s, start, end });
        }
        let n = self.len();
        let u = ((s - self.s0) / self.ds).max(0.0);
        let nearest = (u.round() as usize).min(n - 1);
        if (s - self.station(nearest)).abs() <= 1e-12 * self.ds.max(s.abs()) {
            return Ok((self.l[nearest], self.dl[nearest], self.ddl[nearest]));
        }
        let i = (u.floor() as usize).min(n - 2);
        Ok(self.evaluate_on_segment(i, s - self.station(i)))
    }

    /// Segment `i`'s cubic at offset δ from station i (no range check).
    pub fn evaluate_on_segment(&self, i: usize, delta: f64) -> (f64, f64, f64) {
        propagate(self.l[i], self.dl[i], self.ddl[i], self.jerk(i), delta)
    }

    /// Poses every `sample_ds` along the path (plus the final station), with
    /// the exact curvature of each sample.
    pub fn to_cartesian(
        &self,
        line: &GuideLine,
        sample_ds: f64,
    ) -> Result<Vec<PathSample>, PathError> {
        if !(sample_ds.is_finite() && sample_ds > 0.0) {
            return Err(PathError::InvalidConfig(format!(
                "sample_ds = {sample_ds} must be > 0"
            )));
        }
        let span = self.end_s() - self.s0;
        let count = (span / sample_ds + 1e-9).floor() as usize;
        let mut stations: Vec<f64> = (0..=count)
            .map(|k| self.s0 + k as f64 * sample_ds)
            .collect();
        if self.end_s() - stations[stations.len() - 1] > 1e-9 {
            stations.push(self.end_s());
        }
        stations
            .into_iter()
            .map(|s| {
                let (l, dl, ddl) = self.evaluate(s)?;
                let r = line.interpolate(s)?;
                let pose = frenet_to_cartesian(&FrenetState { s, l, dl, ddl }, &r)?;
                Ok(PathSample { s, pose })
            })
            .collect()
    }

    pub fn mirrored(&self) -> Self {
        Self {
            s0: self.s0,
            ds: self.ds,
            l: self.l.iter().map(|v| -v).collect(),
            dl: self.dl.iter().map(|v| -v).collect(),
            ddl: self.ddl.iter().map(|v| -v).collect(),
        }
    }

    /// CSV with header `s,l,dl,ddl`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,l,dl,ddl\n");
        for i in 0..self.len() {
            let row = [self.station(i), self.l[i], self.dl[i], self.ddl[i]].map(|v| sig(v, 9));
            writeln!(out, "{}", row.join(",")).expect("writing to a String");
        }
        out
    }
}

/// CSV with header `s,x,y,theta,kappa`.
pub fn cartesian_csv(samples: &[PathSample]) -> String {
    let mut out = String::from("s,x,y,theta,kappa\n");
    for p in samples {
        let row = [p.s, p.pose.x, p.pose.y, p.pose.theta, p.pose.kappa].map(|v| sig(v, 9));
        writeln!(out, "{}", row.join(",")).expect("writing to a String");
    }
    out
}

/// The path QP plus the constant dropped from the objective, so that
/// `problem.objective(x) + offset` equals the discretized cost.
#[derive(Debug, Clone)]
pub struct PathQp {
    pub problem: QpProblem,
    pub offset: f64,
    pub stations: usize,
}

/// Guide curvature at each boundary station.
fn guide_curvatures(bounds: &PathBoundary, line: &GuideLine) -> Result<Vec<f64>, PathError> {
    (0..bounds.len())
        .map(|i| {
            let s = bounds.station(i);
            line.interpolate(s).map(|p| p.kappa).map_err(|_| {
                PathError::StationMismatch(format!(
                    "station {s} lies outside the guide line [{}, {}]",
                    line.start_s(),
                    line.end_s()
                ))
            })
        })
        .collect()
}

/// Variables are interleaved per station as (lᵢ, l′ᵢ, l″ᵢ). Rows, in order:
/// continuity (l″, l′, l per junction; the l″ row is identically zero under
/// the finite-difference jerk and kept empty), l boxes, l′ boxes, l″ boxes,
/// one curvature row per station and the three initial-state pins.
pub fn build_path_qp(
    bounds: &PathBoundary,
    init: &FrenetState,
    vehicle: &VehicleParams,
    line: &GuideLine,
    cfg: &PjConfig,
) -> Result<PathQp, PathError> {
    cfg.validate()?;
    vehicle.validate()?;
    let n = bounds.len();
    if n < 2 {
        return Err(PathError::StationMismatch(format!(
            "{n} stations, need at least 2"
        )));
    }
    if (bounds.ds - cfg.ds).abs() > 1e-9 {
        return Err(PathError::StationMismatch(format!(
            "boundary spacing {} differs from path spacing {}",
            bounds.ds, cfg.ds
        )));
    }
    if let Some((i, e)) = bounds
        .entries
        .iter()
        .enumerate()
        .find(|(_, e)| !(e.l_min.is_finite() && e.l_max.is_finite() && e.l_min <= e.l_max))
    {
        return Err(PathError::StationMismatch(format!(
            "boundary interval [{}, {}] at station {i} is not a finite interval",
            e.l_min, e.l_max
        )));
    }
    let first = bounds.entries[0];
    if !(init.l >= first.l_min - 1e-9 && init.l <= first.l_max + 1e-9) {
        return Err(PathError::InitialStateOutOfBounds {
            l: init.l,
            lo: first.l_min,
            hi: first.l_max,
        });
    }
    let kappa = guide_curvatures(bounds, line)?;
    let rows: Vec<(f64, f64)> = kappa
        .iter()
        .map(|&k| curvature_constraint_row(k, vehicle))
        .collect();
    for (i, (&(a, u), e)) in rows.iter().zip(&bounds.entries).enumerate() {
        let least = if a >= 0.0 { a * e.l_min } else { a * e.l_max };
        if least > u + 1e-12 {
            return Err(PathError::InfeasibleGuideLine {
                station: i,
                s: bounds.station(i),
                kappa_r: kappa[i],
            });
        }
    }
    if let Some(i) = first_unreachable(bounds, init, &rows, cfg) {
        return Err(PathError::Unreachable {
            station: i,
            s: bounds.station(i),
        });
    }

    let (vl, vdl, vddl) = (|i: usize| 3 * i, |i: usize| 3 * i + 1, |i: usize| 3 * i + 2);
    let ds = cfg.ds;
    let mut p = Vec::new();
    let mut q = vec![0.0; 3 * n];
    let mut offset = 0.0;
    for (i, e) in bounds.entries.iter().enumerate() {
        p.push((vl(i), vl(i), 2.0 * (cfg.w_l + cfg.w_obs)));
        p.push((vdl(i), vdl(i), 2.0 * cfg.w_dl));
        p.push((vddl(i), vddl(i), 2.0 * cfg.w_ddl));
        if cfg.w_obs > 0.0 {
            let c = 0.5 * (e.l_min + e.l_max);
            q[vl(i)] = -2.0 * cfg.w_obs * c;
            offset += cfg.w_obs * c * c;
        }
    }
    let wj = 2.0 * cfg.w_dddl / (ds * ds);
    for i in 0..n - 1 {
        p.push((vddl(i), vddl(i), wj));
        p.push((vddl(i + 1), vddl(i + 1), wj));
        p.push((vddl(i), vddl(i + 1), -wj));
    }

    let mut a = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut row = 0usize;
    let mut push_row =
        |coeffs: &[(usize, f64)], lo: f64, hi: f64, a: &mut Vec<(usize, usize, f64)>| {
            a.extend(coeffs.iter().map(|&(c, v)| (row, c, v)));
            lower.push(lo);
            upper.push(hi);
            row += 1;
        };
    for i in 0..n - 1 {
        push_row(&[], 0.0, 0.0, &mut a);
        push_row(
            &[
                (vdl(i + 1), 1.0),
                (vdl(i), -1.0),
                (vddl(i), -0.5 * ds),
                (vddl(i + 1), -0.5 * ds),
            ],
            0.0,
            0.0,
            &mut a,
        );
        push_row(
            &[
                (vl(i + 1), 1.0),
                (vl(i), -1.0),
                (vdl(i), -ds),
                (vddl(i), -ds * ds / 3.0),
                (vddl(i + 1), -ds * ds / 6.0),
            ],
            0.0,
            0.0,
            &mut a,
        );
    }
    for (i, e) in bounds.entries.iter().enumerate() {
        push_row(&[(vl(i), 1.0)], e.l_min, e.l_max, &mut a);
    }
    if cfg.dl_bound.is_finite() {
        for i in 0..n {
            push_row(&[(vdl(i), 1.0)], -cfg.dl_bound, cfg.dl_bound, &mut a);
        }
    }
    if cfg.ddl_bound.is_finite() {
        for i in 0..n {
            push_row(&[(vddl(i), 1.0)], -cfg.ddl_bound, cfg.ddl_bound, &mut a);
        }
    }
    for (i, &(coef, u)) in rows.iter().enumerate() {
        push_row(&[(vl(i), coef)], f64::NEG_INFINITY, u, &mut a);
    }
    push_row(&[(vl(0), 1.0)], init.l, init.l, &mut a);
    push_row(&[(vdl(0), 1.0)], init.dl, init.dl, &mut a);
    push_row(&[(vddl(0), 1.0)], init.ddl, init.ddl, &mut a);
    let m = lower.len();

    let problem = QpProblem::from_triplets(3 * n, &p, q, m, &a, lower, upper)?;
    Ok(PathQp {
        problem,
        offset,
        stations: n,
    })
}

/// Forward interval propagation of (l, l′, l″) through the constant-jerk
/// transition, intersected with every box and curvature row. The intervals
/// contain every feasible state, so an empty one proves infeasibility.
fn first_unreachable(
    bounds: &PathBoundary,
    init: &FrenetState,
    rows: &[(f64, f64)],
    cfg: &PjConfig,
) -> Option<usize> {
    const TOL: f64 = 1e-9;
    type Iv = (f64, f64);
    let add = |a: Iv, b: Iv| (a.0 + b.0, a.1 + b.1);
    let mul = |a: Iv, k: f64| (a.0 * k, a.1 * k);
    let meet = |a: Iv, lo: f64, hi: f64| (a.0.max(lo), a.1.min(hi));
    let ds = cfg.ds;
    let ddl_box = (-cfg.ddl_bound, cfg.ddl_bound);
    let mut dl = meet((init.dl, init.dl), -cfg.dl_bound - TOL, cfg.dl_bound + TOL);
    let mut ddl = meet(
        (init.ddl, init.ddl),
        -cfg.ddl_bound - TOL,
        cfg.ddl_bound + TOL,
    );
    let mut l = (init.l, init.l);
    if dl.0 > dl.1 || ddl.0 > ddl.1 {
        return Some(0);
    }
    for (i, e) in bounds.entries.iter().enumerate().skip(1) {
        let next_l = add(
            add(add(l, mul(dl, ds)), mul(ddl, ds * ds / 3.0)),
            mul(ddl_box, ds * ds / 6.0),
        );
        let next_dl = add(dl, mul(add(ddl, ddl_box), 0.5 * ds));
        l = meet(next_l, e.l_min - TOL, e.l_max + TOL);
        let (coef, u) = rows[i];
        if coef > 0.0 {
            l.1 = l.1.min(u / coef + TOL);
        } else if coef < 0.0 {
            l.0 = l.0.max(u / coef - TOL);
        }
        dl = meet(next_dl, -cfg.dl_bound - TOL, cfg.dl_bound + TOL);
        ddl = ddl_box;
        if l.0 > l.1 || dl.0 > dl.1 {
            return Some(i);
        }
    }
    None
}

/// Discretized cost of `path` evaluated term by term.
pub fn path_objective(path: &PiecewiseJerkPath, bounds: &PathBoundary, cfg: &PjConfig) -> f64 {
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let jerk: f64 = (0..path.len() - 1).map(|i| path.jerk(i).powi(2)).sum();
    let obs: f64 = path
        .l
        .iter()
        .zip(&bounds.entries)
        .map(|(l, e)| (l - 0.5 * (e.l_min + e.l_max)).powi(2))
        .sum();
    cfg.w_l * sq(&path.l)
        + cfg.w_dl * sq(&path.dl)
        + cfg.w_ddl * sq(&path.ddl)
        + cfg.w_dddl * jerk
        + cfg.w_obs * obs
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedPath {
    pub path: PiecewiseJerkPath,
    pub stats: SolveStats,
    /// Solver objective plus the dropped constant.
    pub objective: f64,
}

pub fn optimize_path(
    bounds: &PathBoundary,
    init: &FrenetState,
    vehicle: &VehicleParams,
    line: &GuideLine,
    cfg: &PjConfig,
) -> Result<PiecewiseJerkPath, PathError> {
    optimize_path_with(bounds, init, vehicle, line, cfg, &QpSettings::default()).map(|o| o.path)
}

/// Builds and solves the path QP, then checks continuity of the result.
pub fn optimize_path_with(
    bounds: &PathBoundary,
    init: &FrenetState,
    vehicle: &VehicleParams,
    line: &GuideLine,
    cfg: &PjConfig,
    settings: &QpSettings,
) -> Result<OptimizedPath, PathError> {
    let built = build_path_qp(bounds, init, vehicle, line, cfg)?;
    let sol = qp::solve(&built.problem, settings)?;
    match sol.status {
        QpStatus::Solved => {}
        QpStatus::Infeasible => return Err(PathError::PathInfeasible),
        QpStatus::MaxIterations => {
            return Err(PathError::SolverFailed {
                iterations: sol.iterations,
                primal_residual: sol.primal_residual,
                dual_residual: sol.dual_residual,
            })
        }
    }
    let n = built.stations;
    let path = PiecewiseJerkPath {
        s0: bounds.s0,
        ds: bounds.ds,
        l: (0..n).map(|i| sol.x[3 * i]).collect(),
        dl: (0..n).map(|i| sol.x[3 * i + 1]).collect(),
        ddl: (0..n).map(|i| sol.x[3 * i + 2]).collect(),
    };
    for (junction, r) in path.continuity_residuals().iter().enumerate() {
        let residual = r.iter().fold(0.0f64, |m, v| m.max(*v));
        if residual > 1e-6 {
            return Err(PathError::ContinuityViolated { junction, residual });
        }
    }
    Ok(OptimizedPath {
        objective: built.problem.objective(&sol.x) + built.offset,
        stats: SolveStats::from(&sol),
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{BoundEntry, BoundSource};
    use crate::geometry::{approx_curvature, GuideLinePoint};
    use crate::smoother::derive_geometry;

    fn straight_line(len: f64) -> GuideLine {
        let n = (len / 0.25) as usize + 1;
        GuideLine::new(
            0.25,
            (0..n)
                .map(|i| GuideLinePoint {
                    s: i as f64 * 0.25,
                    x: i as f64 * 0.25,
                    ..Default::default()
                })
                .collect(),
        )
        .unwrap()
    }

    fn arc_line(radius: f64, sweep: f64) -> GuideLine {
        let n = (radius * sweep / 0.25).round() as usize + 1;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let a = i as f64 * 0.25 / radius;
                [radius * a.sin(), radius * (1.0 - a.cos())]
            })
            .collect();
        derive_geometry(&pts, 0.25).unwrap()
    }

    fn uniform_bounds(n: usize, lo: f64, hi: f64) -> PathBoundary {
        PathBoundary {
            s0: 0.0,
            ds: 0.5,
            entries: vec![
                BoundEntry {
                    l_min: lo,
                    l_max: hi,
                    source: BoundSource::Lane
                };
                n
            ],
        }
    }

    #[test]
    fn jerk_examples() {
        assert_eq!(jerk_between(0.1, 0.1, 0.5), 0.0);
        assert!((jerk_between(0.0, 0.05, 0.5) - 0.1).abs() < 1e-15);
        assert!((jerk_between(0.02, -0.01, 0.5) + 0.06).abs() < 1e-15);
    }

    #[test]
    fn propagate_examples() {
        assert_eq!(propagate(0.0, 0.0, 0.0, 0.0, 0.5), (0.0, 0.0, 0.0));
        assert_eq!(propagate(0.0, 0.0, 0.0, 6.0, 1.0), (1.0, 3.0, 6.0));
        let (l, dl, ddl) = propagate(1.0, 0.1, -0.02, 0.012, 0.5);
        assert!(
            (l - 1.04775).abs() < 1e-12
                && (dl - 0.0915).abs() < 1e-12
                && (ddl + 0.014).abs() < 1e-12
        );
    }

    #[test]
    fn curvature_rows() {
        let vehicle = VehicleParams {
            wheelbase: 2.5,
            max_steer: 0.5f64.atan(),
            ..Default::default()
        };
        let (a, u) = curvature_constraint_row(0.0, &vehicle);
        assert_eq!(a, 0.0);
        assert!((u - 0.5).abs() < 1e-15);
        let (a, u) = curvature_constraint_row(0.1, &vehicle);
        assert!((a - 0.05).abs() < 1e-15 && (u - 0.25).abs() < 1e-15);
        assert!((u / a - 5.0).abs() < 1e-12);
        assert!((approx_curvature(u / a, 0.1).unwrap() - vehicle.kappa_max()).abs() < 1e-12);
        let (a, u) = curvature_constraint_row(-0.1, &vehicle);
        assert!((a + 0.05).abs() < 1e-15 && (u / a + 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_station_problem_shape() {
        let b = uniform_bounds(2, -1.0, 1.0);
        let qp = build_path_qp(
            &b,
            &FrenetState::default(),
            &VehicleParams::default(),
            &straight_line(10.0),
            &PjConfig::default(),
        )
        .unwrap();
        assert_eq!(qp.problem.num_vars(), 6);
        assert_eq!(qp.problem.num_constraints(), 3 + 2 + 4 + 2 + 3);
        assert!(qp.problem.linear().iter().all(|&v| v == 0.0));
        assert_eq!(qp.offset, 0.0);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let line = straight_line(10.0);
        let v = VehicleParams::default();
        let init = FrenetState::default();
        let mut b = uniform_bounds(5, -1.0, 1.0);
        b.ds = 0.25;
        assert!(matches!(
            build_path_qp(&b, &init, &v, &line, &PjConfig::default()),
            Err(PathError::StationMismatch(_))
        ));
        let b = uniform_bounds(5, 0.5, 1.0);
        assert!(matches!(
            build_path_qp(&b, &init, &v, &line, &PjConfig::default()),
            Err(PathError::InitialStateOutOfBounds { .. })
        ));
        let b = uniform_bounds(40, -1.0, 1.0);
        assert!(matches!(
            build_path_qp(&b, &init, &v, &line, &PjConfig::default()),
            Err(PathError::StationMismatch(_))
        ));
    }

    #[test]
    fn guide_curvature_beyond_reach_is_reported() {
        // κ_r = 0.5 needs l ≤ (tanα − 0.5 L)/(0.5 tanα) < 0, outside [0, 1].
        let line = arc_line(2.0, 1.0);
        let b = uniform_bounds(3, 0.0, 1.0);
        let err = build_path_qp(
            &b,
            &FrenetState::default(),
            &VehicleParams::default(),
            &line,
            &PjConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            PathError::InfeasibleGuideLine { station: 0, .. }
        ));
    }

    #[test]
    fn unreachable_station_is_reported_before_solving() {
        // From rest, one step of ds = 0.5 with |l″| ≤ 0.5 reaches at most
        // l = 0.5·0.5²/6 = 1/48.
        let line = straight_line(10.0);
        let solve = |lo: f64| {
            let mut b = uniform_bounds(5, -1.0, 1.0);
            b.entries[1].l_min = lo;
            optimize_path(
                &b,
                &FrenetState::default(),
                &VehicleParams::default(),
                &line,
                &PjConfig::default(),
            )
        };
        assert!(matches!(
            solve(0.021),
            Err(PathError::Unreachable { station: 1, .. })
        ));
        let p = solve(0.0205).unwrap();
        assert!((p.l[1] - 0.0205).abs() < 1e-6);
    }

    #[test]
    fn straight_symmetric_problem_stays_at_zero() {
        let b = uniform_bounds(301, -0.55, 0.55);
        let out = optimize_path_with(
            &b,
            &FrenetState::default(),
            &VehicleParams::default(),
            &straight_line(160.0),
            &PjConfig::default(),
            &QpSettings::default(),
        )
        .unwrap();
        for v in out.path.l.iter().chain(&out.path.dl).chain(&out.path.ddl) {
            assert!(v.abs() <= 1e-9, "{v}");
        }
    }

    #[test]
    fn offset_start_decays_with_shrinking_extrema() {
        // The optimum is lightly underdamped: it overshoots zero once or
        // twice, so the magnitudes of successive extrema shrink rather than
        // |l| itself.
        let b = uniform_bounds(301, -2.0, 2.0);
        let init = FrenetState {
            l: 0.3,
            dl: 0.05,
            ..Default::default()
        };
        let out = optimize_path_with(
            &b,
            &init,
            &VehicleParams::default(),
            &straight_line(160.0),
            &PjConfig::default(),
            &QpSettings::default(),
        )
        .unwrap();
        let l = &out.path.l;
        let extrema: Vec<f64> = (1..l.len() - 1)
            .filter(|&i| (l[i] - l[i - 1]) * (l[i + 1] - l[i]) < 0.0)
            .map(|i| l[i].abs())
            .collect();
        assert!(extrema[0] > 0.3);
        for w in extrema.windows(2) {
            assert!(w[1] < w[0], "extrema {extrema:?}");
        }
        assert!(l[l.len() - 1].abs() < 0.05);
        assert!(
            (out.objective - path_objective(&out.path, &b, &PjConfig::default())).abs()
                <= 1e-8 * out.objective.abs().max(1.0)
        );
    }

    #[test]
    fn continuity_and_objective_hold_with_obstacle_term() {
        let mut b = uniform_bounds(201, -1.0, 1.0);
        for e in &mut b.entries[60..100] {
            e.l_min = 0.4;
            e.l_max = 2.0;
        }
        let cfg = PjConfig {
            w_obs: 5.0,
            ..Default::default()
        };
        let out = optimize_path_with(
            &b,
            &FrenetState::default(),
            &VehicleParams::default(),
            &straight_line(110.0),
            &cfg,
            &QpSettings::default(),
        )
        .unwrap();
        for r in out.path.continuity_residuals() {
            assert!(r.iter().all(|v| *v <= 1e-6));
        }
        for (l, e) in out.path.l.iter().zip(&b.entries) {
            assert!(*l >= e.l_min - 1e-6 && *l <= e.l_max + 1e-6);
        }
        let direct = path_objective(&out.path, &b, &cfg);
        assert!((out.objective - direct).abs() <= 1e-8 * direct.abs());
    }

    #[test]
    fn evaluate_examples() {
        let path = PiecewiseJerkPath {
            s0: 0.0,
            ds: 1.0,
            l: vec![0.0, 1.0],
            dl: vec![0.0, 3.0],
            ddl: vec![0.0, 6.0],
        };
        assert_eq!(path.evaluate(1.0).unwrap(), (1.0, 3.0, 6.0));
        let (l, dl, ddl) = path.evaluate(0.5).unwrap();
        assert!(
            (l - 0.125).abs() < 1e-15 && (dl - 0.75).abs() < 1e-15 && (ddl - 3.0).abs() < 1e-15
        );
        assert!(matches!(
            path.evaluate(1.5),
            Err(PathError::OutOfRange { .. })
        ));
        let zero = PiecewiseJerkPath {
            s0: 2.0,
            ds: 0.5,
            l: vec![0.0; 5],
            dl: vec![0.0; 5],
            ddl: vec![0.0; 5],
        };
        for k in 0..=16 {
            assert_eq!(
                zero.evaluate(2.0 + k as f64 * 0.125).unwrap(),
                (0.0, 0.0, 0.0)
            );
        }
    }

    fn constant_offset(n: usize, l: f64) -> PiecewiseJerkPath {
        PiecewiseJerkPath {
            s0: 0.0,
            ds: 0.5,
            l: vec![l; n],
            dl: vec![0.0; n],
            ddl: vec![0.0; n],
        }
    }

    #[test]
    fn cartesian_conversion_of_simple_paths() {
        let samples = constant_offset(41, 0.0)
            .to_cartesian(&straight_line(30.0), 0.25)
            .unwrap();
        assert_eq!(samples.len(), 81);
        for p in &samples {
            assert!(
                (p.pose.x - p.s).abs() < 1e-12
                    && p.pose.y == 0.0
                    && p.pose.theta == 0.0
                    && p.pose.kappa == 0.0
            );
        }
        let samples = constant_offset(41, 0.0)
            .to_cartesian(&arc_line(20.0, 1.2), 0.25)
            .unwrap();
        assert!(samples.iter().all(|p| (p.pose.kappa - 0.05).abs() < 1e-3));
        let samples = constant_offset(31, 1.0)
            .to_cartesian(&arc_line(10.0, 2.0), 0.25)
            .unwrap();
        assert!(samples
            .iter()
            .all(|p| (p.pose.kappa - 1.0 / 9.0).abs() < 1e-3));
    }

    #[test]
    fn csv_layout() {
        let path = constant_offset(2, 0.25);
        assert_eq!(path.to_csv(), "s,l,dl,ddl\n0,0.25,0,0\n0.5,0.25,0,0\n");
    }
}
