//! Guide-line smoothing: a box-constrained QP over point positions followed
//! by finite-difference geometry.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::sig;
use crate::geometry::{normalize_angle, GuideLinePoint};
use crate::qp::{self, QpError, QpProblem, QpSettings, QpStatus, SolveStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid smoother configuration: {0}")]
    InvalidConfig(String),
    #[error("smoothing did not converge in {iterations} iterations (primal {primal_residual:e}, dual {dual_residual:e})")]
    SmoothingFailed {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },
    #[error("smoothing QP reported infeasible")]
    Infeasible,
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("station {s} outside guide line range [{start}, {end}]")]
    OutOfRange { s: f64, start: f64, end: f64 },
    #[error("guide line CSV line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Ordered map polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLine {
    pub points: Vec<[f64; 2]>,
}

impl RawLine {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self, SmoothError> {
        if points.len() < 2 {
            return Err(SmoothError::DegenerateInput(format!(
                "{} points, need at least 2",
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SmoothError::DegenerateInput("non-finite coordinate".into()));
        }
        if let Some(i) = points.windows(2).position(|w| dist(w[0], w[1]) <= 1e-6) {
            return Err(SmoothError::DegenerateInput(format!(
                "points {i} and {} coincide",
                i + 1
            )));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline arc length.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| dist(w[0], w[1])).sum()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub w_smooth: f64,
    pub w_dev: f64,
    pub w_length: f64,
    /// Penalty on the first and last segment leaving the tangent fitted to
    /// the raw points near each end. Zero leaves the end headings free.
    pub w_end_heading: f64,
    #[serde(rename = "deviation_bound_m")]
    pub deviation_bound: f64,
    #[serde(rename = "resample_interval_m")]
    pub resample_interval: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            w_smooth: 1000.0,
            w_dev: 1.0,
            w_length: 1.0,
            w_end_heading: 1e5,
            deviation_bound: 0.1,
            resample_interval: 0.25,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<(), SmoothError> {
        let weights = [
            ("w_smooth", self.w_smooth),
            ("w_dev", self.w_dev),
            ("w_length", self.w_length),
            ("w_end_heading", self.w_end_heading),
            ("deviation_bound", self.deviation_bound),
        ];
        for (name, v) in weights {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SmoothError::InvalidConfig(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        if self.w_smooth <= 0.0 {
            return Err(SmoothError::InvalidConfig("w_smooth must be > 0".into()));
        }
        if !(self.resample_interval.is_finite() && self.resample_interval > 0.0) {
            return Err(SmoothError::InvalidConfig(format!(
                "resample_interval = {} must be > 0",
                self.resample_interval
            )));
        }
        Ok(())
    }
}

/// Arc-length indexed smoothed points.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideLine {
    /// Nominal point spacing.
    pub interval: f64,
    pub points: Vec<GuideLinePoint>,
}

impl GuideLine {
    pub fn new(interval: f64, points: Vec<GuideLinePoint>) -> Result<Self, SmoothError> {
        if !(interval.is_finite() && interval > 0.0) {
            return Err(SmoothError::DegenerateInput(format!(
                "interval {interval} must be > 0"
            )));
        }
        if points.len() < 2 {
            return Err(SmoothError::DegenerateInput(format!(
                "{} guide points, need at least 2",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if ![p.s, p.x, p.y, p.theta, p.kappa, p.dkappa]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(SmoothError::DegenerateInput(format!(
                    "non-finite field at point {i}"
                )));
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].s <= w[0].s {
                return Err(SmoothError::DegenerateInput(format!(
                    "station not increasing at point {}",
                    i + 1
                )));
            }
            if normalize_angle(w[1].theta - w[0].theta).abs() >= FRAC_PI_2 {
                return Err(SmoothError::DegenerateInput(format!(
                    "heading jumps by pi/2 or more at point {}",
                    i + 1
                )));
            }
        }
        Ok(Self { interval, points })
    }

    pub fn start_s(&self) -> f64 {
        self.points[0].s
    }

    pub fn end_s(&self) -> f64 {
        self.points[self.points.len() - 1].s
    }

    pub fn length(&self) -> f64 {
        self.end_s() - self.start_s()
    }

    pub fn max_abs_kappa(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.kappa.abs()))
    }

    /// Linear interpolation on segment `k` (points k and k+1); `s` is clamped
    /// to the segment. θ follows the shorter arc.
    pub fn point_on_segment(&self, k: usize, s: f64) -> GuideLinePoint {
        let a = &self.points[k];
        let b = &self.points[k + 1];
        let t = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        if t == 1.0 {
            return *b;
        }
        let lerp = |u: f64, v: f64| u + t * (v - u);
        GuideLinePoint {
            s: lerp(a.s, b.s),
            x: lerp(a.x, b.x),
            y: lerp(a.y, b.y),
            theta: normalize_angle(a.theta + t * normalize_angle(b.theta - a.theta)),
            kappa: lerp(a.kappa, b.kappa),
            dkappa: lerp(a.dkappa, b.dkappa),
        }
    }

    pub fn interpolate(&self, s: f64) -> Result<GuideLinePoint, SmoothError> {
        let (start, end) = (self.start_s(), self.end_s());
        if !(s >= start - 1e-9 && s <= end + 1e-9) {
            return Err(SmoothError::OutOfRange { s, start, end });
        }
        let s = s.clamp(start, end);
        let k = self
            .points
            .partition_point(|p| p.s <= s)
            .saturating_sub(1)
            .min(self.points.len() - 2);
        Ok(self.point_on_segment(k, s))
    }

    /// CSV with header `s,x,y,theta,kappa,dkappa`, 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,x,y,theta,kappa,dkappa\n");
        for p in &self.points {
            let row = [p.s, p.x, p.y, p.theta, p.kappa, p.dkappa].map(|v| sig(v, 9));
            writeln!(out, "{}", row.join(",")).expect("writing to a String");
        }
        out
    }

    /// Parses the format written by [`GuideLine::to_csv`]. The interval is
    /// taken as the mean station spacing.
    pub fn from_csv(text: &str) -> Result<Self, SmoothError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "s,x,y,theta,kappa,dkappa" => {}
            _ => {
                return Err(SmoothError::Parse {
                    line: 1,
                    msg: "expected header s,x,y,theta,kappa,dkappa".into(),
                })
            }
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| SmoothError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            let [s, x, y, theta, kappa, dkappa] = vals[..] else {
                return Err(SmoothError::Parse {
                    line: i + 1,
                    msg: format!("expected 6 fields, found {}", vals.len()),
                });
            };
            points.push(GuideLinePoint {
                s,
                x,
                y,
                theta,
                kappa,
                dkappa,
            });
        }
        if points.len() < 2 {
            return Err(SmoothError::DegenerateInput(
                "guide line CSV has fewer than 2 rows".into(),
            ));
        }
        let interval = (points[points.len() - 1].s - points[0].s) / (points.len() - 1) as f64;
        Self::new(interval, points)
    }
}

/// Resamples `raw` at arc-length spacing `interval`. The first and last
/// input points are kept exactly; the final gap may be shorter.
pub fn resample(raw: &RawLine, interval: f64) -> Result<RawLine, SmoothError> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(SmoothError::InvalidConfig(format!(
            "resample interval {interval} must be > 0"
        )));
    }
    let total = raw.length();
    if total < 2.0 * interval {
        return Err(SmoothError::DegenerateInput(format!(
            "polyline length {total} is shorter than twice the interval {interval}"
        )));
    }
    let snap = 1e-9 * interval;
    let last_target = total - 1e-6 * interval;
    let mut out = vec![raw.points[0]];
    let mut k = 1usize;
    let mut seg_start = 0.0;
    for w in raw.points.windows(2) {
        let len = dist(w[0], w[1]);
        let seg_end = seg_start + len;
        loop {
            let target = k as f64 * interval;
            if target >= last_target || target > seg_end + snap {
                break;
            }
            if (target - seg_end).abs() <= snap {
                out.push(w[1]);
            } else {
                let t = (target - seg_start) / len;
                out.push([
                    w[0][0] + t * (w[1][0] - w[0][0]),
                    w[0][1] + t * (w[1][1] - w[0][1]),
                ]);
            }
            k += 1;
        }
        seg_start = seg_end;
    }
    out.push(raw.points[raw.points.len() - 1]);
    RawLine::new(out)
}

/// Unit tangent at the start of `pts`, from a quadratic least-squares fit
/// in chord-length parameter over the first few points.
fn fitted_tangent<'a>(pts: impl Iterator<Item = &'a [f64; 2]>) -> [f64; 2] {
    const K: usize = 9;
    let pts: Vec<[f64; 2]> = pts.take(K).copied().collect();
    let chord = [pts[1][0] - pts[0][0], pts[1][1] - pts[0][1]];
    let chord_dir = {
        let n = chord[0].hypot(chord[1]);
        [chord[0] / n, chord[1] / n]
    };
    if pts.len() < 3 {
        return chord_dir;
    }
    let mut t = vec![0.0];
    for w in pts.windows(2) {
        t.push(t[t.len() - 1] + dist(w[0], w[1]));
    }
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [[0.0; 2]; 3];
    for (ti, p) in t.iter().zip(&pts) {
        let basis = [1.0, *ti, ti * ti];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
            rhs[r][0] += basis[r] * (p[0] - pts[0][0]);
            rhs[r][1] += basis[r] * (p[1] - pts[0][1]);
        }
    }
    let Some(coef) = solve3(m, rhs) else {
        return chord_dir;
    };
    let (dx, dy) = (coef[1][0], coef[1][1]);
    let n = dx.hypot(dy);
    if n > 1e-12 && n.is_finite() {
        [dx / n, dy / n]
    } else {
        chord_dir
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [[f64; 2]; 3]) -> Option<[[f64; 2]; 3]> {
    for c in 0..3 {
        let piv = (c..3).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-14 {
            return None;
        }
        m.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..3 {
            let f = m[r][c] / m[c][c];
            for k in c..3 {
                m[r][k] -= f * m[c][k];
            }
            b[r][0] -= f * b[c][0];
            b[r][1] -= f * b[c][1];
        }
    }
    let mut x = [[0.0; 2]; 3];
    for r in (0..3).rev() {
        for d in 0..2 {
            let mut acc = b[r][d];
            for k in r + 1..3 {
                acc -= m[r][k] * x[k][d];
            }
            x[r][d] = acc / m[r][r];
        }
    }
    Some(x)
}

/// Normals of the fitted end tangents: (start, end).
fn end_normals(raw: &RawLine) -> ([f64; 2], [f64; 2]) {
    let t0 = fitted_tangent(raw.points.iter());
    let t1 = fitted_tangent(raw.points.iter().rev());
    ([-t0[1], t0[0]], [-t1[1], t1[0]])
}

/// Adds w·(Σ cᵢ xᵢ)² to the Hessian of ½xᵀPx, i.e. 2w·ccᵀ.
fn add_square(p: &mut Vec<(usize, usize, f64)>, terms: &[(usize, f64)], w: f64) {
    if w == 0.0 {
        return;
    }
    for (a, &(i, ci)) in terms.iter().enumerate() {
        for &(j, cj) in &terms[a..] {
            p.push((i, j, 2.0 * w * ci * cj));
        }
    }
}

/// Variables are (x₀, y₀, x₁, y₁, …); one box row per coordinate, endpoints
/// pinned.
pub fn build_smoothing_qp(raw: &RawLine, cfg: &SmootherConfig) -> Result<QpProblem, SmoothError> {
    cfg.validate()?;
    let n = raw.len();
    if n < 3 {
        return Err(SmoothError::DegenerateInput(format!(
            "{n} points, smoothing needs at least 3"
        )));
    }
    let nv = 2 * n;
    let mut p = Vec::new();
    let mut q = vec![0.0; nv];
    for i in 1..n - 1 {
        for d in 0..2 {
            add_square(
                &mut p,
                &[
                    (2 * (i - 1) + d, -1.0),
                    (2 * i + d, 2.0),
                    (2 * (i + 1) + d, -1.0),
                ],
                cfg.w_smooth,
            );
        }
    }
    for i in 0..n - 1 {
        for d in 0..2 {
            add_square(
                &mut p,
                &[(2 * i + d, -1.0), (2 * (i + 1) + d, 1.0)],
                cfg.w_length,
            );
        }
    }
    for (i, pt) in raw.points.iter().enumerate() {
        for d in 0..2 {
            add_square(&mut p, &[(2 * i + d, 1.0)], cfg.w_dev);
            q[2 * i + d] = -2.0 * cfg.w_dev * pt[d];
        }
    }
    let (n0, n1) = end_normals(raw);
    add_square(
        &mut p,
        &[(0, -n0[0]), (1, -n0[1]), (2, n0[0]), (3, n0[1])],
        cfg.w_end_heading,
    );
    let (a, b) = (2 * (n - 1), 2 * (n - 2));
    add_square(
        &mut p,
        &[(a, -n1[0]), (a + 1, -n1[1]), (b, n1[0]), (b + 1, n1[1])],
        cfg.w_end_heading,
    );

    let a_trip: Vec<(usize, usize, f64)> = (0..nv).map(|k| (k, k, 1.0)).collect();
    let mut lower = Vec::with_capacity(nv);
    let mut upper = Vec::with_capacity(nv);
    for (i, pt) in raw.points.iter().enumerate() {
        let d = if i == 0 || i == n - 1 {
            0.0
        } else {
            cfg.deviation_bound
        };
        for c in pt {
            lower.push(c - d);
            upper.push(c + d);
        }
    }
    Ok(QpProblem::from_triplets(
        nv, &p, q, nv, &a_trip, lower, upper,
    )?)
}

/// Σ‖2pᵢ − pᵢ₋₁ − pᵢ₊₁‖² over interior points.
pub fn second_difference_energy(points: &[[f64; 2]]) -> f64 {
    points
        .windows(3)
        .map(|w| {
            (0..2)
                .map(|d| (2.0 * w[1][d] - w[0][d] - w[2][d]).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Smoothing objective at `points`, including the constant deviation terms
/// that the QP drops.
pub fn smoothing_objective(raw: &RawLine, cfg: &SmootherConfig, points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let length: f64 = points.windows(2).map(|w| dist(w[0], w[1]).powi(2)).sum();
    let dev: f64 = points
        .iter()
        .zip(&raw.points)
        .map(|(p, r)| dist(*p, *r).powi(2))
        .sum();
    let (n0, n1) = end_normals(raw);
    let h0 = n0[0] * (points[1][0] - points[0][0]) + n0[1] * (points[1][1] - points[0][1]);
    let h1 = n1[0] * (points[n - 2][0] - points[n - 1][0])
        + n1[1] * (points[n - 2][1] - points[n - 1][1]);
    cfg.w_smooth * second_difference_energy(points)
        + cfg.w_dev * dev
        + cfg.w_length * length
        + cfg.w_end_heading * (h0 * h0 + h1 * h1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub line: GuideLine,
    pub positions: Vec<[f64; 2]>,
    pub stats: SolveStats,
}

pub fn smooth(raw: &RawLine, cfg: &SmootherConfig) -> Result<GuideLine, SmoothError> {
    smooth_with(raw, cfg, &QpSettings::default()).map(|s| s.line)
}

/// Solves the smoothing QP with explicit solver settings and keeps the
/// solver diagnostics.
pub fn smooth_with(
    raw: &RawLine,
    cfg: &SmootherConfig,
    settings: &QpSettings,
) -> Result<Smoothed, SmoothError> {
    let problem = build_smoothing_qp(raw, cfg)?;
    let sol = qp::solve(&problem, settings)?;
    match sol.status {
        QpStatus::Solved => {}
        QpStatus::Infeasible => return Err(SmoothError::Infeasible),
        QpStatus::MaxIterations => {
            return Err(SmoothError::SmoothingFailed {
                iterations: sol.iterations,
                primal_residual: sol.primal_residual,
                dual_residual: sol.dual_residual,
            })
        }
    }
    let n = raw.len();
    let positions: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                return raw.points[i];
            }
            let d = cfg.deviation_bound;
            let r = raw.points[i];
            [
                sol.x[2 * i].clamp(r[0] - d, r[0] + d),
                sol.x[2 * i + 1].clamp(r[1] - d, r[1] + d),
            ]
        })
        .collect();
    let line = derive_geometry(&positions, cfg.resample_interval)?;
    Ok(Smoothed {
        line,
        positions,
        stats: SolveStats::from(&sol),
    })
}

/// Heading, curvature and curvature rate by finite differences. Stations
/// are cumulative chord lengths.
pub fn derive_geometry(points: &[[f64; 2]], interval: f64) -> Result<GuideLine, SmoothError> {
    let n = points.len();
    if n < 3 {
        return Err(SmoothError::DegenerateInput(format!(
            "{n} points, geometry needs at least 3"
        )));
    }
    let chords: Vec<f64> = points.windows(2).map(|w| dist(w[0], w[1])).collect();
    if let Some(i) = chords.iter().position(|&c| !(c > 1e-9)) {
        return Err(SmoothError::DegenerateInput(format!(
            "points {i} and {} coincide",
            i + 1
        )));
    }
    let heading = |a: [f64; 2], b: [f64; 2]| (b[1] - a[1]).atan2(b[0] - a[0]);
    let phi: Vec<f64> = points.windows(2).map(|w| heading(w[0], w[1])).collect();

    let mut s = vec![0.0; n];
    for i in 1..n {
        s[i] = s[i - 1] + chords[i - 1];
    }
    let theta: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => phi[0],
            _ if i == n - 1 => phi[n - 2],
            _ => heading(points[i - 1], points[i + 1]),
        })
        .collect();
    let mut kappa = vec![0.0; n];
    for i in 1..n - 1 {
        kappa[i] = normalize_angle(phi[i] - phi[i - 1]) / (0.5 * (chords[i - 1] + chords[i]));
    }
    kappa[0] = kappa[1];
    kappa[n - 1] = kappa[n - 2];
    let dkappa: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (kappa[b] - kappa[a]) / (s[b] - s[a])
        })
        .collect();

    let pts = (0..n)
        .map(|i| GuideLinePoint {
            s: s[i],
            x: points[i][0],
            y: points[i][1],
            theta: theta[i],
            kappa: kappa[i],
            dkappa: dkappa[i],
        })
        .collect();
    GuideLine::new(interval, pts)
}
