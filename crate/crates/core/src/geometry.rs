//! Vehicle configuration types, bicycle-model limits and Frenet ↔ Cartesian
//! conversion.
//!
//! Sign convention: the lateral offset `l` is positive to the left of the
//! guide-line tangent, i.e. along the normal (−sin θ_r, cos θ_r). Every
//! inequality orientation downstream (corridor bounds, obstacle sides,
//! curvature rows) follows from this.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smoother::GuideLine;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("singular projection: 1 - kappa_r * l = {0} is not positive")]
    SingularProjection(f64),
    #[error("heading differs from the guide line by {0} rad (|dtheta| must stay below pi/2)")]
    HeadingFold(f64),
    #[error("ambiguous projection: segments {0} and {1} are equally close")]
    AmbiguousProjection(usize, usize),
    #[error("guide line needs at least two points")]
    DegenerateLine,
    #[error("invalid vehicle parameters: {0}")]
    InvalidVehicle(String),
}

/// Wraps an angle to (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
    #[serde(default)]
    pub dkappa: f64,
}

impl CartesianPose {
    pub fn new(x: f64, y: f64, theta: f64, kappa: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
            kappa,
            dkappa: 0.0,
        }
    }
}

/// Lateral state at a station: offset and its first two arc-length
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrenetState {
    pub s: f64,
    pub l: f64,
    pub dl: f64,
    pub ddl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GuideLinePoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
    pub dkappa: f64,
}

/// Bicycle-model vehicle. The reference point is the rear-axle center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    #[serde(rename = "wheelbase_m")]
    pub wheelbase: f64,
    #[serde(rename = "max_steer_rad")]
    pub max_steer: f64,
    #[serde(rename = "width_m")]
    pub width: f64,
    #[serde(rename = "rear_axle_to_front_m")]
    pub rear_axle_to_front: f64,
    #[serde(rename = "rear_axle_to_back_m")]
    pub rear_axle_to_back: f64,
}

impl Default for VehicleParams {
    /// A mid-size sedan with a 5.05 m minimum turning radius.
    fn default() -> Self {
        let wheelbase = 2.8;
        Self {
            wheelbase,
            max_steer: (wheelbase / 5.05f64).atan(),
            width: 1.8,
            rear_axle_to_front: 3.8,
            rear_axle_to_back: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.wheelbase > 0.0 && self.wheelbase.is_finite()) {
            return Err(GeometryError::InvalidVehicle(format!(
                "wheelbase {} must be positive",
                self.wheelbase
            )));
        }
        if !(self.max_steer > 0.0 && self.max_steer < FRAC_PI_2) {
            return Err(GeometryError::InvalidVehicle(format!(
                "max steer {} must lie in (0, pi/2)",
                self.max_steer
            )));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(GeometryError::InvalidVehicle(format!(
                "width {} must be positive",
                self.width
            )));
        }
        Ok(())
    }

    /// κ_max = tan(α_max) / L
    pub fn kappa_max(&self) -> f64 {
        self.max_steer.tan() / self.wheelbase
    }

    pub fn min_turning_radius(&self) -> f64 {
        1.0 / self.kappa_max()
    }
}

fn one_minus_kl(l: f64, kappa_r: f64) -> Result<f64, GeometryError> {
    let v = 1.0 - kappa_r * l;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(GeometryError::SingularProjection(v))
    }
}

/// Exact path curvature from Frenet quantities:
///
/// κ = ((l″ + (κ̇_r l + κ_r l′) tanΔθ) cos²Δθ / (1 − κ_r l) + κ_r) cosΔθ / (1 − κ_r l)
pub fn curvature_in_cartesian(
    l: f64,
    dl: f64,
    ddl: f64,
    r: &GuideLinePoint,
    dtheta: f64,
) -> Result<f64, GeometryError> {
    let om = one_minus_kl(l, r.kappa)?;
    if dtheta.abs() >= FRAC_PI_2 {
        return Err(GeometryError::HeadingFold(dtheta));
    }
    let (sin, cos) = dtheta.sin_cos();
    let tan = sin / cos;
    let inner = (ddl + (r.dkappa * l + r.kappa * dl) * tan) * cos * cos / om + r.kappa;
    Ok(inner * cos / om)
}

/// κ ≈ κ_r / (1 − κ_r l), valid when the path runs nearly parallel to the
/// guide line with negligible l″.
pub fn approx_curvature(l: f64, kappa_r: f64) -> Result<f64, GeometryError> {
    let om = one_minus_kl(l, kappa_r)?;
    Ok(kappa_r / om)
}

pub fn frenet_to_cartesian(
    f: &FrenetState,
    r: &GuideLinePoint,
) -> Result<CartesianPose, GeometryError> {
    let om = one_minus_kl(f.l, r.kappa)?;
    let (sin_r, cos_r) = r.theta.sin_cos();
    let dtheta = f.dl.atan2(om);
    let kappa = curvature_in_cartesian(f.l, f.dl, f.ddl, r, dtheta)?;
    Ok(CartesianPose {
        x: r.x - f.l * sin_r,
        y: r.y + f.l * cos_r,
        theta: normalize_angle(r.theta + dtheta),
        kappa,
        dkappa: 0.0,
    })
}

/// Inverse of [`frenet_to_cartesian`] against a matched guide point `r`.
///
/// l′ = (1 − κ_r l) tanΔθ, and l″ comes from solving the exact curvature
/// relation for l″:
///
/// l″ = (κ (1 − κ_r l) / cosΔθ − κ_r) (1 − κ_r l) / cos²Δθ − (κ̇_r l + κ_r l′) tanΔθ
pub fn cartesian_to_frenet(
    p: &CartesianPose,
    r: &GuideLinePoint,
) -> Result<FrenetState, GeometryError> {
    let (sin_r, cos_r) = r.theta.sin_cos();
    let dx = p.x - r.x;
    let dy = p.y - r.y;
    let l = -sin_r * dx + cos_r * dy;
    let s = r.s + cos_r * dx + sin_r * dy;
    let om = one_minus_kl(l, r.kappa)?;
    let dtheta = normalize_angle(p.theta - r.theta);
    if dtheta.abs() >= FRAC_PI_2 {
        return Err(GeometryError::HeadingFold(dtheta));
    }
    let (sin, cos) = dtheta.sin_cos();
    let tan = sin / cos;
    let dl = om * tan;
    let ddl =
        (p.kappa * om / cos - r.kappa) * om / (cos * cos) - (r.dkappa * l + r.kappa * dl) * tan;
    Ok(FrenetState { s, l, dl, ddl })
}

/// Nearest point on the guide-line polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Interpolated guide point at the foot; `point.s` is the station.
    pub point: GuideLinePoint,
    pub distance: f64,
    pub segment: usize,
}

fn segment_foot(line: &GuideLine, k: usize, x: f64, y: f64) -> (f64, f64) {
    let a = &line.points[k];
    let b = &line.points[k + 1];
    let (ex, ey) = (b.x - a.x, b.y - a.y);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 {
        (((x - a.x) * ex + (y - a.y) * ey) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (fx, fy) = (a.x + t * ex, a.y + t * ey);
    (t, ((x - fx).powi(2) + (y - fy).powi(2)).sqrt())
}

/// Projects (x, y) onto the polyline of guide points, taking the analytic
/// foot on each segment and keeping the closest. Ties between non-adjacent
/// segments (a line folding back on itself) are rejected.
pub fn project_point(line: &GuideLine, x: f64, y: f64) -> Result<Projection, GeometryError> {
    let pts = &line.points;
    if pts.len() < 2 {
        return Err(GeometryError::DegenerateLine);
    }
    let feet: Vec<(f64, f64)> = (0..pts.len() - 1)
        .map(|k| segment_foot(line, k, x, y))
        .collect();
    let (best, &(t, dist)) = feet
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("at least one segment");
    if let Some((other, _)) = feet
        .iter()
        .enumerate()
        .find(|(k, f)| k.abs_diff(best) > 1 && (f.1 - dist).abs() <= 1e-9)
    {
        return Err(GeometryError::AmbiguousProjection(
            best.min(other),
            best.max(other),
        ));
    }
    let s = pts[best].s + t * (pts[best + 1].s - pts[best].s);
    let point = line.point_on_segment(best, s);
    Ok(Projection {
        point,
        distance: dist,
        segment: best,
    })
}

/// Finds the guide point whose interpolated normal passes through (x, y).
///
/// [`project_point`] returns the closest point on the chords, but the frame
/// used by [`frenet_to_cartesian`] carries the linearly interpolated heading,
/// so the two disagree slightly on curved lines. This refines the analytic
/// foot until (p − P(s)) · T(s) = 0, which makes it the exact inverse of the
/// forward conversion.
pub fn locate(line: &GuideLine, x: f64, y: f64) -> Result<GuideLinePoint, GeometryError> {
    let proj = project_point(line, x, y)?;
    let pts = &line.points;
    let g = |k: usize, s: f64| {
        let p = line.point_on_segment(k, s);
        (x - p.x) * p.theta.cos() + (y - p.y) * p.theta.sin()
    };
    let lo_seg = proj.segment.saturating_sub(1);
    let hi_seg = (proj.segment + 1).min(pts.len() - 2);
    let mut brackets: Vec<usize> = (lo_seg..=hi_seg)
        .filter(|&k| {
            let ga = g(k, pts[k].s);
            let gb = g(k, pts[k + 1].s);
            ga >= 0.0 && gb <= 0.0
        })
        .collect();
    brackets.sort_by_key(|&k| k.abs_diff(proj.segment));
    let Some(&k) = brackets.first() else {
        return Ok(proj.point);
    };
    let (mut a, mut b) = (pts[k].s, pts[k + 1].s);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if g(k, mid) >= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(line.point_on_segment(k, 0.5 * (a + b)))
}

/// Converts a map pose into the Frenet frame of `line`.
pub fn to_frenet(line: &GuideLine, pose: &CartesianPose) -> Result<FrenetState, GeometryError> {
    let r = locate(line, pose.x, pose.y)?;
    let mut f = cartesian_to_frenet(pose, &r)?;
    f.s = r.s;
    Ok(f)
}
