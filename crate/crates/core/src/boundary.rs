//! Lane-utilization decision and per-station lateral bounds around static
//! obstacles.
//!
//! Bounds apply to the rear-axle reference point. Each side is inset by half
//! the vehicle width plus a lateral buffer, from either the corridor edge or
//! the obstacle edge.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::sig;
use crate::geometry::{locate, FrenetState, GeometryError, VehicleParams};
use crate::smoother::GuideLine;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundaryError {
    #[error("obstacle {0} lies outside the guide line")]
    OutOfScope(String),
    #[error("obstacle {id}: {source}")]
    Projection { id: String, source: GeometryError },
    #[error("obstacle {id}: {msg}")]
    InvalidPolygon { id: String, msg: String },
    #[error("invalid road: {0}")]
    InvalidRoad(String),
    #[error("invalid boundary configuration: {0}")]
    InvalidConfig(String),
    #[error("ego offset {l} is outside the road")]
    EgoOutsideRoad { l: f64 },
    #[error("obstacle {obstacle} blocks the ego lane at s = {s} and no lane can be borrowed")]
    NoUsableLane { obstacle: String, s: f64 },
    #[error("corridor blocked at s = {s}{}", .obstacle.as_ref().map(|o| format!(" by obstacle {o}")).unwrap_or_default())]
    BlockedCorridor { obstacle: Option<String>, s: f64 },
}

/// Piecewise-linear lateral offset as a function of station, held constant
/// beyond its first and last knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ProfileRepr", into = "ProfileRepr")]
pub struct Profile {
    knots: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProfileRepr {
    Constant(f64),
    Knots(Vec<(f64, f64)>),
}

impl From<ProfileRepr> for Profile {
    fn from(r: ProfileRepr) -> Self {
        match r {
            ProfileRepr::Constant(v) => Profile::constant(v),
            ProfileRepr::Knots(k) => Profile { knots: k },
        }
    }
}

impl From<Profile> for ProfileRepr {
    fn from(p: Profile) -> Self {
        if p.knots.len() == 1 {
            ProfileRepr::Constant(p.knots[0].1)
        } else {
            ProfileRepr::Knots(p.knots)
        }
    }
}

impl Profile {
    pub fn constant(l: f64) -> Self {
        Self {
            knots: vec![(0.0, l)],
        }
    }

    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, BoundaryError> {
        let p = Self { knots };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), BoundaryError> {
        if self.knots.is_empty() {
            return Err(BoundaryError::InvalidRoad("empty lane profile".into()));
        }
        if self
            .knots
            .iter()
            .any(|(s, l)| !s.is_finite() || !l.is_finite())
        {
            return Err(BoundaryError::InvalidRoad(
                "non-finite lane profile knot".into(),
            ));
        }
        if self.knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(BoundaryError::InvalidRoad(
                "lane profile stations must increase".into(),
            ));
        }
        Ok(())
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, s: f64) -> f64 {
        let k = &self.knots;
        if s <= k[0].0 {
            return k[0].1;
        }
        if s >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let j = k.partition_point(|p| p.0 <= s);
        let (a, b) = (k[j - 1], k[j]);
        a.1 + (s - a.0) / (b.0 - a.0) * (b.1 - a.1)
    }

    pub fn negated(&self) -> Self {
        Self {
            knots: self.knots.iter().map(|&(s, l)| (s, -l)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneDirection {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: String,
    pub direction: LaneDirection,
    #[serde(rename = "left_l_m")]
    pub left: Profile,
    #[serde(rename = "right_l_m")]
    pub right: Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjacency {
    Ego,
    Adjacent,
    Reverse,
    Distant,
}

/// Lanes ordered left to right (decreasing l).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadModel {
    pub lanes: Vec<Lane>,
    pub ego_lane_index: usize,
}

/// Lanes closer than this are treated as sharing an edge.
const LANE_JOIN_TOL: f64 = 1e-3;

impl RoadModel {
    /// Checks ordering and extents at every profile knot of every lane.
    pub fn validate(&self) -> Result<(), BoundaryError> {
        if self.lanes.is_empty() {
            return Err(BoundaryError::InvalidRoad("no lanes".into()));
        }
        if self.ego_lane_index >= self.lanes.len() {
            return Err(BoundaryError::InvalidRoad(format!(
                "ego lane index {} out of range for {} lanes",
                self.ego_lane_index,
                self.lanes.len()
            )));
        }
        let mut stations: Vec<f64> = Vec::new();
        for lane in &self.lanes {
            lane.left.validate()?;
            lane.right.validate()?;
            stations.extend(
                lane.left
                    .knots()
                    .iter()
                    .chain(lane.right.knots())
                    .map(|k| k.0),
            );
        }
        for &s in &stations {
            for (k, lane) in self.lanes.iter().enumerate() {
                if lane.left.eval(s) <= lane.right.eval(s) {
                    return Err(BoundaryError::InvalidRoad(format!(
                        "lane {} has left <= right at s = {s}",
                        lane.id
                    )));
                }
                if let Some(next) = self.lanes.get(k + 1) {
                    if next.left.eval(s) > lane.right.eval(s) + LANE_JOIN_TOL {
                        return Err(BoundaryError::InvalidRoad(format!(
                            "lanes {} and {} overlap or are out of left-to-right order at s = {s}",
                            lane.id, next.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn adjacency(&self, k: usize) -> Adjacency {
        let e = self.ego_lane_index;
        if k == e {
            Adjacency::Ego
        } else if k.abs_diff(e) == 1 {
            if self.lanes[k].direction == self.lanes[e].direction {
                Adjacency::Adjacent
            } else {
                Adjacency::Reverse
            }
        } else {
            Adjacency::Distant
        }
    }

    pub fn extent(&self, s: f64) -> (f64, f64) {
        (
            self.lanes[self.lanes.len() - 1].right.eval(s),
            self.lanes[0].left.eval(s),
        )
    }

    /// Same road seen across the guide line: lane order reversed, offsets
    /// negated.
    pub fn mirrored(&self) -> Self {
        let lanes = self
            .lanes
            .iter()
            .rev()
            .map(|l| Lane {
                id: l.id.clone(),
                direction: l.direction,
                left: l.right.negated(),
                right: l.left.negated(),
            })
            .collect();
        Self {
            lanes,
            ego_lane_index: self.lanes.len() - 1 - self.ego_lane_index,
        }
    }
}

/// Axis-aligned box in (s, l).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSL {
    pub id: String,
    pub s_start: f64,
    pub s_end: f64,
    pub l_min: f64,
    pub l_max: f64,
}

impl ObstacleSL {
    /// Overlaps the station cell [s − ds/2, s + ds/2].
    pub fn active_at(&self, s: f64, ds: f64) -> bool {
        self.s_start <= s + 0.5 * ds && self.s_end >= s - 0.5 * ds
    }

    pub fn mirrored(&self) -> Self {
        Self {
            l_min: -self.l_max,
            l_max: -self.l_min,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(rename = "ds_m")]
    pub ds: f64,
    #[serde(rename = "scope_s_m")]
    pub scope_s: f64,
    #[serde(rename = "lateral_buffer_m")]
    pub lateral_buffer: f64,
    pub ego_estimate_decay: f64,
    /// Extra station range on each side of a blockage over which a borrowed
    /// lane stays available.
    #[serde(rename = "borrow_margin_m")]
    pub borrow_margin: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            ds: 0.5,
            scope_s: 160.0,
            lateral_buffer: 0.3,
            ego_estimate_decay: 1.0,
            borrow_margin: 10.0,
        }
    }
}

impl BoundaryConfig {
    pub fn validate(&self) -> Result<(), BoundaryError> {
        if !(self.ds.is_finite() && self.ds > 0.0) {
            return Err(BoundaryError::InvalidConfig(format!(
                "ds = {} must be > 0",
                self.ds
            )));
        }
        if !(self.scope_s.is_finite() && self.scope_s >= self.ds) {
            return Err(BoundaryError::InvalidConfig(format!(
                "scope_s = {} must be >= ds",
                self.scope_s
            )));
        }
        if !(self.lateral_buffer.is_finite() && self.lateral_buffer >= 0.0) {
            return Err(BoundaryError::InvalidConfig(
                "lateral_buffer must be >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ego_estimate_decay) {
            return Err(BoundaryError::InvalidConfig(
                "ego_estimate_decay must lie in [0, 1]".into(),
            ));
        }
        if !(self.borrow_margin.is_finite() && self.borrow_margin >= 0.0) {
            return Err(BoundaryError::InvalidConfig(
                "borrow_margin must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Usable lateral range per station before obstacles are carved out.
#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    pub s0: f64,
    pub ds: f64,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// Station uses a lane other than the ego lane.
    pub borrowed: Vec<bool>,
}

impl Corridor {
    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }

    pub fn station(&self, i: usize) -> f64 {
        self.s0 + i as f64 * self.ds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSource {
    Lane,
    ObstacleLeftPass,
    ObstacleRightPass,
    EgoAccommodation,
}

impl BoundSource {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundSource::Lane => "lane",
            BoundSource::ObstacleLeftPass => "obstacle-left-pass",
            BoundSource::ObstacleRightPass => "obstacle-right-pass",
            BoundSource::EgoAccommodation => "ego-accommodation",
        }
    }

    fn mirrored(self) -> Self {
        match self {
            BoundSource::ObstacleLeftPass => BoundSource::ObstacleRightPass,
            BoundSource::ObstacleRightPass => BoundSource::ObstacleLeftPass,
            s => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEntry {
    pub l_min: f64,
    pub l_max: f64,
    pub source: BoundSource,
}

/// Lateral interval l_B(s) for the reference point at stations
/// s0 + i·ds.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBoundary {
    pub s0: f64,
    pub ds: f64,
    pub entries: Vec<BoundEntry>,
}

impl PathBoundary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn station(&self, i: usize) -> f64 {
        self.s0 + i as f64 * self.ds
    }

    /// Keeps the first `n` stations.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            entries: self.entries[..n.min(self.entries.len())].to_vec(),
            ..self.clone()
        }
    }

    /// Non-empty intervals that overlap their successors.
    pub fn check(&self) -> Result<(), String> {
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.l_min < e.l_max) {
                return Err(format!(
                    "empty interval [{}, {}] at station {i}",
                    e.l_min, e.l_max
                ));
            }
        }
        for (i, w) in self.entries.windows(2).enumerate() {
            if w[1].l_min > w[0].l_max || w[0].l_min > w[1].l_max {
                return Err(format!("stations {i} and {} do not overlap", i + 1));
            }
        }
        Ok(())
    }

    pub fn mirrored(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| BoundEntry {
                    l_min: -e.l_max,
                    l_max: -e.l_min,
                    source: e.source.mirrored(),
                })
                .collect(),
            ..self.clone()
        }
    }

    /// CSV with header `s,l_min,l_max,source`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,l_min,l_max,source\n");
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                sig(self.station(i), 9),
                sig(e.l_min, 9),
                sig(e.l_max, 9),
                e.source.as_str()
            )
            .expect("writing to a String");
        }
        out
    }
}

fn is_convex(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let (a, b, c) = (poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross.abs() <= 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

/// SL bounding box of a convex polygon's vertices.
pub fn project_obstacle(
    line: &GuideLine,
    id: &str,
    polygon: &[[f64; 2]],
) -> Result<ObstacleSL, BoundaryError> {
    let bad = |msg: &str| BoundaryError::InvalidPolygon {
        id: id.into(),
        msg: msg.into(),
    };
    if polygon.len() < 3 {
        return Err(bad("polygon needs at least 3 vertices"));
    }
    if polygon.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad("non-finite vertex"));
    }
    if !is_convex(polygon) {
        return Err(bad("polygon is not convex"));
    }
    let mut ob = ObstacleSL {
        id: id.into(),
        s_start: f64::INFINITY,
        s_end: f64::NEG_INFINITY,
        l_min: f64::INFINITY,
        l_max: f64::NEG_INFINITY,
    };
    for &[x, y] in polygon {
        let r = locate(line, x, y).map_err(|source| BoundaryError::Projection {
            id: id.into(),
            source,
        })?;
        let (dx, dy) = (x - r.x, y - r.y);
        let (sin, cos) = r.theta.sin_cos();
        // Beyond either end the tangential offset extends the station.
        let s = r.s + dx * cos + dy * sin;
        let l = -dx * sin + dy * cos;
        let om = 1.0 - r.kappa * l;
        if om <= 0.0 {
            return Err(BoundaryError::Projection {
                id: id.into(),
                source: GeometryError::SingularProjection(om),
            });
        }
        ob.s_start = ob.s_start.min(s);
        ob.s_end = ob.s_end.max(s);
        ob.l_min = ob.l_min.min(l);
        ob.l_max = ob.l_max.max(l);
    }
    if ob.s_end < line.start_s() || ob.s_start > line.end_s() {
        return Err(BoundaryError::OutOfScope(id.into()));
    }
    Ok(ob)
}

/// Station count covering min(scope, available length) from `s0`.
pub fn station_count(s0: f64, line_end: f64, cfg: &BoundaryConfig) -> usize {
    let span = cfg.scope_s.min(line_end - s0).max(0.0);
    (span / cfg.ds + 1e-9).floor() as usize + 1
}

/// Merged l-intervals of the obstacles active at `s`, clipped to [lo, hi].
fn blocked_intervals<'a>(
    obstacles: &'a [ObstacleSL],
    s: f64,
    ds: f64,
    lo: f64,
    hi: f64,
) -> Vec<(f64, f64, &'a str)> {
    let mut iv: Vec<(f64, f64, &str)> = obstacles
        .iter()
        .filter(|o| o.active_at(s, ds) && o.l_max > lo && o.l_min < hi)
        .map(|o| (o.l_min.max(lo), o.l_max.min(hi), o.id.as_str()))
        .collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut merged: Vec<(f64, f64, &str)> = Vec::new();
    for (a, b, id) in iv {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b, id)),
        }
    }
    merged
}

/// Free sub-intervals of [lo, hi]; each gap records whether its lower and
/// upper edges are obstacle edges.
fn free_gaps(lo: f64, hi: f64, blocked: &[(f64, f64, &str)]) -> Vec<(f64, f64, bool, bool)> {
    let mut gaps = Vec::new();
    let mut cursor = lo;
    let mut lower_is_obstacle = false;
    for &(a, b, _) in blocked {
        if a > cursor {
            gaps.push((cursor, a, lower_is_obstacle, true));
        }
        cursor = cursor.max(b);
        lower_is_obstacle = true;
    }
    if hi > cursor {
        gaps.push((cursor, hi, lower_is_obstacle, false));
    }
    gaps
}

/// Decides which lanes are usable at each station. The ego lane is always
/// used; where obstacles leave it too narrow for the vehicle, adjacent
/// same-direction lanes are borrowed, or reverse lanes when no
/// same-direction neighbor exists.
pub fn decide_lane_usage(
    road: &RoadModel,
    ego: &FrenetState,
    obstacles: &[ObstacleSL],
    vehicle: &VehicleParams,
    cfg: &BoundaryConfig,
    line_end: f64,
) -> Result<Corridor, BoundaryError> {
    road.validate()?;
    cfg.validate()?;
    let (rmin, rmax) = road.extent(ego.s);
    if !(ego.l >= rmin && ego.l <= rmax) {
        return Err(BoundaryError::EgoOutsideRoad { l: ego.l });
    }
    let n = station_count(ego.s, line_end, cfg);
    let e = road.ego_lane_index;
    let ego_lane = &road.lanes[e];
    let need = vehicle.width + 2.0 * cfg.lateral_buffer;

    let mut blocking: Vec<Option<&str>> = vec![None; n];
    for (i, slot) in blocking.iter_mut().enumerate() {
        let s = ego.s + i as f64 * cfg.ds;
        let (lo, hi) = (ego_lane.right.eval(s), ego_lane.left.eval(s));
        let blocked = blocked_intervals(obstacles, s, cfg.ds, lo, hi);
        if blocked.is_empty() {
            continue;
        }
        let widest = free_gaps(lo, hi, &blocked)
            .iter()
            .fold(0.0f64, |m, g| m.max(g.1 - g.0));
        if widest < need {
            *slot = Some(blocked[0].2);
        }
    }

    let margin = (cfg.borrow_margin / cfg.ds).ceil() as usize;
    let mut borrow = vec![false; n];
    for (i, b) in blocking.iter().enumerate() {
        if b.is_some() {
            for flag in &mut borrow[i.saturating_sub(margin)..(i + margin + 1).min(n)] {
                *flag = true;
            }
        }
    }

    let neighbors: Vec<usize> = [e.checked_sub(1), Some(e + 1)]
        .into_iter()
        .flatten()
        .filter(|&k| k < road.lanes.len())
        .collect();
    let same: Vec<usize> = neighbors
        .iter()
        .copied()
        .filter(|&k| road.adjacency(k) == Adjacency::Adjacent)
        .collect();
    let reverse: Vec<usize> = neighbors
        .iter()
        .copied()
        .filter(|&k| road.adjacency(k) == Adjacency::Reverse)
        .collect();
    let lenders = if !same.is_empty() { same } else { reverse };

    let mut low = Vec::with_capacity(n);
    let mut high = Vec::with_capacity(n);
    for i in 0..n {
        let s = ego.s + i as f64 * cfg.ds;
        let (mut lo, mut hi) = (ego_lane.right.eval(s), ego_lane.left.eval(s));
        let mut lent = false;
        if borrow[i] {
            for &k in &lenders {
                let lane = &road.lanes[k];
                if k < e && (lane.right.eval(s) - hi).abs() <= LANE_JOIN_TOL {
                    hi = lane.left.eval(s);
                    lent = true;
                } else if k > e && (lane.left.eval(s) - lo).abs() <= LANE_JOIN_TOL {
                    lo = lane.right.eval(s);
                    lent = true;
                }
            }
            if !lent {
                if let Some(id) = blocking[i] {
                    return Err(BoundaryError::NoUsableLane {
                        obstacle: id.into(),
                        s,
                    });
                }
            }
        }
        low.push(lo);
        high.push(hi);
    }
    Ok(Corridor {
        s0: ego.s,
        ds: cfg.ds,
        low,
        high,
        borrowed: borrow,
    })
}

/// Corridor restricted to the ego lane at every station.
pub fn ego_lane_corridor(
    road: &RoadModel,
    ego: &FrenetState,
    cfg: &BoundaryConfig,
    line_end: f64,
) -> Result<Corridor, BoundaryError> {
    road.validate()?;
    cfg.validate()?;
    let n = station_count(ego.s, line_end, cfg);
    let lane = &road.lanes[road.ego_lane_index];
    let stations = (0..n).map(|i| ego.s + i as f64 * cfg.ds);
    Ok(Corridor {
        s0: ego.s,
        ds: cfg.ds,
        low: stations.clone().map(|s| lane.right.eval(s)).collect(),
        high: stations.map(|s| lane.left.eval(s)).collect(),
        borrowed: vec![false; n],
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    lo: f64,
    hi: f64,
    source: BoundSource,
}

struct Search<'a> {
    stations: Vec<Vec<Candidate>>,
    blockers: Vec<Option<&'a str>>,
    decay: f64,
    dead: HashSet<(usize, usize)>,
    deepest: usize,
}

impl Search<'_> {
    /// Candidate indices at station `i` in rank order: widest first, then
    /// center nearest the ego estimate, then lowest bound.
    fn ranked(
        &self,
        i: usize,
        est: f64,
        prev: Option<Candidate>,
        ego_l: Option<f64>,
    ) -> Vec<usize> {
        let cands = &self.stations[i];
        let mut idx: Vec<usize> = (0..cands.len())
            .filter(|&k| prev.map_or(true, |p| cands[k].lo <= p.hi && p.lo <= cands[k].hi))
            .collect();
        let key = |k: usize| {
            let c = cands[k];
            let holds_ego = ego_l.map_or(false, |l| c.lo <= l && l <= c.hi);
            (
                !holds_ego,
                -(c.hi - c.lo),
                (0.5 * (c.lo + c.hi) - est).abs(),
                c.lo,
            )
        };
        idx.sort_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
                .then(ka.3.total_cmp(&kb.3))
        });
        idx
    }

    fn run(&mut self, ego_l: f64) -> Option<Vec<usize>> {
        let n = self.stations.len();
        let mut path = Vec::with_capacity(n);
        // Explicit stack of (station, ranked candidates, next position, estimate before station).
        let mut stack: Vec<(Vec<usize>, usize, f64)> =
            vec![(self.ranked(0, ego_l, None, Some(ego_l)), 0, ego_l)];
        while let Some((order, pos, est)) = stack.last_mut() {
            let i = path.len();
            if *pos >= order.len() {
                stack.pop();
                if let Some(k) = path.pop() {
                    self.dead.insert((i - 1, k));
                }
                continue;
            }
            let k = order[*pos];
            *pos += 1;
            if self.dead.contains(&(i, k)) {
                continue;
            }
            let c = self.stations[i][k];
            let est_next = *est + self.decay * (est.clamp(c.lo, c.hi) - *est);
            path.push(k);
            self.deepest = self.deepest.max(i);
            if path.len() == n {
                return Some(path);
            }
            let next = self.ranked(i + 1, est_next, Some(c), None);
            if next.is_empty() {
                self.deepest = self.deepest.max(i + 1);
            }
            stack.push((next, 0, est_next));
        }
        None
    }
}

/// Ranked depth-first search over the free gaps at each station. A gap is a
/// candidate when the vehicle fits with the buffer on both sides; the chosen
/// intervals must overlap station to station, and dead ends back-track to
/// the most recent station with an untried gap.
pub fn generate_boundary(
    corridor: &Corridor,
    obstacles: &[ObstacleSL],
    ego: &FrenetState,
    vehicle: &VehicleParams,
    cfg: &BoundaryConfig,
) -> Result<PathBoundary, BoundaryError> {
    cfg.validate()?;
    let half = 0.5 * vehicle.width + cfg.lateral_buffer;
    let n = corridor.len();
    let mut stations = Vec::with_capacity(n);
    let mut blockers = Vec::with_capacity(n);
    for i in 0..n {
        let s = corridor.station(i);
        let blocked =
            blocked_intervals(obstacles, s, corridor.ds, corridor.low[i], corridor.high[i]);
        blockers.push(blocked.first().map(|b| b.2));
        let cands: Vec<Candidate> = free_gaps(corridor.low[i], corridor.high[i], &blocked)
            .into_iter()
            .map(|(a, b, lower_obs, upper_obs)| Candidate {
                lo: a + half,
                hi: b - half,
                source: match (lower_obs, upper_obs) {
                    (true, _) => BoundSource::ObstacleLeftPass,
                    (false, true) => BoundSource::ObstacleRightPass,
                    (false, false) => BoundSource::Lane,
                },
            })
            .filter(|c| c.hi > c.lo)
            .collect();
        stations.push(cands);
    }

    let mut search = Search {
        stations,
        blockers,
        decay: cfg.ego_estimate_decay,
        dead: HashSet::new(),
        deepest: 0,
    };
    let Some(choice) = search.run(ego.l) else {
        let i = search.deepest.min(n - 1);
        return Err(BoundaryError::BlockedCorridor {
            obstacle: search.blockers[i].map(str::to_string),
            s: corridor.station(i),
        });
    };
    let mut entries: Vec<BoundEntry> = choice
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let c = search.stations[i][k];
            BoundEntry {
                l_min: c.lo,
                l_max: c.hi,
                source: c.source,
            }
        })
        .collect();

    let first = entries[0];
    if ego.l < first.l_min || ego.l > first.l_max {
        let k = ((2.0 / cfg.ds).ceil() as usize).max(1);
        for (j, e) in entries.iter_mut().enumerate().take(k) {
            let w = 1.0 - j as f64 / k as f64;
            let lo = e.l_min.min(e.l_min + w * (ego.l - e.l_min));
            let hi = e.l_max.max(e.l_max + w * (ego.l - e.l_max));
            if lo < e.l_min || hi > e.l_max {
                *e = BoundEntry {
                    l_min: lo,
                    l_max: hi,
                    source: BoundSource::EgoAccommodation,
                };
            }
        }
    }
    Ok(PathBoundary {
        s0: corridor.s0,
        ds: corridor.ds,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GuideLinePoint;

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

    fn lane(id: &str, dir: LaneDirection, left: f64, right: f64) -> Lane {
        Lane {
            id: id.into(),
            direction: dir,
            left: Profile::constant(left),
            right: Profile::constant(right),
        }
    }

    fn one_lane() -> RoadModel {
        RoadModel {
            lanes: vec![lane("ego", LaneDirection::Forward, 1.75, -1.75)],
            ego_lane_index: 0,
        }
    }

    fn two_lanes(left_dir: LaneDirection) -> RoadModel {
        RoadModel {
            lanes: vec![
                lane("left", left_dir, 5.25, 1.75),
                lane("ego", LaneDirection::Forward, 1.75, -1.75),
            ],
            ego_lane_index: 1,
        }
    }

    fn obstacle(id: &str, s: (f64, f64), l: (f64, f64)) -> ObstacleSL {
        ObstacleSL {
            id: id.into(),
            s_start: s.0,
            s_end: s.1,
            l_min: l.0,
            l_max: l.1,
        }
    }

    fn ego() -> FrenetState {
        FrenetState::default()
    }

    fn cfg(scope: f64) -> BoundaryConfig {
        BoundaryConfig {
            scope_s: scope,
            ..Default::default()
        }
    }

    #[test]
    fn profile_interpolates_and_extrapolates_flat() {
        let p = Profile::new(vec![(0.0, 1.0), (10.0, 3.0)]).unwrap();
        assert_eq!(p.eval(-5.0), 1.0);
        assert_eq!(p.eval(5.0), 2.0);
        assert_eq!(p.eval(50.0), 3.0);
        let parsed: Profile = serde_json::from_str("1.75").unwrap();
        assert_eq!(parsed.eval(3.0), 1.75);
        let parsed: Profile = serde_json::from_str("[[0, 1], [10, 3]]").unwrap();
        assert_eq!(parsed, p);
    }

    #[test]
    fn road_validation() {
        assert!(two_lanes(LaneDirection::Forward).validate().is_ok());
        let swapped = RoadModel {
            lanes: vec![
                lane("ego", LaneDirection::Forward, 1.75, -1.75),
                lane("left", LaneDirection::Forward, 5.25, 1.75),
            ],
            ego_lane_index: 0,
        };
        assert!(swapped.validate().is_err());
        let inverted = RoadModel {
            lanes: vec![lane("x", LaneDirection::Forward, -1.0, 1.0)],
            ego_lane_index: 0,
        };
        assert!(inverted.validate().is_err());
    }

    #[test]
    fn unit_square_projection() {
        let line = straight_line(100.0);
        let sq = [[19.5, 0.5], [20.5, 0.5], [20.5, 1.5], [19.5, 1.5]];
        let o = project_obstacle(&line, "a", &sq).unwrap();
        assert!((o.s_start - 19.5).abs() < 1e-12 && (o.s_end - 20.5).abs() < 1e-12);
        assert!((o.l_min - 0.5).abs() < 1e-12 && (o.l_max - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rotated_square_projection() {
        let line = straight_line(100.0);
        let h = 0.5f64.sqrt();
        let diamond = [
            [20.0 - h, 1.0],
            [20.0, 1.0 - h],
            [20.0 + h, 1.0],
            [20.0, 1.0 + h],
        ];
        let o = project_obstacle(&line, "d", &diamond).unwrap();
        assert!((o.s_start - (20.0 - h)).abs() < 1e-12 && (o.s_end - (20.0 + h)).abs() < 1e-12);
        assert!((o.l_min - (1.0 - h)).abs() < 1e-12 && (o.l_max - (1.0 + h)).abs() < 1e-12);
    }

    #[test]
    fn obstacle_behind_start_is_out_of_scope() {
        let line = straight_line(100.0);
        let sq = [[-5.0, 0.0], [-4.0, 0.0], [-4.0, 1.0], [-5.0, 1.0]];
        assert_eq!(
            project_obstacle(&line, "b", &sq),
            Err(BoundaryError::OutOfScope("b".into()))
        );
    }

    #[test]
    fn non_convex_polygon_rejected() {
        let line = straight_line(100.0);
        let dart = [[0.0, 0.0], [2.0, 1.0], [0.0, 2.0], [1.0, 1.0]];
        assert!(matches!(
            project_obstacle(&line, "x", &dart),
            Err(BoundaryError::InvalidPolygon { .. })
        ));
    }

    #[test]
    fn empty_road_keeps_ego_lane() {
        let c = decide_lane_usage(
            &two_lanes(LaneDirection::Forward),
            &ego(),
            &[],
            &VehicleParams::default(),
            &cfg(50.0),
            100.0,
        )
        .unwrap();
        assert_eq!(c.len(), 101);
        assert!(c.low.iter().all(|&v| v == -1.75) && c.high.iter().all(|&v| v == 1.75));
        assert!(c.borrowed.iter().all(|b| !b));
    }

    #[test]
    fn blockage_borrows_left_lane_with_margin() {
        let obs = [obstacle("o", (20.0, 40.0), (-1.75, 0.5))];
        let config = cfg(80.0);
        let c = decide_lane_usage(
            &two_lanes(LaneDirection::Forward),
            &ego(),
            &obs,
            &VehicleParams::default(),
            &config,
            100.0,
        )
        .unwrap();
        for i in 0..c.len() {
            let s = c.station(i);
            let expect =
                s >= 20.0 - 0.25 - config.borrow_margin && s <= 40.0 + 0.25 + config.borrow_margin;
            assert_eq!(c.borrowed[i], expect, "s = {s}");
            assert_eq!(c.high[i], if expect { 5.25 } else { 1.75 });
            assert_eq!(c.low[i], -1.75);
        }
    }

    #[test]
    fn reverse_lane_only_when_no_same_direction_neighbor() {
        let obs = [obstacle("o", (20.0, 40.0), (-1.75, 0.5))];
        let c = decide_lane_usage(
            &two_lanes(LaneDirection::Reverse),
            &ego(),
            &obs,
            &VehicleParams::default(),
            &cfg(80.0),
            100.0,
        )
        .unwrap();
        assert_eq!(c.high[60], 5.25);
        let mut road = two_lanes(LaneDirection::Reverse);
        road.lanes
            .push(lane("right", LaneDirection::Forward, -1.75, -5.25));
        let c = decide_lane_usage(
            &road,
            &ego(),
            &obs,
            &VehicleParams::default(),
            &cfg(80.0),
            100.0,
        )
        .unwrap();
        assert_eq!((c.high[60], c.low[60]), (1.75, -5.25));
    }

    #[test]
    fn single_lane_blockage_has_no_usable_lane() {
        let obs = [obstacle("wall", (20.0, 25.0), (-1.75, 1.75))];
        let err = decide_lane_usage(
            &one_lane(),
            &ego(),
            &obs,
            &VehicleParams::default(),
            &cfg(80.0),
            100.0,
        )
        .unwrap_err();
        assert!(
            matches!(err, BoundaryError::NoUsableLane { ref obstacle, .. } if obstacle == "wall")
        );
    }

    fn uniform_corridor(n: usize, lo: f64, hi: f64) -> Corridor {
        Corridor {
            s0: 0.0,
            ds: 0.5,
            low: vec![lo; n],
            high: vec![hi; n],
            borrowed: vec![false; n],
        }
    }

    #[test]
    fn obstacle_free_corridor_is_inset() {
        let b = generate_boundary(
            &uniform_corridor(50, -1.75, 1.75),
            &[],
            &ego(),
            &VehicleParams::default(),
            &BoundaryConfig::default(),
        )
        .unwrap();
        for e in &b.entries {
            assert!((e.l_min + 0.55).abs() < 1e-12 && (e.l_max - 0.55).abs() < 1e-12);
            assert_eq!(e.source, BoundSource::Lane);
        }
    }

    #[test]
    fn widest_gap_wins_and_narrow_gap_is_pruned() {
        let config = BoundaryConfig {
            lateral_buffer: 0.2,
            ..Default::default()
        };
        let obs = [obstacle("o", (20.0, 40.0), (-1.0, 1.0))];
        let b = generate_boundary(
            &uniform_corridor(121, -1.75, 5.25),
            &obs,
            &ego(),
            &VehicleParams::default(),
            &config,
        )
        .unwrap();
        b.check().unwrap();
        for (i, e) in b.entries.iter().enumerate() {
            let s = b.station(i);
            if (20.0..=40.0).contains(&s) {
                assert!(
                    (e.l_min - 2.1).abs() < 1e-12 && (e.l_max - 4.15).abs() < 1e-12,
                    "s = {s}"
                );
                assert_eq!(e.source, BoundSource::ObstacleLeftPass);
            }
        }
    }

    #[test]
    fn staggered_obstacles_alternate_sides() {
        let obs = [
            obstacle("a", (30.0, 40.0), (-1.5, -0.5)),
            obstacle("b", (60.0, 70.0), (0.5, 1.5)),
        ];
        let config = BoundaryConfig {
            lateral_buffer: 0.2,
            ..Default::default()
        };
        let b = generate_boundary(
            &uniform_corridor(201, -4.0, 4.0),
            &obs,
            &ego(),
            &VehicleParams::default(),
            &config,
        )
        .unwrap();
        b.check().unwrap();
        assert_eq!(b.entries[70].source, BoundSource::ObstacleLeftPass);
        assert_eq!(b.entries[130].source, BoundSource::ObstacleRightPass);
        assert!(b.entries[70].l_min >= -0.5 + 1.1 - 1e-12);
        assert!(b.entries[130].l_max <= 0.5 - 1.1 + 1e-12);
    }

    #[test]
    fn back_tracks_out_of_a_dead_end() {
        // At s = 10 the wider left gap is chosen, but at s = 20 the left side
        // closes; the search must come back and pass on the right.
        let obs = [
            obstacle("a", (10.0, 30.0), (-1.0, 0.0)),
            obstacle("b", (20.0, 30.0), (0.0, 4.0)),
        ];
        let corridor = uniform_corridor(81, -4.0, 4.0);
        let config = BoundaryConfig {
            lateral_buffer: 0.2,
            ..Default::default()
        };
        let b =
            generate_boundary(&corridor, &obs, &ego(), &VehicleParams::default(), &config).unwrap();
        b.check().unwrap();
        assert!(b.entries[40].l_max <= -1.0 - 1.1 + 1e-12);
        // Station 10 m must already be on the right to overlap 20 m.
        assert!(b.entries[20].l_max <= -1.0 - 1.1 + 1e-12);
    }

    #[test]
    fn fully_blocked_corridor_reports_obstacle() {
        let obs = [obstacle("wall", (20.0, 25.0), (-1.75, 1.75))];
        let err = generate_boundary(
            &uniform_corridor(100, -1.75, 1.75),
            &obs,
            &ego(),
            &VehicleParams::default(),
            &BoundaryConfig::default(),
        )
        .unwrap_err();
        match err {
            BoundaryError::BlockedCorridor { obstacle, s } => {
                assert_eq!(obstacle.as_deref(), Some("wall"));
                assert!((19.5..=20.0).contains(&s), "{s}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn ego_outside_first_interval_is_accommodated() {
        let start = FrenetState {
            l: 1.2,
            ..Default::default()
        };
        let b = generate_boundary(
            &uniform_corridor(40, -1.75, 1.75),
            &[],
            &start,
            &VehicleParams::default(),
            &BoundaryConfig::default(),
        )
        .unwrap();
        assert_eq!(b.entries[0].l_max, 1.2);
        assert_eq!(b.entries[0].source, BoundSource::EgoAccommodation);
        assert!(b.entries[1].l_max < 1.2 && b.entries[1].l_max > 0.55);
        assert_eq!(b.entries[4].source, BoundSource::Lane);
        assert_eq!(b.entries[4].l_max, 0.55);
        b.check().unwrap();
    }

    #[test]
    fn csv_layout() {
        let b = generate_boundary(
            &uniform_corridor(2, -1.75, 1.75),
            &[],
            &ego(),
            &VehicleParams::default(),
            &BoundaryConfig::default(),
        )
        .unwrap();
        assert_eq!(
            b.to_csv(),
            "s,l_min,l_max,source\n0,-0.55,0.55,lane\n0.5,-0.55,0.55,lane\n"
        );
    }

    #[test]
    fn mirrored_road_reverses_lane_order() {
        let m = two_lanes(LaneDirection::Forward).mirrored();
        m.validate().unwrap();
        assert_eq!(m.ego_lane_index, 0);
        assert_eq!(m.lanes[1].left.eval(0.0), -1.75);
        assert_eq!(m.lanes[1].right.eval(0.0), -5.25);
    }
}
