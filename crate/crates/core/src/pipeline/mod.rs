//! End-to-end planning: smooth → project → decide → bound → optimize →
//! convert, plus emitters and a timing harness.

pub mod bench;
pub mod emit;
pub mod scenario;

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::boundary::{
    decide_lane_usage, ego_lane_corridor, generate_boundary, project_obstacle, station_count,
    BoundaryError, Corridor, ObstacleSL, PathBoundary,
};
use crate::geometry::{to_frenet, FrenetState, GeometryError, VehicleParams};
use crate::pjpath::{optimize_path_with, OptimizedPath, PathError, PathSample};
use crate::qp::{QpSettings, SolveStats};
use crate::smoother::{resample, smooth_with, GuideLine, RawLine, SmoothError};

pub use scenario::{Scenario, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Smooth,
    Project,
    Decide,
    Boundary,
    Optimize,
    Convert,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Smooth => "smooth",
            Stage::Project => "project",
            Stage::Decide => "decide",
            Stage::Boundary => "boundary",
            Stage::Optimize => "optimize",
            Stage::Convert => "convert",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Whatever the pipeline produced before a stage failed.
#[derive(Debug, Clone, Default)]
pub struct Partial {
    pub guide_line: Option<GuideLine>,
    pub ego: Option<FrenetState>,
    pub obstacles: Option<Vec<ObstacleSL>>,
    pub corridor: Option<Corridor>,
    pub boundary: Option<PathBoundary>,
}

#[derive(Debug, Error)]
#[error("scenario {scenario}: {stage} stage failed: {source}")]
pub struct PipelineError {
    pub scenario: String,
    pub stage: Stage,
    #[source]
    pub source: StageError,
    pub partial: Box<Partial>,
}

impl PipelineError {
    /// Failures that mean "no safe path exists" rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self.source,
            StageError::Boundary(
                BoundaryError::BlockedCorridor { .. } | BoundaryError::NoUsableLane { .. }
            ) | StageError::Path(
                PathError::PathInfeasible
                    | PathError::Unreachable { .. }
                    | PathError::InfeasibleGuideLine { .. }
            )
        )
    }
}

/// Wall time per stage in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub smooth_ms: f64,
    pub project_ms: f64,
    pub decide_ms: f64,
    pub boundary_ms: f64,
    pub optimize_ms: f64,
    pub convert_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.smooth_ms
            + self.project_ms
            + self.decide_ms
            + self.boundary_ms
            + self.optimize_ms
            + self.convert_ms
    }

    pub fn get(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Smooth => self.smooth_ms,
            Stage::Project => self.project_ms,
            Stage::Decide => self.decide_ms,
            Stage::Boundary => self.boundary_ms,
            Stage::Optimize => self.optimize_ms,
            Stage::Convert => self.convert_ms,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub scenario: String,
    pub vehicle: VehicleParams,
    pub guide_line: GuideLine,
    /// `None` when a cached guide line was used.
    pub smoothing: Option<SolveStats>,
    pub ego: FrenetState,
    /// Static obstacles in the map frame and their SL boxes.
    pub obstacles: Vec<(Vec<[f64; 2]>, ObstacleSL)>,
    pub corridor: Corridor,
    /// Boundary over the full search scope.
    pub boundary: PathBoundary,
    /// Boundary restricted to the path stations.
    pub path_boundary: PathBoundary,
    pub path: OptimizedPath,
    pub cartesian: Vec<PathSample>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub cached_guide_line: Option<GuideLine>,
    /// Seeds the map-noise injection.
    pub seed: u64,
    pub solver: QpSettings,
}

pub fn run_pipeline(sc: &Scenario) -> Result<PlanResult, PipelineError> {
    run_pipeline_with(sc, &RunOptions::default())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Map points with seeded uniform noise on interior points.
pub fn noisy_raw_line(sc: &Scenario, seed: u64) -> Vec<[f64; 2]> {
    let amp = sc.run.raw_noise_m;
    if amp <= 0.0 {
        return sc.raw_line_m.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = sc.raw_line_m.len() - 1;
    sc.raw_line_m
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dx = rng.gen_range(-amp..=amp);
            let dy = rng.gen_range(-amp..=amp);
            if i == 0 || i == last {
                *p
            } else {
                [p[0] + dx, p[1] + dy]
            }
        })
        .collect()
}

pub fn run_pipeline_with(sc: &Scenario, opts: &RunOptions) -> Result<PlanResult, PipelineError> {
    let mut partial = Partial::default();
    let mut timings = StageTimings::default();
    macro_rules! fail {
        ($stage:expr, $err:expr) => {
            return Err(PipelineError {
                scenario: sc.name.clone(),
                stage: $stage,
                source: StageError::from($err),
                partial: Box::new(partial),
            })
        };
    }

    let t = Instant::now();
    let (line, smoothing) = match &opts.cached_guide_line {
        Some(line) => (line.clone(), None),
        None => {
            let smoothed = RawLine::new(noisy_raw_line(sc, opts.seed))
                .and_then(|raw| resample(&raw, sc.smoother.resample_interval))
                .and_then(|raw| smooth_with(&raw, &sc.smoother, &opts.solver));
            match smoothed {
                Ok(s) => (s.line, Some(s.stats)),
                Err(e) => fail!(Stage::Smooth, e),
            }
        }
    };
    timings.smooth_ms = ms(t);
    partial.guide_line = Some(line.clone());

    let t = Instant::now();
    let ego = match to_frenet(&line, &sc.ego.pose()) {
        Ok(f) => f,
        Err(e) => fail!(Stage::Project, e),
    };
    partial.ego = Some(ego);
    let mut obstacles = Vec::new();
    for o in &sc.obstacles {
        if o.speed_mps >= sc.run.static_speed_threshold_mps {
            log::warn!(
                "{}: obstacle {} moves at {} m/s; left to speed planning",
                sc.name,
                o.id,
                o.speed_mps
            );
            continue;
        }
        match project_obstacle(&line, &o.id, &o.polygon_m) {
            Ok(sl) => obstacles.push((o.polygon_m.clone(), sl)),
            Err(BoundaryError::OutOfScope(id)) => {
                log::info!("{}: obstacle {id} is off the guide line", sc.name)
            }
            Err(e) => fail!(Stage::Project, e),
        }
    }
    let sl: Vec<ObstacleSL> = obstacles.iter().map(|(_, o)| o.clone()).collect();
    timings.project_ms = ms(t);
    partial.obstacles = Some(sl.clone());

    let t = Instant::now();
    let corridor =
        match decide_lane_usage(&sc.road, &ego, &sl, &sc.vehicle, &sc.boundary, line.end_s()) {
            Ok(c) => c,
            Err(BoundaryError::NoUsableLane { obstacle, s }) => {
                // Nothing to borrow: search the ego lane alone so the blockage is
                // reported where the corridor actually closes.
                log::info!(
                    "{}: no lane to borrow around {obstacle} at s = {s}",
                    sc.name
                );
                match ego_lane_corridor(&sc.road, &ego, &sc.boundary, line.end_s()) {
                    Ok(c) => c,
                    Err(e) => fail!(Stage::Decide, e),
                }
            }
            Err(e) => fail!(Stage::Decide, e),
        };
    timings.decide_ms = ms(t);
    partial.corridor = Some(corridor.clone());

    let t = Instant::now();
    let boundary = match generate_boundary(&corridor, &sl, &ego, &sc.vehicle, &sc.boundary) {
        Ok(b) => b,
        Err(e) => fail!(Stage::Boundary, e),
    };
    let path_cfg = crate::boundary::BoundaryConfig {
        scope_s: sc.run.path_length_m,
        ..sc.boundary
    };
    let path_boundary = boundary.truncated(station_count(ego.s, line.end_s(), &path_cfg));
    timings.boundary_ms = ms(t);
    partial.boundary = Some(boundary.clone());

    let t = Instant::now();
    let path = match optimize_path_with(
        &path_boundary,
        &ego,
        &sc.vehicle,
        &line,
        &sc.path,
        &opts.solver,
    ) {
        Ok(p) => p,
        Err(e) => fail!(Stage::Optimize, e),
    };
    timings.optimize_ms = ms(t);

    let t = Instant::now();
    let cartesian = match path.path.to_cartesian(&line, sc.run.sample_ds_m) {
        Ok(c) => c,
        Err(e) => fail!(Stage::Convert, e),
    };
    timings.convert_ms = ms(t);

    Ok(PlanResult {
        scenario: sc.name.clone(),
        vehicle: sc.vehicle,
        guide_line: line,
        smoothing,
        ego,
        obstacles,
        corridor,
        boundary,
        path_boundary,
        path,
        cartesian,
        timings,
    })
}
