//! Repeated pipeline runs with per-stage timing statistics.

use serde::Serialize;

use super::{run_pipeline_with, PipelineError, RunOptions, Scenario, Stage};

const STAGES: [Stage; 6] = [
    Stage::Smooth,
    Stage::Project,
    Stage::Decide,
    Stage::Boundary,
    Stage::Optimize,
    Stage::Convert,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            mean_ms: v.iter().sum::<f64>() / n as f64,
            p95_ms: v[rank - 1],
            max_ms: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageStats {
    pub stage: Stage,
    #[serde(flatten)]
    pub stats: TimingStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioBench {
    pub scenario: String,
    pub guide_points: usize,
    pub path_stations: usize,
    pub stages: Vec<StageStats>,
    pub total: TimingStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct MachineInfo {
    pub os: &'static str,
    pub arch: &'static str,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
}

impl MachineInfo {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|text| {
                text.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            });
        Self {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub machine: MachineInfo,
    pub repetitions: usize,
    pub scenarios: Vec<ScenarioBench>,
}

/// Runs every scenario `reps` times. Scenarios are parsed by the caller, so
/// the timed region is one planning cycle per repetition.
pub fn bench(scenarios: &[Scenario], reps: usize) -> Result<BenchReport, PipelineError> {
    let reps = reps.max(1);
    let opts = RunOptions::default();
    let mut out = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        let mut per_stage: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); STAGES.len()];
        let mut totals = Vec::with_capacity(reps);
        let mut shape = (0, 0);
        for _ in 0..reps {
            let r = run_pipeline_with(sc, &opts)?;
            for (k, stage) in STAGES.iter().enumerate() {
                per_stage[k].push(r.timings.get(*stage));
            }
            totals.push(r.timings.total_ms());
            shape = (r.guide_line.points.len(), r.path.path.len());
        }
        out.push(ScenarioBench {
            scenario: sc.name.clone(),
            guide_points: shape.0,
            path_stations: shape.1,
            stages: STAGES
                .iter()
                .zip(&per_stage)
                .map(|(stage, samples)| StageStats {
                    stage: *stage,
                    stats: TimingStats::from_samples(samples),
                })
                .collect(),
            total: TimingStats::from_samples(&totals),
        });
    }
    Ok(BenchReport {
        machine: MachineInfo::detect(),
        repetitions: reps,
        scenarios: out,
    })
}
