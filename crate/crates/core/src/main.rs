use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pjplan::pipeline::bench::{bench, BenchReport};
use pjplan::pipeline::emit::{emit, Format};
use pjplan::pipeline::scenario::parse_overrides;
use pjplan::pipeline::{run_pipeline_with, RunOptions, Scenario};
use pjplan::smoother::GuideLine;

/// Two-stage QP path planner.
#[derive(Parser)]
#[command(name = "pjplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one scenario and write its artifacts.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of csv, svg, json-summary. Empty writes nothing.
        #[arg(long, default_value = "csv,svg,json-summary")]
        format: String,
        /// Station spacing for both the boundary and the path, in meters.
        #[arg(long)]
        ds: Option<f64>,
        /// Guide line CSV to use instead of smoothing the map line.
        #[arg(long)]
        cached_guide_line: Option<PathBuf>,
        /// Configuration overrides, `key=value,...`; keys may be prefixed
        /// with smoother., boundary., path. or run.
        #[arg(long)]
        weights: Option<String>,
        /// Seed for map-noise injection (scenarios with run.raw_noise_m > 0).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time every scenario in a directory and print a JSON report.
    Bench {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, default_value_t = 50)]
        reps: usize,
    },
}

const EXIT_IO: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Plan {
            scenario,
            out,
            format,
            ds,
            cached_guide_line,
            weights,
            seed,
        } => plan(
            &scenario,
            &out,
            &format,
            ds,
            cached_guide_line.as_deref(),
            weights.as_deref(),
            seed,
        ),
        Command::Bench { scenarios, reps } => run_bench(&scenarios, reps),
    }
}

fn plan(
    scenario: &Path,
    out: &Path,
    format: &str,
    ds: Option<f64>,
    cached: Option<&Path>,
    weights: Option<&str>,
    seed: u64,
) -> ExitCode {
    let formats: Vec<Format> = match format
        .split(',')
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .map(str::parse)
        .collect()
    {
        Ok(f) => f,
        Err(e) => return fail(EXIT_IO, e),
    };
    let mut sc = match Scenario::load(scenario) {
        Ok(sc) => sc,
        Err(e) => return fail(EXIT_IO, e),
    };
    if let Some(w) = weights {
        if let Err(e) = parse_overrides(w).and_then(|o| sc.apply_overrides(&o)) {
            return fail(EXIT_IO, e);
        }
    }
    if let Some(ds) = ds {
        if let Err(e) = sc.set_ds(ds) {
            return fail(EXIT_IO, e);
        }
    }
    let cached_guide_line = match cached {
        None => None,
        Some(p) => match std::fs::read_to_string(p) {
            Ok(text) => match GuideLine::from_csv(&text) {
                Ok(g) => Some(g),
                Err(e) => return fail(EXIT_IO, format!("{}: {e}", p.display())),
            },
            Err(e) => return fail(EXIT_IO, format!("{}: {e}", p.display())),
        },
    };
    let opts = RunOptions {
        cached_guide_line,
        seed,
        ..RunOptions::default()
    };
    let result = match run_pipeline_with(&sc, &opts) {
        Ok(r) => r,
        Err(e) if e.is_infeasible() => return fail(EXIT_INFEASIBLE, e),
        Err(e) => return fail(EXIT_IO, e),
    };
    match emit(&result, out, &formats) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_IO, format!("writing to {}: {e}", out.display())),
    }
}

fn run_bench(dir: &Path, reps: usize) -> ExitCode {
    if reps == 0 {
        return fail(EXIT_IO, "--reps must be at least 1");
    }
    let mut files: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => return fail(EXIT_IO, format!("{}: {e}", dir.display())),
    };
    files.sort();
    let mut report: Option<BenchReport> = None;
    for f in files {
        let sc = match Scenario::load(&f) {
            Ok(sc) => sc,
            Err(e) => return fail(EXIT_IO, e),
        };
        match bench(std::slice::from_ref(&sc), reps) {
            Ok(r) => match report.as_mut() {
                Some(acc) => acc.scenarios.extend(r.scenarios),
                None => report = Some(r),
            },
            Err(e) if e.is_infeasible() => log::warn!("skipping {}: {e}", sc.name),
            Err(e) => return fail(EXIT_IO, e),
        }
    }
    let Some(report) = report else {
        return fail(
            EXIT_IO,
            format!("no plannable scenarios in {}", dir.display()),
        );
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    ExitCode::SUCCESS
}
