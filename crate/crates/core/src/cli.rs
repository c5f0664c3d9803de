//! Command-line entry points.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
//! failures while running or writing results.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::analytic::{compare_with_simulation, detachment_time, holds_forever, influence_bound};
use crate::config::{OracleConfig, RunConfig};
use crate::metrics::{summarize, MetricParams, Summary, DEFAULT_ALPHA, DEFAULT_GAP_TOLERANCE, DEFAULT_H};
use crate::models::SnapshotPlan;
use crate::output::{
    effective_weight_histograms, read_trajectory_jsonl, write_csv_file, write_histogram_csv, write_json,
    write_sweep_csv, write_text, write_trajectory_jsonl, RunSummary,
};
use crate::rng::derive_seed;
use crate::svg::{heatmap_svg, trajectory_svg};
use crate::sweep::run_sweep;

/// Environment variable holding the default number of sweep workers.
pub const WORKERS_ENV: &str = "OVERTON_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "overton", version, about = "Bounded-confidence opinion dynamics under manipulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its trajectory and summary.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a trajectory SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Run a (K, t_delta) sweep and write the aggregate and histogram CSVs.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides `sweep.workers` and $OVERTON_WORKERS).
        #[arg(long)]
        workers: Option<usize>,
        /// Also write heatmap SVGs.
        #[arg(long)]
        svg: bool,
    },
    /// Recompute the metrics of every snapshot in a trajectory file.
    Analyze {
        snapshots: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_H)]
        h: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_GAP_TOLERANCE)]
        gap_tolerance: f64,
    },
    /// Check a two-group HK system against its closed form.
    Oracle { config: PathBuf },
}

#[derive(Debug, Serialize)]
pub struct AnalyzedSnapshot {
    pub t: u64,
    #[serde(flatten)]
    pub summary: Summary,
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn config_err(e: impl Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, out, svg } => simulate(&config, out, svg),
        Command::Sweep {
            config,
            out,
            workers,
            svg,
        } => sweep(&config, out, workers, svg),
        Command::Analyze {
            snapshots,
            epsilon,
            delta,
            h,
            alpha,
            gap_tolerance,
        } => analyze(
            &snapshots,
            epsilon,
            &MetricParams {
                delta,
                h,
                alpha,
                gap_tolerance,
            },
        ),
        Command::Oracle { config } => oracle(&config),
    }
}

fn simulate(path: &Path, out: Option<PathBuf>, svg: bool) -> Result<(), Failure> {
    let cfg = RunConfig::load(path).map_err(config_err)?;
    let experiment = cfg.experiment().map_err(config_err)?;
    let (k, t_delta) = (cfg.manipulators.k, cfg.manipulators.t_delta);
    let plan = match cfg.output.record_every {
        0 => SnapshotPlan::Final,
        n => SnapshotPlan::Every(n),
    };
    let at_cell = |e: &dyn Display| Failure::Runtime(format!("K = {k}, t_delta = {t_delta}: {e}"));
    let tr = experiment.simulate(k, t_delta, 0, &plan).map_err(|e| at_cell(&e))?;
    let s = summarize(tr.final_state().opinions(), cfg.epsilon, &experiment.metrics).map_err(|e| at_cell(&e))?;

    let summary = RunSummary {
        model: cfg.model.name().to_string(),
        epsilon: cfg.epsilon,
        k,
        t_delta,
        seed: derive_seed(experiment.base_seed, k as u64, t_delta, 0),
        stop_time: tr.stop_time,
        stop_reason: tr.stop_reason,
        mean: s.mean,
        std: s.std,
        n_clusters: s.n_clusters,
        clusters: s.clusters.clone(),
        center: s.center,
        amplitude: s.amplitude,
        n_primary: s.n_primary,
        effective_weights: s.effective_weights.clone(),
    };
    let dir = out.unwrap_or(cfg.output.dir.clone());
    write_trajectory_jsonl(&dir.join("trajectory.jsonl"), &tr).map_err(runtime_err)?;
    write_json(&dir.join("summary.json"), &summary).map_err(runtime_err)?;
    if svg || cfg.output.svg {
        let times: Vec<u64> = tr.snapshots.iter().map(|s| s.time()).collect();
        let rows: Vec<Vec<f64>> = tr.snapshots.iter().map(|s| s.opinions().to_vec()).collect();
        let manip = if k > 0 { tr.manipulator_opinions.as_slice() } else { &[] };
        let title = format!("{} eps = {} K = {k} t_delta = {t_delta}", cfg.model, cfg.epsilon);
        write_text(&dir.join("trajectory.svg"), &trajectory_svg(&title, &times, &rows, manip)).map_err(runtime_err)?;
    }
    println!(
        "{} stopped at t = {} ({}): mean {:.6}, std {:.6}, {} cluster(s), window [{:.4}, {:.4}]",
        cfg.model,
        tr.stop_time,
        tr.stop_reason,
        s.mean,
        s.std,
        s.n_clusters,
        s.center - s.amplitude,
        s.center + s.amplitude
    );
    Ok(())
}

fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(n) = flag.or(config) {
        return Ok(Some(n.max(1)));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| Some(n.max(1)))
            .map_err(|_| Failure::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn sweep(path: &Path, out: Option<PathBuf>, workers: Option<usize>, svg: bool) -> Result<(), Failure> {
    let cfg = RunConfig::load(path).map_err(config_err)?;
    let grid = cfg.grid().map_err(config_err)?;
    let experiment = cfg.experiment().map_err(config_err)?;
    let workers = resolve_workers(workers, cfg.sweep.workers)?;
    log::info!(
        "sweeping {} cells x {} replicates of {}",
        grid.n_cells(),
        grid.replicates,
        cfg.model
    );
    let result = run_sweep(&grid, &experiment, workers).map_err(runtime_err)?;

    let dir = out.unwrap_or(cfg.output.dir.clone());
    write_csv_file(&dir.join("sweep.csv"), |w| write_sweep_csv(w, &result)).map_err(runtime_err)?;
    let hist = effective_weight_histograms(&result, cfg.output.histogram_bin_width, cfg.output.histogram_max);
    write_csv_file(&dir.join("effective_weights.csv"), |w| write_histogram_csv(w, &hist)).map_err(runtime_err)?;

    if svg || cfg.output.svg {
        type Metric = fn(&crate::sweep::Aggregates) -> f64;
        let metrics: [(&str, Metric); 3] = [
            ("mean", |a| a.mean_of_means),
            ("center", |a| a.mean_center),
            ("amplitude", |a| a.mean_amplitude),
        ];
        for label in &result.labels {
            for (name, get) in metrics {
                let values: Vec<f64> = result
                    .cells
                    .iter()
                    .map(|c| c.snapshot(label).map_or(f64::NAN, |s| get(&s.aggregates)))
                    .collect();
                let title = format!("{} {name} at {label}", cfg.model);
                let svg = heatmap_svg(&title, &grid.k_values, &grid.tdelta_values, &values);
                write_text(&dir.join(format!("heatmap_{label}_{name}.svg")), &svg).map_err(runtime_err)?;
            }
        }
    }
    println!(
        "wrote {} rows to {}",
        result.cells.len() * result.labels.len(),
        dir.join("sweep.csv").display()
    );
    Ok(())
}

fn analyze(path: &Path, epsilon: f64, params: &MetricParams) -> Result<(), Failure> {
    if !(epsilon > 0.0 && epsilon <= 2.0) {
        return Err(Failure::Config(format!("--epsilon must lie in (0, 2], got {epsilon}")));
    }
    let records = read_trajectory_jsonl(path).map_err(runtime_err)?;
    for r in records {
        let summary = summarize(&r.opinions, epsilon, params).map_err(|e| runtime_err(format!("t = {}: {e}", r.t)))?;
        let line = serde_json::to_string(&AnalyzedSnapshot { t: r.t, summary }).map_err(runtime_err)?;
        println!("{line}");
    }
    Ok(())
}

fn oracle(path: &Path) -> Result<(), Failure> {
    let cfg = OracleConfig::load(path).map_err(config_err)?;
    let sys = cfg.system().map_err(config_err)?;
    let cmp = compare_with_simulation(&sys, cfg.horizon).map_err(runtime_err)?;
    println!("influence_bound = {}", influence_bound(cfg.k, cfg.n, cfg.epsilon));
    println!("holds_forever = {}", holds_forever(&sys));
    match detachment_time(&sys, cfg.horizon) {
        Some(t) => println!("detachment_time = {t}"),
        None => println!("detachment_time = none"),
    }
    println!("compared_until = {}", cmp.compared_until);
    println!("max_deviation = {:e}", cmp.max_deviation);
    Ok(())
}
