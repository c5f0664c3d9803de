//! `(K, t_delta)` parameter sweeps with replicated runs.
//!
//! Each replicate draws from its own stream derived from
//! `(base_seed, k, t_delta, replicate)`, so a sweep is a pure function of its
//! configuration regardless of how many workers run it or in which order the
//! cells complete.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::metrics::{summarize, MetricParams, Summary};
use crate::models::{run_simulation, sample_weight_matrix, SnapshotPlan, StopReason, StopRule};
use crate::opinion::{ManipulatorGroup, ModelKind, ModelSpec, OpinionState};
use crate::rng::RngSeed;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cell K = {k}, t_delta = {t_delta}, replicate {replicate}: {source}")]
    Cell {
        k: usize,
        t_delta: u64,
        replicate: usize,
        #[source]
        source: Error,
    },

    #[error("cell K = {k}, t_delta = {t_delta}: deterministic replicates diverged at replicate {replicate}")]
    Diverged { k: usize, t_delta: u64, replicate: usize },

    #[error("invalid sweep: {0}")]
    Invalid(String),

    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

/// Which states of every run enter the aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotPolicy {
    /// The state at which the run stopped.
    Final,
    /// The state when the ramp ends and the state at the horizon.
    TDeltaAndHorizon,
}

impl SnapshotPolicy {
    pub fn default_for(kind: ModelKind) -> Self {
        if kind.is_weighted() {
            SnapshotPolicy::TDeltaAndHorizon
        } else {
            SnapshotPolicy::Final
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            SnapshotPolicy::Final => &["final"],
            SnapshotPolicy::TDeltaAndHorizon => &["t_delta", "horizon"],
        }
    }
}

pub fn default_replicates(kind: ModelKind) -> usize {
    if kind.is_stochastic() {
        100
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub k_values: Vec<usize>,
    pub tdelta_values: Vec<u64>,
    pub replicates: usize,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.replicates == 0 {
            return Err(SweepError::Invalid("replicates must be >= 1".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.k_values
            .iter()
            .flat_map(move |&k| self.tdelta_values.iter().map(move |&td| (k, td)))
    }

    pub fn n_cells(&self) -> usize {
        self.k_values.len() * self.tdelta_values.len()
    }
}

/// Everything about a run except the cell coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub kind: ModelKind,
    pub epsilon: f64,
    pub init: OpinionState,
    pub f_start: f64,
    pub f_end: f64,
    pub stop: StopRule,
    pub horizon: u64,
    pub metrics: MetricParams,
    pub snapshots: SnapshotPolicy,
    pub base_seed: u64,
    /// Keep every replicate's opinions in the cell result.
    pub keep_opinions: bool,
}

impl Experiment {
    /// Defaults for a model: its stop rule, horizon, screening value and snapshot policy.
    pub fn new(kind: ModelKind, epsilon: f64, init: OpinionState, f_start: f64, f_end: f64) -> Self {
        Self {
            kind,
            epsilon,
            init,
            f_start,
            f_end,
            stop: StopRule::default_for(kind),
            horizon: crate::models::default_horizon(kind),
            metrics: MetricParams::with_delta(if kind == ModelKind::Dw { 0.2 } else { 0.5 }),
            snapshots: SnapshotPolicy::default_for(kind),
            base_seed: 0,
            keep_opinions: false,
        }
    }

    /// Runs replicate `replicate` of cell `(k, t_delta)`, recording the
    /// states named by `plan`.
    pub fn simulate(
        &self,
        k: usize,
        t_delta: u64,
        replicate: usize,
        plan: &SnapshotPlan,
    ) -> Result<crate::models::Trajectory, Error> {
        let group = ManipulatorGroup::new(k, self.f_start, self.f_end, t_delta)?;
        let mut streams = RngSeed::new(self.base_seed, k as u64, t_delta, replicate as u64).streams();
        let mut model = ModelSpec::new(self.kind, self.epsilon)?;
        if self.kind.is_weighted() {
            model = model.with_weights(sample_weight_matrix(self.init.len(), k, &mut streams.weights));
        }
        run_simulation(
            &model,
            self.init.clone(),
            &group,
            self.stop,
            self.horizon,
            plan,
            &mut streams.dynamics,
        )
    }

    /// Like [`Experiment::simulate`], returning the states named by the
    /// snapshot policy alongside the trajectory.
    pub fn run_replicate(
        &self,
        k: usize,
        t_delta: u64,
        replicate: usize,
    ) -> Result<(crate::models::Trajectory, Vec<OpinionState>), Error> {
        let plan = match self.snapshots {
            SnapshotPolicy::Final => SnapshotPlan::Final,
            SnapshotPolicy::TDeltaAndHorizon => SnapshotPlan::At(vec![t_delta, self.horizon]),
        };
        let tr = self.simulate(k, t_delta, replicate, &plan)?;
        let states = match self.snapshots {
            SnapshotPolicy::Final => vec![tr.final_state().clone()],
            SnapshotPolicy::TDeltaAndHorizon => {
                let at_ramp_end = tr.at(t_delta.min(tr.stop_time)).unwrap_or(tr.final_state());
                vec![at_ramp_end.clone(), tr.final_state().clone()]
            }
        };
        Ok((tr, states))
    }
}

/// Averages over replicates of the per-run metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_of_means: f64,
    pub mean_of_stds: f64,
    pub mean_n_clusters: f64,
    pub mean_center: f64,
    pub mean_amplitude: f64,
    pub mean_n_primary: f64,
}

/// Mean that does not depend on the order of `values`.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

impl Aggregates {
    pub fn from_summaries(summaries: &[Summary]) -> Self {
        let avg = |f: &dyn Fn(&Summary) -> f64| order_free_mean(summaries.iter().map(f).collect());
        Self {
            mean_of_means: avg(&|s| s.mean),
            mean_of_stds: avg(&|s| s.std),
            mean_n_clusters: avg(&|s| s.n_clusters as f64),
            mean_center: avg(&|s| s.center),
            mean_amplitude: avg(&|s| s.amplitude),
            mean_n_primary: avg(&|s| s.n_primary as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotResult {
    pub label: String,
    pub aggregates: Aggregates,
    /// One summary per replicate, in replicate order.
    pub summaries: Vec<Summary>,
    /// Replicate opinions, only when the experiment keeps them.
    pub opinions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub k: usize,
    pub t_delta: u64,
    pub snapshots: Vec<SnapshotResult>,
    pub stop_times: Vec<u64>,
    pub stop_reasons: Vec<StopReason>,
}

impl CellResult {
    pub fn snapshot(&self, label: &str) -> Option<&SnapshotResult> {
        self.snapshots.iter().find(|s| s.label == label)
    }
}

pub fn run_cell(
    experiment: &Experiment,
    k: usize,
    t_delta: u64,
    replicates: usize,
) -> Result<CellResult, SweepError> {
    let labels = experiment.snapshots.labels();
    let mut per_label: Vec<Vec<Summary>> = vec![Vec::with_capacity(replicates); labels.len()];
    let mut per_label_opinions: Vec<Vec<Vec<f64>>> = vec![Vec::new(); labels.len()];
    let mut stop_times = Vec::with_capacity(replicates);
    let mut stop_reasons = Vec::with_capacity(replicates);
    let mut first_final: Option<Vec<f64>> = None;

    for replicate in 0..replicates {
        let cell_err = |source| SweepError::Cell {
            k,
            t_delta,
            replicate,
            source,
        };
        let (tr, states) = experiment.run_replicate(k, t_delta, replicate).map_err(cell_err)?;

        if !experiment.kind.is_stochastic() {
            let fin = tr.final_state().opinions();
            match &first_final {
                None => first_final = Some(fin.to_vec()),
                Some(first) if first.as_slice() != fin => {
                    return Err(SweepError::Diverged { k, t_delta, replicate });
                }
                Some(_) => {}
            }
        }

        for (slot, state) in states.iter().enumerate() {
            let summary =
                summarize(state.opinions(), experiment.epsilon, &experiment.metrics).map_err(cell_err)?;
            per_label[slot].push(summary);
            if experiment.keep_opinions {
                per_label_opinions[slot].push(state.opinions().to_vec());
            }
        }
        stop_times.push(tr.stop_time);
        stop_reasons.push(tr.stop_reason);
    }

    let snapshots = labels
        .iter()
        .zip(per_label.into_iter().zip(per_label_opinions))
        .map(|(label, (summaries, opinions))| SnapshotResult {
            label: (*label).to_string(),
            aggregates: Aggregates::from_summaries(&summaries),
            summaries,
            opinions: experiment.keep_opinions.then_some(opinions),
        })
        .collect();
    Ok(CellResult {
        k,
        t_delta,
        snapshots,
        stop_times,
        stop_reasons,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub labels: Vec<String>,
    /// Row-major: all `t_delta` values for the first `K`, then the next `K`.
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn cell(&self, k: usize, t_delta: u64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.k == k && c.t_delta == t_delta)
    }
}

/// Runs every cell of `grid` on a pool of `workers` threads (`None` uses the
/// global rayon pool). The first failing cell in grid order is reported.
pub fn run_sweep(
    grid: &SweepGrid,
    experiment: &Experiment,
    workers: Option<usize>,
) -> Result<SweepResult, SweepError> {
    grid.validate()?;
    if !experiment.kind.is_stochastic() && grid.replicates > 1 {
        log::warn!(
            "{} is deterministic; {} replicates per cell will be identical",
            experiment.kind,
            grid.replicates
        );
    }
    let cells: Vec<(usize, u64)> = grid.cells().collect();
    let compute = || -> Vec<Result<CellResult, SweepError>> {
        cells
            .par_iter()
            .map(|&(k, td)| run_cell(experiment, k, td, grid.replicates))
            .collect()
    };
    let outcomes = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?
            .install(compute),
        None => compute(),
    };
    let cells = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        grid: grid.clone(),
        labels: experiment
            .snapshots
            .labels()
            .iter()
            .map(|s| s.to_string())
            .collect(),
        cells,
    })
}
