//! The five simultaneous update rules and the run driver.
//!
//! Every step reads the frozen time-`t` opinions and writes a fresh vector for
//! `t + 1`. Manipulators are never updated; their opinion is always the
//! scheduled value of the group.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opinion::{ManipulatorGroup, ModelKind, ModelSpec, OpinionState};

/// Slack tolerated before a weighted update is reported as escaping `[-1, 1]`.
pub const ESCAPE_SLACK: f64 = 1e-12;

/// Max-change tolerance of the HK stopping rule.
pub const HK_TOLERANCE: f64 = 5e-4;

/// Decimal places of the DW rounded-cluster stopping rule.
pub const DW_DECIMALS: u32 = 3;

pub const DEFAULT_HARD_HORIZON: u64 = 5000;

/// Trust weights `w[i][j]` of normal agent `i` towards extended agent `j`.
///
/// Rows cover the `n` normal agents, columns the `n + k` extended agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "weight matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some((idx, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, w)| !(0.0..=1.0).contains(*w))
        {
            return Err(Error::WeightOutOfRange {
                row: idx / cols,
                col: idx % cols,
                value,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Constant matrix, handy for tests and deterministic setups.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn check_shape(&self, n: usize, k: usize) -> Result<()> {
        if self.rows != n || self.cols != n + k {
            return Err(Error::WeightShape {
                rows: self.rows,
                cols: self.cols,
                expected_rows: n,
                expected_cols: n + k,
            });
        }
        Ok(())
    }
}

/// Draws an `n_normal x (n_normal + k_manip)` matrix with i.i.d. uniform
/// entries in `[0, 1)`, row-major.
pub fn sample_weight_matrix<R: Rng + ?Sized>(
    n_normal: usize,
    k_manip: usize,
    rng: &mut R,
) -> WeightMatrix {
    let cols = n_normal + k_manip;
    let data = (0..n_normal * cols).map(|_| rng.random::<f64>()).collect();
    WeightMatrix {
        rows: n_normal,
        cols,
        data,
    }
}

/// Sign with `sign(0) = 0`; `f64::signum` maps zero to one.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One simultaneous HK step: every normal agent moves to the mean of all
/// extended opinions within `epsilon` of its own, manipulators counted with
/// multiplicity `k`.
pub fn hk_step(state: &OpinionState, group: &ManipulatorGroup, epsilon: f64) -> OpinionState {
    let x = state.opinions();
    let t = state.time();
    let n = x.len();
    let f = group.opinion_at(t);
    let k = group.k();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| x[i]).collect();

    let mut next = vec![0.0; n];
    let mut lo = 0;
    let mut hi = 0;
    // (lo, hi, with manipulators) -> mean; consecutive agents usually share a window
    let mut cached: Option<(usize, usize, bool, f64)> = None;
    for (p, &xi) in sorted.iter().enumerate() {
        while xi - sorted[lo] > epsilon {
            lo += 1;
        }
        if hi < p + 1 {
            hi = p + 1;
        }
        while hi < n && sorted[hi] - xi <= epsilon {
            hi += 1;
        }
        let with_group = k > 0 && (xi - f).abs() <= epsilon;

        let mean = match cached {
            Some((clo, chi, cg, m)) if clo == lo && chi == hi && cg == with_group => m,
            _ => {
                // Offsets from the window minimum keep a common-value window exact.
                let base = sorted[lo];
                let mut acc: f64 = sorted[lo..hi].iter().map(|v| v - base).sum();
                let mut count = (hi - lo) as f64;
                if with_group {
                    acc += k as f64 * (f - base);
                    count += k as f64;
                }
                let m = base + acc / count;
                cached = Some((lo, hi, with_group, m));
                m
            }
        };
        next[order[p]] = mean;
    }
    OpinionState::from_parts(next, t + 1)
}

/// Picks a partner for normal agent `i` uniformly among the `n + k - 1`
/// other extended agents. Returns `None` when no other agent exists.
#[inline]
fn draw_partner<R: Rng + ?Sized>(i: usize, extended: usize, rng: &mut R) -> Option<usize> {
    let others = extended.checked_sub(1)?;
    if others == 0 {
        return None;
    }
    let r = rng.random_range(0..others as u64) as usize;
    Some(if r >= i { r + 1 } else { r })
}

/// One simultaneous DW step: every normal agent averages with one random
/// partner if the partner lies within `epsilon`.
pub fn dw_step<R: Rng + ?Sized>(
    state: &OpinionState,
    group: &ManipulatorGroup,
    epsilon: f64,
    rng: &mut R,
) -> OpinionState {
    let x = state.opinions();
    let t = state.time();
    let n = x.len();
    let f = group.opinion_at(t);
    let extended = n + group.k();

    let next = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| match draw_partner(i, extended, rng) {
            Some(j) => {
                let zj = if j < n { x[j] } else { f };
                if (xi - zj).abs() <= epsilon {
                    (xi + zj) / 2.0
                } else {
                    xi
                }
            }
            None => xi,
        })
        .collect();
    OpinionState::from_parts(next, t + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mechanism {
    Attractive,
    Repulsive,
    AttractiveRepulsive,
}

/// Shared kernel of the three weighted models.
///
/// Movement magnitude is `|x_i + w_ij z_j| / 2 * (1 - |x_i|)`, towards `z_j`
/// inside the threshold (attractive) and away from it outside (repulsive).
fn weighted_step<R: Rng + ?Sized>(
    state: &OpinionState,
    group: &ManipulatorGroup,
    epsilon: f64,
    weights: &WeightMatrix,
    mechanism: Mechanism,
    rng: &mut R,
) -> Result<OpinionState> {
    let x = state.opinions();
    let t = state.time();
    let n = x.len();
    weights.check_shape(n, group.k())?;
    let f = group.opinion_at(t);
    let extended = n + group.k();

    let mut next = Vec::with_capacity(n);
    for (i, &xi) in x.iter().enumerate() {
        let Some(j) = draw_partner(i, extended, rng) else {
            next.push(xi);
            continue;
        };
        let zj = if j < n { x[j] } else { f };
        let inside = (xi - zj).abs() <= epsilon;
        let attract = match mechanism {
            Mechanism::Attractive if inside => true,
            Mechanism::Repulsive if !inside => false,
            Mechanism::AttractiveRepulsive => inside,
            _ => {
                next.push(xi);
                continue;
            }
        };
        let s = sign(xi - zj);
        let magnitude = (xi + weights.get(i, j) * zj).abs() / 2.0 * (1.0 - xi.abs());
        let xn = if attract {
            xi - s * magnitude
        } else {
            xi + s * magnitude
        };
        if xn.abs() > 1.0 + ESCAPE_SLACK || xn.is_nan() {
            return Err(Error::Escaped {
                index: i,
                t: t + 1,
                value: xn,
            });
        }
        next.push(xn.clamp(-1.0, 1.0));
    }
    Ok(OpinionState::from_parts(next, t + 1))
}

pub fn awhk_step<R: Rng + ?Sized>(
    state: &OpinionState,
    group: &ManipulatorGroup,
    epsilon: f64,
    weights: &WeightMatrix,
    rng: &mut R,
) -> Result<OpinionState> {
    weighted_step(state, group, epsilon, weights, Mechanism::Attractive, rng)
}

pub fn rwhk_step<R: Rng + ?Sized>(
    state: &OpinionState,
    group: &ManipulatorGroup,
    epsilon: f64,
    weights: &WeightMatrix,
    rng: &mut R,
) -> Result<OpinionState> {
    weighted_step(state, group, epsilon, weights, Mechanism::Repulsive, rng)
}

pub fn arwhk_step<R: Rng + ?Sized>(
    state: &OpinionState,
    group: &ManipulatorGroup,
    epsilon: f64,
    weights: &WeightMatrix,
    rng: &mut R,
) -> Result<OpinionState> {
    weighted_step(
        state,
        group,
        epsilon,
        weights,
        Mechanism::AttractiveRepulsive,
        rng,
    )
}

/// Dispatches one step of `model`.
pub fn step<R: Rng + ?Sized>(
    model: &ModelSpec,
    state: &OpinionState,
    group: &ManipulatorGroup,
    rng: &mut R,
) -> Result<OpinionState> {
    let eps = model.epsilon();
    match model.kind() {
        ModelKind::Hk => Ok(hk_step(state, group, eps)),
        ModelKind::Dw => Ok(dw_step(state, group, eps, rng)),
        kind => {
            let w = model
                .weights()
                .ok_or(Error::MissingWeights(kind.name()))?;
            match kind {
                ModelKind::Awhk => awhk_step(state, group, eps, w, rng),
                ModelKind::Rwhk => rwhk_step(state, group, eps, w, rng),
                _ => arwhk_step(state, group, eps, w, rng),
            }
        }
    }
}

pub fn max_change(prev: &[f64], next: &[f64]) -> f64 {
    prev.iter()
        .zip(next)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// True when the normal opinions rounded to `decimals` places, together with
/// the (rounded) manipulator opinion if given, form groups of identical values
/// whose distinct values are pairwise more than `epsilon` apart.
pub fn rounded_clusters_separated(
    opinions: &[f64],
    manipulator: Option<f64>,
    decimals: u32,
    epsilon: f64,
) -> bool {
    let scale = 10f64.powi(decimals as i32);
    let mut keys: Vec<i64> = opinions
        .iter()
        .chain(manipulator.iter())
        .map(|x| (x * scale).round() as i64)
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.windows(2)
        .all(|w| (w[1] - w[0]) as f64 / scale > epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    /// Stop once `max_j |x_j(t-1) - x_j(t)| <= tolerance`.
    MaxChange { tolerance: f64 },
    /// Stop once the rounded opinions form clusters more than `epsilon` apart.
    RoundedClusters { decimals: u32 },
    /// Always run to the horizon.
    FixedHorizon,
}

impl StopRule {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Hk => StopRule::MaxChange {
                tolerance: HK_TOLERANCE,
            },
            ModelKind::Dw => StopRule::RoundedClusters {
                decimals: DW_DECIMALS,
            },
            _ => StopRule::FixedHorizon,
        }
    }
}

/// Default run length: the hard cap for convergence rules, 500 iterations for
/// the weighted models (1000 for the repulsive one).
pub fn default_horizon(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Hk | ModelKind::Dw => DEFAULT_HARD_HORIZON,
        ModelKind::Rwhk => 1000,
        ModelKind::Awhk | ModelKind::Arwhk => 500,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Horizon,
    Oscillating,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::Horizon => "horizon",
            StopReason::Oscillating => "oscillating",
        })
    }
}

/// Which intermediate states a run keeps. The final state is always kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnapshotPlan {
    Final,
    At(Vec<u64>),
    Every(u64),
}

impl SnapshotPlan {
    fn wants(&self, t: u64) -> bool {
        match self {
            SnapshotPlan::Final => false,
            SnapshotPlan::At(times) => times.contains(&t),
            SnapshotPlan::Every(every) => *every > 0 && t.is_multiple_of(*every),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Recorded states, strictly increasing in time; the last one is final.
    pub snapshots: Vec<OpinionState>,
    /// Scheduled manipulator opinion at each snapshot time.
    pub manipulator_opinions: Vec<f64>,
    pub stop_time: u64,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn final_state(&self) -> &OpinionState {
        self.snapshots.last().expect("trajectory always keeps the final state")
    }

    pub fn at(&self, t: u64) -> Option<&OpinionState> {
        self.snapshots.iter().find(|s| s.time() == t)
    }
}

/// Iterates `model` from `init` until the stop rule fires or `horizon`
/// iterations have elapsed.
///
/// Convergence rules are only evaluated once the manipulators have settled at
/// their final opinion (the step that produced the tested state started at or
/// after `t_delta`), so a ramp that has not yet reached the population cannot
/// end a run early. An empty group never delays the check.
pub fn run_simulation<R: Rng + ?Sized>(
    model: &ModelSpec,
    init: OpinionState,
    group: &ManipulatorGroup,
    stop: StopRule,
    horizon: u64,
    snapshots: &SnapshotPlan,
    rng: &mut R,
) -> Result<Trajectory> {
    if let Some(w) = model.weights() {
        w.check_shape(init.len(), group.k())?;
    } else if model.kind().is_weighted() {
        return Err(Error::MissingWeights(model.kind().name()));
    }

    let mut recorded = Vec::new();
    let mut manip = Vec::new();
    let mut state = init;
    if snapshots.wants(state.time()) {
        recorded.push(state.clone());
        manip.push(group.opinion_at(state.time()));
    }

    let mut last_change = f64::INFINITY;
    let reason = loop {
        if state.time() >= horizon {
            break match stop {
                StopRule::FixedHorizon if last_change > HK_TOLERANCE => StopReason::Oscillating,
                _ => StopReason::Horizon,
            };
        }
        let started = state.time();
        let next = step(model, &state, group, rng)?;
        last_change = max_change(state.opinions(), next.opinions());
        state = next;
        let t = state.time();
        if snapshots.wants(t) {
            recorded.push(state.clone());
            manip.push(group.opinion_at(t));
        }

        let settled = group.is_empty() || group.is_settled(started);
        let converged = settled
            && match stop {
                StopRule::MaxChange { tolerance } => last_change <= tolerance,
                StopRule::RoundedClusters { decimals } => rounded_clusters_separated(
                    state.opinions(),
                    (!group.is_empty()).then(|| group.opinion_at(t)),
                    decimals,
                    model.epsilon(),
                ),
                StopRule::FixedHorizon => false,
            };
        if converged {
            break StopReason::Converged;
        }
    };

    let stop_time = state.time();
    if recorded.last().map(|s| s.time()) != Some(stop_time) {
        manip.push(group.opinion_at(stop_time));
        recorded.push(state);
    }
    Ok(Trajectory {
        snapshots: recorded,
        manipulator_opinions: manip,
        stop_time,
        stop_reason: reason,
    })
}
