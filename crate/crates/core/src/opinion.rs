//! Domain types shared by every model: the normal-agent opinion vector, the
//! manipulator group and its scheduled trajectory, the model selector, and the
//! extended-opinion / confidence-set helpers.
//!
//! Opinions live in the fixed opinion space `[-1, 1]`. Indices are 0-based:
//! normal agents occupy `0..n` of an extended opinion vector and the `k`
//! manipulators occupy `n..n + k`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::WeightMatrix;
use crate::rng;

pub const OPINION_MIN: f64 = -1.0;
pub const OPINION_MAX: f64 = 1.0;

fn in_opinion_space(x: f64) -> bool {
    (OPINION_MIN..=OPINION_MAX).contains(&x)
}

/// Opinions of the `N` normal agents at iteration `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionState {
    opinions: Vec<f64>,
    time: u64,
}

impl OpinionState {
    pub fn new(opinions: Vec<f64>) -> Result<Self> {
        Self::at_time(opinions, 0)
    }

    pub fn at_time(opinions: Vec<f64>, time: u64) -> Result<Self> {
        if opinions.is_empty() {
            return Err(Error::EmptyState);
        }
        if let Some((index, &value)) = opinions
            .iter()
            .enumerate()
            .find(|(_, x)| !in_opinion_space(**x))
        {
            return Err(Error::OpinionOutOfRange { index, value });
        }
        Ok(Self { opinions, time })
    }

    /// `n` points strictly inside `[a, b]`: `x_i = a + (b - a) i / (n + 1)`
    /// for `i = 1..=n`, endpoints excluded.
    pub fn equispaced(a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyState);
        }
        if !(a < b) {
            return Err(Error::InvalidParameter(format!(
                "equispaced interval needs a < b, got [{a}, {b}]"
            )));
        }
        let denom = (n + 1) as f64;
        let opinions = (1..=n)
            .map(|i| a + (b - a) * i as f64 / denom)
            .collect();
        Self::new(opinions)
    }

    /// `n` opinions drawn independently and uniformly from `[a, b)`.
    pub fn uniform(a: f64, b: f64, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyState);
        }
        if !(a < b) {
            return Err(Error::InvalidParameter(format!(
                "uniform interval needs a < b, got [{a}, {b}]"
            )));
        }
        let mut rng = rng::stream(seed);
        let opinions = (0..n).map(|_| a + (b - a) * rng.random::<f64>()).collect();
        Self::new(opinions)
    }

    /// Trusted constructor for model kernels whose outputs are range-checked
    /// by the caller.
    pub(crate) fn from_parts(opinions: Vec<f64>, time: u64) -> Self {
        debug_assert!(!opinions.is_empty());
        Self { opinions, time }
    }

    pub fn opinions(&self) -> &[f64] {
        &self.opinions
    }

    pub fn into_opinions(self) -> Vec<f64> {
        self.opinions
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.opinions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opinions.is_empty()
    }
}

/// `k` manipulators sharing one opinion that ramps linearly from `f_start`
/// to `f_end` over `t_delta` iterations and then stays at `f_end`.
///
/// `t_delta = 0` is a stubborn group sitting at `f_end` from the start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorGroup {
    k: usize,
    f_start: f64,
    f_end: f64,
    t_delta: u64,
}

impl ManipulatorGroup {
    pub fn new(k: usize, f_start: f64, f_end: f64, t_delta: u64) -> Result<Self> {
        for value in [f_start, f_end] {
            if !in_opinion_space(value) {
                return Err(Error::ScheduleOutOfRange { value });
            }
        }
        Ok(Self {
            k,
            f_start,
            f_end,
            t_delta,
        })
    }

    /// A group whose opinion never changes.
    pub fn stubborn(k: usize, opinion: f64) -> Result<Self> {
        Self::new(k, opinion, opinion, 0)
    }

    pub fn none() -> Self {
        Self {
            k: 0,
            f_start: 0.0,
            f_end: 0.0,
            t_delta: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn f_end(&self) -> f64 {
        self.f_end
    }

    pub fn t_delta(&self) -> u64 {
        self.t_delta
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    /// Per-iteration opinion increment during the ramp; zero for a stubborn group.
    pub fn slope(&self) -> f64 {
        if self.t_delta == 0 {
            0.0
        } else {
            (self.f_end - self.f_start) / self.t_delta as f64
        }
    }

    /// Scheduled opinion at iteration `t`.
    pub fn opinion_at(&self, t: u64) -> f64 {
        if t >= self.t_delta {
            self.f_end
        } else {
            self.f_start + (self.f_end - self.f_start) * (t as f64 / self.t_delta as f64)
        }
    }

    /// True once the ramp is over and the group behaves as stubborn agents.
    pub fn is_settled(&self, t: u64) -> bool {
        t >= self.t_delta
    }
}

pub fn schedule_opinion(group: &ManipulatorGroup, t: u64) -> f64 {
    group.opinion_at(t)
}

/// Normal opinions followed by `k` copies of the scheduled manipulator opinion.
pub fn extended_opinions(state: &OpinionState, group: &ManipulatorGroup, t: u64) -> Vec<f64> {
    let f = group.opinion_at(t);
    let mut z = Vec::with_capacity(state.len() + group.k());
    z.extend_from_slice(state.opinions());
    z.extend(std::iter::repeat_n(f, group.k()));
    z
}

/// Indices `k` of the extended opinions with `|z[i] - z[k]| <= epsilon`.
///
/// Panics if `i` is not a valid index into `z`.
pub fn confidence_set(z: &[f64], i: usize, epsilon: f64) -> Vec<usize> {
    let xi = z[i];
    z.iter()
        .enumerate()
        .filter(|(_, &zk)| (xi - zk).abs() <= epsilon)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Hegselmann–Krause: move to the mean of the confidence set.
    Hk,
    /// Deffuant–Weisbuch: average with one random partner inside the threshold.
    Dw,
    /// Attractive weighted HK.
    Awhk,
    /// Repulsive weighted HK.
    Rwhk,
    /// Attractive–repulsive weighted HK.
    Arwhk,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Hk,
        ModelKind::Dw,
        ModelKind::Awhk,
        ModelKind::Rwhk,
        ModelKind::Arwhk,
    ];

    pub fn is_weighted(self) -> bool {
        matches!(self, ModelKind::Awhk | ModelKind::Rwhk | ModelKind::Arwhk)
    }

    pub fn is_stochastic(self) -> bool {
        self != ModelKind::Hk
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hk => "hk",
            ModelKind::Dw => "dw",
            ModelKind::Awhk => "awhk",
            ModelKind::Rwhk => "rwhk",
            ModelKind::Arwhk => "arwhk",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Update rule, uniform confidence threshold and (weighted rules only) the
/// trust matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    kind: ModelKind,
    epsilon: f64,
    weights: Option<WeightMatrix>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        Ok(Self {
            kind,
            epsilon,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: WeightMatrix) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn weights(&self) -> Option<&WeightMatrix> {
        self.weights.as_ref()
    }
}
