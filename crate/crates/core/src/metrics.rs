//! Summaries of an opinion distribution: mean and spread, gap-based cluster
//! counting, and the primary-cluster interval obtained from a Gaussian-kernel
//! smoothing of the opinions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_H: usize = 200;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-3;

/// Arithmetic mean and population (1/N) standard deviation.
pub fn mean_std(x: &[f64]) -> Result<(f64, f64)> {
    if x.is_empty() {
        return Err(Error::EmptyState);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Mean of the members.
    pub opinion: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    clusters: Vec<Cluster>,
    gap_tolerance: f64,
}

impl ClusterSet {
    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn gap_tolerance(&self) -> f64 {
        self.gap_tolerance
    }
}

/// Sorts the opinions and splits wherever two neighbours are more than
/// `gap_tolerance` apart.
pub fn detect_clusters(x: &[f64], gap_tolerance: f64) -> ClusterSet {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] > gap_tolerance {
            let members = &sorted[start..i];
            clusters.push(Cluster {
                opinion: members.iter().sum::<f64>() / members.len() as f64,
                size: members.len(),
            });
            start = i;
        }
    }
    ClusterSet {
        clusters,
        gap_tolerance,
    }
}

/// Net converted agents `mu = (#{|x - 1| < tol} - #{|x + 1| < tol}) / 2`.
///
/// For a population fully polarised at `±1`, the mean opinion is `2 mu / N`.
pub fn net_converted(x: &[f64], tol: f64) -> f64 {
    let balance = x.iter().fold(0i64, |acc, &v| {
        if (v - 1.0).abs() < tol {
            acc + 1
        } else if (v + 1.0).abs() < tol {
            acc - 1
        } else {
            acc
        }
    });
    balance as f64 / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedDensity {
    pub h: usize,
    pub alpha: f64,
    pub epsilon: f64,
    /// `S(r_k)` for `k = 1..=h`, stored 0-based.
    pub values: Vec<f64>,
}

impl SmoothedDensity {
    /// Grid point `r_k = -1 + (2k - 1) / h` for 0-based index `idx = k - 1`.
    pub fn grid_point(&self, idx: usize) -> f64 {
        grid_point(self.h, idx)
    }
}

pub fn grid_point(h: usize, idx: usize) -> f64 {
    -1.0 + (2 * idx + 1) as f64 / h as f64
}

/// `S(r_k) = sum_j exp(-((x_j - r_k) / (alpha * epsilon))^2)` on the `h`
/// midpoints of a uniform partition of `[-1, 1]`.
pub fn smooth_density(x: &[f64], epsilon: f64, h: usize, alpha: f64) -> Result<SmoothedDensity> {
    if h < 2 {
        return Err(Error::InvalidParameter(format!("grid size h must be >= 2, got {h}")));
    }
    if !(alpha > 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel width needs alpha > 0 and epsilon > 0, got alpha = {alpha}, epsilon = {epsilon}"
        )));
    }
    let width = alpha * epsilon;
    let values = (0..h)
        .map(|idx| {
            let r = grid_point(h, idx);
            x.iter()
                .map(|&xj| {
                    let u = (xj - r) / width;
                    (-u * u).exp()
                })
                .sum()
        })
        .collect();
    Ok(SmoothedDensity {
        h,
        alpha,
        epsilon,
        values,
    })
}

/// Indices of local maxima.
///
/// A run of equal values counts once, at its leftmost index, when it is
/// strictly higher than each existing neighbour; the array ends have only
/// one neighbour.
pub fn find_local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut maxima = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[end + 1] == values[start] {
            end += 1;
        }
        let left_ok = start == 0 || values[start - 1] < values[start];
        let right_ok = end + 1 == n || values[end + 1] < values[end];
        if left_ok && right_ok {
            maxima.push(start);
        }
        start = end + 1;
    }
    maxima
}

/// `W_i = w_i / sum w^2` with `w_i = S_i / sum S` over the maxima.
pub fn effective_weights(values: &[f64], maxima: &[usize]) -> Vec<f64> {
    let total: f64 = maxima.iter().map(|&k| values[k]).sum();
    let shares: Vec<f64> = maxima.iter().map(|&k| values[k] / total).collect();
    let norm: f64 = shares.iter().map(|w| w * w).sum();
    shares.iter().map(|w| w / norm).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimaryParams {
    pub delta: f64,
    pub h: usize,
    pub alpha: f64,
}

impl PrimaryParams {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            h: DEFAULT_H,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maximum {
    /// 0-based grid index.
    pub index: usize,
    pub r: f64,
    pub raw_weight: f64,
    pub effective_weight: f64,
    pub primary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryClusterReport {
    pub maxima: Vec<Maximum>,
    pub delta: f64,
    /// True when screening discarded every maximum and the heaviest was kept.
    pub fallback: bool,
    pub center: f64,
    pub amplitude: f64,
}

impl PrimaryClusterReport {
    pub fn primary(&self) -> impl Iterator<Item = &Maximum> {
        self.maxima.iter().filter(|m| m.primary)
    }

    pub fn n_primary(&self) -> usize {
        self.primary().count()
    }
}

/// Smooth, locate maxima, weight them, drop those with `W < delta`, and report
/// the center and half-width of the interval spanned by the survivors.
pub fn primary_interval(x: &[f64], epsilon: f64, params: PrimaryParams) -> Result<PrimaryClusterReport> {
    if x.is_empty() {
        return Err(Error::EmptyState);
    }
    let density = smooth_density(x, epsilon, params.h, params.alpha)?;
    let maxima_idx = find_local_maxima(&density.values);
    let total: f64 = maxima_idx.iter().map(|&k| density.values[k]).sum();
    let effective = effective_weights(&density.values, &maxima_idx);

    let mut maxima: Vec<Maximum> = maxima_idx
        .iter()
        .zip(&effective)
        .map(|(&index, &w_eff)| Maximum {
            index,
            r: density.grid_point(index),
            raw_weight: density.values[index] / total,
            effective_weight: w_eff,
            primary: w_eff >= params.delta,
        })
        .collect();

    let mut fallback = false;
    if !maxima.iter().any(|m| m.primary) {
        // first of the heaviest
        let best = maxima
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, m)| match acc {
                Some((_, w)) if w >= m.effective_weight => acc,
                _ => Some((i, m.effective_weight)),
            })
            .map(|(i, _)| i)
            .ok_or_else(|| Error::InvalidParameter("smoothed density has no maximum".into()))?;
        maxima[best].primary = true;
        fallback = true;
    }

    let (lo, hi) = maxima
        .iter()
        .filter(|m| m.primary)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m.r), hi.max(m.r)));
    Ok(PrimaryClusterReport {
        maxima,
        delta: params.delta,
        fallback,
        center: 0.5 * (hi + lo),
        amplitude: 0.5 * (hi - lo),
    })
}

/// Everything the sweep and CLI report about one opinion distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n_clusters: usize,
    pub clusters: Vec<Cluster>,
    pub center: f64,
    pub amplitude: f64,
    pub n_primary: usize,
    pub effective_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub delta: f64,
    pub h: usize,
    pub alpha: f64,
    pub gap_tolerance: f64,
}

impl MetricParams {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            h: DEFAULT_H,
            alpha: DEFAULT_ALPHA,
            gap_tolerance: DEFAULT_GAP_TOLERANCE,
        }
    }

    pub fn primary(&self) -> PrimaryParams {
        PrimaryParams {
            delta: self.delta,
            h: self.h,
            alpha: self.alpha,
        }
    }
}

pub fn summarize(x: &[f64], epsilon: f64, params: &MetricParams) -> Result<Summary> {
    let (mean, std) = mean_std(x)?;
    let clusters = detect_clusters(x, params.gap_tolerance);
    let report = primary_interval(x, epsilon, params.primary())?;
    Ok(Summary {
        mean,
        std,
        n_clusters: clusters.len(),
        clusters: clusters.clusters,
        center: report.center,
        amplitude: report.amplitude,
        n_primary: report.n_primary(),
        effective_weights: report.maxima.iter().map(|m| m.effective_weight).collect(),
    })
}
