//! Closed-form dynamics of one aggregated normal group (N agents at a common
//! opinion) interacting under HK with one manipulator group (K agents whose
//! opinion ramps by `lambda` every iteration).
//!
//! While the two groups stay within `epsilon` of each other the normal group
//! moves to `x' = (K f + N x) / (K + N)`, so the gap `g = f - x` obeys
//! `g' = N g / (K + N) + lambda`, a contraction towards `lambda (K + N) / K`.
//! The group keeps its influence forever iff the start gap is within
//! `epsilon` and `|lambda| <= K epsilon / (K + N)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::hk_step;
use crate::opinion::{ManipulatorGroup, OpinionState};

/// Relative slack on the contact test `|g| <= epsilon`. The gap converges to
/// exactly `epsilon` when `|lambda|` sits on the influence bound, and rounding
/// can land the iterate an ulp above it.
pub const CONTACT_RTOL: f64 = 1e-12;

/// `|gap| <= epsilon` up to [`CONTACT_RTOL`].
pub fn in_contact(gap: f64, epsilon: f64) -> bool {
    gap.abs() <= epsilon * (1.0 + CONTACT_RTOL)
}

/// Largest ramp speed a group of `k` manipulators can sustain without losing
/// a group of `n` normal agents: `k epsilon / (k + n)`.
pub fn influence_bound(k: usize, n: usize, epsilon: f64) -> f64 {
    k as f64 * epsilon / (k + n) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupSystem {
    pub n_normal: usize,
    pub k_manip: usize,
    pub x0: f64,
    pub f0: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

impl TwoGroupSystem {
    pub fn new(n_normal: usize, k_manip: usize, x0: f64, f0: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        if n_normal == 0 {
            return Err(Error::InvalidParameter("two-group system needs n_normal >= 1".into()));
        }
        if k_manip == 0 {
            return Err(Error::InvalidParameter("two-group system needs k_manip >= 1".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        if !(x0.is_finite() && f0.is_finite() && lambda.is_finite()) {
            return Err(Error::InvalidParameter("two-group opinions and slope must be finite".into()));
        }
        if (f0 - x0).abs() > epsilon {
            return Err(Error::InvalidParameter(format!(
                "initial gap |f0 - x0| = {} exceeds epsilon = {epsilon}",
                (f0 - x0).abs()
            )));
        }
        Ok(Self {
            n_normal,
            k_manip,
            x0,
            f0,
            lambda,
            epsilon,
        })
    }

    fn contraction(&self) -> f64 {
        self.n_normal as f64 / (self.k_manip + self.n_normal) as f64
    }

    /// `lambda (K + N) / K`, the gap the system settles at while in contact.
    pub fn limit_gap(&self) -> f64 {
        self.lambda * (self.k_manip + self.n_normal) as f64 / self.k_manip as f64
    }

    pub fn bound(&self) -> f64 {
        influence_bound(self.k_manip, self.n_normal, self.epsilon)
    }
}

/// Exact gap `f(t) - x(t)`, valid while the groups have stayed in contact.
pub fn gap_closed_form(sys: &TwoGroupSystem, t: u64) -> f64 {
    let q = sys.contraction().powf(t as f64);
    q * (sys.f0 - sys.x0) + sys.limit_gap() * (1.0 - q)
}

/// Start gap within `epsilon` and `|lambda|` within the influence bound
/// (both inclusive).
pub fn holds_forever(sys: &TwoGroupSystem) -> bool {
    (sys.f0 - sys.x0).abs() <= sys.epsilon && sys.lambda.abs() <= sys.bound()
}

/// Gaps `g(0..=steps)` of the raw two-group recurrence, which freezes the
/// normal group once the manipulators are out of reach.
pub fn recurrence_gaps(sys: &TwoGroupSystem, steps: u64) -> Vec<f64> {
    let n = sys.n_normal as f64;
    let total = (sys.n_normal + sys.k_manip) as f64;
    let mut gaps = Vec::with_capacity(steps as usize + 1);
    let mut g = sys.f0 - sys.x0;
    gaps.push(g);
    for _ in 0..steps {
        g = if in_contact(g, sys.epsilon) {
            n * g / total + sys.lambda
        } else {
            g + sys.lambda
        };
        gaps.push(g);
    }
    gaps
}

/// First iteration `t <= horizon` at which the gap exceeds `epsilon`
/// (beyond [`CONTACT_RTOL`]).
pub fn detachment_time(sys: &TwoGroupSystem, horizon: u64) -> Option<u64> {
    let n = sys.n_normal as f64;
    let total = (sys.n_normal + sys.k_manip) as f64;
    let mut g = sys.f0 - sys.x0;
    if !in_contact(g, sys.epsilon) {
        return Some(0);
    }
    for t in 1..=horizon {
        g = n * g / total + sys.lambda;
        if !in_contact(g, sys.epsilon) {
            return Some(t);
        }
    }
    None
}

/// Common opinion every listed normal group takes after one simultaneous HK
/// step when all groups share one confidence interval.
pub fn merge_groups(normal_groups: &[(usize, f64)], manip_groups: &[(usize, f64)]) -> Result<f64> {
    let (mass, weighted) = normal_groups
        .iter()
        .chain(manip_groups)
        .fold((0usize, 0.0), |(m, s), &(size, x)| (m + size, s + size as f64 * x));
    if normal_groups.is_empty() || mass == 0 {
        return Err(Error::InvalidParameter("merge needs at least one non-empty normal group".into()));
    }
    Ok(weighted / mass as f64)
}

/// Last iteration `T <= horizon` for which the unbounded ramp `f0 + lambda t`
/// stays inside `[-1, 1]`.
pub fn ramp_horizon(sys: &TwoGroupSystem, horizon: u64) -> u64 {
    if sys.lambda == 0.0 {
        return horizon;
    }
    let edge = if sys.lambda > 0.0 { 1.0 } else { -1.0 };
    let mut t = ((edge - sys.f0) / sys.lambda).floor().max(0.0).min(horizon as f64) as u64;
    while t > 0 && (sys.f0 + sys.lambda * t as f64).abs() > 1.0 {
        t -= 1;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    /// Last iteration compared.
    pub compared_until: u64,
    pub max_deviation: f64,
}

/// Simulates `n_normal` agents at `x0` with the full HK step against a ramping
/// group and returns the largest `|simulated gap - closed form|`.
///
/// The ramp is truncated where it would leave the opinion space, and the
/// comparison stops at the detachment time, after which the closed form no
/// longer describes the system.
pub fn compare_with_simulation(sys: &TwoGroupSystem, horizon: u64) -> Result<OracleComparison> {
    if !(-1.0..=1.0).contains(&sys.x0) {
        return Err(Error::InvalidParameter(format!("x0 = {} lies outside [-1, 1]", sys.x0)));
    }
    let mut until = ramp_horizon(sys, horizon);
    if let Some(t) = detachment_time(sys, until) {
        until = t;
    }
    let group = if until == 0 {
        ManipulatorGroup::stubborn(sys.k_manip, sys.f0)?
    } else {
        let end = (sys.f0 + sys.lambda * until as f64).clamp(-1.0, 1.0);
        ManipulatorGroup::new(sys.k_manip, sys.f0, end, until)?
    };
    let mut state = OpinionState::new(vec![sys.x0; sys.n_normal])?;
    let mut max_deviation: f64 = 0.0;
    for t in 0..=until {
        let simulated = group.opinion_at(t) - state.opinions()[0];
        max_deviation = max_deviation.max((simulated - gap_closed_form(sys, t)).abs());
        if t < until {
            state = hk_step(&state, &group, sys.epsilon);
        }
    }
    Ok(OracleComparison {
        compared_until: until,
        max_deviation,
    })
}
