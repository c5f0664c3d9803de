//! TOML run configuration.
//!
//! Unknown keys are rejected at every level. Parse errors carry the line and
//! column from the TOML parser; semantic errors name the offending key.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::analytic::TwoGroupSystem;
use crate::metrics::{MetricParams, DEFAULT_ALPHA, DEFAULT_GAP_TOLERANCE, DEFAULT_H};
use crate::models::{default_horizon, StopRule, DEFAULT_HARD_HORIZON, DW_DECIMALS, HK_TOLERANCE};
use crate::opinion::{ManipulatorGroup, ModelKind, ModelSpec, OpinionState};
use crate::sweep::{default_replicates, Experiment, SnapshotPolicy, SweepGrid};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Parse(#[from] toml::de::Error),

    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationConfig {
    /// `n` points strictly inside `(a, b)`: `a + (b - a) i / (n + 1)`.
    Equispaced { a: f64, b: f64, n: usize },
    Explicit { opinions: Vec<f64> },
    Uniform {
        #[serde(default = "minus_one")]
        a: f64,
        #[serde(default = "plus_one")]
        b: f64,
        n: usize,
        seed: u64,
    },
}

fn minus_one() -> f64 {
    -1.0
}

fn plus_one() -> f64 {
    1.0
}

impl PopulationConfig {
    pub fn build(&self) -> Result<OpinionState, ConfigError> {
        let state = match self {
            PopulationConfig::Equispaced { a, b, n } => OpinionState::equispaced(*a, *b, *n),
            PopulationConfig::Explicit { opinions } => OpinionState::new(opinions.clone()),
            PopulationConfig::Uniform { a, b, n, seed } => OpinionState::uniform(*a, *b, *n, *seed),
        };
        state.map_err(|e| invalid("population", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulatorConfig {
    #[serde(default)]
    pub k: usize,
    #[serde(default = "minus_one")]
    pub f_start: f64,
    #[serde(default = "plus_one")]
    pub f_end: f64,
    #[serde(default)]
    pub t_delta: u64,
}

impl Default for ManipulatorConfig {
    fn default() -> Self {
        Self {
            k: 0,
            f_start: -1.0,
            f_end: 1.0,
            t_delta: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRuleName {
    MaxChange,
    RoundedClusters,
    FixedHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    /// Defaults to the model's own rule.
    pub rule: Option<StopRuleName>,
    pub horizon: Option<u64>,
    pub tolerance: Option<f64>,
    pub decimals: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub delta: Option<f64>,
    pub h: Option<usize>,
    pub alpha: Option<f64>,
    pub gap_tolerance: Option<f64>,
}

/// A list of values, or an inclusive `{ start, end, step }` range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ValueList {
    List(Vec<u64>),
    Range(RangeSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: u64,
    pub end: u64,
    pub step: u64,
}

impl ValueList {
    pub fn values(&self, key: &'static str) -> Result<Vec<u64>, ConfigError> {
        match self {
            ValueList::List(v) => Ok(v.clone()),
            ValueList::Range(r) => {
                if r.step == 0 {
                    return Err(invalid(key, "range step must be positive"));
                }
                Ok((r.start..=r.end).step_by(r.step as usize).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub k_values: Option<ValueList>,
    pub tdelta_values: Option<ValueList>,
    pub replicates: Option<usize>,
    #[serde(default)]
    pub base_seed: u64,
    pub workers: Option<usize>,
    pub snapshots: Option<SnapshotPolicy>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub svg: bool,
    /// Trajectory recording interval for `simulate`; 0 keeps only the final state.
    #[serde(default = "one")]
    pub record_every: u64,
    #[serde(default = "default_bin_width")]
    pub histogram_bin_width: f64,
    #[serde(default = "default_histogram_max")]
    pub histogram_max: f64,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> u64 {
    1
}

fn default_bin_width() -> f64 {
    0.05
}

fn default_histogram_max() -> f64 {
    2.0
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            svg: false,
            record_every: 1,
            histogram_bin_width: default_bin_width(),
            histogram_max: default_histogram_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub epsilon: f64,
    pub population: PopulationConfig,
    #[serde(default)]
    pub manipulators: ManipulatorConfig,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read(path)?)
    }

    /// Checks everything that can be checked without running a simulation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        ModelSpec::new(self.model, self.epsilon).map_err(|e| invalid("epsilon", e.to_string()))?;
        self.population.build()?;
        let m = &self.manipulators;
        ManipulatorGroup::new(m.k, m.f_start, m.f_end, m.t_delta)
            .map_err(|e| invalid("manipulators", e.to_string()))?;
        self.stop_rule()?;
        let horizon = self.horizon();
        if horizon == 0 || horizon > DEFAULT_HARD_HORIZON {
            return Err(invalid(
                "stop.horizon",
                format!("must be in 1..={DEFAULT_HARD_HORIZON}, got {horizon}"),
            ));
        }
        let mp = self.metric_params();
        if !(mp.delta >= 0.0) {
            return Err(invalid("metrics.delta", "must be non-negative"));
        }
        if mp.h == 0 {
            return Err(invalid("metrics.h", "must be positive"));
        }
        if !(mp.alpha > 0.0) {
            return Err(invalid("metrics.alpha", "must be positive"));
        }
        if !(mp.gap_tolerance >= 0.0) {
            return Err(invalid("metrics.gap_tolerance", "must be non-negative"));
        }
        if self.sweep.replicates == Some(0) {
            return Err(invalid("sweep.replicates", "must be at least 1"));
        }
        if self.sweep.workers == Some(0) {
            return Err(invalid("sweep.workers", "must be at least 1"));
        }
        for v in self.k_values()? {
            if v > u32::MAX as u64 {
                return Err(invalid("sweep.k_values", format!("{v} is too large")));
            }
        }
        self.tdelta_values()?;
        let o = &self.output;
        if !(o.histogram_bin_width > 0.0) || !(o.histogram_max > 0.0) {
            return Err(invalid("output.histogram_bin_width", "bin width and max must be positive"));
        }
        Ok(())
    }

    pub fn stop_rule(&self) -> Result<StopRule, ConfigError> {
        let rule = match self.stop.rule {
            None => StopRule::default_for(self.model),
            Some(StopRuleName::MaxChange) => StopRule::MaxChange {
                tolerance: HK_TOLERANCE,
            },
            Some(StopRuleName::RoundedClusters) => StopRule::RoundedClusters { decimals: DW_DECIMALS },
            Some(StopRuleName::FixedHorizon) => StopRule::FixedHorizon,
        };
        Ok(match rule {
            StopRule::MaxChange { tolerance } => {
                let tolerance = self.stop.tolerance.unwrap_or(tolerance);
                if !(tolerance >= 0.0) {
                    return Err(invalid("stop.tolerance", "must be non-negative"));
                }
                StopRule::MaxChange { tolerance }
            }
            StopRule::RoundedClusters { decimals } => StopRule::RoundedClusters {
                decimals: self.stop.decimals.unwrap_or(decimals),
            },
            StopRule::FixedHorizon => StopRule::FixedHorizon,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.stop.horizon.unwrap_or_else(|| default_horizon(self.model))
    }

    pub fn metric_params(&self) -> MetricParams {
        let default_delta = if self.model == ModelKind::Dw { 0.2 } else { 0.5 };
        MetricParams {
            delta: self.metrics.delta.unwrap_or(default_delta),
            h: self.metrics.h.unwrap_or(DEFAULT_H),
            alpha: self.metrics.alpha.unwrap_or(DEFAULT_ALPHA),
            gap_tolerance: self.metrics.gap_tolerance.unwrap_or(DEFAULT_GAP_TOLERANCE),
        }
    }

    pub fn k_values(&self) -> Result<Vec<u64>, ConfigError> {
        match &self.sweep.k_values {
            Some(v) => v.values("sweep.k_values"),
            None => Ok(vec![self.manipulators.k as u64]),
        }
    }

    pub fn tdelta_values(&self) -> Result<Vec<u64>, ConfigError> {
        match &self.sweep.tdelta_values {
            Some(v) => v.values("sweep.tdelta_values"),
            None => Ok(vec![self.manipulators.t_delta]),
        }
    }

    pub fn grid(&self) -> Result<SweepGrid, ConfigError> {
        Ok(SweepGrid {
            k_values: self.k_values()?.into_iter().map(|k| k as usize).collect(),
            tdelta_values: self.tdelta_values()?,
            replicates: self.sweep.replicates.unwrap_or_else(|| default_replicates(self.model)),
        })
    }

    pub fn experiment(&self) -> Result<Experiment, ConfigError> {
        Ok(Experiment {
            kind: self.model,
            epsilon: self.epsilon,
            init: self.population.build()?,
            f_start: self.manipulators.f_start,
            f_end: self.manipulators.f_end,
            stop: self.stop_rule()?,
            horizon: self.horizon(),
            metrics: self.metric_params(),
            snapshots: self
                .sweep
                .snapshots
                .unwrap_or_else(|| SnapshotPolicy::default_for(self.model)),
            base_seed: self.sweep.base_seed,
            keep_opinions: false,
        })
    }
}

/// Two-group HK system for the `oracle` command.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub x0: f64,
    pub f0: f64,
    pub lambda: f64,
    #[serde(default = "default_oracle_horizon")]
    pub horizon: u64,
}

fn default_oracle_horizon() -> u64 {
    1000
}

impl OracleConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: OracleConfig = toml::from_str(text)?;
        cfg.system()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read(path)?)
    }

    pub fn system(&self) -> Result<TwoGroupSystem, ConfigError> {
        TwoGroupSystem::new(self.n, self.k, self.x0, self.f0, self.lambda, self.epsilon)
            .map_err(|e| invalid("two-group system", e.to_string()))
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
model = "hk"
epsilon = 0.6

[population]
kind = "equispaced"
a = -1.0
b = 1.0
n = 100
"#;

    #[test]
    fn minimal_config_gets_model_defaults() {
        let c = RunConfig::from_toml(FIG1).unwrap();
        assert_eq!(c.stop_rule().unwrap(), StopRule::default_for(ModelKind::Hk));
        assert_eq!(c.horizon(), default_horizon(ModelKind::Hk));
        assert_eq!(c.metric_params().delta, 0.5);
        let g = c.grid().unwrap();
        assert_eq!((g.k_values, g.tdelta_values, g.replicates), (vec![0], vec![0], 1));
    }

    #[test]
    fn missing_epsilon_is_named() {
        let text = FIG1.replace("epsilon = 0.6", "");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let text = format!("{FIG1}\n[manipulators]\nk = 3\nspeed = 2\n");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("speed"), "{err}");
        assert!(err.contains("line"), "{err}");

        let top = format!("colour = 1\n{FIG1}");
        assert!(RunConfig::from_toml(&top).is_err());

        let pop = FIG1.replace("n = 100", "n = 100\nm = 3");
        assert!(RunConfig::from_toml(&pop).is_err());
    }

    #[test]
    fn semantic_errors_name_key() {
        let bad = FIG1.replace("epsilon = 0.6", "epsilon = -0.1");
        let err = RunConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("`epsilon`"), "{err}");

        let bad = format!("{FIG1}\n[manipulators]\nf_end = 1.5\n");
        assert!(RunConfig::from_toml(&bad).unwrap_err().to_string().contains("manipulators"));

        let bad = format!("{FIG1}\n[stop]\nhorizon = 6000\n");
        assert!(RunConfig::from_toml(&bad).unwrap_err().to_string().contains("stop.horizon"));
    }

    #[test]
    fn ranges_expand_inclusively() {
        let text = format!(
            "{FIG1}\n[sweep]\nk_values = {{ start = 0, end = 30, step = 10 }}\ntdelta_values = [5, 7]\nreplicates = 2\n"
        );
        let c = RunConfig::from_toml(&text).unwrap();
        let g = c.grid().unwrap();
        assert_eq!(g.k_values, vec![0, 10, 20, 30]);
        assert_eq!(g.tdelta_values, vec![5, 7]);
        assert_eq!(g.replicates, 2);
    }

    #[test]
    fn stop_overrides_apply() {
        let text = format!("{FIG1}\n[stop]\nrule = \"fixed_horizon\"\nhorizon = 40\n");
        let c = RunConfig::from_toml(&text).unwrap();
        assert_eq!(c.stop_rule().unwrap(), StopRule::FixedHorizon);
        assert_eq!(c.horizon(), 40);

        let text = format!("{FIG1}\n[stop]\ntolerance = 1e-6\n");
        let c = RunConfig::from_toml(&text).unwrap();
        assert_eq!(c.stop_rule().unwrap(), StopRule::MaxChange { tolerance: 1e-6 });
    }

    #[test]
    fn population_variants() {
        let explicit = r#"
model = "dw"
epsilon = 0.2
[population]
kind = "explicit"
opinions = [-0.5, 0.0, 0.5]
"#;
        let c = RunConfig::from_toml(explicit).unwrap();
        assert_eq!(c.population.build().unwrap().opinions(), &[-0.5, 0.0, 0.5]);
        assert_eq!(c.metric_params().delta, 0.2);

        let uniform = explicit.replace("kind = \"explicit\"\nopinions = [-0.5, 0.0, 0.5]", "kind = \"uniform\"\nn = 50\nseed = 9");
        let c = RunConfig::from_toml(&uniform).unwrap();
        let x = c.population.build().unwrap();
        assert_eq!(x.len(), 50);
        assert_eq!(x, c.population.build().unwrap());

        let out_of_range = explicit.replace("0.5]", "1.5]");
        assert!(RunConfig::from_toml(&out_of_range).is_err());
    }

    #[test]
    fn oracle_config() {
        let c = OracleConfig::from_toml("n = 1\nk = 1\nepsilon = 0.1\nx0 = 0.0\nf0 = 0.0\nlambda = 0.05\n").unwrap();
        assert_eq!(c.horizon, 1000);
        assert!(OracleConfig::from_toml("n = 1\nk = 1\nepsilon = 0.1\nx0 = 0.0\nf0 = 0.5\nlambda = 0.05\n").is_err());
    }
}
