//! Run configuration shared by every subcommand.
//!
//! A config file is optional JSON; command-line flags override it field by
//! field. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use reoi_core::data::PolicyMix;
use reoi_core::eval::{BenchSceneConfig, HoldoutConfig};
use reoi_core::mpc::{Mode, PlannerConfig};
use reoi_core::trustregion::{BuildConfig, ExpandConfig};
use reoi_core::wm::DEFAULT_LAMBDA;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub region: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub episodes: usize,
    pub novel: usize,
    pub policy: PolicyMix,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { episodes: 300, novel: 0, policy: PolicyMix::Mixed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub ridge: f64,
    pub region_build: BuildConfig,
    pub region_expand: ExpandConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { ridge: DEFAULT_LAMBDA, region_build: BuildConfig::default(), region_expand: ExpandConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub scenes: usize,
    pub novel: usize,
    /// Waypoint noise of the executed ground-truth plans.
    pub noise: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { scenes: 30, novel: 3, noise: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub global_seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub planner: PlannerConfig,
    pub bench_scene: BenchSceneConfig,
    pub bench_episodes: usize,
    pub holdout: HoldoutConfig,
    pub modes: Vec<Mode>,
    /// Worker threads; falls back to `REOI_THREADS`, then to all cores.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            global_seed: 0,
            paths: Paths::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            planner: PlannerConfig::default(),
            bench_scene: BenchSceneConfig::default(),
            bench_episodes: 20,
            holdout: HoldoutConfig::default(),
            modes: Mode::ALL.to_vec(),
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }
}

pub fn parse_modes(list: &str) -> anyhow::Result<Vec<Mode>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Mode::parse(s).ok_or_else(|| anyhow::anyhow!("unknown mode {s:?}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"global_seed": 3}"#).is_ok());
        assert!(RunConfig::from_json(r#"{"global_sed": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"planner": {"n_candidate": 3}}"#).is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn mode_lists() {
        assert_eq!(parse_modes("baseline, reoi").unwrap(), vec![Mode::Baseline, Mode::Reoi]);
        assert!(parse_modes("reoi,oracle").is_err());
    }
}
