use std::path::{Path, PathBuf};

use anyhow::Context;
use intercept_core::datagen::EngagementClass;
use intercept_core::{SampleRanges, ScpConfig, VehicleParams};
use serde::{Deserialize, Serialize};

/// Everything a run can be configured with. Every field is optional in the
/// JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub class: EngagementClass,
    pub params: VehicleParams,
    pub scp: ScpConfig,
    pub ranges: SampleRanges,
    pub target_fraction: f64,
    pub test_fraction: f64,
    /// Concurrent trajectory optimisations.
    pub workers: usize,
    pub model: Option<PathBuf>,
    pub train: TrainOverrides,
    pub eval: EvalSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            class: EngagementClass::Stationary,
            params: VehicleParams::default(),
            scp: ScpConfig::default(),
            ranges: SampleRanges::default(),
            target_fraction: 0.8,
            test_fraction: 0.2,
            workers: 4,
            model: None,
            train: TrainOverrides::default(),
            eval: EvalSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub classifier_epochs: Option<usize>,
    pub regressor_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub sizes: Vec<usize>,
    pub count: usize,
    /// Truth gains for the robustness study.
    pub gains: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            sizes: vec![3],
            count: 100,
            gains: vec![4.0, 5.0],
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Config =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params.validate()?;
        self.scp.validate()?;
        self.ranges.validate()?;
        anyhow::ensure!(self.workers >= 1, "workers must be at least 1");
        anyhow::ensure!(
            self.eval.sizes.iter().all(|&n| n >= 1) && self.eval.count >= 1,
            "engagement sizes and count must be positive"
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = serde_json::from_str(r#"{"params": {"beta": 0.0}, "eval": {"count": 7}}"#).unwrap();
        assert_eq!(c.params.beta, 0.0);
        assert_eq!(c.params.r_capture, VehicleParams::default().r_capture);
        assert_eq!(c.eval.count, 7);
        assert_eq!(c.eval.sizes, vec![3]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"wokers": 2}"#).is_err());
    }
}
