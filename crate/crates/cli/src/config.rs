//! Run configuration: one TOML file covering every stage.
//!
//! Every section is optional and falls back to its defaults, but keys that
//! are present must be known. Command-line flags override file values.

use std::path::{Path, PathBuf};

use radstab_core::cohort::SynthParams;
use radstab_core::features::FeatureConfig;
use radstab_core::morphology::{VariantRecipe, MANUAL};
use radstab_core::pipeline::ProtocolConfig;
use radstab_core::stability::Thresholds;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream in the run.
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub variants: VariantRecipe,
    pub extraction: FeatureConfig,
    pub harmonization: HarmonizationConfig,
    pub pipeline: PipelineConfig,
    pub stability: StabilityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            paths: Paths::default(),
            synth: SynthConfig::default(),
            variants: VariantRecipe::default(),
            extraction: FeatureConfig::default(),
            harmonization: HarmonizationConfig::default(),
            pipeline: PipelineConfig::default(),
            stability: StabilityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Existing cohort directory; a synthetic cohort is generated when unset.
    pub cohort: Option<PathBuf>,
    /// Working directory holding every stage's artifacts.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            cohort: None,
            out: PathBuf::from("radstab-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub class_ratio: f64,
    pub params: SynthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 40,
            class_ratio: 0.3,
            params: SynthParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarmonizationConfig {
    /// Run ComBat on the whole table before splitting.
    pub enabled: bool,
}

impl Default for HarmonizationConfig {
    fn default() -> Self {
        HarmonizationConfig { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_splits: usize,
    pub train_frac: f64,
    /// Top-k appearances needed to enter the best-SHAP list.
    pub min_count: usize,
    pub protocol: ProtocolConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_splits: 130,
            train_frac: 0.7,
            min_count: 15,
            protocol: ProtocolConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub reference: String,
    pub thresholds: Thresholds,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            reference: MANUAL.to_string(),
            thresholds: Thresholds::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        RunConfig::from_toml(&text).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        let p = &self.pipeline;
        if p.n_splits == 0 {
            return Err("pipeline.n_splits must be at least 1".into());
        }
        if !(p.train_frac > 0.0 && p.train_frac < 1.0) {
            return Err(format!(
                "pipeline.train_frac {} is not in (0, 1)",
                p.train_frac
            ));
        }
        if p.min_count == 0 {
            return Err("pipeline.min_count must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.synth.class_ratio) {
            return Err(format!(
                "synth.class_ratio {} is not in [0, 1]",
                self.synth.class_ratio
            ));
        }
        if self.extraction.bins == 0 {
            return Err("extraction.bins must be positive".into());
        }
        self.stability
            .thresholds
            .validate()
            .map_err(|e| e.to_string())
    }
}
