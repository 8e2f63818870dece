//! TOML run configuration and command-line overrides.
//!
//! ```toml
//! preset = "reduced"        # or "full"; ignored when [pipeline] is given
//!
//! [pipeline]                # optional full pipeline config
//! keep_ratio = 0.5
//! layers = [{ filters = 5, window = [3, 3, 6] }, { filters = 5, window = [3, 3, 3] }]
//!
//! [synthetic]               # used by `gen-synthetic`
//! classes = 5
//! subjects_per_class = 20
//! dims = [32, 32, 16]
//! noise_sigma = 0.5
//! margin = 0.25
//! seed = 42
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sslhop_core::pipeline::{ConcatMode, PipelineConfig};

use crate::error::{Error, Result};
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Full,
    Reduced,
}

impl Preset {
    pub fn pipeline(self) -> PipelineConfig {
        match self {
            Preset::Full => PipelineConfig::full(),
            Preset::Reduced => PipelineConfig::reduced(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        self.pipeline.clone().unwrap_or_else(|| self.preset.pipeline())
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    if !path.exists() {
        return Err(Error::Config(format!("config file {} not found", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Evaluation variants: the full pipeline, or one stage disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Keep every channel (`keep_ratio = 1`).
    NoCefs,
    /// Block concatenation instead of interlacing.
    NoIc,
}

impl Ablation {
    pub fn apply(self, cfg: &mut PipelineConfig) {
        match self {
            Ablation::None => {}
            Ablation::NoCefs => cfg.keep_ratio = 1.0,
            Ablation::NoIc => cfg.concat = ConcatMode::Plain,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoCefs => "no-cefs",
            Ablation::NoIc => "no-ic",
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub truncate_layer5: bool,
    pub ablation: Ablation,
}

/// Apply overrides and validate.
pub fn resolve_pipeline(run: &RunConfig, o: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = run.pipeline();
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if o.truncate_layer5 {
        cfg.truncate_layer5 = true;
    }
    o.ablation.apply(&mut cfg);
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_full_preset() {
        assert_eq!(parse_config("").unwrap().pipeline(), PipelineConfig::full());
    }

    #[test]
    fn preset_and_overrides() {
        let run = parse_config("preset = \"reduced\"").unwrap();
        let o = Overrides {
            seed: Some(7),
            ablation: Ablation::NoCefs,
            ..Default::default()
        };
        let cfg = resolve_pipeline(&run, &o).unwrap();
        assert_eq!(cfg.layers.len(), 3);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.keep_ratio, 1.0);
    }

    #[test]
    fn explicit_pipeline_section() {
        let run = parse_config(
            "[pipeline]\nkeep_ratio = 0.25\nconcat = \"plain\"\nlayers = [{ filters = 4, window = [2, 2, 2] }]\n",
        )
        .unwrap();
        let cfg = run.pipeline();
        assert_eq!(cfg.layers.len(), 1);
        assert_eq!(cfg.concat, ConcatMode::Plain);
        assert_eq!(cfg.keep_ratio, 0.25);
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let run = RunConfig {
            preset: Preset::Reduced,
            pipeline: Some(PipelineConfig::full()),
            synthetic: Some(SyntheticSpec::standard(42)),
        };
        let text = toml::to_string(&run).unwrap();
        assert_eq!(parse_config(&text).unwrap(), run);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(parse_config("bogus = 1"), Err(Error::Config(_))));
        let run = parse_config("[pipeline]\nkeep_ratio = 0.0\nlayers = [{ filters = 4, window = [2, 2, 2] }]").unwrap();
        assert!(matches!(resolve_pipeline(&run, &Overrides::default()), Err(Error::Config(_))));
    }
}
