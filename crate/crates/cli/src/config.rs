use std::path::{Path, PathBuf};

use momask_core::masked_gen::DecodeConfig;
use momask_core::rvq::RvqConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    /// Frames per latent vector.
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { stride: 4, epochs: 10, batch_size: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    /// Laplace smoothing constant.
    pub alpha: f64,
    pub uncond_drop: f64,
    /// RRemask replacement ratio for residual-layer training.
    pub replace_ratio: f64,
    /// Guidance scale applied to every residual layer.
    pub residual_cfg_scale: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig { alpha: 0.1, uncond_drop: 0.1, replace_ratio: 0.2, residual_cfg_scale: 5.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<PathBuf>,
}

/// Full run configuration. Every section is optional in the file and falls
/// back to its defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub rvq: RvqConfig,
    pub tokenizer: TokenizerConfig,
    pub decode: DecodeConfig,
    pub predictor: PredictorConfig,
    pub paths: PathsConfig,
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be in [0, 1], got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.rvq.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.decode.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let t = &self.tokenizer;
        if t.stride == 0 || t.epochs == 0 || t.batch_size == 0 {
            return Err(CliError::Config("tokenizer stride, epochs and batch_size must be at least 1".into()));
        }
        let p = &self.predictor;
        if !(p.alpha > 0.0 && p.alpha.is_finite()) {
            return Err(CliError::Config(format!("predictor.alpha must be positive, got {}", p.alpha)));
        }
        unit_interval("predictor.uncond_drop", p.uncond_drop)?;
        unit_interval("predictor.replace_ratio", p.replace_ratio)?;
        if !(p.residual_cfg_scale >= 0.0 && p.residual_cfg_scale.is_finite()) {
            return Err(CliError::Config("predictor.residual_cfg_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!((c.rvq.num_residual_layers, c.rvq.codebook_size, c.rvq.dropout_ratio), (5, 512, 0.2));
        assert_eq!((c.decode.iterations, c.decode.cfg_scale, c.tokenizer.stride), (10, 4.0, 4));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "rvq": {"codebook_size": 16}}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.rvq.codebook_size, 16);
        assert_eq!(c.rvq.num_residual_layers, 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"decode": {"iters": 3}}"#).is_err());
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        let mut c = RunConfig::default();
        c.predictor.uncond_drop = 1.5;
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = RunConfig::default();
        c.decode.iterations = 0;
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }
}
