//! Spiking Transformer hyperparameters and the shapes derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rejected model or hardware parameter, naming the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field}: {constraint}")]
    Invalid { field: String, constraint: String },
    #[error("failed to parse configuration: {0}")]
    Parse(String),
    #[error("failed to read configuration {path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

/// Hyperparameters of the SpikingFormer-style model being trained.
///
/// Defaults follow the 8-head, 512-wide configuration on 224x224 inputs
/// (14x14 patches), 4 timesteps, batch 16, FP16 operands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Attention head count.
    pub heads: usize,
    /// Patch grid side; tokens per sample-timestep is its square.
    pub patch_grid: usize,
    pub d_model: usize,
    pub timesteps: usize,
    pub batch_size: usize,
    /// Widest operand bitwidth (FP16 by default).
    pub bitwidth: u32,
    /// Number of Transformer blocks.
    pub blocks: usize,
    /// Hidden width of the MLP as a multiple of `d_model`.
    pub mlp_ratio: usize,
    /// Scale applied to the spiking attention product.
    pub attn_scale: f64,
    /// Membrane leakage factor.
    pub leak: f64,
    /// Firing threshold.
    pub fire_threshold: f64,
    /// Upper edge of the rectangular surrogate window.
    pub surrogate_upper: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            heads: 8,
            patch_grid: 14,
            d_model: 512,
            timesteps: 4,
            batch_size: 16,
            bitwidth: 16,
            blocks: 8,
            mlp_ratio: 4,
            attn_scale: 0.125,
            leak: 0.5,
            fire_threshold: 1.0,
            surrogate_upper: 2.0,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("model.heads", self.heads),
            ("model.patch_grid", self.patch_grid),
            ("model.d_model", self.d_model),
            ("model.timesteps", self.timesteps),
            ("model.batch_size", self.batch_size),
            ("model.blocks", self.blocks),
            ("model.mlp_ratio", self.mlp_ratio),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(ConfigError::invalid(field, "must be >= 1"));
            }
        }
        if self.bitwidth == 0 {
            return Err(ConfigError::invalid("model.bitwidth", "must be >= 1"));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(ConfigError::invalid(
                "model.d_model",
                format!(
                    "must be divisible by model.heads ({} % {} != 0)",
                    self.d_model, self.heads
                ),
            ));
        }
        if !(self.leak > 0.0 && self.leak <= 1.0) {
            return Err(ConfigError::invalid("model.leak", "must lie in (0, 1]"));
        }
        if !self.fire_threshold.is_finite() {
            return Err(ConfigError::invalid("model.fire_threshold", "must be finite"));
        }
        if !(self.surrogate_upper > self.fire_threshold) {
            return Err(ConfigError::invalid(
                "model.surrogate_upper",
                "must exceed model.fire_threshold",
            ));
        }
        if !(self.bn_eps > 0.0) {
            return Err(ConfigError::invalid("model.bn_eps", "must be > 0"));
        }
        if !(self.attn_scale.is_finite() && self.attn_scale > 0.0) {
            return Err(ConfigError::invalid("model.attn_scale", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Shapes that follow from a [`ModelConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedDims {
    /// Per-head feature width.
    pub head_dim: usize,
    /// Tokens per sample and timestep.
    pub tokens: usize,
    /// Rows of every token-wise matrix: batch x timesteps x tokens.
    pub seq_rows: usize,
}

pub fn derive_dims(cfg: &ModelConfig) -> Result<DerivedDims, ConfigError> {
    cfg.validate()?;
    let tokens = cfg.patch_grid * cfg.patch_grid;
    Ok(DerivedDims {
        head_dim: cfg.d_model / cfg.heads,
        tokens,
        seq_rows: cfg.batch_size * cfg.timesteps * tokens,
    })
}
