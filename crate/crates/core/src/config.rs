//! Run configuration: loading, validation and a stable digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::energy::{EnergyCoefficients, MemoryConfig};
use crate::kernel::{DeskPass, LifParams, SparsityStats};
use crate::mapper::{ArrayConfig, Dataflow};
use crate::model::{derive_dims, ConfigError, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityMode {
    /// Run a small kernel pass and use its statistics.
    Measured,
    /// Use the statistics given in the configuration.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsityConfig {
    pub mode: SparsityMode,
    /// Required in fixed mode.
    pub fixed: Option<SparsityStats>,
    pub seed: u64,
    /// Samples per timestep in the measurement pass.
    pub samples: usize,
    /// Neurons per layer in the measurement pass.
    pub width: usize,
    /// Gate linear-layer BP products by the spike-gradient mask.
    pub gate_bp_mm: bool,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        let desk = DeskPass::default();
        SparsityConfig {
            mode: SparsityMode::Measured,
            fixed: None,
            seed: desk.seed,
            samples: desk.samples,
            width: desk.width,
            gate_bp_mm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub array: ArrayConfig,
    pub memory: MemoryConfig,
    pub coefficients: EnergyCoefficients,
    pub sparsity: SparsityConfig,
    /// Dataflow for single simulations, e.g. `"OS_C"`.
    pub dataflow: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            array: ArrayConfig::default(),
            memory: MemoryConfig::default(),
            coefficients: EnergyCoefficients::default(),
            sparsity: SparsityConfig::default(),
            dataflow: "OS_C".into(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        derive_dims(&self.model)?;
        self.array.validate()?;
        self.memory.validate()?;
        self.coefficients.validate()?;
        self.dataflow()?;
        let sp = &self.sparsity;
        match (sp.mode, &sp.fixed) {
            (SparsityMode::Fixed, None) => {
                return Err(ConfigError::invalid(
                    "sparsity.fixed",
                    "required when sparsity.mode is \"fixed\"",
                ))
            }
            (_, Some(s)) => {
                s.validate()
                    .map_err(|e| ConfigError::invalid("sparsity.fixed", e))?;
            }
            _ => {}
        }
        if sp.samples < 2 {
            return Err(ConfigError::invalid("sparsity.samples", "must be >= 2"));
        }
        if sp.width == 0 {
            return Err(ConfigError::invalid("sparsity.width", "must be >= 1"));
        }
        Ok(())
    }

    pub fn dataflow(&self) -> Result<Dataflow, ConfigError> {
        Dataflow::parse(&self.dataflow).ok_or_else(|| {
            ConfigError::invalid(
                "dataflow",
                format!("unknown dataflow {:?}; expected <IS|WS|OS>_<B|C|K>", self.dataflow),
            )
        })
    }

    pub fn desk_pass(&self) -> DeskPass {
        DeskPass {
            samples: self.sparsity.samples,
            width: self.sparsity.width,
            timesteps: self.model.timesteps,
            seed: self.sparsity.seed,
            lif: LifParams::from_model(&self.model),
            bn_eps: self.model.bn_eps,
        }
    }

    /// Compact JSON of the effective configuration; field order is fixed by
    /// the struct definitions.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = parse_config(r#"{"model":{}}"#).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.model.heads, 8);
        assert_eq!(cfg.model.d_model, 512);
        assert_eq!(cfg.model.timesteps, 4);
        assert_eq!(cfg.model.batch_size, 16);
        assert_eq!(cfg.model.patch_grid, 14);
        assert_eq!((cfg.array.rows, cfg.array.cols), (64, 64));
    }

    #[test]
    fn divisibility_error_names_field() {
        let err = parse_config(r#"{"model":{"d_model":500,"heads":8}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model.d_model") && msg.contains("divisible"), "{msg}");
    }

    #[test]
    fn malformed_and_unknown_fields() {
        assert!(matches!(parse_config("{"), Err(ConfigError::Parse(_))));
        assert!(matches!(
            parse_config(r#"{"model":{"dmodel":4}}"#),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn round_trip_digest() {
        let mut cfg = RunConfig::default();
        cfg.coefficients.add_pj = 0.1 + 0.2;
        let again = parse_config(&cfg.canonical_json()).unwrap();
        assert_eq!(again.digest(), cfg.digest());
    }

    #[test]
    fn fixed_mode_needs_values() {
        let err = parse_config(r#"{"sparsity":{"mode":"fixed"}}"#).unwrap_err();
        assert!(err.to_string().contains("sparsity.fixed"));
        let err = parse_config(
            r#"{"sparsity":{"mode":"fixed","fixed":{"s_s":1.5,"s_smg":0.1,"s_pg":0.1}}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("s_s"));
    }

    #[test]
    fn unknown_dataflow() {
        assert!(parse_config(r#"{"dataflow":"OS_X"}"#).is_err());
    }
}
