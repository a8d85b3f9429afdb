//! TOML configuration file. Every section is optional; command-line flags
//! override file values.

use std::path::{Path, PathBuf};

use care_core::generate::GenerationConfig;
use care_core::pipeline::PipelineConfig;
use care_core::safety::SafetyConfig;
use care_core::training::TrainOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CareError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub host: String,
    pub port: u16,
    pub model_dir: Option<PathBuf>,
    pub log_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            host: "127.0.0.1".into(),
            port: 8080,
            model_dir: None,
            log_dir: None,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub reply_wait_ms: u64,
    pub suggestion_wait_ms: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            reply_wait_ms: 10_000,
            suggestion_wait_ms: 3_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CareConfig {
    pub pipeline: PipelineConfig,
    pub safety: SafetyConfig,
    pub generation: GenerationConfig,
    pub train: TrainOptions,
    pub server: ServerSection,
    pub simulate: SimulateSection,
}

impl CareConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: CareConfig = toml::from_str(text).map_err(|e| CareError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CareError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CareError::Config(m) => CareError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline
            .validate()
            .map_err(|e| CareError::Config(format!("[pipeline] {e}")))?;
        self.safety.validate()?;
        self.generation.validate()?;
        Ok(())
    }
}
