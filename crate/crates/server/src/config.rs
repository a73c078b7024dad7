use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use typofix::model::ModelConfig;

/// Environment variable that overrides the listen port.
pub const PORT_ENV: &str = "TYPOFIX_PORT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub checkpoint: PathBuf,
    pub index: PathBuf,
    pub default_k: usize,
    pub max_query_len: usize,
    pub latency_budget_ms: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoint: PathBuf::from("model.ckpt"),
            index: PathBuf::from("catalog.index"),
            default_k: 5,
            max_query_len: 200,
            latency_budget_ms: 50.0,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.default_k >= 1, "default_k must be at least 1");
        anyhow::ensure!(self.max_query_len >= 1, "max_query_len must be at least 1");
        anyhow::ensure!(
            self.latency_budget_ms > 0.0,
            "latency budget must be positive"
        );
        Ok(())
    }

    /// Applies the port environment variable, if set.
    pub fn apply_env(&mut self) -> anyhow::Result<()> {
        if let Ok(port) = std::env::var(PORT_ENV) {
            self.port = port
                .parse()
                .map_err(|_| anyhow::anyhow!("{PORT_ENV}={port:?} is not a port number"))?;
        }
        Ok(())
    }
}

/// Model fields a config file may override; the rest come from the desk
/// preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub max_seq_len: Option<usize>,
    pub hidden_size: Option<usize>,
    pub num_layers: Option<usize>,
    pub dense_size: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
}

impl ModelOverrides {
    pub fn apply(&self, mut base: ModelConfig) -> ModelConfig {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { base.$f = v; })*};
        }
        set!(
            max_seq_len,
            hidden_size,
            num_layers,
            dense_size,
            batch_size,
            learning_rate,
            epochs
        );
        base
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub model: ModelOverrides,
    pub service: ServiceConfig,
}

impl FileConfig {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}
