//! Flat key-value configuration file. Every key has a command-line flag of
//! the same name; flags take precedence over the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub passes: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub ser: Option<f64>,
    pub fclk: Option<f64>,
    pub nff: Option<Vec<u64>>,
    pub kmax: Option<u32>,
    pub sizes: Option<Vec<String>>,
    pub iters: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub utilisation: Option<String>,
    pub svg: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| crate::UsageError(format!("config file {}: {e}", path.display())).into())
    }
}

/// `flag`, else the file value, else `default`.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}

/// Like [`pick`] for keys without a default.
pub fn require<T: Clone>(flag: Option<T>, file: &Option<T>, key: &str) -> anyhow::Result<T> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| crate::UsageError(format!("missing required setting --{key}")).into())
}
