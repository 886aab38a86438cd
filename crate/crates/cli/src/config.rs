//! Declarative run configuration: a TOML file merged with flag
//! overrides (flags win), then hashed so every output can state exactly
//! which settings produced it.

use std::fs;
use std::path::{Path, PathBuf};

use hpindex_core::time::Month;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub window: Window,
    pub penalty: Penalty,
    pub pca: Pca,
    pub run: Run,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub sales: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub cpi: Option<PathBuf>,
    pub words: Option<PathBuf>,
}

/// Index window, both ends inclusive, `YYYY-MM`. Missing ends are
/// inferred from the observed sale dates.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Window {
    pub start: Option<String>,
    pub end: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Penalty {
    pub gamma_st_grid: Vec<f64>,
    pub gamma_t_grid: Vec<f64>,
    pub folds: usize,
    pub cv_seed: u64,
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty {
            gamma_st_grid: vec![0.1],
            gamma_t_grid: vec![0.1],
            folds: 5,
            cv_seed: 17,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pca {
    pub components: usize,
}

impl Default for Pca {
    fn default() -> Self {
        Pca { components: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Run {
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads for per-batch solves; 0 lets the runtime decide.
    pub jobs: usize,
}

impl Default for Run {
    fn default() -> Self {
        Run { out: PathBuf::from("out"), seed: 42, jobs: 0 }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::input(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))
    }

    /// Hex SHA-256 over the resolved configuration plus the subcommand's
    /// own parameters, stamped into every metadata sidecar. Only
    /// content-determining settings enter the hash; the output directory
    /// and thread count never change what gets written.
    pub fn hash_with(&self, command: &serde_json::Value) -> String {
        let canonical = serde_json::json!({
            "inputs": self.inputs,
            "window": self.window,
            "penalty": self.penalty,
            "pca": self.pca,
            "seed": self.run.seed,
            "command": command,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    /// Parsed inclusive window bounds, if configured.
    pub fn window_bounds(&self) -> Result<(Option<Month>, Option<Month>), CliError> {
        let parse = |s: &String| {
            s.parse::<Month>()
                .map_err(|e| CliError::input(format!("invalid window month {s}: {e}")))
        };
        let start = self.window.start.as_ref().map(parse).transpose()?;
        let end = self.window.end.as_ref().map(parse).transpose()?;
        if let (Some(a), Some(b)) = (start, end) {
            if b.months_since(a) < 1 {
                return Err(CliError::input(format!(
                    "window must span at least two months, got {a}..{b}"
                )));
            }
        }
        Ok((start, end))
    }

    pub fn require_input(
        &self,
        field: &Option<PathBuf>,
        what: &str,
    ) -> Result<PathBuf, CliError> {
        let path = field
            .clone()
            .ok_or_else(|| CliError::input(format!("no {what} file configured")))?;
        if !path.exists() {
            return Err(CliError::input(format!(
                "{what} file not found: {}",
                path.display()
            )));
        }
        Ok(path)
    }
}

/// Parse a `start:end` window flag into config form.
pub fn parse_window_flag(raw: &str) -> Result<(String, String), CliError> {
    let (a, b) = raw
        .split_once(':')
        .ok_or_else(|| CliError::input(format!("window must be START:END, got {raw}")))?;
    Ok((a.to_string(), b.to_string()))
}

/// Parse a comma-separated gamma grid flag.
pub fn parse_grid_flag(raw: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> =
        raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values =
        values.map_err(|e| CliError::input(format!("invalid gamma grid {raw}: {e}")))?;
    if values.is_empty() || values.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(CliError::input(format!(
            "gamma grid must be nonnegative finite values, got {raw}"
        )));
    }
    Ok(values)
}
