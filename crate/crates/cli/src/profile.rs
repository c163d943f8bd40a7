//! Persisted optimization results.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use boxfuse_core::{DeConfig, FitnessMetric, WbfConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Optimized weights. Holds no timestamp so identical runs write identical files;
/// the creation time goes to [`Metadata`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub model_names: Vec<String>,
    pub weights: Vec<f64>,
    /// Validation fitness of `weights`.
    pub fitness: f64,
    pub fitness_metric: FitnessMetric,
    /// SHA-256 of the result-relevant optimizer and fusion settings.
    pub config_fingerprint: String,
}

impl WeightProfile {
    pub fn new(
        model_names: Vec<String>,
        weights: Vec<f64>,
        fitness: f64,
        de: &DeConfig,
        wbf: &WbfConfig,
    ) -> Result<Self> {
        if model_names.len() != weights.len() {
            bail!(
                "{} model names but {} weights",
                model_names.len(),
                weights.len()
            );
        }
        Ok(Self {
            model_names,
            weights,
            fitness,
            fitness_metric: de.fitness_metric,
            config_fingerprint: fingerprint(de, wbf),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let p: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if p.model_names.len() != p.weights.len() {
            bail!(
                "{}: model_names and weights differ in length",
                path.display()
            );
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }
}

/// Worker count never changes results, so it is left out.
pub fn fingerprint(de: &DeConfig, wbf: &WbfConfig) -> String {
    let de = DeConfig {
        workers: 1,
        ..de.clone()
    };
    let text = serde_json::to_string(&(de, wbf)).expect("config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Non-reproducible facts about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub created_unix_s: u64,
    pub tool_version: String,
    pub wallclock_s: f64,
}

impl Metadata {
    pub fn now(wallclock_s: f64) -> Self {
        Self {
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wallclock_s,
        }
    }
}
