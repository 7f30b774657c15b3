use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::corpus::SyntheticConfig;
use crate::embed::User2VecConfig;
use crate::graph::{BuildOptions, GraphVariant};
use crate::model::ModelConfig;
use crate::train::{ablation_entries, SuiteEntry, TrainConfig};

/// Input locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `tweets.jsonl` and `users.jsonl`.
    pub corpus: Option<PathBuf>,
    /// Output directory of `embed`.
    pub embeddings: Option<PathBuf>,
    /// Precomputed 768-dim sentence vectors (binary or CSV); the hashed
    /// fallback encoder is used when absent.
    pub tweet_vectors: Option<PathBuf>,
}

/// Everything a run needs. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synthetic: SyntheticConfig,
    pub user2vec: User2VecConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub graph: BuildOptions,
    /// Graph variant for `FullGat` and `build-graph`.
    pub variant: GraphVariant,
    /// Entries run by `ablate`, as report labels (`FullGat/NoElicit`, `TextOnly`).
    pub suite: Vec<String>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            user2vec: User2VecConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            graph: BuildOptions::default(),
            variant: GraphVariant::NoCue,
            suite: ablation_entries().iter().map(|e| e.label()).collect(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Read `path` (or start from `{}`), apply `key=value` overrides, then
    /// deserialize and validate.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.synthetic.validate().map_err(|e| fail(&e))?;
        self.user2vec.validate().map_err(|e| fail(&e))?;
        self.model.validate().map_err(|e| fail(&e))?;
        self.train.validate().map_err(|e| fail(&e))?;
        if self.model.gat.d_in != self.user2vec.dim {
            return Err(CliError::Config(format!(
                "model.gat.d_in ({}) must equal user2vec.dim ({})",
                self.model.gat.d_in, self.user2vec.dim
            )));
        }
        self.suite_entries()?;
        Ok(())
    }

    pub fn suite_entries(&self) -> Result<Vec<SuiteEntry>, CliError> {
        if self.suite.is_empty() {
            return Err(CliError::Config("suite is empty".into()));
        }
        self.suite
            .iter()
            .map(|s| s.parse().map_err(|e: crate::train::TrainError| CliError::Config(e.to_string())))
            .collect()
    }
}

/// Set a dotted `key=value` in a JSON document, creating intermediate
/// tables. The value is parsed as JSON, else taken as a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad --set key {key:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    for (i, part) in parts.iter().enumerate() {
        let table = slot
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {key}: {} is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        slot = table.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
