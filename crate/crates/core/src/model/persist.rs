use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelKind, ModelParams};
use crate::graph::GraphVariant;
use crate::tensor::{read_checkpoint, write_checkpoint, Parameters};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub kind: ModelKind,
    pub variant: Option<GraphVariant>,
    pub task: Task,
    pub seed: u64,
    pub parameter_count: usize,
    pub config: ModelConfig,
}

/// Which label a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Sarcastic vs. non-sarcastic.
    Detection,
    /// Intended vs. perceived sarcasm, on sarcastic tweets with a cue.
    Perception,
}

impl Task {
    pub fn class_names(self) -> [&'static str; 2] {
        match self {
            Task::Detection => ["non_sarcastic", "sarcastic"],
            Task::Perception => ["intended", "perceived"],
        }
    }
}

impl std::str::FromStr for Task {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "detection" => Ok(Task::Detection),
            "perception" => Ok(Task::Perception),
            _ => Err(ModelError::InvalidConfig(format!("unknown task {s:?}"))),
        }
    }
}

pub fn save_model(params: &ModelParams, manifest: &ModelManifest, dir: impl AsRef<Path>) -> Result<(), ModelError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_checkpoint(
        BufWriter::new(File::create(dir.join(CHECKPOINT_FILE))?),
        &params.to_named_tensors(),
    )?;
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

/// Rebuild parameter shapes from the manifest, then fill them from the
/// checkpoint.
pub fn load_model(dir: impl AsRef<Path>) -> Result<(ModelParams, ModelManifest), ModelError> {
    let dir = dir.as_ref();
    let manifest: ModelManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut params = ModelParams::new(manifest.config.clone(), &mut rng)?;
    let tensors = read_checkpoint(BufReader::new(File::open(dir.join(CHECKPOINT_FILE))?))?;
    params.load_named_tensors(&tensors)?;
    Ok((params, manifest))
}
