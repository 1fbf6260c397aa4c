use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

const FORMAT: &str = "tvgnn-checkpoint";
const VERSION: u32 = 1;

/// Model parameters and the configuration that trained them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint<M> {
    pub format: String,
    pub version: u32,
    pub model: M,
    pub train_config: TrainConfig,
}

impl<M> Checkpoint<M> {
    pub fn new(model: M, train_config: TrainConfig) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            model,
            train_config,
        }
    }
}

pub fn save_checkpoint<M: Serialize>(path: &Path, model: &M, cfg: &TrainConfig) -> Result<()> {
    let doc = Checkpoint::new(model, cfg.clone());
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint<M: DeserializeOwned>(path: &Path) -> Result<Checkpoint<M>> {
    let text = fs::read_to_string(path)?;
    let doc: Checkpoint<M> = serde_json::from_str(&text)?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported format {:?} version {}",
            path.display(),
            doc.format,
            doc.version
        )));
    }
    Ok(doc)
}
