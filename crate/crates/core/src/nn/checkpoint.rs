use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};

/// Paths of a checkpoint: a safetensors weight file plus a JSON sidecar
/// holding the kind tag and the full configuration.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub weights: PathBuf,
    pub sidecar: PathBuf,
}

impl Checkpoint {
    /// `stem` gains `.safetensors` and `.json` extensions.
    pub fn at(stem: &Path) -> Self {
        let s = stem.as_os_str().to_string_lossy();
        Self {
            weights: PathBuf::from(format!("{s}.safetensors")),
            sidecar: PathBuf::from(format!("{s}.json")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar<C> {
    kind: String,
    config: C,
}

pub fn save_checkpoint<C: Serialize>(stem: &Path, kind: &str, config: &C, stores: &[(&str, &ParamStore)]) -> Result<Checkpoint> {
    let ck = Checkpoint::at(stem);
    if let Some(dir) = ck.weights.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut all = std::collections::HashMap::new();
    for (prefix, store) in stores {
        for (name, t) in store.snapshot()? {
            let key = if prefix.is_empty() {
                name
            } else {
                format!("{prefix}/{name}")
            };
            all.insert(key, t);
        }
    }
    candle_core::safetensors::save(&all, &ck.weights)?;
    let text = serde_json::to_string_pretty(&Sidecar {
        kind: kind.to_string(),
        config,
    })?;
    std::fs::write(&ck.sidecar, text).map_err(|e| Error::io(&ck.sidecar, e))?;
    Ok(ck)
}

/// Reads a sidecar, checking its kind tag.
pub fn read_sidecar<C: DeserializeOwned>(stem: &Path, kind: &str) -> Result<C> {
    let ck = Checkpoint::at(stem);
    let text = std::fs::read_to_string(&ck.sidecar).map_err(|e| Error::io(&ck.sidecar, e))?;
    let side: Sidecar<C> = serde_json::from_str(&text)?;
    if side.kind != kind {
        return Err(Error::Format {
            what: "checkpoint sidecar",
            detail: format!("expected kind {kind}, found {}", side.kind),
        });
    }
    Ok(side.config)
}

/// Copies the weights saved under `prefix` into `store`.
pub(crate) fn load_into(stem: &Path, prefix: &str, store: &ParamStore) -> Result<()> {
    let ck = Checkpoint::at(stem);
    let tensors = candle_core::safetensors::load(&ck.weights, &super::device())?;
    for name in store.names() {
        let key = if prefix.is_empty() {
            name.clone()
        } else {
            format!("{prefix}/{name}")
        };
        let t = tensors.get(&key).ok_or_else(|| Error::Format {
            what: "checkpoint",
            detail: format!("{} lacks tensor {key}", ck.weights.display()),
        })?;
        store.set(&name, t)?;
    }
    Ok(())
}
