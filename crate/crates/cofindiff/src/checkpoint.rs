//! Checkpoint persistence: a safetensors weight blob plus a JSON metadata
//! sidecar carrying everything needed to rebuild the model and reproduce its
//! outputs, guarded by a content hash.

use std::path::{Path, PathBuf};

use candle_nn::VarMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const META_FILE: &str = "meta.json";

/// Metadata sidecar. `payload` is the model-specific state (configs,
/// schedule, standardization constants).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta<P> {
    pub kind: String,
    pub tool_version: String,
    pub seed: u64,
    /// Hex SHA-256 of the weight blob.
    pub weights_sha256: String,
    pub payload: P,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Write weights and metadata into `dir` (created if needed).
pub fn save_checkpoint<P: Serialize>(
    dir: &Path,
    kind: &str,
    seed: u64,
    payload: &P,
    varmap: &VarMap,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let weights = dir.join(WEIGHTS_FILE);
    varmap.save(&weights)?;
    let meta = CheckpointMeta {
        kind: kind.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        weights_sha256: sha256_file(&weights)?,
        payload,
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| AppError::Other(format!("metadata serialize error: {e}")))?;
    let meta_path = dir.join(META_FILE);
    std::fs::write(&meta_path, json).map_err(|e| AppError::io(&meta_path, e))?;
    Ok(())
}

/// Read and verify the metadata sidecar; the weight hash must match the blob
/// on disk and `kind` must agree.
pub fn load_meta<P: DeserializeOwned>(dir: &Path, kind: &str) -> Result<CheckpointMeta<P>> {
    let meta_path = dir.join(META_FILE);
    let text = match std::fs::read_to_string(&meta_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(AppError::MissingUpstream {
                path: meta_path,
                producer: producer_for(kind),
            })
        }
        Err(e) => return Err(AppError::io(&meta_path, e)),
    };
    let meta: CheckpointMeta<P> = serde_json::from_str(&text)
        .map_err(|e| AppError::Corrupt(format!("{}: {e}", meta_path.display())))?;
    if meta.kind != kind {
        return Err(AppError::Corrupt(format!(
            "{}: checkpoint kind '{}' does not match expected '{kind}'",
            meta_path.display(),
            meta.kind
        )));
    }
    let weights = dir.join(WEIGHTS_FILE);
    if !weights.exists() {
        return Err(AppError::Corrupt(format!(
            "{}: weight blob missing",
            weights.display()
        )));
    }
    let actual = sha256_file(&weights)?;
    if actual != meta.weights_sha256 {
        return Err(AppError::Corrupt(format!(
            "{}: weight hash {} does not match metadata {}",
            weights.display(),
            &actual[..12.min(actual.len())],
            &meta.weights_sha256[..12.min(meta.weights_sha256.len())]
        )));
    }
    Ok(meta)
}

/// Load verified weights into an already-built varmap (shapes and names must
/// match the saved model).
pub fn load_weights(dir: &Path, varmap: &mut VarMap) -> Result<()> {
    let weights = dir.join(WEIGHTS_FILE);
    varmap
        .load(&weights)
        .map_err(|e| AppError::Corrupt(format!("{}: {e}", weights.display())))
}

pub fn weights_path(dir: &Path) -> PathBuf {
    dir.join(WEIGHTS_FILE)
}

/// Which stage produces checkpoints of this kind; used in missing-artifact
/// errors.
fn producer_for(kind: &str) -> String {
    match kind {
        "diffusion" => "fit-diffusion",
        "gan" => "fit-gan",
        "hedger" => "hedge-train",
        _ => "unknown",
    }
    .to_string()
}
