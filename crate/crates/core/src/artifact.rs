//! Trained-model container: a little-endian `f64` weight file plus a JSON
//! manifest carrying everything needed to rebuild and audit the model.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{weights_hash, EpochLog, TrainConfig, TrainOutcome};

pub const ARTIFACT_VERSION: u32 = 1;
const WEIGHTS_FILE: &str = "weights.bin";
const MANIFEST_FILE: &str = "model.json";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("weights do not match the manifest hash ({expected} vs {found})")]
    HashMismatch { expected: String, found: String },
    #[error("artifact holds a {found} model, expected {expected}")]
    WrongModel { expected: String, found: String },
    #[error("artifact config is not usable: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub format_version: u32,
    /// Model family, e.g. `text_bilstm`, `audio_mlp`, `visual_cnn3d`.
    pub model: String,
    pub config: serde_json::Value,
    pub training: TrainConfig,
    pub seed: u64,
    pub param_count: usize,
    pub weights_sha256: String,
    pub best_epoch: usize,
    pub final_loss: Option<f64>,
    pub epochs: Vec<EpochLog>,
    #[serde(default)]
    pub split_fingerprint: Option<String>,
    #[serde(default)]
    pub pipeline_versions: BTreeMap<String, String>,
    /// Fusion strategy details: modality set, block layout or meta config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub manifest: ArtifactManifest,
    pub params: Vec<f64>,
}

impl ModelArtifact {
    pub fn new<C: Serialize>(model: &str, config: &C, training: &TrainConfig, seed: u64, outcome: &TrainOutcome) -> Self {
        Self {
            manifest: ArtifactManifest {
                format_version: ARTIFACT_VERSION,
                model: model.to_string(),
                config: serde_json::to_value(config).expect("config serializes"),
                training: training.clone(),
                seed,
                param_count: outcome.params.len(),
                weights_sha256: outcome.weights_hash(),
                best_epoch: outcome.best_epoch,
                final_loss: outcome.final_loss.is_finite().then_some(outcome.final_loss),
                epochs: outcome.log.clone(),
                split_fingerprint: None,
                pipeline_versions: BTreeMap::new(),
                fusion: None,
            },
            params: outcome.params.clone(),
        }
    }

    /// Deserializes the stored config after checking the model family.
    pub fn config<C: serde::de::DeserializeOwned>(&self, model: &str) -> Result<C, ArtifactError> {
        if self.manifest.model != model {
            return Err(ArtifactError::WrongModel {
                expected: model.to_string(),
                found: self.manifest.model.clone(),
            });
        }
        serde_json::from_value(self.manifest.config.clone()).map_err(|e| ArtifactError::Config(e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> Result<(), ArtifactError> {
        let io = |path: PathBuf| move |source| ArtifactError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        let wpath = dir.join(WEIGHTS_FILE);
        std::fs::write(&wpath, bytes).map_err(io(wpath.clone()))?;
        let mpath = dir.join(MANIFEST_FILE);
        let mut json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        json.push('\n');
        std::fs::write(&mpath, json).map_err(io(mpath.clone()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ArtifactError> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&mpath).map_err(|source| ArtifactError::Io {
            path: mpath.clone(),
            source,
        })?;
        let manifest: ArtifactManifest = serde_json::from_str(&text).map_err(|e| ArtifactError::Manifest {
            path: mpath.clone(),
            message: e.to_string(),
        })?;
        let wpath = dir.join(WEIGHTS_FILE);
        let bytes = std::fs::read(&wpath).map_err(|source| ArtifactError::Io {
            path: wpath.clone(),
            source,
        })?;
        if bytes.len() % 8 != 0 {
            return Err(ArtifactError::Manifest {
                path: wpath,
                message: "weight file length is not a multiple of 8".into(),
            });
        }
        let params: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let found = weights_hash(&params);
        if found != manifest.weights_sha256 {
            return Err(ArtifactError::HashMismatch {
                expected: manifest.weights_sha256,
                found,
            });
        }
        Ok(Self { manifest, params })
    }

    pub fn epochs(&self) -> &[EpochLog] {
        &self.manifest.epochs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome() -> TrainOutcome {
        TrainOutcome {
            params: vec![0.5, -1.25, 3.0e-9],
            log: vec![EpochLog {
                epoch: 0,
                train_loss: 0.7,
                validation_accuracy: Some(0.5),
            }],
            best_epoch: 0,
            final_loss: 0.7,
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = ModelArtifact::new("toy", &serde_json::json!({"width": 3}), &TrainConfig::default(), 7, &outcome());
        a.save(dir.path()).unwrap();
        let b = ModelArtifact::load(dir.path()).unwrap();
        assert_eq!(a, b);
        let cfg: serde_json::Value = b.config("toy").unwrap();
        assert_eq!(cfg["width"], 3);
        assert!(matches!(b.config::<serde_json::Value>("other"), Err(ArtifactError::WrongModel { .. })));
    }

    #[test]
    fn tampered_weights_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let a = ModelArtifact::new("toy", &(), &TrainConfig::default(), 1, &outcome());
        a.save(dir.path()).unwrap();
        let mut bytes = std::fs::read(dir.path().join(WEIGHTS_FILE)).unwrap();
        bytes[0] ^= 1;
        std::fs::write(dir.path().join(WEIGHTS_FILE), bytes).unwrap();
        assert!(matches!(ModelArtifact::load(dir.path()), Err(ArtifactError::HashMismatch { .. })));
    }
}
