//! On-disk feature cache: one `.npy` tensor plus a JSON metadata sidecar
//! per utterance and modality.

use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use ndarray_npy::{read_npy, write_npy};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad tensor file {path}: {message}")]
    Tensor { path: PathBuf, message: String },
    #[error("bad metadata {path}: {message}")]
    Metadata { path: PathBuf, message: String },
    #[error("no cache entry for {modality}/{utterance_id}")]
    Missing { modality: String, utterance_id: String },
    #[error("tensor shape {found:?} disagrees with metadata {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMetadata {
    pub utterance_id: String,
    pub modality: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub pipeline_version: String,
    /// SHA-256 of whatever inputs produced the tensor.
    pub content_hash: String,
    /// Pipeline-specific fields.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CachedTensor {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
}

impl CachedTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            CachedTensor::F32(a) => a.shape(),
            CachedTensor::F64(a) => a.shape(),
        }
    }

    pub fn dtype(&self) -> &'static str {
        match self {
            CachedTensor::F32(_) => "float32",
            CachedTensor::F64(_) => "float64",
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self {
            CachedTensor::F32(a) => a.iter().map(|&v| v as f64).collect(),
            CachedTensor::F64(a) => a.iter().copied().collect(),
        }
    }

    pub fn f32_from_shape(shape: &[usize], values: Vec<f32>) -> Self {
        CachedTensor::F32(ArrayD::from_shape_vec(IxDyn(shape), values).expect("shape matches data"))
    }

    pub fn f64_from_shape(shape: &[usize], values: Vec<f64>) -> Self {
        CachedTensor::F64(ArrayD::from_shape_vec(IxDyn(shape), values).expect("shape matches data"))
    }
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn hash_file(path: &Path) -> Result<String, CacheError> {
    let bytes = std::fs::read(path).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(&[&bytes]))
}

#[derive(Debug, Clone)]
pub struct FeatureCache {
    root: PathBuf,
}

fn file_stem(utterance_id: &str) -> String {
    let safe = !utterance_id.is_empty()
        && !utterance_id.starts_with('.')
        && utterance_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if safe {
        utterance_id.to_string()
    } else {
        format!("u-{}", &sha256_hex(&[utterance_id.as_bytes()])[..32])
    }
}

impl FeatureCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn paths(&self, modality: &str, utterance_id: &str) -> (PathBuf, PathBuf) {
        let dir = self.root.join(modality);
        let stem = file_stem(utterance_id);
        (dir.join(format!("{stem}.npy")), dir.join(format!("{stem}.json")))
    }

    pub fn metadata(&self, modality: &str, utterance_id: &str) -> Result<Option<CacheMetadata>, CacheError> {
        let (_, meta_path) = self.paths(modality, utterance_id);
        let text = match std::fs::read_to_string(&meta_path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path: meta_path, source }),
        };
        serde_json::from_str(&text).map(Some).map_err(|e| CacheError::Metadata {
            path: meta_path,
            message: e.to_string(),
        })
    }

    /// Whether an entry exists for this pipeline version and input hash.
    pub fn is_fresh(&self, modality: &str, utterance_id: &str, pipeline_version: &str, content_hash: &str) -> bool {
        let (npy, _) = self.paths(modality, utterance_id);
        matches!(
            self.metadata(modality, utterance_id),
            Ok(Some(m)) if m.pipeline_version == pipeline_version
                && m.content_hash == content_hash
                && m.utterance_id == utterance_id
        ) && npy.is_file()
    }

    /// Writes tensor then sidecar, each through a rename. The `shape` and
    /// `dtype` fields of `meta` are overwritten from the tensor.
    pub fn put(&self, mut meta: CacheMetadata, tensor: &CachedTensor) -> Result<(), CacheError> {
        meta.shape = tensor.shape().to_vec();
        meta.dtype = tensor.dtype().to_string();
        let (npy, meta_path) = self.paths(&meta.modality, &meta.utterance_id);
        let dir = npy.parent().expect("cache file has a directory");
        std::fs::create_dir_all(dir).map_err(|source| CacheError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let tmp = npy.with_extension("npy.tmp");
        let written = match tensor {
            CachedTensor::F32(a) => write_npy(&tmp, a),
            CachedTensor::F64(a) => write_npy(&tmp, a),
        };
        written.map_err(|e| CacheError::Tensor {
            path: tmp.clone(),
            message: e.to_string(),
        })?;
        rename(&tmp, &npy)?;
        let mut json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        json.push('\n');
        let tmp = meta_path.with_extension("json.tmp");
        std::fs::write(&tmp, json).map_err(|source| CacheError::Io {
            path: tmp.clone(),
            source,
        })?;
        rename(&tmp, &meta_path)
    }

    pub fn get(&self, modality: &str, utterance_id: &str) -> Result<(CacheMetadata, CachedTensor), CacheError> {
        let meta = self
            .metadata(modality, utterance_id)?
            .ok_or_else(|| CacheError::Missing {
                modality: modality.into(),
                utterance_id: utterance_id.into(),
            })?;
        let (npy, _) = self.paths(modality, utterance_id);
        let bad = |e: ndarray_npy::ReadNpyError| CacheError::Tensor {
            path: npy.clone(),
            message: e.to_string(),
        };
        let tensor = match meta.dtype.as_str() {
            "float32" => CachedTensor::F32(read_npy(&npy).map_err(bad)?),
            "float64" => CachedTensor::F64(read_npy(&npy).map_err(bad)?),
            other => {
                return Err(CacheError::Metadata {
                    path: npy,
                    message: format!("unknown dtype {other}"),
                })
            }
        };
        if tensor.shape() != meta.shape.as_slice() {
            return Err(CacheError::ShapeMismatch {
                expected: meta.shape,
                found: tensor.shape().to_vec(),
            });
        }
        Ok((meta, tensor))
    }
}

fn rename(from: &Path, to: &Path) -> Result<(), CacheError> {
    std::fs::rename(from, to).map_err(|source| CacheError::Io {
        path: to.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str, hash: &str) -> CacheMetadata {
        CacheMetadata {
            utterance_id: id.into(),
            modality: "audio".into(),
            shape: vec![],
            dtype: String::new(),
            pipeline_version: "audio-1".into(),
            content_hash: hash.into(),
            extra: [("frame_hop".to_string(), Value::from(0.025))].into_iter().collect(),
        }
    }

    #[test]
    fn round_trip_and_freshness() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path());
        assert!(!cache.is_fresh("audio", "v1_u1", "audio-1", "abc"));
        let t = CachedTensor::f64_from_shape(&[3], vec![1.0, -2.5, 1e-300]);
        cache.put(meta("v1_u1", "abc"), &t).unwrap();
        assert!(cache.is_fresh("audio", "v1_u1", "audio-1", "abc"));
        assert!(!cache.is_fresh("audio", "v1_u1", "audio-2", "abc"));
        assert!(!cache.is_fresh("audio", "v1_u1", "audio-1", "abd"));
        let (m, back) = cache.get("audio", "v1_u1").unwrap();
        assert_eq!(back, t);
        assert_eq!(m.shape, vec![3]);
        assert_eq!(m.dtype, "float64");
        assert_eq!(m.extra["frame_hop"], 0.025);

        let f = CachedTensor::f32_from_shape(&[2, 2], vec![0.5, 0.25, 0.0, 1.0]);
        let mut m32 = meta("odd/id with space", "h");
        m32.modality = "visual".into();
        cache.put(m32, &f).unwrap();
        assert_eq!(cache.get("visual", "odd/id with space").unwrap().1, f);
        assert!(matches!(cache.get("text", "nope"), Err(CacheError::Missing { .. })));
    }

    #[test]
    fn rewriting_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path());
        let t = CachedTensor::f64_from_shape(&[2], vec![1.0, 2.0]);
        cache.put(meta("u", "h"), &t).unwrap();
        let first = std::fs::read(dir.path().join("audio/u.npy")).unwrap();
        cache.put(meta("u", "h"), &t).unwrap();
        assert_eq!(std::fs::read(dir.path().join("audio/u.npy")).unwrap(), first);
        let leftovers = std::fs::read_dir(dir.path().join("audio")).unwrap().count();
        assert_eq!(leftovers, 2);
    }

    #[test]
    fn hashes_separate_parts() {
        assert_ne!(sha256_hex(&[b"ab", b"c"]), sha256_hex(&[b"a", b"bc"]));
    }
}
