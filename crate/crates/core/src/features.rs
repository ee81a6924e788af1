//! Builds and reloads the per-utterance feature cache for a manifest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::audio::{
    descriptor_names, extract_functionals, fit_speaker_stats, apply_speaker_stats, read_wav, AudioError,
    AudioFeatureConfig, SpeakerStats, AUDIO_PIPELINE_VERSION,
};
use crate::cache::{sha256_hex, CacheError, CacheMetadata, CachedTensor, FeatureCache};
use crate::corpus::{CorpusManifest, Utterance};
use crate::evaluation::ProtocolData;
use crate::fusion::Modality;
use crate::text::{embed_sequence, EmbeddingTable, TextError, UtteranceTensorText, TEXT_PIPELINE_VERSION, WINDOW};
use crate::visual::{sample_decoded, AutoDecoder, FrameTensor, VideoDecoder, VisualError, VISUAL_PIPELINE_VERSION};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("text features need an embeddings file")]
    NoEmbeddings,
    #[error("utterance {0} has no video record")]
    UnknownVideo(String),
    #[error("cannot build a worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub audio: AudioFeatureConfig,
    /// `(T, H, W)` of sampled clips.
    pub visual_shape: [usize; 3],
    pub embeddings: Option<PathBuf>,
    pub workers: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            audio: AudioFeatureConfig::default(),
            visual_shape: [16, 64, 64],
            embeddings: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub built: usize,
    pub skipped: usize,
    /// `(modality, utterance_id, message)`.
    pub failures: Vec<(String, String, String)>,
}

impl BuildReport {
    fn merge(&mut self, other: BuildReport) {
        self.built += other.built;
        self.skipped += other.skipped;
        self.failures.extend(other.failures);
    }
}

fn modality_key(m: Modality) -> &'static str {
    match m {
        Modality::Audio => "audio",
        Modality::Visual => "visual",
        Modality::Text => "text",
    }
}

fn hash_file(path: &Path) -> Result<String, FeatureError> {
    Ok(crate::cache::hash_file(path)?)
}

fn utterance_hash(version: &str, settings: &Value, source: &str, u: &Utterance) -> String {
    sha256_hex(&[
        version.as_bytes(),
        settings.to_string().as_bytes(),
        source.as_bytes(),
        &u.start.to_le_bytes(),
        &u.end.to_le_bytes(),
        u.transcript.as_bytes(),
    ])
}

struct Job<'a> {
    modality: Modality,
    cache: &'a FeatureCache,
    settings: &'a FeatureSettings,
    embeddings: Option<&'a EmbeddingTable>,
    embeddings_hash: &'a str,
}

impl Job<'_> {
    fn version(&self) -> &'static str {
        match self.modality {
            Modality::Audio => AUDIO_PIPELINE_VERSION,
            Modality::Visual => VISUAL_PIPELINE_VERSION,
            Modality::Text => TEXT_PIPELINE_VERSION,
        }
    }

    fn config_value(&self) -> Value {
        match self.modality {
            Modality::Audio => serde_json::to_value(&self.settings.audio).expect("serializable"),
            Modality::Visual => serde_json::json!({ "shape": self.settings.visual_shape, "decoder": AutoDecoder.identity() }),
            Modality::Text => serde_json::json!({ "window": WINDOW }),
        }
    }

    /// Handles every utterance of one video, decoding its media at most
    /// once.
    fn run_video(&self, manifest: &CorpusManifest, video_id: &str, utterances: &[&Utterance]) -> BuildReport {
        let mut report = BuildReport::default();
        let key = modality_key(self.modality);
        let fail = |report: &mut BuildReport, ids: &[&Utterance], msg: String| {
            for u in ids {
                report.failures.push((key.into(), u.utterance_id.clone(), msg.clone()));
            }
        };
        let Some(video) = manifest.video(video_id) else {
            fail(&mut report, utterances, FeatureError::UnknownVideo(video_id.into()).to_string());
            return report;
        };
        let media = match self.modality {
            Modality::Audio => Some(manifest.resolve_media(&video.audio_path)),
            Modality::Visual => Some(manifest.resolve_media(&video.video_path)),
            Modality::Text => None,
        };
        let source = match &media {
            Some(p) => match hash_file(p) {
                Ok(h) => h,
                Err(e) => {
                    fail(&mut report, utterances, e.to_string());
                    return report;
                }
            },
            None => self.embeddings_hash.to_string(),
        };
        let config = self.config_value();
        let pending: Vec<(&Utterance, String)> = utterances
            .iter()
            .map(|u| (*u, utterance_hash(self.version(), &config, &source, u)))
            .filter(|(u, h)| {
                let fresh = self.cache.is_fresh(key, &u.utterance_id, self.version(), h);
                if fresh {
                    report.skipped += 1;
                }
                !fresh
            })
            .collect();
        if pending.is_empty() {
            return report;
        }

        enum Decoded {
            Audio(crate::audio::AudioSignal),
            Visual(crate::visual::DecodedVideo),
            None,
        }
        let decoded = match (self.modality, &media) {
            (Modality::Audio, Some(p)) => read_wav(p).map(Decoded::Audio).map_err(|e| e.to_string()),
            (Modality::Visual, Some(p)) => AutoDecoder.decode(p).map(Decoded::Visual).map_err(|e| e.to_string()),
            _ => Ok(Decoded::None),
        };
        let decoded = match decoded {
            Ok(d) => d,
            Err(msg) => {
                let ids: Vec<&Utterance> = pending.iter().map(|(u, _)| *u).collect();
                fail(&mut report, &ids, msg);
                return report;
            }
        };

        for (u, hash) in pending {
            let mut extra = Map::new();
            let tensor: Result<CachedTensor, FeatureError> = match &decoded {
                Decoded::Audio(signal) => {
                    let cfg = &self.settings.audio;
                    extract_functionals(&signal.slice(u.start, u.end), cfg)
                        .map(|f| {
                            extra.insert("descriptor_names".into(), serde_json::json!(descriptor_names()));
                            extra.insert("functionals".into(), serde_json::json!(cfg.functionals.names()));
                            extra.insert("frame_hop".into(), serde_json::json!(cfg.hop));
                            extra.insert("voicing_threshold".into(), serde_json::json!(cfg.voicing_threshold));
                            CachedTensor::f64_from_shape(&[f.values.len()], f.values)
                        })
                        .map_err(FeatureError::from)
                }
                Decoded::Visual(video) => sample_decoded(video, u.start, u.end, self.settings.visual_shape)
                    .map(|clip| {
                        extra.insert("decoder".into(), serde_json::json!(AutoDecoder.identity()));
                        CachedTensor::f32_from_shape(&clip.dims, clip.values)
                    })
                    .map_err(FeatureError::from),
                Decoded::None => {
                    let table = self.embeddings.expect("checked before the job starts");
                    let tokens = u.tokens();
                    let t = embed_sequence(&tokens, table);
                    extra.insert("tokens".into(), serde_json::json!(t.mask.iter().filter(|m| **m).count()));
                    Ok(CachedTensor::f32_from_shape(&[t.window, t.dim], t.values))
                }
            };
            let result = tensor.and_then(|t| {
                let meta = CacheMetadata {
                    utterance_id: u.utterance_id.clone(),
                    modality: key.into(),
                    shape: Vec::new(),
                    dtype: String::new(),
                    pipeline_version: self.version().into(),
                    content_hash: hash,
                    extra,
                };
                Ok(self.cache.put(meta, &t)?)
            });
            match result {
                Ok(()) => report.built += 1,
                Err(e) => report.failures.push((key.into(), u.utterance_id.clone(), e.to_string())),
            }
        }
        report
    }
}

/// Fills `cache` for `modalities`; entries whose pipeline version and
/// input hash match are left alone. Per-utterance failures are collected
/// rather than aborting the build.
pub fn build_features(
    manifest: &CorpusManifest,
    utterance_ids: &BTreeSet<String>,
    modalities: &[Modality],
    cache: &FeatureCache,
    settings: &FeatureSettings,
) -> Result<BuildReport, FeatureError> {
    let mut by_video: BTreeMap<&str, Vec<&Utterance>> = BTreeMap::new();
    for u in manifest.utterances.iter().filter(|u| utterance_ids.contains(&u.utterance_id)) {
        by_video.entry(u.video_id.as_str()).or_default().push(u);
    }
    let (embeddings, embeddings_hash) = if modalities.contains(&Modality::Text) {
        let path = settings.embeddings.as_ref().ok_or(FeatureError::NoEmbeddings)?;
        let vocab: HashSet<String> = manifest
            .utterances
            .iter()
            .filter(|u| utterance_ids.contains(&u.utterance_id))
            .flat_map(|u| u.tokens())
            .collect();
        (Some(EmbeddingTable::load_filtered(path, Some(&vocab))?), hash_file(path)?)
    } else {
        (None, String::new())
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.max(1))
        .build()
        .map_err(|e| FeatureError::Pool(e.to_string()))?;
    let mut report = BuildReport::default();
    for &m in modalities {
        let job = Job {
            modality: m,
            cache,
            settings,
            embeddings: embeddings.as_ref(),
            embeddings_hash: &embeddings_hash,
        };
        let parts: Vec<BuildReport> = pool.install(|| {
            by_video
                .par_iter()
                .map(|(video, utts)| job.run_video(manifest, video, utts))
                .collect()
        });
        for p in parts {
            report.merge(p);
        }
    }
    report.failures.sort();
    Ok(report)
}

/// Reads cached features for the labelled utterances. Audio functionals
/// are z-standardized per speaker; the statistics are returned alongside.
pub fn load_protocol_data(
    manifest: &CorpusManifest,
    labels: &BTreeMap<String, bool>,
    modalities: &[Modality],
    cache: &FeatureCache,
) -> Result<(ProtocolData, BTreeMap<String, SpeakerStats>), FeatureError> {
    let speakers = manifest.speaker_map();
    let mut data = ProtocolData {
        labels: labels.clone(),
        speakers: speakers.clone(),
        ..ProtocolData::default()
    };
    let mut stats = BTreeMap::new();
    for &m in modalities {
        let key = modality_key(m);
        for id in labels.keys() {
            let (meta, tensor) = cache.get(key, id)?;
            match m {
                Modality::Audio => {
                    data.audio.insert(id.clone(), tensor.to_f64_vec());
                }
                Modality::Visual => {
                    let CachedTensor::F32(a) = tensor else {
                        return Err(CacheError::Metadata {
                            path: cache.root().join(key),
                            message: format!("{id}: visual tensor must be float32"),
                        }
                        .into());
                    };
                    let dims: [usize; 4] = a.shape().try_into().map_err(|_| CacheError::ShapeMismatch {
                        expected: vec![0; 4],
                        found: a.shape().to_vec(),
                    })?;
                    data.visual.insert(
                        id.clone(),
                        FrameTensor {
                            dims,
                            values: a.iter().copied().collect(),
                        },
                    );
                }
                Modality::Text => {
                    let CachedTensor::F32(a) = tensor else {
                        return Err(CacheError::Metadata {
                            path: cache.root().join(key),
                            message: format!("{id}: text tensor must be float32"),
                        }
                        .into());
                    };
                    let (window, dim) = (a.shape()[0], a.shape()[1]);
                    let n = meta.extra.get("tokens").and_then(Value::as_u64).unwrap_or(0) as usize;
                    data.text.insert(
                        id.clone(),
                        UtteranceTensorText {
                            window,
                            dim,
                            values: a.iter().copied().collect(),
                            mask: (0..window).map(|i| i < n).collect(),
                        },
                    );
                }
            }
        }
        if m == Modality::Audio {
            stats = fit_speaker_stats(&data.audio, &speakers);
            data.audio = apply_speaker_stats(&data.audio, &speakers, &stats)?;
        }
    }
    Ok((data, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{resolve_labels, ResolutionPolicy};
    use crate::synth::{generate_corpus, Scenario, SynthConfig};

    #[test]
    fn build_is_idempotent_and_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(
            &SynthConfig {
                scenario: Scenario::Separable,
                utterances: 24,
                speakers: 4,
                embedding_dim: 300,
                ..SynthConfig::default()
            },
            &dir.path().join("corpus"),
        )
        .unwrap();
        let manifest = resolve_labels(&corpus.manifest, ResolutionPolicy::default()).unwrap();
        let ids: BTreeSet<String> = manifest.utterances.iter().map(|u| u.utterance_id.clone()).collect();
        let cache = FeatureCache::new(dir.path().join("cache"));
        let settings = FeatureSettings {
            visual_shape: [4, 8, 8],
            embeddings: Some(corpus.embeddings_path.clone()),
            workers: 2,
            ..FeatureSettings::default()
        };
        let all = [Modality::Audio, Modality::Visual, Modality::Text];
        let first = build_features(&manifest, &ids, &all, &cache, &settings).unwrap();
        assert_eq!((first.built, first.skipped), (72, 0), "{:?}", first.failures);
        let second = build_features(&manifest, &ids, &all, &cache, &settings).unwrap();
        assert_eq!((second.built, second.skipped), (0, 72));

        let mut changed = settings.clone();
        changed.audio.voicing_threshold = 0.5;
        let third = build_features(&manifest, &ids, &[Modality::Audio], &cache, &changed).unwrap();
        assert_eq!(third.built, 24);

        let labels = manifest.binary_labels();
        let (data, stats) = load_protocol_data(&manifest, &labels, &all, &cache).unwrap();
        assert_eq!(stats.len(), 4);
        assert_eq!(data.audio.len(), 24);
        assert_eq!(data.visual.values().next().unwrap().dims, [4, 8, 8, 3]);
        let t = data.text.values().next().unwrap();
        assert_eq!(t.active_rows().len(), 8);
    }

    #[test]
    fn corrupt_wav_is_listed() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(
            &SynthConfig {
                utterances: 8,
                speakers: 2,
                videos_per_speaker: 1,
                embedding_dim: 4,
                ..SynthConfig::default()
            },
            dir.path(),
        )
        .unwrap();
        std::fs::write(dir.path().join("media/v000.wav"), b"RIFF nonsense").unwrap();
        let ids: BTreeSet<String> = corpus.manifest.utterances.iter().map(|u| u.utterance_id.clone()).collect();
        let cache = FeatureCache::new(dir.path().join("cache"));
        let report =
            build_features(&corpus.manifest, &ids, &[Modality::Audio], &cache, &FeatureSettings::default()).unwrap();
        assert_eq!(report.built, 4);
        assert_eq!(report.failures.len(), 4);
        assert!(report.failures.iter().all(|(m, id, _)| m == "audio" && id.starts_with("v000")));
    }
}
