//! Fixtures for the acceptance suite: synthetic corpora pushed through the
//! real feature pipelines, and model sizes that train in seconds on one
//! core.

use std::collections::BTreeSet;
use std::error::Error;

use polyfuse_core::audio::AudioModelConfig;
use polyfuse_core::cache::FeatureCache;
use polyfuse_core::corpus::{load_manifest, make_splits, resolve_labels, CorpusManifest, ResolutionPolicy, SplitAssignment, SplitRatios};
use polyfuse_core::evaluation::{Configuration, EvaluationReport, ProtocolConfig, ProtocolData};
use polyfuse_core::features::{build_features, load_protocol_data, FeatureSettings};
use polyfuse_core::fusion::{EarlyFusionConfig, Modality};
use polyfuse_core::nn::TrainConfig;
use polyfuse_core::synth::{generate_corpus, SynthConfig};
use polyfuse_core::text::{Activation, DenseSpec, TextModelConfig};
use polyfuse_core::visual::VisualModelConfig;
use tempfile::TempDir;

pub type BoxResult<T> = Result<T, Box<dyn Error>>;

/// A featurized synthetic corpus. The directory lives as long as the value.
pub struct Prepared {
    pub dir: TempDir,
    pub manifest: CorpusManifest,
    pub data: ProtocolData,
    pub split: SplitAssignment,
}

/// Generates `synth`, extracts every modality into a fresh cache and splits
/// 60/10/30 by speaker.
pub fn prepare(synth: &SynthConfig, visual_shape: [usize; 3], split_seed: u64) -> BoxResult<Prepared> {
    let dir = tempfile::tempdir()?;
    let corpus = generate_corpus(synth, dir.path())?;
    let manifest = resolve_labels(&load_manifest(&corpus.manifest_path)?, ResolutionPolicy::default())?;
    let labels = manifest.binary_labels();
    let ids: BTreeSet<String> = labels.keys().cloned().collect();
    let cache = FeatureCache::new(dir.path().join("cache"));
    let settings = FeatureSettings {
        visual_shape,
        embeddings: Some(corpus.embeddings_path.clone()),
        ..FeatureSettings::default()
    };
    let report = build_features(&manifest, &ids, &Modality::ALL, &cache, &settings)?;
    if let Some((m, id, msg)) = report.failures.first() {
        return Err(format!("{m} features for {id}: {msg}").into());
    }
    let (data, _) = load_protocol_data(&manifest, &labels, &Modality::ALL, &cache)?;
    let split = make_splits(&manifest, SplitRatios::DEFAULT, split_seed)?;
    Ok(Prepared { dir, manifest, data, split })
}

fn training(learning_rate: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate,
        batch_size: 8,
        epochs,
        patience: 10,
        ..TrainConfig::default()
    }
}

/// The standard architectures shrunk to a few units per layer.
pub fn compact_models(embedding_dim: usize, visual_shape: [usize; 3], seed: u64) -> ProtocolConfig {
    let mut visual = VisualModelConfig::with_sizes(visual_shape, [8, 8, 16, 16], [64, 32]);
    visual.training = training(0.001, 30);
    ProtocolConfig {
        seed,
        audio: AudioModelConfig {
            hidden: vec![32, 16, 8],
            dropout: 0.0,
            training: training(0.01, 40),
        },
        visual,
        text: TextModelConfig {
            recurrent_layers: vec![8],
            dense_layers: vec![DenseSpec {
                neurons: 8,
                activation: Activation::Relu,
            }],
            dropout: 0.0,
            input_dim: embedding_dim,
            training: training(0.01, 30),
            ..TextModelConfig::default()
        },
        early: EarlyFusionConfig {
            hidden: vec![16, 8],
            dropout: 0.2,
            training: training(0.01, 60),
        },
        ..ProtocolConfig::default()
    }
}

/// Test accuracy of `configuration` as a percentage.
pub fn accuracy(report: &EvaluationReport, configuration: &str) -> BoxResult<f64> {
    let c: Configuration = configuration.parse()?;
    let entry = report.entry(c).ok_or_else(|| format!("report has no {c}"))?;
    Ok(entry.metrics.accuracy)
}
