//! Synthetic corpus through features, training and evaluation with tiny
//! models.

use std::collections::BTreeSet;

use polyfuse_core::audio::AudioModelConfig;
use polyfuse_core::cache::FeatureCache;
use polyfuse_core::corpus::{check_speaker_exclusive, load_manifest, make_splits, resolve_labels, ResolutionPolicy, SplitName, SplitRatios};
use polyfuse_core::evaluation::{run_protocol, Configuration, ProtocolConfig};
use polyfuse_core::features::{build_features, load_protocol_data, FeatureSettings};
use polyfuse_core::fusion::{EarlyFusionConfig, Modality};
use polyfuse_core::nn::TrainConfig;
use polyfuse_core::synth::{generate_corpus, Scenario, SynthConfig};
use polyfuse_core::text::{Activation, DenseSpec, TextModelConfig};
use polyfuse_core::visual::VisualModelConfig;

const SHAPE: [usize; 3] = [8, 16, 16];

fn tiny(seed: u64) -> ProtocolConfig {
    let training = TrainConfig {
        learning_rate: 0.01,
        batch_size: 8,
        epochs: 8,
        patience: 4,
        ..TrainConfig::default()
    };
    let mut visual = VisualModelConfig::with_sizes(SHAPE, [2, 2, 4, 4], [8, 4]);
    visual.training = training.clone();
    ProtocolConfig {
        seed,
        audio: AudioModelConfig {
            hidden: vec![8, 4],
            dropout: 0.0,
            training: training.clone(),
        },
        visual,
        text: TextModelConfig {
            recurrent_layers: vec![4],
            dense_layers: vec![DenseSpec {
                neurons: 4,
                activation: Activation::Relu,
            }],
            dropout: 0.0,
            input_dim: 8,
            training: training.clone(),
            ..TextModelConfig::default()
        },
        early: EarlyFusionConfig {
            hidden: vec![8],
            dropout: 0.0,
            training,
        },
        ..ProtocolConfig::default()
    }
}

#[test]
fn synthetic_corpus_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        scenario: Scenario::Separable,
        utterances: 60,
        embedding_dim: 8,
        seed: 11,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&synth, dir.path()).unwrap();
    let manifest = resolve_labels(&load_manifest(&corpus.manifest_path).unwrap(), ResolutionPolicy::default()).unwrap();
    let labels = manifest.binary_labels();
    assert_eq!(labels.len(), 60);

    let ids: BTreeSet<String> = labels.keys().cloned().collect();
    let cache = FeatureCache::new(dir.path().join("cache"));
    let settings = FeatureSettings {
        visual_shape: SHAPE,
        embeddings: Some(corpus.embeddings_path.clone()),
        ..FeatureSettings::default()
    };
    let built = build_features(&manifest, &ids, &Modality::ALL, &cache, &settings).unwrap();
    assert!(built.failures.is_empty(), "{:?}", built.failures);
    let rebuilt = build_features(&manifest, &ids, &Modality::ALL, &cache, &settings).unwrap();
    assert!(rebuilt.failures.is_empty());

    let (data, _) = load_protocol_data(&manifest, &labels, &Modality::ALL, &cache).unwrap();
    let split = make_splits(&manifest, SplitRatios::DEFAULT, 2).unwrap();
    check_speaker_exclusive(&split, &data.speakers).unwrap();
    assert!(split.count(SplitName::Test) > 0);

    let configurations: Vec<Configuration> = ["T-Only", "A-Only", "V-Only", "A+V+T:early", "A+T:late"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let first = run_protocol(&data, &split, &configurations, &tiny(4)).unwrap();
    for c in &configurations {
        let entry = first.report.entry(*c).unwrap_or_else(|| panic!("missing {c}"));
        assert!((0.0..=100.0).contains(&entry.metrics.accuracy));
        assert_eq!(entry.metrics.confusion.total() as usize, split.count(SplitName::Test));
    }
    let again = run_protocol(&data, &split, &configurations, &tiny(4)).unwrap();
    assert_eq!(first.report, again.report);
    assert_eq!(first.artifacts, again.artifacts);
}
