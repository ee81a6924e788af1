use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{compute_metrics, Configuration, EvaluationError, EvaluationReport, ReportEntry, Sentiment};
use crate::artifact::ModelArtifact;
use crate::audio::{predict_audio, train_audio_mlp, AudioModel, AudioModelConfig};
use crate::corpus::{check_speaker_exclusive, CorpusError, SplitAssignment, SplitName};
use crate::fusion::{
    early_fuse, late_fuse, train_early, train_late, EarlyFusionConfig, EarlyModel, LateFusionConfig, LateModel, MetaKind, Modality,
    ModalitySet, Strategy,
};
use crate::text::{predict_text, text_features, train_text_model, TextModel, TextModelConfig, UtteranceTensorText};
use crate::visual::{predict_visual, train_visual_model, visual_features, FrameTensor, VisualModel, VisualModelConfig};

/// Labelled, featurized utterances. Only the modalities used by the
/// requested configurations need entries.
#[derive(Debug, Clone, Default)]
pub struct ProtocolData {
    /// `true` for positive.
    pub labels: BTreeMap<String, bool>,
    pub speakers: BTreeMap<String, String>,
    /// Speaker-normalized functionals.
    pub audio: BTreeMap<String, Vec<f64>>,
    pub visual: BTreeMap<String, FrameTensor>,
    pub text: BTreeMap<String, UtteranceTensorText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct ProtocolConfig {
    pub seed: u64,
    pub audio: AudioModelConfig,
    pub visual: VisualModelConfig,
    pub text: TextModelConfig,
    pub early: EarlyFusionConfig,
    pub late: LateFusionConfig,
}


#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub report: EvaluationReport,
    /// Keyed `audio`, `visual`, `text`, `early_A+V`, `late_A+V+T`, ...
    pub artifacts: BTreeMap<String, ModelArtifact>,
}

/// A trained unimodal model's outputs over every evaluated utterance.
struct UnimodalRun {
    artifact: ModelArtifact,
    predictions: BTreeMap<String, [f64; 2]>,
    representations: BTreeMap<String, Vec<f64>>,
}

struct Splits {
    train: Vec<String>,
    validation: Vec<String>,
    test: Vec<String>,
}

fn class(positive: bool) -> usize {
    usize::from(positive)
}

fn modality_seed(seed: u64, m: Modality) -> u64 {
    seed.wrapping_add(1 + m as u64)
}

fn fusion_seed(seed: u64, offset: u64, set: ModalitySet) -> u64 {
    let bits = set.iter().fold(0u64, |b, m| b | 1 << (m as u64));
    seed.wrapping_add(offset + bits)
}

fn lookup<'a, T>(map: &'a BTreeMap<String, T>, id: &str, m: Modality) -> Result<&'a T, EvaluationError> {
    map.get(id).ok_or_else(|| EvaluationError::MissingFeatures {
        modality: m,
        utterance_id: id.to_string(),
    })
}

enum Trained {
    Audio(AudioModel),
    Visual(VisualModel),
    Text(TextModel),
}

impl Trained {
    fn load(m: Modality, artifact: ModelArtifact) -> Result<Self, EvaluationError> {
        Ok(match m {
            Modality::Audio => Trained::Audio(AudioModel::from_artifact(artifact)?),
            Modality::Visual => Trained::Visual(VisualModel::from_artifact(artifact)?),
            Modality::Text => Trained::Text(TextModel::from_artifact(artifact)?),
        })
    }

    fn artifact(&self) -> &ModelArtifact {
        match self {
            Trained::Audio(x) => &x.artifact,
            Trained::Visual(x) => &x.artifact,
            Trained::Text(x) => &x.artifact,
        }
    }

    /// Class probabilities and fusion representation for each id.
    fn run<'a>(
        &self,
        data: &ProtocolData,
        ids: impl IntoIterator<Item = &'a String>,
    ) -> Result<(BTreeMap<String, [f64; 2]>, BTreeMap<String, Vec<f64>>), EvaluationError> {
        let mut predictions = BTreeMap::new();
        let mut representations = BTreeMap::new();
        for id in ids {
            let (p, r) = match self {
                Trained::Audio(model) => {
                    let x = lookup(&data.audio, id, Modality::Audio)?;
                    (predict_audio(model, x)?, x.clone())
                }
                Trained::Visual(model) => {
                    let x = lookup(&data.visual, id, Modality::Visual)?;
                    (predict_visual(model, x)?, visual_features(model, x)?)
                }
                Trained::Text(model) => {
                    let x = lookup(&data.text, id, Modality::Text)?;
                    (predict_text(model, x)?, text_features(model, x)?)
                }
            };
            predictions.insert(id.clone(), p);
            representations.insert(id.clone(), r);
        }
        Ok((predictions, representations))
    }
}

fn train_unimodal(
    m: Modality,
    data: &ProtocolData,
    splits: &Splits,
    config: &ProtocolConfig,
) -> Result<UnimodalRun, EvaluationError> {
    let seed = modality_seed(config.seed, m);
    let label = |id: &String| class(data.labels[id]);
    macro_rules! pairs {
        ($map:expr, $ids:expr) => {
            $ids.iter()
                .map(|id| Ok((lookup($map, id, m)?, label(id))))
                .collect::<Result<Vec<_>, EvaluationError>>()?
        };
    }
    let model = match m {
        Modality::Audio => Trained::Audio(train_audio_mlp(
            &pairs!(&data.audio, splits.train),
            &pairs!(&data.audio, splits.validation),
            &config.audio,
            seed,
        )?),
        Modality::Visual => Trained::Visual(train_visual_model(
            &pairs!(&data.visual, splits.train),
            &pairs!(&data.visual, splits.validation),
            &config.visual,
            seed,
        )?),
        Modality::Text => Trained::Text(train_text_model(
            &pairs!(&data.text, splits.train),
            &pairs!(&data.text, splits.validation),
            &config.text,
            seed,
        )?),
    };
    let (predictions, representations) =
        model.run(data, splits.train.iter().chain(&splits.validation).chain(&splits.test))?;
    Ok(UnimodalRun {
        artifact: model.artifact().clone(),
        predictions,
        representations,
    })
}

fn entry(
    configuration: Configuration,
    test: &[String],
    labels: &BTreeMap<String, bool>,
    probs: impl Fn(&str) -> Result<[f64; 2], EvaluationError>,
) -> Result<ReportEntry, EvaluationError> {
    let mut predicted = Vec::with_capacity(test.len());
    let mut truth = Vec::with_capacity(test.len());
    for id in test {
        let p = probs(id)?;
        predicted.push(Sentiment::from_index(class(p[1] > p[0])));
        truth.push(Sentiment::from_index(class(labels[id])));
    }
    Ok(ReportEntry {
        configuration,
        metrics: compute_metrics(&predicted, &truth)?,
    })
}

/// Trains every configuration on the train split (validation drives early
/// stopping and the late-fusion meta-classifier) and scores it on the
/// test split. Unimodal models are trained once and shared by all
/// configurations that use them.
pub fn run_protocol(
    data: &ProtocolData,
    split: &SplitAssignment,
    configurations: &[Configuration],
    config: &ProtocolConfig,
) -> Result<ProtocolOutcome, EvaluationError> {
    check_speaker_exclusive(split, &data.speakers).map_err(|e| match e {
        CorpusError::SpeakerLeakage { speaker_id, .. } => EvaluationError::SpeakerLeakage { speaker_id },
        other => EvaluationError::Corpus(other),
    })?;
    let members = |name: SplitName| -> Vec<String> {
        split
            .members(name)
            .into_iter()
            .filter(|id| data.labels.contains_key(*id))
            .map(str::to_string)
            .collect()
    };
    let splits = Splits {
        train: members(SplitName::Train),
        validation: members(SplitName::Validation),
        test: members(SplitName::Test),
    };
    for (name, ids) in [(SplitName::Train, &splits.train), (SplitName::Test, &splits.test)] {
        if ids.is_empty() {
            return Err(EvaluationError::EmptySplit(name));
        }
    }
    let needs_validation = configurations.iter().any(|c| c.strategy == Strategy::Late && c.set.len() > 1);
    if needs_validation && splits.validation.is_empty() {
        return Err(EvaluationError::EmptySplit(SplitName::Validation));
    }

    let mut unimodal: BTreeMap<Modality, UnimodalRun> = BTreeMap::new();
    for m in Modality::ALL {
        if configurations.iter().any(|c| c.set.contains(m)) {
            log::info!("training {} model", m.name());
            unimodal.insert(m, train_unimodal(m, data, &splits, config)?);
        }
    }

    let mut report = EvaluationReport::new(split.fingerprint(), config.seed);
    let mut artifacts: BTreeMap<String, ModelArtifact> = unimodal
        .iter()
        .map(|(m, run)| (m.name().to_string(), run.artifact.clone()))
        .collect();
    for &c in configurations {
        log::info!("evaluating {c}");
        let e = match c.strategy {
            Strategy::Unimodal => {
                let m = c.set.singleton().ok_or_else(|| EvaluationError::BadConfiguration(c.to_string()))?;
                let run = &unimodal[&m];
                entry(c, &splits.test, &data.labels, |id| Ok(run.predictions[id]))?
            }
            Strategy::Early => {
                let reps = |id: &str| -> BTreeMap<Modality, Vec<f64>> {
                    c.set.iter().map(|m| (m, unimodal[&m].representations[id].clone())).collect()
                };
                let dims: BTreeMap<Modality, usize> = reps(&splits.train[0]).into_iter().map(|(m, v)| (m, v.len())).collect();
                let fuse = |ids: &[String]| -> Result<Vec<_>, EvaluationError> {
                    ids.iter().map(|id| Ok((early_fuse(&reps(id), c.set, &dims)?, class(data.labels[id])))).collect()
                };
                let tr = fuse(&splits.train)?;
                let va = fuse(&splits.validation)?;
                let tr_refs: Vec<_> = tr.iter().map(|(x, y)| (x, *y)).collect();
                let va_refs: Vec<_> = va.iter().map(|(x, y)| (x, *y)).collect();
                let model = train_early(&tr_refs, &va_refs, &config.early, fusion_seed(config.seed, 100, c.set))?;
                let e = entry(c, &splits.test, &data.labels, |id| Ok(model.predict(&reps(id))?))?;
                artifacts.insert(format!("early_{}", c.set), model.artifact);
                e
            }
            Strategy::Late => {
                let preds = |id: &str| -> BTreeMap<Modality, [f64; 2]> {
                    c.set.iter().map(|m| (m, unimodal[&m].predictions[id])).collect()
                };
                let mut late = config.late.clone();
                if c.set.len() == 1 {
                    late.meta = MetaKind::Identity;
                }
                let decisions = splits
                    .validation
                    .iter()
                    .map(|id| Ok((late_fuse(&preds(id), c.set)?, class(data.labels[id]))))
                    .collect::<Result<Vec<_>, EvaluationError>>()?;
                let refs: Vec<_> = decisions.iter().map(|(d, y)| (d, *y)).collect();
                let model = train_late(&refs, c.set, &late, fusion_seed(config.seed, 200, c.set))?;
                let e = entry(c, &splits.test, &data.labels, |id| Ok(model.predict(&preds(id))?))?;
                artifacts.insert(format!("late_{}", c.set), model.artifact);
                e
            }
        };
        report.entries.push(e);
    }
    Ok(ProtocolOutcome { report, artifacts })
}

/// Scores saved models on the test split. `artifacts` uses the keys
/// produced by [`run_protocol`]; given the same data and split the report
/// equals the one produced at training time.
pub fn evaluate_artifacts(
    data: &ProtocolData,
    split: &SplitAssignment,
    configurations: &[Configuration],
    artifacts: &BTreeMap<String, ModelArtifact>,
    seed: u64,
) -> Result<EvaluationReport, EvaluationError> {
    let test: Vec<String> = split
        .members(SplitName::Test)
        .into_iter()
        .filter(|id| data.labels.contains_key(*id))
        .map(str::to_string)
        .collect();
    if test.is_empty() {
        return Err(EvaluationError::EmptySplit(SplitName::Test));
    }
    let artifact = |key: &str| {
        artifacts
            .get(key)
            .cloned()
            .ok_or_else(|| EvaluationError::MissingArtifact(key.to_string()))
    };
    let mut outputs = BTreeMap::new();
    for m in Modality::ALL {
        if configurations.iter().any(|c| c.set.contains(m)) {
            let model = Trained::load(m, artifact(m.name())?)?;
            outputs.insert(m, model.run(data, &test)?);
        }
    }
    let mut report = EvaluationReport::new(split.fingerprint(), seed);
    for &c in configurations {
        let preds = |id: &str| -> BTreeMap<Modality, [f64; 2]> { c.set.iter().map(|m| (m, outputs[&m].0[id])).collect() };
        let e = match c.strategy {
            Strategy::Unimodal => {
                let m = c.set.singleton().ok_or_else(|| EvaluationError::BadConfiguration(c.to_string()))?;
                entry(c, &test, &data.labels, |id| Ok(outputs[&m].0[id]))?
            }
            Strategy::Early => {
                let model = EarlyModel::from_artifact(artifact(&format!("early_{}", c.set))?)?;
                let reps = |id: &str| -> BTreeMap<Modality, Vec<f64>> {
                    c.set.iter().map(|m| (m, outputs[&m].1[id].clone())).collect()
                };
                entry(c, &test, &data.labels, |id| Ok(model.predict(&reps(id))?))?
            }
            Strategy::Late => {
                let model = LateModel::from_artifact(artifact(&format!("late_{}", c.set))?)?;
                entry(c, &test, &data.labels, |id| Ok(model.predict(&preds(id))?))?
            }
        };
        report.entries.push(e);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SplitRatios;
    use crate::nn::TrainConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Audio-only data where dimension 0 carries the label; 6 speakers.
    fn audio_data(seed: u64) -> (ProtocolData, SplitAssignment) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = ProtocolData::default();
        let mut split = SplitAssignment {
            split: BTreeMap::new(),
            seed,
            ratios: SplitRatios::DEFAULT,
            realized: SplitRatios::DEFAULT,
        };
        for i in 0..90 {
            let id = format!("u{i:03}");
            let speaker = i % 6;
            let y = (i / 6) % 2 == 0;
            let mut v: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            v[0] = if y { 1.5 } else { -1.5 } + rng.gen_range(-0.5..0.5);
            data.labels.insert(id.clone(), y);
            data.speakers.insert(id.clone(), format!("s{speaker}"));
            data.audio.insert(id.clone(), v);
            let name = match speaker {
                0..=2 => SplitName::Train,
                3 => SplitName::Validation,
                _ => SplitName::Test,
            };
            split.split.insert(id, name);
        }
        (data, split)
    }

    fn fast_config() -> ProtocolConfig {
        let mut c = ProtocolConfig::default();
        c.audio.hidden = vec![16, 8];
        c.audio.training = TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            epochs: 60,
            patience: 15,
            ..TrainConfig::default()
        };
        c.early.training = c.audio.training.clone();
        c.late.training.epochs = 50;
        c
    }

    #[test]
    fn audio_configurations_and_determinism() {
        let (data, split) = audio_data(1);
        let a = ModalitySet::single(Modality::Audio);
        let configs = [
            Configuration::new(a, Strategy::Unimodal),
            Configuration::new(a, Strategy::Early),
            Configuration::new(a, Strategy::Late),
        ];
        let config = fast_config();
        let out = run_protocol(&data, &split, &configs, &config).unwrap();
        assert_eq!(out.report.entries.len(), 3);
        for e in &out.report.entries {
            assert!(e.metrics.accuracy >= 95.0, "{}: {}", e.configuration, e.metrics.accuracy);
            assert_eq!(e.metrics.confusion.total(), 30);
        }
        assert_eq!(out.artifacts.keys().collect::<Vec<_>>(), ["audio", "early_A", "late_A"]);
        let again = run_protocol(&data, &split, &configs, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&again.report).unwrap(),
            serde_json::to_string(&out.report).unwrap()
        );
        let rescored = evaluate_artifacts(&data, &split, &configs, &out.artifacts, config.seed).unwrap();
        assert_eq!(rescored, out.report);
        let mut partial = out.artifacts.clone();
        partial.remove("late_A");
        assert!(matches!(
            evaluate_artifacts(&data, &split, &configs, &partial, 0),
            Err(EvaluationError::MissingArtifact(k)) if k == "late_A"
        ));
    }

    #[test]
    fn shared_speaker_is_rejected() {
        let (data, mut split) = audio_data(2);
        // u000 belongs to speaker s0, which otherwise trains
        split.split.insert("u000".into(), SplitName::Test);
        let configs = [Configuration::new(ModalitySet::single(Modality::Audio), Strategy::Unimodal)];
        match run_protocol(&data, &split, &configs, &fast_config()) {
            Err(EvaluationError::SpeakerLeakage { speaker_id }) => assert_eq!(speaker_id, "s0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_modality_features_are_named() {
        let (data, split) = audio_data(3);
        let configs = [Configuration::new(ModalitySet::single(Modality::Text), Strategy::Unimodal)];
        assert!(matches!(
            run_protocol(&data, &split, &configs, &fast_config()),
            Err(EvaluationError::MissingFeatures { modality: Modality::Text, .. })
        ));
    }
}
