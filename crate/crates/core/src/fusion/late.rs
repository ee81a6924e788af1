use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{late_fuse, DecisionVector, FusionError, Modality, ModalitySet};
use crate::artifact::{ArtifactError, ModelArtifact};
use crate::nn::{fit, Example, Head, MlpNet, Network, TrainConfig, TrainOutcome};

pub const LATE_MODEL: &str = "fusion_late";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaKind {
    /// Softmax regression over the decision vector.
    Logistic,
    /// Passes a singleton's prediction through unchanged.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LateFusionConfig {
    pub meta: MetaKind,
    pub training: TrainConfig,
}

impl Default for LateFusionConfig {
    fn default() -> Self {
        Self {
            meta: MetaKind::Logistic,
            training: TrainConfig {
                learning_rate: 0.05,
                batch_size: 16,
                epochs: 200,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LateManifest {
    strategy: String,
    modality_set: ModalitySet,
    meta_config: LateFusionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LateModel {
    pub set: ModalitySet,
    pub config: LateFusionConfig,
    meta: Option<MlpNet>,
    pub artifact: ModelArtifact,
}

/// Logistic meta-classifier over the stacked decision pairs of `set`.
pub fn meta_net(set: ModalitySet) -> MlpNet {
    MlpNet::new(2 * set.len(), &[], Head::Softmax, 0.0)
}

impl LateModel {
    pub fn predict(&self, predictions: &BTreeMap<Modality, [f64; 2]>) -> Result<[f64; 2], FusionError> {
        let d = late_fuse(predictions, self.set)?;
        Ok(self.predict_decision(&d))
    }

    pub fn predict_decision(&self, d: &DecisionVector) -> [f64; 2] {
        match &self.meta {
            Some(net) => net.predict(&self.artifact.params, &d.values),
            None => d.pair(0),
        }
    }

    pub fn from_artifact(artifact: ModelArtifact) -> Result<Self, FusionError> {
        let config: LateFusionConfig = artifact.config(LATE_MODEL)?;
        let manifest: LateManifest = serde_json::from_value(artifact.manifest.fusion.clone().unwrap_or_default())
            .map_err(|e| ArtifactError::Config(e.to_string()))?;
        let meta = match config.meta {
            MetaKind::Logistic => Some(meta_net(manifest.modality_set)),
            MetaKind::Identity => None,
        };
        let expected = meta.as_ref().map_or(0, |n| n.param_count());
        if expected != artifact.params.len() {
            return Err(ArtifactError::Config("weight count does not match the meta-classifier".into()).into());
        }
        Ok(Self {
            set: manifest.modality_set,
            config,
            meta,
            artifact,
        })
    }
}

/// Trains the meta-classifier. `decisions` must come from unimodal models
/// scoring utterances they were not trained on (the validation split).
pub fn train_late(
    decisions: &[(&DecisionVector, usize)],
    set: ModalitySet,
    config: &LateFusionConfig,
    seed: u64,
) -> Result<LateModel, FusionError> {
    for (d, _) in decisions {
        if d.set != set {
            return Err(FusionError::SetMismatch {
                expected: set,
                found: d.set,
            });
        }
    }
    let (meta, outcome) = match config.meta {
        MetaKind::Identity => {
            if set.len() != 1 {
                return Err(ArtifactError::Config("identity meta-classifier needs a single modality".into()).into());
            }
            let outcome = TrainOutcome {
                params: Vec::new(),
                log: Vec::new(),
                best_epoch: 0,
                final_loss: f64::NAN,
            };
            (None, outcome)
        }
        MetaKind::Logistic => {
            let net = meta_net(set);
            let ex: Vec<Example<'_, Vec<f64>>> = decisions
                .iter()
                .map(|(d, label)| Example {
                    input: &d.values,
                    label: *label,
                })
                .collect();
            let outcome = fit(&net, &ex, &[], &config.training, seed)?;
            (Some(net), outcome)
        }
    };
    let mut artifact = ModelArtifact::new(LATE_MODEL, config, &config.training, seed, &outcome);
    artifact.manifest.fusion = Some(
        serde_json::to_value(LateManifest {
            strategy: "late".into(),
            modality_set: set,
            meta_config: config.clone(),
        })
        .expect("serializable"),
    );
    Ok(LateModel {
        set,
        config: config.clone(),
        meta,
        artifact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Modality::{Audio as A, Text as T, Visual as V};

    proptest! {
        #[test]
        fn identity_singleton_keeps_unimodal_argmax(p in 0.0f64..1.0) {
            let set = ModalitySet::single(V);
            let model = train_late(&[], set, &LateFusionConfig { meta: MetaKind::Identity, ..Default::default() }, 0).unwrap();
            let preds: BTreeMap<_, _> = [(V, [1.0 - p, p])].into();
            let out = model.predict(&preds).unwrap();
            prop_assert_eq!(usize::from(out[1] > out[0]), usize::from(p > 1.0 - p));
        }
    }

    #[test]
    fn unanimous_confident_modalities_decide_positive() {
        // each modality is informative, so agreement implies the label
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let set = ModalitySet::all();
        let decisions: Vec<(DecisionVector, usize)> = (0..120)
            .map(|i| {
                let y = i % 2;
                let preds: BTreeMap<_, _> = [A, V, T]
                    .into_iter()
                    .map(|m| {
                        let correct = rng.gen_bool(0.8);
                        let p = rng.gen_range(0.6..0.99);
                        let pos = if (y == 1) == correct { p } else { 1.0 - p };
                        (m, [1.0 - pos, pos])
                    })
                    .collect();
                (late_fuse(&preds, set).unwrap(), y)
            })
            .collect();
        let refs: Vec<_> = decisions.iter().map(|(d, y)| (d, *y)).collect();
        let model = train_late(&refs, set, &LateFusionConfig::default(), 5).unwrap();
        for p in [0.91, 0.95, 0.99] {
            let preds: BTreeMap<_, _> = [(A, [1.0 - p, p]), (V, [1.0 - p, p]), (T, [1.0 - p, p])].into();
            let out = model.predict(&preds).unwrap();
            assert!(out[1] > out[0]);
            assert!((out[0] + out[1] - 1.0).abs() < 1e-6);
        }
        let reloaded = LateModel::from_artifact(model.artifact.clone()).unwrap();
        assert_eq!(reloaded, model);
    }

    #[test]
    fn identity_needs_singleton() {
        let config = LateFusionConfig {
            meta: MetaKind::Identity,
            ..Default::default()
        };
        assert!(train_late(&[], ModalitySet::all(), &config, 0).is_err());
    }

    #[test]
    fn gradient_check_on_meta_head() {
        let net = meta_net(ModalitySet::all());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = net.init_params(&mut rng);
        let x = vec![0.3, 0.7, 0.9, 0.1, 0.45, 0.55];
        let c = gradient_check(&net, &params, &x, 1, None, 1e-6);
        assert!(c.max_relative_error < 1e-4, "{c:?}");
    }
}
