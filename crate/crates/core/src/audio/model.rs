use serde::{Deserialize, Serialize};

use super::AudioError;
use crate::artifact::ModelArtifact;
use crate::nn::{fit, Example, Head, MlpNet, Network, TrainConfig};

pub const AUDIO_MODEL: &str = "audio_mlp";

/// Rectifier MLP whose last layer is a single logit read out through a
/// sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioModelConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub training: TrainConfig,
}

impl Default for AudioModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![1024, 512, 128],
            dropout: 0.0,
            training: TrainConfig::default(),
        }
    }
}

impl AudioModelConfig {
    /// Widths of every layer including the output unit.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = self.hidden.clone();
        w.push(1);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredConfig {
    input_dim: usize,
    #[serde(flatten)]
    model: AudioModelConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioModel {
    pub config: AudioModelConfig,
    pub input_dim: usize,
    pub net: MlpNet,
    pub artifact: ModelArtifact,
}

impl AudioModel {
    pub fn from_artifact(artifact: ModelArtifact) -> Result<Self, AudioError> {
        let stored: StoredConfig = artifact.config(AUDIO_MODEL)?;
        let net = MlpNet::new(stored.input_dim, &stored.model.hidden, Head::Sigmoid, stored.model.dropout);
        if net.param_count() != artifact.params.len() {
            return Err(AudioError::InvalidConfig("artifact weights do not fit the config".into()));
        }
        Ok(Self {
            config: stored.model,
            input_dim: stored.input_dim,
            net,
            artifact,
        })
    }
}

pub fn train_audio_mlp(
    train: &[(&Vec<f64>, usize)],
    validation: &[(&Vec<f64>, usize)],
    config: &AudioModelConfig,
    seed: u64,
) -> Result<AudioModel, AudioError> {
    let input_dim = train.first().map(|(x, _)| x.len()).unwrap_or(0);
    for (x, _) in train.iter().chain(validation) {
        if x.len() != input_dim {
            return Err(AudioError::DimMismatch {
                expected: input_dim,
                found: x.len(),
            });
        }
    }
    let net = MlpNet::new(input_dim, &config.hidden, Head::Sigmoid, config.dropout);
    let tr: Vec<Example<'_, Vec<f64>>> = train.iter().map(|&(input, label)| Example { input, label }).collect();
    let va: Vec<Example<'_, Vec<f64>>> = validation.iter().map(|&(input, label)| Example { input, label }).collect();
    let outcome = fit(&net, &tr, &va, &config.training, seed)?;
    let stored = StoredConfig {
        input_dim,
        model: config.clone(),
    };
    let artifact = ModelArtifact::new(AUDIO_MODEL, &stored, &config.training, seed, &outcome);
    Ok(AudioModel {
        config: config.clone(),
        input_dim,
        net,
        artifact,
    })
}

/// `(1 − p, p)` with `p` the sigmoid output.
pub fn predict_audio(model: &AudioModel, vector: &[f64]) -> Result<[f64; 2], AudioError> {
    if vector.len() != model.input_dim {
        return Err(AudioError::DimMismatch {
            expected: model.input_dim,
            found: vector.len(),
        });
    }
    Ok(model.net.mlp.predict(&model.artifact.params, vector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_widths() {
        assert_eq!(AudioModelConfig::default().layer_widths(), vec![1024, 512, 128, 1]);
    }

    #[test]
    fn gradient_check_on_toy_mlp() {
        let net = MlpNet::new(4, &[5, 3], Head::Sigmoid, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = net.init_params(&mut rng);
        let x = vec![0.4, -1.2, 0.8, 0.05];
        for label in [0, 1] {
            let c = gradient_check(&net, &params, &x, label, None, 1e-6);
            assert!(c.max_relative_error < 1e-4, "{c:?}");
        }
    }

    #[test]
    fn sign_of_first_dimension_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut make = |n: usize| -> Vec<(Vec<f64>, usize)> {
            (0..n)
                .map(|i| {
                    let y = i % 2;
                    let mut v: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    v[0] = if y == 1 { rng.gen_range(0.5..2.0) } else { -rng.gen_range(0.5..2.0) };
                    (v, y)
                })
                .collect()
        };
        let train = make(80);
        let val = make(40);
        let tr: Vec<_> = train.iter().map(|(x, y)| (x, *y)).collect();
        let va: Vec<_> = val.iter().map(|(x, y)| (x, *y)).collect();
        let config = AudioModelConfig {
            hidden: vec![32, 16, 8],
            training: TrainConfig {
                learning_rate: 0.01,
                batch_size: 16,
                ..TrainConfig::default()
            },
            ..AudioModelConfig::default()
        };
        let model = train_audio_mlp(&tr, &va, &config, 4).unwrap();
        let correct = val
            .iter()
            .filter(|(x, y)| {
                let p = predict_audio(&model, x).unwrap();
                assert_eq!(p[0] + p[1], 1.0);
                usize::from(p[1] > p[0]) == *y
            })
            .count();
        assert!(correct as f64 / val.len() as f64 >= 0.95);
        let reloaded = AudioModel::from_artifact(model.artifact.clone()).unwrap();
        assert_eq!(predict_audio(&reloaded, &val[0].0).unwrap(), predict_audio(&model, &val[0].0).unwrap());
        assert!(matches!(predict_audio(&model, &[0.0; 3]), Err(AudioError::DimMismatch { .. })));
    }
}
