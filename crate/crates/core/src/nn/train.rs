use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{weights_hash, Adam, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training labels contain a single class ({class}); need both")]
    DegenerateLabels { class: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
}

/// Optimizer and schedule settings, stored with every trained artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: "adam".into(),
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Example<'a, I> {
    pub input: &'a I,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Weights from the best validation epoch (last epoch without a
    /// validation set).
    pub params: Vec<f64>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub final_loss: f64,
}

impl TrainOutcome {
    pub fn weights_hash(&self) -> String {
        weights_hash(&self.params)
    }
}

pub fn predict_all<N: Network>(net: &N, params: &[f64], inputs: &[&N::Input]) -> Vec<[f64; 2]> {
    inputs.iter().map(|x| net.predict(params, x)).collect()
}

fn accuracy<N: Network>(net: &N, params: &[f64], examples: &[Example<'_, N::Input>]) -> f64 {
    let correct = examples
        .iter()
        .filter(|e| {
            let p = net.predict(params, e.input);
            usize::from(p[1] > p[0]) == e.label
        })
        .count();
    correct as f64 / examples.len() as f64
}

/// Mini-batch training with early stopping on validation accuracy. The whole
/// update sequence is a function of `seed`, so reruns are bit-identical.
pub fn fit<N: Network>(
    net: &N,
    train: &[Example<'_, N::Input>],
    validation: &[Example<'_, N::Input>],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    fit_from(net, None, train, validation, config, seed)
}

/// As [`fit`], optionally starting from given weights.
pub fn fit_from<N: Network>(
    net: &N,
    initial: Option<Vec<f64>>,
    train: &[Example<'_, N::Input>],
    validation: &[Example<'_, N::Input>],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let positives = train.iter().filter(|e| e.label == 1).count();
    if positives == 0 || positives == train.len() {
        return Err(TrainError::DegenerateLabels {
            class: train[0].label,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = initial.unwrap_or_else(|| net.init_params(&mut rng));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch_size = config.batch_size.max(1);

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut final_loss = f64::NAN;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &train[i];
                batch_loss += net.loss_and_grad(&params, ex.input, ex.label, Some(&mut dropout_rng), &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    loss: batch_loss,
                });
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad);
            epoch_loss += batch_loss;
        }
        final_loss = epoch_loss / train.len() as f64;
        let val_acc = (!validation.is_empty()).then(|| accuracy(net, &params, validation));
        log::info!(
            "epoch {epoch}: loss {final_loss:.5}{}",
            val_acc.map(|a| format!(", validation accuracy {a:.4}")).unwrap_or_default()
        );
        log.push(EpochLog {
            epoch,
            train_loss: final_loss,
            validation_accuracy: val_acc,
        });
        if let Some(acc) = val_acc {
            let improved = best.as_ref().is_none_or(|(b, _, _)| acc > *b);
            if improved {
                best = Some((acc, epoch, params.clone()));
            } else if epoch - best.as_ref().map(|b| b.1).unwrap_or(0) >= config.patience {
                break;
            }
        }
    }

    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, log.len().saturating_sub(1)),
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
        final_loss,
    })
}
