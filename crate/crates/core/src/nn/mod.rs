//! Small dependency-light neural network toolkit used by every classifier
//! in the crate.
//!
//! Every network stores its parameters in one flat `Vec<f64>`; layers are
//! views (offset + shape) into it. That makes optimizer state, weight
//! snapshots, hashing and serialization uniform, and lets gradient buffers
//! share the exact same layout.

mod conv;
mod dense;
mod gradcheck;
mod lstm;
mod optim;
mod train;

pub use conv::{Conv3d, MaxPool3d, Padding, Volume};
pub use dense::{Dense, Head, Mlp, MlpNet, MlpTrace};
pub use gradcheck::{gradient_check, GradientCheck};
pub use lstm::{BiLstm, BiLstmTrace, Lstm};
pub use optim::Adam;
pub use train::{fit, fit_from, predict_all, EpochLog, Example, TrainConfig, TrainError, TrainOutcome};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A two-class classifier over a flat parameter vector.
pub trait Network: Sync {
    type Input: Sync;

    fn param_count(&self) -> usize;

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Class distribution `(p_negative, p_positive)`; no dropout.
    fn predict(&self, params: &[f64], input: &Self::Input) -> [f64; 2];

    /// Loss for one example. Adds d(loss)/d(params) into `grad`. When
    /// `dropout` is `Some`, the network runs in training mode.
    fn loss_and_grad(
        &self,
        params: &[f64],
        input: &Self::Input,
        label: usize,
        dropout: Option<&mut ChaCha8Rng>,
        grad: &mut [f64],
    ) -> f64;
}

/// Hands out consecutive offsets into a flat parameter vector.
#[derive(Debug, Default, Clone)]
pub struct ParamLayout {
    next: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, len: usize) -> usize {
        let offset = self.next;
        self.next += len;
        offset
    }

    pub fn len(&self) -> usize {
        self.next
    }

    pub fn is_empty(&self) -> bool {
        self.next == 0
    }
}

pub fn glorot_uniform(fan_in: usize, fan_out: usize, out: &mut [f64], rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    for w in out {
        *w = rng.gen_range(-limit..limit);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let a = (logits[0] - m).exp();
    let b = (logits[1] - m).exp();
    let s = a + b;
    [a / s, b / s]
}

/// Inverted-dropout keep mask scaled by 1/(1-p); `None` when p == 0.
pub fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    if p <= 0.0 {
        return None;
    }
    let scale = 1.0 / (1.0 - p);
    Some((0..len).map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale }).collect())
}

/// SHA-256 over the little-endian bytes of a parameter vector.
pub fn weights_hash(params: &[f64]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_a_distribution() {
        for logits in [[0.0, 0.0], [1000.0, -1000.0], [-3.5, 2.25]] {
            let p = softmax2(logits);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
