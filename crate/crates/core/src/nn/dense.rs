use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dropout_mask, glorot_uniform, sigmoid, softmax2, Network, ParamLayout};

/// Fully connected layer `y = W x + b`, weights row-major `output × input`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

impl Dense {
    pub fn new(layout: &mut ParamLayout, input: usize, output: usize) -> Self {
        let offset = layout.alloc(input * output + output);
        Self { input, output, offset }
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.input * self.output
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        let w = &mut params[self.offset..self.bias_offset()];
        glorot_uniform(self.input, self.output, w, rng);
        params[self.bias_offset()..self.bias_offset() + self.output].fill(0.0);
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward_blocks(params, x, &[(0, self.input)])
    }

    /// Forward pass accumulating the input blocks in the given order: each
    /// block's partial dot product is summed on its own, then added to the
    /// running total.
    pub fn forward_blocks(&self, params: &[f64], x: &[f64], blocks: &[(usize, usize)]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input);
        let w = &params[self.offset..self.bias_offset()];
        let b = &params[self.bias_offset()..self.bias_offset() + self.output];
        (0..self.output)
            .map(|o| {
                let row = &w[o * self.input..(o + 1) * self.input];
                let mut acc = b[o];
                for &(start, len) in blocks {
                    let partial: f64 = row[start..start + len]
                        .iter()
                        .zip(&x[start..start + len])
                        .map(|(w, x)| w * x)
                        .sum();
                    acc += partial;
                }
                acc
            })
            .collect()
    }

    /// Accumulates parameter gradients; returns d(loss)/dx when requested.
    pub fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], want_dx: bool) -> Option<Vec<f64>> {
        let (wo, bo) = (self.offset, self.bias_offset());
        for o in 0..self.output {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            let row = &mut grad[wo + o * self.input..wo + (o + 1) * self.input];
            for (r, xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
            grad[bo + o] += g;
        }
        want_dx.then(|| {
            let w = &params[wo..bo];
            let mut dx = vec![0.0; self.input];
            for o in 0..self.output {
                let g = dy[o];
                if g == 0.0 {
                    continue;
                }
                for (d, wi) in dx.iter_mut().zip(&w[o * self.input..(o + 1) * self.input]) {
                    *d += g * wi;
                }
            }
            dx
        })
    }
}

/// Output readout of an [`Mlp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Two logits, softmax, cross-entropy.
    Softmax,
    /// One logit, sigmoid giving p_positive, binary cross-entropy.
    Sigmoid,
}

impl Head {
    pub fn width(self) -> usize {
        match self {
            Head::Softmax => 2,
            Head::Sigmoid => 1,
        }
    }
}

/// Rectifier MLP: hidden dense layers with ReLU and optional dropout, then a
/// [`Head`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub dropout: f64,
    pub head: Head,
    /// Input blocks in accumulation order for the first layer. Defaults to
    /// one block covering the whole input.
    pub input_blocks: Vec<(usize, usize)>,
}

/// Activations recorded by [`Mlp::forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// `inputs[i]` is what layer `i` consumed (after dropout).
    pub inputs: Vec<Vec<f64>>,
    /// Dropout masks applied to hidden outputs.
    pub masks: Vec<Option<Vec<f64>>>,
    pub logits: Vec<f64>,
}

impl Mlp {
    pub fn new(layout: &mut ParamLayout, input: usize, hidden: &[usize], head: Head, dropout: f64) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input;
        for &h in hidden {
            layers.push(Dense::new(layout, width, h));
            width = h;
        }
        layers.push(Dense::new(layout, width, head.width()));
        Self {
            layers,
            dropout,
            head,
            input_blocks: vec![(0, input)],
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        for layer in &self.layers {
            layer.init(params, rng);
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64], mut dropout: Option<&mut ChaCha8Rng>) -> MlpTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let out = if i == 0 {
                layer.forward_blocks(params, &current, &self.input_blocks)
            } else {
                layer.forward(params, &current)
            };
            inputs.push(std::mem::replace(&mut current, out));
            if i < last {
                for v in current.iter_mut() {
                    *v = v.max(0.0);
                }
                let mask = match dropout.as_deref_mut() {
                    Some(rng) => dropout_mask(current.len(), self.dropout, rng),
                    None => None,
                };
                if let Some(m) = &mask {
                    for (v, k) in current.iter_mut().zip(m) {
                        *v *= k;
                    }
                }
                masks.push(mask);
            }
        }
        MlpTrace {
            inputs,
            masks,
            logits: current,
        }
    }

    pub fn probs(&self, trace: &MlpTrace) -> [f64; 2] {
        logits_to_probs(self.head, &trace.logits)
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> [f64; 2] {
        self.probs(&self.forward(params, x, None))
    }

    /// Output of the last hidden layer (inference mode); the input itself
    /// when there are no hidden layers.
    pub fn penultimate(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let trace = self.forward(params, x, None);
        trace.inputs.last().cloned().unwrap_or_default()
    }

    /// Loss for `label` and backpropagation into `grad`. Returns the loss and
    /// d(loss)/d(input).
    pub fn loss_backward(&self, params: &[f64], trace: &MlpTrace, label: usize, grad: &mut [f64]) -> (f64, Vec<f64>) {
        let (loss, mut delta) = head_loss(self.head, &trace.logits, label);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &trace.inputs[i];
            let dx = layer
                .backward(params, x, &delta, grad, true)
                .expect("dx requested");
            if i == 0 {
                return (loss, dx);
            }
            // x is relu(pre) * mask; gradient flows where the output is live
            let mask = &trace.masks[i - 1];
            delta = dx
                .iter()
                .enumerate()
                .map(|(j, d)| {
                    if x[j] > 0.0 {
                        d * mask.as_ref().map_or(1.0, |m| m[j])
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        unreachable!("mlp has at least one layer")
    }
}

/// An [`Mlp`] over plain feature vectors, as a trainable [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    pub mlp: Mlp,
    param_count: usize,
}

impl MlpNet {
    pub fn new(input: usize, hidden: &[usize], head: Head, dropout: f64) -> Self {
        let mut layout = ParamLayout::new();
        let mlp = Mlp::new(&mut layout, input, hidden, head, dropout);
        Self {
            mlp,
            param_count: layout.len(),
        }
    }

    /// Accumulate the first layer over these `(offset, len)` input blocks in
    /// the given order.
    pub fn with_input_blocks(mut self, blocks: Vec<(usize, usize)>) -> Self {
        self.mlp.input_blocks = blocks;
        self
    }
}

impl Network for MlpNet {
    type Input = Vec<f64>;

    fn param_count(&self) -> usize {
        self.param_count
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count];
        self.mlp.init(&mut p, rng);
        p
    }

    fn predict(&self, params: &[f64], input: &Vec<f64>) -> [f64; 2] {
        self.mlp.predict(params, input)
    }

    fn loss_and_grad(
        &self,
        params: &[f64],
        input: &Vec<f64>,
        label: usize,
        dropout: Option<&mut ChaCha8Rng>,
        grad: &mut [f64],
    ) -> f64 {
        let trace = self.mlp.forward(params, input, dropout);
        self.mlp.loss_backward(params, &trace, label, grad).0
    }
}

pub(crate) fn logits_to_probs(head: Head, logits: &[f64]) -> [f64; 2] {
    match head {
        Head::Softmax => softmax2([logits[0], logits[1]]),
        Head::Sigmoid => {
            let p = sigmoid(logits[0]);
            [1.0 - p, p]
        }
    }
}

/// Loss and d(loss)/d(logits).
pub(crate) fn head_loss(head: Head, logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    match head {
        Head::Softmax => {
            let m = logits[0].max(logits[1]);
            let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
            let p = softmax2([logits[0], logits[1]]);
            let mut d = p.to_vec();
            d[label] -= 1.0;
            (lse - logits[label], d)
        }
        Head::Sigmoid => {
            let z = logits[0];
            let y = label as f64;
            let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            (loss, vec![sigmoid(z) - y])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn dense_forward_matches_hand_computation() {
        let mut layout = ParamLayout::new();
        let d = Dense::new(&mut layout, 2, 2);
        // W = [[1, 2], [3, 4]], b = [0.5, -1]
        let p = vec![1.0, 2.0, 3.0, 4.0, 0.5, -1.0];
        assert_eq!(d.forward(&p, &[1.0, -1.0]), vec![-0.5, -2.0]);
    }

    #[test]
    fn sigmoid_head_pair_sums_to_one() {
        for z in [-30.0, -1.3, 0.0, 0.7, 12.0] {
            let p = logits_to_probs(Head::Sigmoid, &[z]);
            assert_eq!(p[0] + p[1], 1.0);
        }
    }

    #[test]
    fn penultimate_has_last_hidden_width() {
        let mut layout = ParamLayout::new();
        let mlp = Mlp::new(&mut layout, 5, &[7, 3], Head::Softmax, 0.0);
        let mut p = vec![0.0; layout.len()];
        mlp.init(&mut p, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(mlp.penultimate(&p, &[0.1; 5]).len(), 3);
    }
}
