use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TextError, UtteranceTensorText, EMBEDDING_DIM, WINDOW};
use crate::artifact::ModelArtifact;
use crate::nn::{dropout_mask, fit, BiLstm, BiLstmTrace, Example, Head, Mlp, Network, ParamLayout, TrainConfig};

pub const TEXT_MODEL: &str = "text_bilstm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub neurons: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextModelConfig {
    /// Cells per direction for each stacked bidirectional layer.
    pub recurrent_layers: Vec<usize>,
    pub dense_layers: Vec<DenseSpec>,
    pub dropout: f64,
    pub classes: usize,
    pub input_dim: usize,
    pub window: usize,
    pub training: TrainConfig,
}

impl Default for TextModelConfig {
    fn default() -> Self {
        Self {
            recurrent_layers: vec![128, 64],
            dense_layers: vec![DenseSpec {
                neurons: 128,
                activation: Activation::Relu,
            }],
            dropout: 0.2,
            classes: 2,
            input_dim: EMBEDDING_DIM,
            window: WINDOW,
            training: TrainConfig::default(),
        }
    }
}

impl TextModelConfig {
    /// Two layers of 128 cells each.
    pub fn uniform_128() -> Self {
        Self {
            recurrent_layers: vec![128, 128],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TextError> {
        if self.classes != 2 {
            return Err(TextError::InvalidConfig(format!("classes must be 2, got {}", self.classes)));
        }
        if self.recurrent_layers.is_empty() || self.recurrent_layers.contains(&0) {
            return Err(TextError::InvalidConfig("need at least one non-empty recurrent layer".into()));
        }
        if self.dense_layers.iter().any(|d| d.neurons == 0) {
            return Err(TextError::InvalidConfig("dense layers need at least one neuron".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TextError::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Stacked BiLSTM over the unmasked rows, then the dense stack on
/// `[forward_h(last) | backward_h(first)]` of the top layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TextNet {
    pub recurrent: Vec<BiLstm>,
    pub head: Mlp,
    pub dropout: f64,
    param_count: usize,
}

struct Trace {
    layers: Vec<BiLstmTrace>,
    /// Dropout masks on each layer's per-step outputs, except the top one.
    step_masks: Vec<Option<Vec<Vec<f64>>>>,
    summary_mask: Option<Vec<f64>>,
    head: crate::nn::MlpTrace,
}

impl TextNet {
    pub fn new(config: &TextModelConfig) -> Self {
        let mut layout = ParamLayout::new();
        let mut width = config.input_dim;
        let recurrent: Vec<BiLstm> = config
            .recurrent_layers
            .iter()
            .map(|&cells| {
                let layer = BiLstm::new(&mut layout, width, cells);
                width = 2 * cells;
                layer
            })
            .collect();
        let hidden: Vec<usize> = config.dense_layers.iter().map(|d| d.neurons).collect();
        let head = Mlp::new(&mut layout, width, &hidden, Head::Softmax, config.dropout);
        Self {
            recurrent,
            head,
            dropout: config.dropout,
            param_count: layout.len(),
        }
    }

    fn forward(&self, params: &[f64], input: &UtteranceTensorText, mut rng: Option<&mut ChaCha8Rng>) -> Trace {
        let mut xs = input.active_rows();
        let mut layers = Vec::with_capacity(self.recurrent.len());
        let mut step_masks = Vec::new();
        let top = self.recurrent.len() - 1;
        for (i, layer) in self.recurrent.iter().enumerate() {
            let trace = layer.run(params, &xs);
            if i < top {
                let masks = rng.as_deref_mut().map(|r| {
                    trace
                        .outputs
                        .iter()
                        .map(|o| dropout_mask(o.len(), self.dropout, r).unwrap_or_else(|| vec![1.0; o.len()]))
                        .collect::<Vec<_>>()
                });
                xs = match &masks {
                    Some(ms) => trace
                        .outputs
                        .iter()
                        .zip(ms)
                        .map(|(o, m)| o.iter().zip(m).map(|(a, b)| a * b).collect())
                        .collect(),
                    None => trace.outputs.clone(),
                };
                step_masks.push(masks);
            }
            layers.push(trace);
        }
        let mut summary = self.recurrent[top].summary(&layers[top]);
        let summary_mask = rng.as_deref_mut().and_then(|r| dropout_mask(summary.len(), self.dropout, r));
        if let Some(m) = &summary_mask {
            summary.iter_mut().zip(m).for_each(|(s, k)| *s *= k);
        }
        let head = self.head.forward(params, &summary, rng);
        Trace {
            layers,
            step_masks,
            summary_mask,
            head,
        }
    }

    /// Activations of the last dense hidden layer, used as the text block of
    /// early fusion.
    pub fn penultimate(&self, params: &[f64], input: &UtteranceTensorText) -> Vec<f64> {
        let trace = self.forward(params, input, None);
        trace.head.inputs.last().cloned().unwrap_or_default()
    }
}

impl Network for TextNet {
    type Input = UtteranceTensorText;

    fn param_count(&self) -> usize {
        self.param_count
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count];
        for layer in &self.recurrent {
            layer.init(&mut p, rng);
        }
        self.head.init(&mut p, rng);
        p
    }

    fn predict(&self, params: &[f64], input: &UtteranceTensorText) -> [f64; 2] {
        self.head.probs(&self.forward(params, input, None).head)
    }

    fn loss_and_grad(
        &self,
        params: &[f64],
        input: &UtteranceTensorText,
        label: usize,
        dropout: Option<&mut ChaCha8Rng>,
        grad: &mut [f64],
    ) -> f64 {
        let trace = self.forward(params, input, dropout);
        let (loss, mut d_summary) = self.head.loss_backward(params, &trace.head, label, grad);
        if let Some(m) = &trace.summary_mask {
            d_summary.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
        }
        let top = self.recurrent.len() - 1;
        let n = trace.layers[top].outputs.len();
        if n == 0 {
            return loss;
        }
        let h = self.recurrent[top].forward.hidden;
        let mut d_out = vec![vec![0.0; 2 * h]; n];
        d_out[n - 1][..h].copy_from_slice(&d_summary[..h]);
        d_out[0][h..].copy_from_slice(&d_summary[h..]);
        for i in (0..=top).rev() {
            let dx = self.recurrent[i].backward(params, &trace.layers[i], &d_out, grad);
            if i == 0 {
                break;
            }
            d_out = match &trace.step_masks[i - 1] {
                Some(ms) => dx
                    .into_iter()
                    .zip(ms)
                    .map(|(d, m)| d.iter().zip(m).map(|(a, b)| a * b).collect())
                    .collect(),
                None => dx,
            };
        }
        loss
    }
}

/// A trained text classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TextModel {
    pub config: TextModelConfig,
    pub net: TextNet,
    pub artifact: ModelArtifact,
}

impl TextModel {
    pub fn from_artifact(artifact: ModelArtifact) -> Result<Self, TextError> {
        let config: TextModelConfig = artifact.config(TEXT_MODEL)?;
        config.validate()?;
        let net = TextNet::new(&config);
        if net.param_count() != artifact.params.len() {
            return Err(TextError::InvalidConfig(format!(
                "artifact has {} weights, config needs {}",
                artifact.params.len(),
                net.param_count()
            )));
        }
        Ok(Self { config, net, artifact })
    }

    fn check_shape(&self, input: &UtteranceTensorText) -> Result<(), TextError> {
        let expected = [self.config.window, self.config.input_dim];
        if input.shape() != expected || input.values.len() != expected[0] * expected[1] || input.mask.len() != expected[0] {
            return Err(TextError::ShapeMismatch {
                expected,
                found: input.shape(),
            });
        }
        Ok(())
    }
}

pub fn train_text_model(
    train: &[(&UtteranceTensorText, usize)],
    validation: &[(&UtteranceTensorText, usize)],
    config: &TextModelConfig,
    seed: u64,
) -> Result<TextModel, TextError> {
    config.validate()?;
    let net = TextNet::new(config);
    let expected = [config.window, config.input_dim];
    for (x, _) in train.iter().chain(validation) {
        if x.shape() != expected {
            return Err(TextError::ShapeMismatch {
                expected,
                found: x.shape(),
            });
        }
    }
    let tr: Vec<Example<'_, UtteranceTensorText>> = train.iter().map(|&(input, label)| Example { input, label }).collect();
    let va: Vec<Example<'_, UtteranceTensorText>> =
        validation.iter().map(|&(input, label)| Example { input, label }).collect();
    let outcome = fit(&net, &tr, &va, &config.training, seed)?;
    let artifact = ModelArtifact::new(TEXT_MODEL, config, &config.training, seed, &outcome);
    Ok(TextModel {
        config: config.clone(),
        net,
        artifact,
    })
}

/// `(p_negative, p_positive)`.
pub fn predict_text(model: &TextModel, input: &UtteranceTensorText) -> Result<[f64; 2], TextError> {
    model.check_shape(input)?;
    Ok(model.net.predict(&model.artifact.params, input))
}

/// The dense penultimate representation used for early fusion.
pub fn text_features(model: &TextModel, input: &UtteranceTensorText) -> Result<Vec<f64>, TextError> {
    model.check_shape(input)?;
    Ok(model.net.penultimate(&model.artifact.params, input))
}
