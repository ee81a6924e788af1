use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FrameTensor, VisualError};
use crate::artifact::ModelArtifact;
use crate::nn::{fit, Conv3d, Example, Head, MaxPool3d, Mlp, MlpTrace, Network, Padding, ParamLayout, TrainConfig, Volume};

pub const VISUAL_MODEL: &str = "visual_cnn3d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3d { filters: usize, kernel: [usize; 3] },
    MaxPool3d { pool: [usize; 3] },
    Dense { units: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Conv,
    Pool,
    Dense,
}

impl LayerSpec {
    fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv3d { .. } => LayerKind::Conv,
            LayerSpec::MaxPool3d { .. } => LayerKind::Pool,
            LayerSpec::Dense { .. } => LayerKind::Dense,
        }
    }
}

const TABLE_ORDER: [LayerKind; 10] = [
    LayerKind::Conv,
    LayerKind::Conv,
    LayerKind::Pool,
    LayerKind::Conv,
    LayerKind::Pool,
    LayerKind::Conv,
    LayerKind::Pool,
    LayerKind::Dense,
    LayerKind::Dense,
    LayerKind::Dense,
];

/// Nine-layer 3D-CNN over `T × H × W × 3` clips. Every convolution and
/// hidden dense layer is followed by a rectifier; the last dense layer is
/// the two-way softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualModelConfig {
    /// `(T, H, W)`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub padding: Padding,
    /// Applied to the hidden dense outputs.
    pub dropout: f64,
    pub training: TrainConfig,
}

impl Default for VisualModelConfig {
    fn default() -> Self {
        Self::with_sizes([16, 64, 64], [16, 32, 64, 64], [5000, 500])
    }
}

impl VisualModelConfig {
    /// The standard layer ordering with custom filter counts and hidden
    /// dense widths.
    pub fn with_sizes(input: [usize; 3], filters: [usize; 4], dense: [usize; 2]) -> Self {
        let conv = |f| LayerSpec::Conv3d {
            filters: f,
            kernel: [2, 2, 2],
        };
        let pool = |p| LayerSpec::MaxPool3d { pool: p };
        Self {
            input,
            layers: vec![
                conv(filters[0]),
                conv(filters[1]),
                pool([1, 2, 2]),
                conv(filters[2]),
                pool([2, 2, 2]),
                conv(filters[3]),
                pool([1, 2, 2]),
                LayerSpec::Dense { units: dense[0] },
                LayerSpec::Dense { units: dense[1] },
                LayerSpec::Dense { units: 2 },
            ],
            padding: Padding::Valid,
            dropout: 0.0,
            training: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), VisualError> {
        let kinds: Vec<LayerKind> = self.layers.iter().map(LayerSpec::kind).collect();
        if kinds != TABLE_ORDER {
            return Err(VisualError::InvalidConfig(
                "layers must be conv, conv, pool, conv, pool, conv, pool, dense, dense, dense".into(),
            ));
        }
        if self.layers.last() != Some(&LayerSpec::Dense { units: 2 }) {
            return Err(VisualError::InvalidConfig("output layer must have 2 units".into()));
        }
        let zero = self.layers.iter().any(|l| match l {
            LayerSpec::Conv3d { filters, kernel } => *filters == 0 || kernel.contains(&0),
            LayerSpec::MaxPool3d { pool } => pool.contains(&0),
            LayerSpec::Dense { units } => *units == 0,
        });
        if zero || !(0.0..1.0).contains(&self.dropout) {
            return Err(VisualError::InvalidConfig("sizes must be positive and dropout in [0, 1)".into()));
        }
        layer_shapes(self).map(|_| ())
    }
}

/// Output shape after every layer: `[T, H, W, C]` through the convolutional
/// stack, `[units]` for dense layers. Pure arithmetic, independent of the
/// layer implementations.
pub fn layer_shapes(config: &VisualModelConfig) -> Result<Vec<Vec<usize>>, VisualError> {
    let [t, h, w] = config.input;
    let mut cur = [t, h, w, 3];
    let mut shapes = Vec::with_capacity(config.layers.len());
    for (i, layer) in config.layers.iter().enumerate() {
        let next: Vec<usize> = match *layer {
            LayerSpec::Conv3d { filters, kernel } => {
                let mut out = vec![0; 4];
                for a in 0..3 {
                    out[a] = match config.padding {
                        Padding::Valid => (cur[a] + 1).saturating_sub(kernel[a]),
                        Padding::Same => cur[a],
                    };
                }
                out[3] = filters;
                out
            }
            LayerSpec::MaxPool3d { pool } => vec![cur[0] / pool[0], cur[1] / pool[1], cur[2] / pool[2], cur[3]],
            LayerSpec::Dense { units } => vec![units],
        };
        if next.len() == 4 {
            if next[..3].contains(&0) {
                return Err(VisualError::ShapeUnderflow { layer: i, input: cur });
            }
            cur = [next[0], next[1], next[2], next[3]];
        }
        shapes.push(next);
    }
    Ok(shapes)
}

#[derive(Debug, Clone, PartialEq)]
enum Stage {
    Conv(Conv3d),
    Pool(MaxPool3d),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualNet {
    stages: Vec<Stage>,
    pub head: Mlp,
    pub input: [usize; 4],
    param_count: usize,
}

struct Trace {
    /// `acts[0]` is the clip; `acts[i + 1]` is stage `i`'s output.
    acts: Vec<Volume>,
    argmax: Vec<Option<Vec<usize>>>,
    head: MlpTrace,
}

impl VisualNet {
    pub fn new(config: &VisualModelConfig) -> Result<Self, VisualError> {
        config.validate()?;
        let mut layout = ParamLayout::new();
        let [t, h, w] = config.input;
        let input = [t, h, w, 3];
        let mut dims = input;
        let mut stages = Vec::new();
        let mut hidden = Vec::new();
        for layer in &config.layers {
            match *layer {
                LayerSpec::Conv3d { filters, kernel } => {
                    let conv = Conv3d::new(&mut layout, dims[3], filters, kernel, config.padding);
                    dims = conv.output_dims(dims).expect("checked by layer_shapes");
                    stages.push(Stage::Conv(conv));
                }
                LayerSpec::MaxPool3d { pool } => {
                    let p = MaxPool3d { kernel: pool };
                    dims = p.output_dims(dims).expect("checked by layer_shapes");
                    stages.push(Stage::Pool(p));
                }
                LayerSpec::Dense { units } => hidden.push(units),
            }
        }
        hidden.pop();
        let head = Mlp::new(&mut layout, dims.iter().product(), &hidden, Head::Softmax, config.dropout);
        Ok(Self {
            stages,
            head,
            input,
            param_count: layout.len(),
        })
    }

    fn run(&self, params: &[f64], clip: &FrameTensor, dropout: Option<&mut ChaCha8Rng>) -> Trace {
        let mut acts = vec![clip.to_volume()];
        let mut argmax = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let x = acts.last().expect("input present");
            let (y, am) = match stage {
                Stage::Conv(c) => {
                    let mut y = c.forward(params, x);
                    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
                    (y, None)
                }
                Stage::Pool(p) => {
                    let (y, am) = p.forward(x);
                    (y, Some(am))
                }
            };
            acts.push(y);
            argmax.push(am);
        }
        let flat = &acts.last().expect("stack output").data;
        let head = self.head.forward(params, flat, dropout);
        Trace { acts, argmax, head }
    }

    /// Shapes of every stage output for one forward pass.
    pub fn traced_shapes(&self, params: &[f64], clip: &FrameTensor) -> Vec<Vec<usize>> {
        let trace = self.run(params, clip, None);
        let mut shapes: Vec<Vec<usize>> = trace.acts[1..].iter().map(|v| v.dims.to_vec()).collect();
        for x in &trace.head.inputs[1..] {
            shapes.push(vec![x.len()]);
        }
        shapes.push(vec![trace.head.logits.len()]);
        shapes
    }

    /// Last hidden dense activation.
    pub fn penultimate(&self, params: &[f64], clip: &FrameTensor) -> Vec<f64> {
        let trace = self.run(params, clip, None);
        trace.head.inputs.last().cloned().unwrap_or_default()
    }
}

impl Network for VisualNet {
    type Input = FrameTensor;

    fn param_count(&self) -> usize {
        self.param_count
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count];
        for s in &self.stages {
            if let Stage::Conv(c) = s {
                c.init(&mut p, rng);
            }
        }
        self.head.init(&mut p, rng);
        p
    }

    fn predict(&self, params: &[f64], input: &FrameTensor) -> [f64; 2] {
        self.head.probs(&self.run(params, input, None).head)
    }

    fn loss_and_grad(
        &self,
        params: &[f64],
        input: &FrameTensor,
        label: usize,
        dropout: Option<&mut ChaCha8Rng>,
        grad: &mut [f64],
    ) -> f64 {
        let trace = self.run(params, input, dropout);
        let (loss, d_flat) = self.head.loss_backward(params, &trace.head, label, grad);
        let mut d = Volume {
            dims: trace.acts.last().expect("stack output").dims,
            data: d_flat,
        };
        for (i, stage) in self.stages.iter().enumerate().rev() {
            let x = &trace.acts[i];
            d = match stage {
                Stage::Pool(_) => MaxPool3d::backward(x.dims, trace.argmax[i].as_ref().expect("pool argmax"), &d),
                Stage::Conv(c) => {
                    let y = &trace.acts[i + 1];
                    for (g, &out) in d.data.iter_mut().zip(&y.data) {
                        if out <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    c.backward(params, x, &d, grad)
                }
            };
        }
        loss
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualModel {
    pub config: VisualModelConfig,
    pub net: VisualNet,
    pub artifact: ModelArtifact,
}

impl VisualModel {
    pub fn from_artifact(artifact: ModelArtifact) -> Result<Self, VisualError> {
        let config: VisualModelConfig = artifact.config(VISUAL_MODEL)?;
        let net = VisualNet::new(&config)?;
        if net.param_count() != artifact.params.len() {
            return Err(VisualError::InvalidConfig("artifact weights do not fit the config".into()));
        }
        Ok(Self { config, net, artifact })
    }

    pub fn check_input(&self, clip: &FrameTensor) -> Result<(), VisualError> {
        if clip.dims != self.net.input {
            return Err(VisualError::ShapeMismatch {
                expected: self.net.input,
                found: clip.dims,
            });
        }
        Ok(())
    }
}

/// Untrained network with freshly initialized weights.
pub fn build_visual_model(config: &VisualModelConfig, seed: u64) -> Result<VisualModel, VisualError> {
    use rand::SeedableRng;
    let net = VisualNet::new(config)?;
    let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
    let outcome = crate::nn::TrainOutcome {
        params,
        log: Vec::new(),
        best_epoch: 0,
        final_loss: f64::NAN,
    };
    let artifact = ModelArtifact::new(VISUAL_MODEL, config, &config.training, seed, &outcome);
    Ok(VisualModel {
        config: config.clone(),
        net,
        artifact,
    })
}

pub fn train_visual_model(
    train: &[(&FrameTensor, usize)],
    validation: &[(&FrameTensor, usize)],
    config: &VisualModelConfig,
    seed: u64,
) -> Result<VisualModel, VisualError> {
    let net = VisualNet::new(config)?;
    for (x, _) in train.iter().chain(validation) {
        if x.dims != net.input {
            return Err(VisualError::ShapeMismatch {
                expected: net.input,
                found: x.dims,
            });
        }
    }
    let tr: Vec<Example<'_, FrameTensor>> = train.iter().map(|&(input, label)| Example { input, label }).collect();
    let va: Vec<Example<'_, FrameTensor>> = validation.iter().map(|&(input, label)| Example { input, label }).collect();
    let outcome = fit(&net, &tr, &va, &config.training, seed)?;
    let artifact = ModelArtifact::new(VISUAL_MODEL, config, &config.training, seed, &outcome);
    Ok(VisualModel {
        config: config.clone(),
        net,
        artifact,
    })
}

pub fn predict_visual(model: &VisualModel, clip: &FrameTensor) -> Result<[f64; 2], VisualError> {
    model.check_input(clip)?;
    Ok(model.net.predict(&model.artifact.params, clip))
}

/// Penultimate dense activation, used as the clip's feature vector.
pub fn visual_features(model: &VisualModel, clip: &FrameTensor) -> Result<Vec<f64>, VisualError> {
    model.check_input(clip)?;
    Ok(model.net.penultimate(&model.artifact.params, clip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use rand::{Rng, SeedableRng};

    fn random_clip(dims: [usize; 3], rng: &mut ChaCha8Rng) -> FrameTensor {
        let mut c = FrameTensor::zeros(dims);
        c.values.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        c
    }

    #[test]
    fn default_shapes() {
        let shapes = layer_shapes(&VisualModelConfig::default()).unwrap();
        let time: Vec<usize> = shapes[..7].iter().map(|s| s[0]).collect();
        assert_eq!(time, vec![15, 14, 14, 13, 6, 5, 5]);
        assert_eq!(shapes[6], vec![5, 7, 7, 64]);
        assert_eq!(&shapes[7..], &[vec![5000], vec![500], vec![2]]);
    }

    #[test]
    fn same_padding_time_axis() {
        let mut config = VisualModelConfig::default();
        config.padding = Padding::Same;
        let shapes = layer_shapes(&config).unwrap();
        let time: Vec<usize> = [1, 2, 4, 6].iter().map(|&i| shapes[i][0]).collect();
        assert_eq!(time, vec![16, 16, 8, 8]);
    }

    #[test]
    fn tiny_input_underflows() {
        for padding in [Padding::Valid, Padding::Same] {
            let mut config = VisualModelConfig::with_sizes([2, 4, 4], [16, 32, 64, 64], [5000, 500]);
            config.padding = padding;
            assert!(matches!(layer_shapes(&config), Err(VisualError::ShapeUnderflow { .. })));
            assert!(matches!(VisualNet::new(&config), Err(VisualError::ShapeUnderflow { .. })));
        }
    }

    #[test]
    fn layer_order_is_enforced() {
        let mut config = VisualModelConfig::default();
        config.layers.swap(1, 2);
        assert!(matches!(config.validate(), Err(VisualError::InvalidConfig(_))));
        let mut config = VisualModelConfig::default();
        config.layers[9] = LayerSpec::Dense { units: 3 };
        assert!(config.validate().is_err());
    }

    #[test]
    fn forward_shapes_match_calculator() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (input, padding) in [([8, 16, 16], Padding::Valid), ([4, 8, 8], Padding::Same), ([8, 20, 18], Padding::Valid)] {
            let mut config = VisualModelConfig::with_sizes(input, [3, 4, 5, 6], [7, 5]);
            config.padding = padding;
            let net = VisualNet::new(&config).unwrap();
            let params = net.init_params(&mut rng);
            let clip = random_clip(input, &mut rng);
            assert_eq!(net.traced_shapes(&params, &clip), layer_shapes(&config).unwrap());
            let p = net.predict(&params, &clip);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            assert_eq!(net.penultimate(&params, &clip).len(), 5);
        }
    }

    #[test]
    fn gradient_check_tiny() {
        let mut config = VisualModelConfig::with_sizes([4, 8, 8], [2, 2, 2, 2], [6, 4]);
        config.padding = Padding::Same;
        let net = VisualNet::new(&config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // zero biases put zero-padded patches exactly on the rectifier kink
        let params: Vec<f64> = net.init_params(&mut rng).into_iter().map(|p| p + rng.gen_range(-0.1..0.1)).collect();
        let clip = random_clip([4, 8, 8], &mut rng);
        for label in [0, 1] {
            let c = gradient_check(&net, &params, &clip, label, None, 1e-6);
            assert!(c.max_relative_error < 1e-4, "{c:?}");
        }
    }

    fn small_config(input: [usize; 3]) -> VisualModelConfig {
        let mut config = VisualModelConfig::with_sizes(input, [4, 4, 4, 4], [16, 8]);
        config.padding = Padding::Same;
        config.training = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 8,
            epochs: 40,
            patience: 8,
            ..TrainConfig::default()
        };
        config
    }

    fn split(data: &[(FrameTensor, usize)], n: usize) -> (Vec<(&FrameTensor, usize)>, Vec<(&FrameTensor, usize)>) {
        let refs: Vec<_> = data.iter().map(|(x, y)| (x, *y)).collect();
        (refs[..n].to_vec(), refs[n..].to_vec())
    }

    fn accuracy(model: &VisualModel, data: &[(&FrameTensor, usize)]) -> f64 {
        let ok = data
            .iter()
            .filter(|(x, y)| {
                let p = predict_visual(model, x).unwrap();
                assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
                usize::from(p[1] > p[0]) == *y
            })
            .count();
        ok as f64 / data.len() as f64
    }

    #[test]
    fn dark_versus_bright() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = [4, 8, 8];
        let data: Vec<(FrameTensor, usize)> = (0..80)
            .map(|i| {
                let y = i % 2;
                let base = if y == 1 { 0.65 } else { 0.35 };
                let mut c = FrameTensor::zeros(dims);
                c.values.iter_mut().for_each(|v| *v = (base + rng.gen_range(-0.25..0.25)) as f32);
                (c, y)
            })
            .collect();
        let (tr, va) = split(&data, 50);
        let model = train_visual_model(&tr, &va, &small_config(dims), 7).unwrap();
        assert!(accuracy(&model, &va) >= 0.95);
        assert_eq!(visual_features(&model, va[0].0).unwrap().len(), 8);
        let reloaded = VisualModel::from_artifact(model.artifact.clone()).unwrap();
        assert_eq!(predict_visual(&reloaded, va[0].0).unwrap(), predict_visual(&model, va[0].0).unwrap());
        let wrong = FrameTensor::zeros([4, 8, 9]);
        assert!(matches!(predict_visual(&model, &wrong), Err(VisualError::ShapeMismatch { .. })));
    }

    #[test]
    fn ramp_direction_is_learned() {
        // both classes show the same frames; only their order differs
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dims = [8, 8, 8];
        let data: Vec<(FrameTensor, usize)> = (0..120)
            .map(|i| {
                let y = i % 2;
                let lo = rng.gen_range(0.0..0.3);
                let hi = rng.gen_range(0.7..1.0);
                let mut c = FrameTensor::zeros(dims);
                let per_frame = 8 * 8 * 3;
                for t in 0..8 {
                    let k = if y == 1 { t } else { 7 - t };
                    let level = lo + (hi - lo) * k as f64 / 7.0;
                    for v in &mut c.values[t * per_frame..(t + 1) * per_frame] {
                        *v = (level + rng.gen_range(-0.05..0.05)) as f32;
                    }
                }
                (c, y)
            })
            .collect();
        let (tr, va) = split(&data, 80);
        let model = train_visual_model(&tr, &va, &small_config(dims), 3).unwrap();
        assert!(accuracy(&model, &va) > 0.9);
    }
}
