//! Visual pipeline: decoding, clip sampling and the 3D convolutional
//! classifier.

mod decode;
mod model;
mod sample;

pub use decode::{write_pfv, AutoDecoder, DecodedVideo, DecoderIdentity, PfvDecoder, VideoDecoder, Y4mDecoder};
pub use model::{
    build_visual_model, layer_shapes, predict_visual, train_visual_model, visual_features, LayerSpec, VisualModel,
    VisualModelConfig, VisualNet, VISUAL_MODEL,
};
pub use sample::{frame_timestamps, sample_decoded, sample_frames};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::nn::{TrainError, Volume};

pub const VISUAL_PIPELINE_VERSION: &str = "visual-1";

#[derive(Debug, Error)]
pub enum VisualError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {message}")]
    DecodeFailure { path: PathBuf, message: String },
    #[error("window [{start}, {end}) is outside the {duration} s video")]
    WindowOutOfRange { start: f64, end: f64, duration: f64 },
    #[error("layer {layer} cannot consume a {input:?} volume")]
    ShapeUnderflow { layer: usize, input: [usize; 4] },
    #[error("clip has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { expected: [usize; 4], found: [usize; 4] },
    #[error("invalid visual config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// `T × H × W × 3` clip, channels last, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTensor {
    pub dims: [usize; 4],
    pub values: Vec<f32>,
}

impl FrameTensor {
    pub fn zeros(shape: [usize; 3]) -> Self {
        let dims = [shape[0], shape[1], shape[2], 3];
        Self {
            dims,
            values: vec![0.0; dims.iter().product()],
        }
    }

    pub fn frame_mean(&self, t: usize) -> f64 {
        let n = self.dims[1] * self.dims[2] * 3;
        self.values[t * n..(t + 1) * n].iter().map(|&v| v as f64).sum::<f64>() / n as f64
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            dims: self.dims,
            data: self.values.iter().map(|&v| v as f64).collect(),
        }
    }
}
