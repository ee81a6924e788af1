//! Text modality: tokenization, fixed-window embedding lookup, the stacked
//! bidirectional LSTM classifier and bag-of-words baselines.

mod bow;
mod embedding;
mod model;
mod tokenize;

pub use bow::{train_bow_baseline, BowKind, BowModel};
pub use embedding::{embed_sequence, EmbeddingTable, UtteranceTensorText, EMBEDDING_DIM, WINDOW};
pub use model::{
    predict_text, text_features, train_text_model, Activation, DenseSpec, TextModel, TextModelConfig, TextNet,
    TEXT_MODEL,
};
pub use tokenize::tokenize;

use std::path::PathBuf;

use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::nn::TrainError;

pub const TEXT_PIPELINE_VERSION: &str = "text-1";

#[derive(Debug, Error)]
pub enum TextError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },
    #[error("embedding for {token:?} has {found} values, expected {expected}")]
    WrongDimension { token: String, expected: usize, found: usize },
    #[error("embedding for {token:?} has non-finite values")]
    NonFiniteEmbedding { token: String },
    #[error("input shape {found:?} does not match the model's {expected:?}")]
    ShapeMismatch { expected: [usize; 2], found: [usize; 2] },
    #[error("invalid text model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}
