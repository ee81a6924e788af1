//! Acoustic pipeline: framing at 40 frames per second, per-frame low-level
//! descriptors, statistical functionals, per-speaker z-standardization and
//! the MLP classifier.

mod functionals;
mod lld;
mod model;
mod signal;
mod zscore;

pub use functionals::{apply_functionals, quantile, series_functionals, FunctionalSet, FunctionalVector, FUNCTIONAL_NAMES};
pub use lld::{
    dct_matrix, descriptor_names, extract_llds, frame_signal, hann, hz_to_mel, mel_filterbank, mel_to_hz,
    spectral_flatness, FrameMatrix, LldExtractor, LldMatrix, MEL_BANDS, MFCC_COUNT, PITCH, VOICING,
};
pub use model::{predict_audio, train_audio_mlp, AudioModel, AudioModelConfig, AUDIO_MODEL};
pub use signal::{encode_wav, read_wav, write_wav, AudioSignal, SUPPORTED_RATES};
pub use zscore::{
    apply_speaker_stats, fit_speaker_stats, load_speaker_stats, save_speaker_stats, speaker_zstandardize,
    SpeakerStats,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::nn::TrainError;

pub const AUDIO_PIPELINE_VERSION: &str = "audio-1";

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("sample rate {0} Hz is not supported (8000, 16000, 44100, 48000)")]
    UnsupportedRate(u32),
    #[error("signal contains non-finite samples")]
    NonFinite,
    #[error("signal of {samples} samples is shorter than one {frame_len}-sample frame")]
    TooShort { samples: usize, frame_len: usize },
    #[error("no frames to summarize")]
    NoFrames,
    #[error("no voiced frames left after gating")]
    EmptyAfterGating,
    #[error("utterance {utterance_id} has no speaker")]
    UnknownSpeaker { utterance_id: String },
    #[error("no normalization statistics for speaker {speaker_id}")]
    MissingSpeakerStats { speaker_id: String },
    #[error("feature vector has {found} values, expected {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid audio config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioFeatureConfig {
    /// Seconds.
    pub frame_len: f64,
    /// Seconds; 0.025 gives 40 descriptor frames per second.
    pub hop: f64,
    pub voicing_threshold: f64,
    pub voiced_gate: bool,
    pub functionals: FunctionalSet,
}

impl Default for AudioFeatureConfig {
    fn default() -> Self {
        Self {
            frame_len: 0.050,
            hop: 0.025,
            voicing_threshold: 0.45,
            voiced_gate: false,
            functionals: FunctionalSet::Full,
        }
    }
}

impl AudioFeatureConfig {
    pub fn layout(&self) -> Vec<String> {
        descriptor_names()
            .iter()
            .flat_map(|d| self.functionals.names().iter().map(move |f| format!("{d}__{f}")))
            .collect()
    }

    pub fn total_dim(&self) -> usize {
        descriptor_names().len() * self.functionals.names().len()
    }
}

/// Framing, descriptors and functionals for one utterance's samples.
pub fn extract_functionals(signal: &AudioSignal, config: &AudioFeatureConfig) -> Result<FunctionalVector, AudioError> {
    let frames = frame_signal(signal, config.frame_len, config.hop)?;
    let llds = extract_llds(&frames, config.voicing_threshold)?;
    apply_functionals(&llds, config.voiced_gate, config.voicing_threshold, config.functionals)
}
