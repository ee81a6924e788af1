//! Precision/recall/F-measure metrics, the speaker-independent evaluation
//! protocol and report rendering.

mod metrics;
mod protocol;
mod report;

pub use metrics::{
    compute_metrics, f_measure, round_half_up, AverageMetrics, ClassMetrics, ConfusionMatrix, MetricsEntry, Sentiment,
};
pub use protocol::{evaluate_artifacts, run_protocol, ProtocolConfig, ProtocolData, ProtocolOutcome};
pub use report::{render_report, Configuration, EvaluationReport, ReportEntry, ReportFormat, REPORT_SCHEMA_VERSION};

use thiserror::Error;

use crate::audio::AudioError;
use crate::corpus::{CorpusError, SplitName};
use crate::fusion::{FusionError, Modality};
use crate::text::TextError;
use crate::visual::VisualError;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("{predictions} predictions for {truth} labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("no predictions to evaluate")]
    EmptyInput,
    #[error("report lacks configurations: {}", missing.join(", "))]
    IncompleteReport { missing: Vec<String> },
    #[error("invalid configuration {0}")]
    BadConfiguration(String),
    #[error("unreadable report: {0}")]
    BadReport(String),
    #[error("speaker {speaker_id} appears in more than one split")]
    SpeakerLeakage { speaker_id: String },
    #[error("the {0} split has no labelled utterances")]
    EmptySplit(SplitName),
    #[error("no {} features for utterance {utterance_id}", modality.name())]
    MissingFeatures { modality: Modality, utterance_id: String },
    #[error("no trained model {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Corpus(CorpusError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}
