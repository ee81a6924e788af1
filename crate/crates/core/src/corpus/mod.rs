//! Corpus data model: manifest ingestion and validation, label resolution,
//! inter-annotator agreement, statistics and speaker-independent splits.

mod agreement;
mod labels;
mod manifest;
mod split;
mod stats;
mod types;

pub use agreement::{compute_agreement, format_percentage, AgreementFacet};
pub use labels::{filter_subjective, resolve_labels, resolve_labels_for, ResolutionPolicy};
pub use manifest::{load_manifest, parse_manifest, render_manifest, validate_manifest, write_manifest, MediaCheck};
pub use split::{check_speaker_exclusive, make_splits};
pub use stats::{compute_statistics, StatisticsReport};
pub use types::*;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest has no format_version header line")]
    MissingHeader,
    #[error("manifest format_version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("video {video_id}: media file {} does not exist", path.display())]
    MissingMedia { video_id: String, path: PathBuf },
    #[error("video {video_id}: utterances {first} and {second} overlap")]
    OverlappingUtterances {
        video_id: String,
        first: String,
        second: String,
    },
    #[error("{record} references unknown {reference}")]
    DanglingReference { record: String, reference: String },
    #[error("{record}: {reason}")]
    InvalidRecord { record: String, reason: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("annotator {annotator_id} annotated utterance {utterance_id} more than once")]
    DuplicateAnnotation {
        utterance_id: String,
        annotator_id: String,
    },
    #[error("utterance {utterance_id} has no annotations")]
    NoAnnotations { utterance_id: String },
    #[error("utterance {utterance_id} resolved as subjective but has an empty transcript")]
    EmptySubjectiveTranscript { utterance_id: String },
    #[error("no utterance has annotations from two or more annotators")]
    InsufficientOverlap,
    #[error("speaker-independent splitting needs at least 3 speakers, found {found}")]
    TooFewSpeakers { found: usize },
    #[error("split ratios must be non-negative and sum to 1")]
    InvalidRatios,
    #[error("speaker {speaker_id} appears in both {first} and {second}")]
    SpeakerLeakage {
        speaker_id: String,
        first: SplitName,
        second: SplitName,
    },
}
