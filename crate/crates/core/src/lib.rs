//! Utterance-level multimodal sentiment analysis.
//!
//! The crate covers the path from an annotated video corpus to evaluation
//! tables: corpus ingestion and speaker-independent splits, per-modality
//! feature pipelines (text, audio, visual), unimodal classifiers, early and
//! late fusion over any modality subset, and metric reporting. Synthetic
//! corpus generators make every stage testable without the original data.

pub mod artifact;
pub mod audio;
pub mod cache;
pub mod corpus;
pub mod evaluation;
pub mod features;
pub mod fusion;
pub mod nn;
pub mod text;
pub mod visual;
pub mod synth;
