use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use polyfuse_core::corpus::{
    compute_agreement, render_manifest, AgreementFacet, AnnotationRecord, CorpusError, CorpusManifest,
};
use polyfuse_core::evaluation::round_half_up;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid annotation: {0}")]
    Validation(String),
    #[error("unknown utterance {0}")]
    UnknownUtterance(String),
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("annotation log {}, line {line}: {message}", path.display())]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Done,
}

/// Where the UI fetches the clip for a task. `start`/`end` locate the
/// utterance inside the parent video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRefs {
    pub audio: String,
    pub video: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub utterance_id: String,
    pub media: ClipRefs,
    pub transcript: String,
    pub annotator_id: String,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub utterance_id: String,
    pub annotator_id: String,
    /// True when an earlier record by the same annotator was overwritten.
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FacetAgreement {
    Computable { percentage: f64 },
    NotYetComputable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSnapshot {
    pub polarity: FacetAgreement,
    pub subjectivity: FacetAgreement,
    pub gestures: FacetAgreement,
    pub records: usize,
    pub utterances: usize,
    /// Completed utterances per registered annotator.
    pub completed: BTreeMap<String, usize>,
}

type Key = (String, String);

struct State {
    records: BTreeMap<Key, AnnotationRecord>,
    log: File,
}

/// Annotation state for one corpus. Every accepted record is appended to a
/// JSON-lines log before it becomes visible; reopening replays the log with
/// last-write-wins per (utterance, annotator).
pub struct AnnotationStore {
    base: CorpusManifest,
    utterance_ids: BTreeSet<String>,
    annotators: BTreeSet<String>,
    log_path: PathBuf,
    state: Mutex<State>,
}

fn key(r: &AnnotationRecord) -> Key {
    (r.utterance_id.clone(), r.annotator_id.clone())
}

impl AnnotationStore {
    /// Annotators already present in the manifest are registered as well as
    /// those passed in.
    pub fn open(
        manifest: CorpusManifest,
        annotators: impl IntoIterator<Item = String>,
        log_path: &Path,
    ) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io {
            path: log_path.to_path_buf(),
            source,
        };
        let utterance_ids: BTreeSet<String> = manifest.utterances.iter().map(|u| u.utterance_id.clone()).collect();
        let mut registered: BTreeSet<String> = annotators.into_iter().collect();
        registered.extend(manifest.annotations.iter().map(|a| a.annotator_id.clone()));

        let mut records: BTreeMap<Key, AnnotationRecord> =
            manifest.annotations.iter().map(|a| (key(a), a.clone())).collect();
        let mut keep_bytes = 0u64;
        let mut needs_newline = false;
        if log_path.exists() {
            let text = std::fs::read(log_path).map_err(io)?;
            let text = String::from_utf8_lossy(&text);
            for (i, line) in text.split_inclusive('\n').enumerate() {
                let complete = line.ends_with('\n');
                let corrupt = |message: String| StoreError::CorruptLog {
                    path: log_path.to_path_buf(),
                    line: i + 1,
                    message,
                };
                if line.trim().is_empty() {
                    keep_bytes += line.len() as u64;
                    continue;
                }
                let mut record: AnnotationRecord = match serde_json::from_str(line) {
                    Ok(r) => r,
                    // a torn final write from a crash; dropped from the log
                    Err(e) if !complete => {
                        log::warn!("discarding incomplete last line of {}: {e}", log_path.display());
                        break;
                    }
                    Err(e) => return Err(corrupt(e.to_string())),
                };
                if !utterance_ids.contains(&record.utterance_id) {
                    return Err(corrupt(format!("unknown utterance {}", record.utterance_id)));
                }
                keep_bytes += line.len() as u64;
                needs_newline = !complete;
                record.normalize();
                registered.insert(record.annotator_id.clone());
                records.insert(key(&record), record);
            }
        }
        if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut log = OpenOptions::new().create(true).append(true).open(log_path).map_err(io)?;
        if log.metadata().map_err(io)?.len() > keep_bytes {
            log.set_len(keep_bytes).map_err(io)?;
        }
        if needs_newline {
            log.write_all(b"\n").map_err(io)?;
        }
        Ok(Self {
            base: manifest,
            utterance_ids,
            annotators: registered,
            log_path: log_path.to_path_buf(),
            state: Mutex::new(State { records, log }),
        })
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.base
    }

    pub fn annotators(&self) -> &BTreeSet<String> {
        &self.annotators
    }

    fn check_annotator(&self, annotator_id: &str) -> Result<(), StoreError> {
        if self.annotators.contains(annotator_id) {
            Ok(())
        } else {
            Err(StoreError::UnknownAnnotator(annotator_id.into()))
        }
    }

    /// Lowest-id utterance the annotator has not labelled yet.
    pub fn next_task(&self, annotator_id: &str) -> Result<Option<AnnotationTask>, StoreError> {
        self.check_annotator(annotator_id)?;
        let state = self.state.lock().expect("store lock");
        let next = self
            .utterance_ids
            .iter()
            .find(|id| !state.records.contains_key(&((*id).clone(), annotator_id.to_string())));
        Ok(next.map(|id| {
            let u = self.base.utterance(id).expect("id taken from the manifest");
            AnnotationTask {
                utterance_id: id.clone(),
                media: ClipRefs {
                    audio: format!("/api/media/{id}.wav"),
                    video: format!("/api/media/{id}.mp4"),
                    start: u.start,
                    end: u.end,
                },
                transcript: u.transcript.clone(),
                annotator_id: annotator_id.into(),
                status: TaskStatus::Pending,
            }
        }))
    }

    /// Parses and stores a record given as JSON.
    pub fn submit_json(&self, body: &[u8]) -> Result<SubmitAck, StoreError> {
        let record: AnnotationRecord =
            serde_json::from_slice(body).map_err(|e| StoreError::Validation(e.to_string()))?;
        self.submit(record)
    }

    pub fn submit(&self, mut record: AnnotationRecord) -> Result<SubmitAck, StoreError> {
        if !self.utterance_ids.contains(&record.utterance_id) {
            return Err(StoreError::UnknownUtterance(record.utterance_id));
        }
        self.check_annotator(&record.annotator_id)?;
        record.normalize();
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');

        let mut state = self.state.lock().expect("store lock");
        let io = |source| StoreError::Io {
            path: self.log_path.clone(),
            source,
        };
        state.log.write_all(line.as_bytes()).map_err(io)?;
        state.log.sync_data().map_err(io)?;
        let ack = SubmitAck {
            utterance_id: record.utterance_id.clone(),
            annotator_id: record.annotator_id.clone(),
            replaced: false,
        };
        let replaced = state.records.insert(key(&record), record).is_some();
        Ok(SubmitAck { replaced, ..ack })
    }

    /// Current records ordered by (utterance, annotator).
    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.state.lock().expect("store lock").records.values().cloned().collect()
    }

    pub fn status(&self, utterance_id: &str, annotator_id: &str) -> TaskStatus {
        let state = self.state.lock().expect("store lock");
        if state.records.contains_key(&(utterance_id.to_string(), annotator_id.to_string())) {
            TaskStatus::Done
        } else {
            TaskStatus::Pending
        }
    }

    pub fn agreement(&self) -> AgreementSnapshot {
        let records = self.records();
        let facet = |f| match compute_agreement(&records, f) {
            Ok(p) => FacetAgreement::Computable {
                percentage: round_half_up(p, 2).parse().expect("formatted number"),
            },
            Err(CorpusError::InsufficientOverlap) => FacetAgreement::NotYetComputable {
                reason: "InsufficientOverlap".into(),
            },
            Err(e) => FacetAgreement::NotYetComputable { reason: e.to_string() },
        };
        let mut completed: BTreeMap<String, usize> = self.annotators.iter().map(|a| (a.clone(), 0)).collect();
        for r in &records {
            *completed.entry(r.annotator_id.clone()).or_default() += 1;
        }
        AgreementSnapshot {
            polarity: facet(AgreementFacet::Polarity),
            subjectivity: facet(AgreementFacet::Subjectivity),
            gestures: facet(AgreementFacet::Gestures),
            records: records.len(),
            utterances: self.utterance_ids.len(),
            completed,
        }
    }

    /// The base manifest with its annotation section replaced by the current
    /// records, in canonical manifest form.
    pub fn export(&self) -> String {
        let mut manifest = self.base.clone();
        manifest.annotations = self.records();
        manifest.resolved_labels.clear();
        manifest.unresolved.clear();
        render_manifest(&manifest)
    }
}
