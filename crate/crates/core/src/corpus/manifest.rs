use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{AnnotationRecord, CorpusManifest, Utterance, VideoRecord, FORMAT_VERSION};
use super::CorpusError;

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Video(VideoRecord),
    Utterance(Utterance),
    Annotation(AnnotationRecord),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
}

/// Whether validation requires referenced media files to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediaCheck {
    Require,
    Skip,
}

/// Reads and validates a JSON-lines manifest. Media paths resolve against
/// the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(&text, &root)?;
    validate_manifest(&manifest, MediaCheck::Require)?;
    Ok(manifest)
}

/// Parses manifest text without validating cross-record invariants.
pub fn parse_manifest(text: &str, media_root: &Path) -> Result<CorpusManifest, CorpusError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line_no, header_line) = lines.next().ok_or(CorpusError::MissingHeader)?;
    let header: serde_json::Value = serde_json::from_str(header_line).map_err(|e| CorpusError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let version = match header.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if header.get("kind").is_none_or(|k| k == "header") => v as u32,
        _ => return Err(CorpusError::MissingHeader),
    };
    if version != FORMAT_VERSION {
        return Err(CorpusError::SchemaVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }

    let mut manifest = CorpusManifest::new();
    manifest.media_root = media_root.to_path_buf();
    for (line, raw) in lines {
        let record: Record = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        match record {
            Record::Video(v) => manifest.videos.push(v),
            Record::Utterance(u) => manifest.utterances.push(u),
            Record::Annotation(mut a) => {
                a.normalize();
                manifest.annotations.push(a)
            }
        }
    }
    Ok(manifest)
}

/// Checks every manifest invariant, naming the first offending record.
pub fn validate_manifest(manifest: &CorpusManifest, media: MediaCheck) -> Result<(), CorpusError> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(CorpusError::SchemaVersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }

    let mut videos: BTreeMap<&str, &VideoRecord> = BTreeMap::new();
    for v in &manifest.videos {
        let record = format!("video {}", v.video_id);
        if v.video_id.is_empty() {
            return Err(CorpusError::InvalidRecord {
                record,
                reason: "empty video_id".into(),
            });
        }
        if v.speaker_id.is_empty() {
            return Err(CorpusError::InvalidRecord {
                record,
                reason: "empty speaker_id".into(),
            });
        }
        if !(v.duration.is_finite() && v.duration > 0.0) {
            return Err(CorpusError::InvalidRecord {
                record,
                reason: format!("duration must be positive, got {}", v.duration),
            });
        }
        if videos.insert(&v.video_id, v).is_some() {
            return Err(CorpusError::DuplicateId {
                kind: "video",
                id: v.video_id.clone(),
            });
        }
        if media == MediaCheck::Require {
            for rel in [&v.audio_path, &v.video_path] {
                let full = manifest.resolve_media(rel);
                if !full.is_file() {
                    return Err(CorpusError::MissingMedia {
                        video_id: v.video_id.clone(),
                        path: full,
                    });
                }
            }
        }
    }

    let mut per_video: BTreeMap<&str, Vec<&Utterance>> = BTreeMap::new();
    let mut utterance_ids = BTreeSet::new();
    for u in &manifest.utterances {
        let record = format!("utterance {}", u.utterance_id);
        let video = videos
            .get(u.video_id.as_str())
            .ok_or_else(|| CorpusError::DanglingReference {
                record: record.clone(),
                reference: format!("video {}", u.video_id),
            })?;
        let in_bounds = u.start.is_finite()
            && u.end.is_finite()
            && 0.0 <= u.start
            && u.start < u.end
            && u.end <= video.duration;
        if !in_bounds {
            return Err(CorpusError::InvalidRecord {
                record,
                reason: format!(
                    "segment [{}, {}) must satisfy 0 <= start < end <= {}",
                    u.start, u.end, video.duration
                ),
            });
        }
        if !utterance_ids.insert(u.utterance_id.as_str()) {
            return Err(CorpusError::DuplicateId {
                kind: "utterance",
                id: u.utterance_id.clone(),
            });
        }
        per_video.entry(&u.video_id).or_default().push(u);
    }
    for (video_id, mut segments) in per_video {
        segments.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.utterance_id.cmp(&b.utterance_id)));
        for pair in segments.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(CorpusError::OverlappingUtterances {
                    video_id: video_id.to_string(),
                    first: pair[0].utterance_id.clone(),
                    second: pair[1].utterance_id.clone(),
                });
            }
        }
    }

    let mut seen = BTreeSet::new();
    for a in &manifest.annotations {
        if !utterance_ids.contains(a.utterance_id.as_str()) {
            return Err(CorpusError::DanglingReference {
                record: format!("annotation by {}", a.annotator_id),
                reference: format!("utterance {}", a.utterance_id),
            });
        }
        if a.annotator_id.is_empty() {
            return Err(CorpusError::InvalidRecord {
                record: format!("annotation of {}", a.utterance_id),
                reason: "empty annotator_id".into(),
            });
        }
        if !seen.insert((a.utterance_id.as_str(), a.annotator_id.as_str())) {
            return Err(CorpusError::DuplicateAnnotation {
                utterance_id: a.utterance_id.clone(),
                annotator_id: a.annotator_id.clone(),
            });
        }
    }

    for id in manifest.resolved_labels.keys().chain(manifest.unresolved.iter()) {
        if !utterance_ids.contains(id.as_str()) {
            return Err(CorpusError::DanglingReference {
                record: "resolved label".into(),
                reference: format!("utterance {id}"),
            });
        }
    }
    Ok(())
}

/// Serializes a manifest deterministically: header, then videos, utterances
/// and annotations, each sorted by id.
pub fn render_manifest(manifest: &CorpusManifest) -> String {
    let mut videos: Vec<&VideoRecord> = manifest.videos.iter().collect();
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let mut utterances: Vec<&Utterance> = manifest.utterances.iter().collect();
    utterances.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let mut annotations: Vec<&AnnotationRecord> = manifest.annotations.iter().collect();
    annotations.sort_by(|a, b| {
        (a.utterance_id.as_str(), a.annotator_id.as_str()).cmp(&(b.utterance_id.as_str(), b.annotator_id.as_str()))
    });

    let mut out = String::new();
    let header = Header {
        format_version: manifest.format_version,
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    let records = videos
        .into_iter()
        .map(|v| Record::Video(v.clone()))
        .chain(utterances.into_iter().map(|u| Record::Utterance(u.clone())))
        .chain(annotations.into_iter().map(|a| Record::Annotation(a.clone())));
    for record in records {
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<(), CorpusError> {
    std::fs::write(path, render_manifest(manifest)).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}
