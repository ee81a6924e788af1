use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Manifest format understood by this version of the toolkit.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_band: Option<String>,
}

/// One source video with a single on-screen speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub speaker_id: String,
    /// Relative to the media root.
    pub audio_path: PathBuf,
    pub video_path: PathBuf,
    /// Seconds.
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_meta: Option<SpeakerMeta>,
}

/// A time-bounded spoken segment of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    pub video_id: String,
    pub start: f64,
    pub end: f64,
    pub transcript: String,
}

impl Utterance {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn tokens(&self) -> Vec<String> {
        crate::text::tokenize(&self.transcript)
    }
}

/// Sentiment polarity as annotated: -1, 0 or +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub fn from_int(value: i64) -> Option<Self> {
        match value {
            -1 => Some(Polarity::Negative),
            0 => Some(Polarity::Neutral),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn as_int(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Neutral => 0,
            Polarity::Positive => 1,
        }
    }
}

impl Serialize for Polarity {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_i8(self.as_int())
    }
}

impl<'de> Deserialize<'de> for Polarity {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = i64::deserialize(deserializer)?;
        Polarity::from_int(raw).ok_or_else(|| {
            serde::de::Error::custom(format!("polarity must be one of -1, 0, 1 (got {raw})"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subjectivity {
    Subjective,
    Objective,
}

/// Guideline under which an utterance was judged subjective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectivityRule {
    ExplicitCriticism,
    ThirdPersonOpinion,
    ImplicitOpinion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gesture {
    Smile,
    Frown,
    HeadNod,
    HeadShake,
}

impl Gesture {
    pub const ALL: [Gesture; 4] = [Gesture::Smile, Gesture::Frown, Gesture::HeadNod, Gesture::HeadShake];
}

/// One annotator's judgment of one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub utterance_id: String,
    pub annotator_id: String,
    pub polarity: Polarity,
    pub subjectivity: Subjectivity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjectivity_rule: Option<SubjectivityRule>,
    /// Stored as a set; serialized in canonical order.
    #[serde(default, with = "gesture_set")]
    pub gestures: Vec<Gesture>,
}

impl AnnotationRecord {
    /// Polarity as it participates in agreement and resolution: objective
    /// judgments carry none.
    pub fn effective_polarity(&self) -> Option<Polarity> {
        match self.subjectivity {
            Subjectivity::Subjective => Some(self.polarity),
            Subjectivity::Objective => None,
        }
    }

    pub fn normalize(&mut self) {
        self.gestures.sort();
        self.gestures.dedup();
    }
}

mod gesture_set {
    use super::Gesture;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(gestures: &[Gesture], serializer: S) -> Result<S::Ok, S::Error> {
        let mut sorted = gestures.to_vec();
        sorted.sort();
        sorted.dedup();
        sorted.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<Gesture>, D::Error> {
        let mut gestures = Vec::<Gesture>::deserialize(deserializer)?;
        gestures.sort();
        gestures.dedup();
        Ok(gestures)
    }
}

/// Outcome of label resolution for one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedLabel {
    pub subjectivity: Subjectivity,
    /// `None` when the utterance is objective or annotators had no strict
    /// polarity majority.
    pub polarity: Option<Polarity>,
}

impl ResolvedLabel {
    /// Binary class usable for classifier training: `Some(true)` positive,
    /// `Some(false)` negative.
    pub fn training_class(&self) -> Option<bool> {
        match (self.subjectivity, self.polarity) {
            (Subjectivity::Subjective, Some(Polarity::Positive)) => Some(true),
            (Subjectivity::Subjective, Some(Polarity::Negative)) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub videos: Vec<VideoRecord>,
    pub utterances: Vec<Utterance>,
    pub annotations: Vec<AnnotationRecord>,
    pub resolved_labels: BTreeMap<String, ResolvedLabel>,
    /// Utterances whose annotations produced no majority.
    pub unresolved: Vec<String>,
    /// Directory that media paths are relative to.
    pub media_root: PathBuf,
}

impl CorpusManifest {
    pub fn new() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            ..Default::default()
        }
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn utterance(&self, utterance_id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.utterance_id == utterance_id)
    }

    /// utterance_id -> speaker_id for every utterance whose video is known.
    pub fn speaker_map(&self) -> BTreeMap<String, String> {
        let videos: BTreeMap<&str, &str> = self
            .videos
            .iter()
            .map(|v| (v.video_id.as_str(), v.speaker_id.as_str()))
            .collect();
        self.utterances
            .iter()
            .filter_map(|u| {
                videos
                    .get(u.video_id.as_str())
                    .map(|s| (u.utterance_id.clone(), s.to_string()))
            })
            .collect()
    }

    /// Utterances with a binary (positive/negative) resolved label, as
    /// utterance_id -> is_positive.
    pub fn binary_labels(&self) -> BTreeMap<String, bool> {
        self.resolved_labels
            .iter()
            .filter_map(|(id, label)| label.training_class().map(|c| (id.clone(), c)))
            .collect()
    }

    pub fn resolve_media(&self, relative: &std::path::Path) -> PathBuf {
        if relative.is_absolute() {
            relative.to_path_buf()
        } else {
            self.media_root.join(relative)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const DEFAULT: SplitRatios = SplitRatios {
        train: 0.6,
        validation: 0.1,
        test: 0.3,
    };

    pub fn get(&self, split: SplitName) -> f64 {
        match split {
            SplitName::Train => self.train,
            SplitName::Validation => self.validation,
            SplitName::Test => self.test,
        }
    }

    pub fn is_valid(&self) -> bool {
        let all = [self.train, self.validation, self.test];
        all.iter().all(|r| r.is_finite() && *r >= 0.0) && ((all.iter().sum::<f64>()) - 1.0).abs() < 1e-9
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Speaker-exclusive train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub split: BTreeMap<String, SplitName>,
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Realized utterance fractions, reported next to the targets.
    pub realized: SplitRatios,
}

impl SplitAssignment {
    pub fn members(&self, which: SplitName) -> Vec<&str> {
        self.split
            .iter()
            .filter(|(_, s)| **s == which)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn count(&self, which: SplitName) -> usize {
        self.split.values().filter(|s| **s == which).count()
    }

    /// Stable content hash used to tie artifacts to the split they came from.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (id, split) in &self.split {
            hasher.update(id.as_bytes());
            hasher.update([0u8]);
            hasher.update(split.to_string().as_bytes());
            hasher.update(*b"\n");
        }
        hex::encode(&hasher.finalize()[..16])
    }
}
