use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::types::{CorpusManifest, Polarity, Subjectivity};

/// Corpus summary in the row layout of the dataset statistics table, plus a
/// few bookkeeping counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatisticsReport {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
    pub subjective: usize,
    pub objective: usize,
    pub unique_words: usize,
    pub speakers: usize,
    pub videos: usize,
    pub utterances: usize,
    pub unresolved: usize,
    /// Utterances carrying a record from every annotator seen in the corpus.
    pub fully_annotated: usize,
    pub annotators: usize,
}

pub fn compute_statistics(manifest: &CorpusManifest) -> StatisticsReport {
    let mut report = StatisticsReport {
        videos: manifest.videos.len(),
        utterances: manifest.utterances.len(),
        unresolved: manifest.unresolved.len(),
        ..Default::default()
    };
    for label in manifest.resolved_labels.values() {
        match label.subjectivity {
            Subjectivity::Subjective => {
                report.subjective += 1;
                match label.polarity {
                    Some(Polarity::Positive) => report.positive += 1,
                    Some(Polarity::Negative) => report.negative += 1,
                    Some(Polarity::Neutral) => report.neutral += 1,
                    None => {}
                }
            }
            Subjectivity::Objective => report.objective += 1,
        }
    }
    let vocabulary: BTreeSet<String> = manifest.utterances.iter().flat_map(|u| u.tokens()).collect();
    report.unique_words = vocabulary.len();
    report.speakers = manifest
        .videos
        .iter()
        .map(|v| v.speaker_id.as_str())
        .collect::<BTreeSet<_>>()
        .len();

    let annotators: BTreeSet<&str> = manifest.annotations.iter().map(|a| a.annotator_id.as_str()).collect();
    report.annotators = annotators.len();
    let mut per_utterance: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for a in &manifest.annotations {
        per_utterance.entry(&a.utterance_id).or_default().insert(&a.annotator_id);
    }
    report.fully_annotated = if annotators.is_empty() {
        0
    } else {
        per_utterance.values().filter(|s| s.len() == annotators.len()).count()
    };
    report
}

impl StatisticsReport {
    /// Plain-text two-column table.
    pub fn render_table(&self) -> String {
        let rows = [
            ("Total number of positive segmented", self.positive),
            ("Total number of negative segmented", self.negative),
            ("Total number of subjective", self.subjective),
            ("Total number of objective", self.objective),
            ("Total number of unique words in the dataset", self.unique_words),
            ("Total number of speakers", self.speakers),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (label, value) in rows {
            out.push_str(&format!("{label:<width$} | {value}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("statistics serialize")
    }
}
