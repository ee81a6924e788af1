use std::collections::BTreeMap;

use super::types::AnnotationRecord;
use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementFacet {
    Polarity,
    Subjectivity,
    Gestures,
}

impl AgreementFacet {
    pub const ALL: [AgreementFacet; 3] = [AgreementFacet::Polarity, AgreementFacet::Subjectivity, AgreementFacet::Gestures];

    fn agrees(self, a: &AnnotationRecord, b: &AnnotationRecord) -> bool {
        match self {
            AgreementFacet::Polarity => a.effective_polarity() == b.effective_polarity(),
            AgreementFacet::Subjectivity => a.subjectivity == b.subjectivity,
            AgreementFacet::Gestures => {
                let mut x = a.gestures.clone();
                let mut y = b.gestures.clone();
                x.sort();
                x.dedup();
                y.sort();
                y.dedup();
                x == y
            }
        }
    }
}

/// Mean pairwise percent agreement over utterances with at least two
/// annotations. For each such utterance the score is agreeing pairs over all
/// annotator pairs.
pub fn compute_agreement(annotations: &[AnnotationRecord], facet: AgreementFacet) -> Result<f64, CorpusError> {
    let mut by_utterance: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in annotations {
        by_utterance.entry(&a.utterance_id).or_default().push(a);
    }
    let mut total = 0.0;
    let mut items = 0usize;
    for records in by_utterance.values().filter(|r| r.len() >= 2) {
        let mut pairs = 0usize;
        let mut agreeing = 0usize;
        for i in 0..records.len() {
            for j in i + 1..records.len() {
                pairs += 1;
                if facet.agrees(records[i], records[j]) {
                    agreeing += 1;
                }
            }
        }
        total += agreeing as f64 / pairs as f64;
        items += 1;
    }
    if items == 0 {
        return Err(CorpusError::InsufficientOverlap);
    }
    Ok(100.0 * total / items as f64)
}

/// Two-decimal percentage, e.g. `89.23%`.
pub fn format_percentage(value: f64) -> String {
    format!("{}%", crate::evaluation::round_half_up(value, 2))
}
