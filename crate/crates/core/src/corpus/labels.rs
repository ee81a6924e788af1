use std::collections::{BTreeMap, BTreeSet};

use super::types::{AnnotationRecord, CorpusManifest, Polarity, ResolvedLabel, Subjectivity};
use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResolutionPolicy {
    /// Strict majority per facet; utterances without one stay unresolved.
    #[default]
    MajorityDiscardTies,
}

/// Strict-majority value, if any.
fn strict_majority<T: Ord + Copy>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    let mut total = 0;
    for v in values {
        *counts.entry(v).or_default() += 1;
        total += 1;
    }
    counts.into_iter().find(|(_, c)| 2 * c > total).map(|(v, _)| v)
}

fn resolve_one(records: &[&AnnotationRecord]) -> Option<ResolvedLabel> {
    let subjectivity = strict_majority(records.iter().map(|r| r.subjectivity))?;
    let polarity = match subjectivity {
        Subjectivity::Objective => None,
        Subjectivity::Subjective => strict_majority(records.iter().filter_map(|r| r.effective_polarity())),
    };
    Some(ResolvedLabel { subjectivity, polarity })
}

/// Resolves every annotated utterance. Utterances without annotations stay
/// unlabeled; utterances without a subjectivity majority are listed in
/// `unresolved`. Subjective utterances with a polarity tie keep
/// `polarity: None` and never reach classifier training.
pub fn resolve_labels(manifest: &CorpusManifest, policy: ResolutionPolicy) -> Result<CorpusManifest, CorpusError> {
    let annotated: BTreeSet<&str> = manifest.annotations.iter().map(|a| a.utterance_id.as_str()).collect();
    let ids: Vec<String> = manifest
        .utterances
        .iter()
        .filter(|u| annotated.contains(u.utterance_id.as_str()))
        .map(|u| u.utterance_id.clone())
        .collect();
    resolve_labels_for(manifest, policy, &ids)
}

/// Resolves exactly the listed utterances; each must carry annotations.
pub fn resolve_labels_for(
    manifest: &CorpusManifest,
    policy: ResolutionPolicy,
    utterance_ids: &[String],
) -> Result<CorpusManifest, CorpusError> {
    let ResolutionPolicy::MajorityDiscardTies = policy;
    let mut by_utterance: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in &manifest.annotations {
        by_utterance.entry(&a.utterance_id).or_default().push(a);
    }

    let mut resolved = BTreeMap::new();
    let mut unresolved = BTreeSet::new();
    for id in utterance_ids {
        let records = by_utterance
            .get(id.as_str())
            .ok_or_else(|| CorpusError::NoAnnotations { utterance_id: id.clone() })?;
        match resolve_one(records) {
            Some(label) => {
                if label.subjectivity == Subjectivity::Subjective {
                    let empty = manifest
                        .utterance(id)
                        .is_none_or(|u| u.transcript.trim().is_empty());
                    if empty {
                        return Err(CorpusError::EmptySubjectiveTranscript { utterance_id: id.clone() });
                    }
                }
                resolved.insert(id.clone(), label);
            }
            None => {
                unresolved.insert(id.clone());
            }
        }
    }

    let mut out = manifest.clone();
    out.resolved_labels = resolved;
    out.unresolved = unresolved.into_iter().collect();
    Ok(out)
}

/// Drops every utterance not resolved as subjective, together with the
/// annotations and labels that referenced it. Videos are kept.
pub fn filter_subjective(manifest: &CorpusManifest) -> CorpusManifest {
    let keep: BTreeSet<&str> = manifest
        .resolved_labels
        .iter()
        .filter(|(_, l)| l.subjectivity == Subjectivity::Subjective)
        .map(|(id, _)| id.as_str())
        .collect();
    let mut out = manifest.clone();
    out.utterances.retain(|u| keep.contains(u.utterance_id.as_str()));
    out.annotations.retain(|a| keep.contains(a.utterance_id.as_str()));
    out.resolved_labels.retain(|id, _| keep.contains(id.as_str()));
    out.unresolved.clear();
    out
}

impl ResolvedLabel {
    pub fn is_neutral(&self) -> bool {
        self.polarity == Some(Polarity::Neutral)
    }
}
