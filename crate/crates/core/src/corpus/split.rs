use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{CorpusManifest, SplitAssignment, SplitName, SplitRatios};
use super::CorpusError;

struct Speaker {
    utterances: Vec<String>,
}

fn objective(counts: &[f64; 3], targets: &[f64; 3]) -> f64 {
    counts.iter().zip(targets).map(|(c, t)| (c - t) * (c - t)).sum()
}

/// Speaker-exclusive split of every binary-labeled utterance.
///
/// Speakers are shuffled (after sorting by id, so file order does not
/// matter), assigned greedily to the split with the largest remaining
/// deficit, then refined by single moves and pairwise swaps that reduce the
/// squared deviation from the target utterance counts.
pub fn make_splits(manifest: &CorpusManifest, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment, CorpusError> {
    if !ratios.is_valid() {
        return Err(CorpusError::InvalidRatios);
    }
    let speaker_of = manifest.speaker_map();
    let mut grouped: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for id in manifest.binary_labels().into_keys() {
        if let Some(speaker) = speaker_of.get(&id) {
            grouped.entry(speaker.as_str()).or_default().push(id);
        }
    }
    if grouped.len() < 3 {
        return Err(CorpusError::TooFewSpeakers { found: grouped.len() });
    }
    let mut speakers: Vec<Speaker> = grouped.into_values().map(|utterances| Speaker { utterances }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    speakers.shuffle(&mut rng);

    let total: usize = speakers.iter().map(|s| s.utterances.len()).sum();
    let targets = [
        ratios.train * total as f64,
        ratios.validation * total as f64,
        ratios.test * total as f64,
    ];
    let required = [ratios.train > 0.0, ratios.validation > 0.0, ratios.test > 0.0];
    let mass: Vec<f64> = speakers.iter().map(|s| s.utterances.len() as f64).collect();

    let mut assign = vec![0usize; speakers.len()];
    let mut counts = [0.0f64; 3];
    for (i, m) in mass.iter().enumerate() {
        let mut best = 0;
        for k in 1..3 {
            if targets[k] - counts[k] > targets[best] - counts[best] {
                best = k;
            }
        }
        assign[i] = best;
        counts[best] += m;
    }

    let members = |assign: &[usize], k: usize| assign.iter().filter(|&&a| a == k).count();

    // every split with a positive ratio gets at least one speaker
    for k in 0..3 {
        if required[k] && members(&assign, k) == 0 {
            let donor = (0..3).max_by_key(|&d| (members(&assign, d), std::cmp::Reverse(d))).unwrap();
            let pick = (0..speakers.len())
                .filter(|&i| assign[i] == donor)
                .min_by(|&a, &b| mass[a].total_cmp(&mass[b]))
                .unwrap();
            counts[donor] -= mass[pick];
            counts[k] += mass[pick];
            assign[pick] = k;
        }
    }

    for _ in 0..10_000 {
        let current = objective(&counts, &targets);
        let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
        for i in 0..speakers.len() {
            let from = assign[i];
            if required[from] && members(&assign, from) == 1 {
                continue;
            }
            for to in 0..3 {
                if to == from {
                    continue;
                }
                let mut c = counts;
                c[from] -= mass[i];
                c[to] += mass[i];
                let value = objective(&c, &targets);
                if value < current - 1e-9 && best.as_ref().is_none_or(|(b, _)| value < *b) {
                    best = Some((value, vec![(i, to)]));
                }
            }
        }
        for i in 0..speakers.len() {
            for j in i + 1..speakers.len() {
                let (a, b) = (assign[i], assign[j]);
                if a == b || mass[i] == mass[j] {
                    continue;
                }
                let mut c = counts;
                c[a] += mass[j] - mass[i];
                c[b] += mass[i] - mass[j];
                let value = objective(&c, &targets);
                if value < current - 1e-9 && best.as_ref().is_none_or(|(v, _)| value < *v) {
                    best = Some((value, vec![(i, b), (j, a)]));
                }
            }
        }
        match best {
            Some((_, moves)) => {
                for (i, to) in moves {
                    counts[assign[i]] -= mass[i];
                    counts[to] += mass[i];
                    assign[i] = to;
                }
            }
            None => break,
        }
    }

    let mut split = BTreeMap::new();
    for (speaker, k) in speakers.iter().zip(&assign) {
        for u in &speaker.utterances {
            split.insert(u.clone(), SplitName::ALL[*k]);
        }
    }
    let frac = |k: usize| if total == 0 { 0.0 } else { counts[k] / total as f64 };
    Ok(SplitAssignment {
        split,
        seed,
        ratios,
        realized: SplitRatios {
            train: frac(0),
            validation: frac(1),
            test: frac(2),
        },
    })
}

/// Fails if any speaker contributes utterances to more than one split.
pub fn check_speaker_exclusive(
    assignment: &SplitAssignment,
    speaker_of: &BTreeMap<String, String>,
) -> Result<(), CorpusError> {
    let mut seen: BTreeMap<&str, SplitName> = BTreeMap::new();
    for (utterance, split) in &assignment.split {
        let Some(speaker) = speaker_of.get(utterance) else {
            return Err(CorpusError::DanglingReference {
                record: "split assignment".into(),
                reference: format!("utterance {utterance}"),
            });
        };
        match seen.get(speaker.as_str()) {
            Some(first) if first != split => {
                return Err(CorpusError::SpeakerLeakage {
                    speaker_id: speaker.clone(),
                    first: *first,
                    second: *split,
                })
            }
            _ => {
                seen.insert(speaker, *split);
            }
        }
    }
    Ok(())
}
