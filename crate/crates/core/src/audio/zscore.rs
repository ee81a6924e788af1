use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::functionals::is_zero_variance;
use super::AudioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; 0 marks a zero-variance dimension.
    pub std: Vec<f64>,
}

/// Per-speaker, per-dimension mean and standard deviation over every vector
/// of that speaker. Utterances without a speaker are ignored.
pub fn fit_speaker_stats(
    vectors: &BTreeMap<String, Vec<f64>>,
    speakers: &BTreeMap<String, String>,
) -> BTreeMap<String, SpeakerStats> {
    let mut grouped: BTreeMap<&str, Vec<&Vec<f64>>> = BTreeMap::new();
    for (utt, v) in vectors {
        if let Some(s) = speakers.get(utt) {
            grouped.entry(s.as_str()).or_default().push(v);
        }
    }
    grouped
        .into_iter()
        .map(|(speaker, vs)| {
            let dim = vs[0].len();
            let n = vs.len() as f64;
            let mut mean = vec![0.0; dim];
            for v in &vs {
                for (m, x) in mean.iter_mut().zip(v.iter()) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let std = (0..dim)
                .map(|j| {
                    let var = vs.iter().map(|v| (v[j] - mean[j]).powi(2)).sum::<f64>() / n;
                    let max_abs = vs.iter().fold(0.0f64, |a, v| a.max(v[j].abs()));
                    if is_zero_variance(var, mean[j], max_abs) {
                        0.0
                    } else {
                        var.sqrt()
                    }
                })
                .collect();
            (speaker.to_string(), SpeakerStats { mean, std })
        })
        .collect()
}

/// `(x - mean) / std` with the speaker's statistics; zero-variance
/// dimensions map to 0.
pub fn apply_speaker_stats(
    vectors: &BTreeMap<String, Vec<f64>>,
    speakers: &BTreeMap<String, String>,
    stats: &BTreeMap<String, SpeakerStats>,
) -> Result<BTreeMap<String, Vec<f64>>, AudioError> {
    vectors
        .iter()
        .map(|(utt, v)| {
            let speaker = speakers
                .get(utt)
                .ok_or_else(|| AudioError::UnknownSpeaker { utterance_id: utt.clone() })?;
            let s = stats.get(speaker).ok_or_else(|| AudioError::MissingSpeakerStats {
                speaker_id: speaker.clone(),
            })?;
            let z = v
                .iter()
                .zip(s.mean.iter().zip(&s.std))
                .map(|(x, (m, sd))| if *sd == 0.0 { 0.0 } else { (x - m) / sd })
                .collect();
            Ok((utt.clone(), z))
        })
        .collect()
}

/// Fits and applies per-speaker statistics in one step.
pub fn speaker_zstandardize(
    vectors: &BTreeMap<String, Vec<f64>>,
    speakers: &BTreeMap<String, String>,
) -> Result<(BTreeMap<String, Vec<f64>>, BTreeMap<String, SpeakerStats>), AudioError> {
    let stats = fit_speaker_stats(vectors, speakers);
    Ok((apply_speaker_stats(vectors, speakers, &stats)?, stats))
}

pub fn save_speaker_stats(path: &Path, stats: &BTreeMap<String, SpeakerStats>) -> Result<(), AudioError> {
    let mut json = serde_json::to_string_pretty(stats).expect("stats serialize");
    json.push('\n');
    std::fs::write(path, json).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_speaker_stats(path: &Path) -> Result<BTreeMap<String, SpeakerStats>, AudioError> {
    let text = std::fs::read_to_string(path).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| AudioError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
