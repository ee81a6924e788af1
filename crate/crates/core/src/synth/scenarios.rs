use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::table5::pseudo_word;
use crate::audio::{write_wav, AudioError, AudioSignal};
use crate::corpus::{
    write_manifest, AnnotationRecord, CorpusError, CorpusManifest, Gesture, Polarity, Subjectivity, Utterance,
    VideoRecord,
};
use crate::text::tokenize;
use crate::visual::{write_pfv, VisualError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Every modality carries the label, each flipped independently with
    /// probability `modality_noise`.
    Separable,
    /// Audio and visual carry independent bits; the label is their XOR.
    /// Text is uninformative.
    XorCorrelated,
    /// Brightness ramps up for positive and down for negative utterances
    /// over the same set of levels. Audio and text are uninformative.
    RampTemporal,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Separable, Scenario::XorCorrelated, Scenario::RampTemporal];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Separable => "separable",
            Scenario::XorCorrelated => "xor_correlated",
            Scenario::RampTemporal => "ramp_temporal",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s.replace('-', "_"))
            .ok_or_else(|| SynthError::InvalidConfig(format!("unknown scenario {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub utterances: usize,
    pub speakers: usize,
    pub videos_per_speaker: usize,
    pub annotators: usize,
    pub modality_noise: f64,
    pub seed: u64,
    pub sample_rate: u32,
    pub fps: u32,
    /// Stored frame width and height.
    pub frame_size: [u32; 2],
    pub embedding_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Separable,
            utterances: 200,
            speakers: 10,
            videos_per_speaker: 2,
            annotators: 3,
            modality_noise: 0.0,
            seed: 0,
            sample_rate: 16000,
            fps: 10,
            frame_size: [32, 24],
            embedding_dim: 300,
        }
    }
}

/// What a generated utterance encodes in each modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cues {
    pub label: bool,
    pub audio: bool,
    pub visual: bool,
    pub text: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub manifest_path: PathBuf,
    pub embeddings_path: PathBuf,
    pub manifest: CorpusManifest,
    /// Per utterance, in manifest order.
    pub cues: Vec<(String, Cues)>,
}

const KEYWORDS: usize = 12;
const FILLER: usize = 200;
const FILLER_PER_UTTERANCE: usize = 6;
const KEYWORDS_PER_UTTERANCE: usize = 2;
const GAP: f64 = 0.2;

fn positive_word(i: usize) -> String {
    pseudo_word(1000 + i)
}

fn negative_word(i: usize) -> String {
    pseudo_word(2000 + i)
}

fn filler_word(i: usize) -> String {
    pseudo_word(3000 + i)
}

fn draw_cues(scenario: Scenario, noise: f64, label: bool, rng: &mut ChaCha8Rng) -> Cues {
    match scenario {
        Scenario::Separable => {
            let mut flip = |b: bool| b ^ rng.gen_bool(noise);
            Cues {
                label,
                audio: flip(label),
                visual: flip(label),
                text: flip(label),
            }
        }
        Scenario::XorCorrelated => {
            let audio = rng.gen_bool(0.5);
            Cues {
                label,
                audio,
                visual: audio ^ label,
                text: rng.gen_bool(0.5),
            }
        }
        Scenario::RampTemporal => Cues {
            label,
            audio: rng.gen_bool(0.5),
            visual: label,
            text: rng.gen_bool(0.5),
        },
    }
}

/// Harmonic tone: the high cue sits a major sixth above the speaker's base
/// pitch.
fn tone(samples: &mut Vec<f64>, sr: u32, seconds: f64, base: f64, high: bool, rng: &mut ChaCha8Rng) {
    let f0 = base * if high { 1.68 } else { 1.0 } * rng.gen_range(0.96..1.04);
    let amp = rng.gen_range(0.25..0.35);
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let n = (seconds * sr as f64).round() as usize;
    let start = samples.len();
    for i in 0..n {
        let t = (start + i) as f64 / sr as f64;
        let w = 2.0 * std::f64::consts::PI * f0 * t;
        let s = amp * (w.sin() + 0.5 * (2.0 * w).sin() + 0.25 * (3.0 * w).sin()) / 1.75;
        samples.push(s + noise.sample(rng));
    }
}

fn hiss(samples: &mut Vec<f64>, sr: u32, seconds: f64, rng: &mut ChaCha8Rng) {
    let noise = Normal::new(0.0, 0.005).expect("valid sigma");
    let n = (seconds * sr as f64).round() as usize;
    samples.extend((0..n).map(|_| noise.sample(rng)));
}

fn frame(size: [u32; 2], level: f64, tint: [f64; 3], rng: &mut ChaCha8Rng) -> RgbImage {
    RgbImage::from_fn(size[0], size[1], |_, _| {
        let mut px = |c: usize| ((level + tint[c] + rng.gen_range(-0.04..0.04)).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([px(0), px(1), px(2)])
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `manifest.jsonl`, `embeddings.vec` and `media/` under `out_dir`.
/// Labels are balanced within every speaker and all annotators agree.
pub fn generate_corpus(config: &SynthConfig, out_dir: &Path) -> Result<SynthCorpus, SynthError> {
    let videos = config.speakers * config.videos_per_speaker;
    if config.speakers == 0 || videos == 0 || config.utterances < videos || config.annotators == 0 {
        return Err(SynthError::InvalidConfig(
            "need at least one speaker, video and annotator, and one utterance per video".into(),
        ));
    }
    if !(0.0..=0.5).contains(&config.modality_noise) || config.fps == 0 || config.embedding_dim == 0 {
        return Err(SynthError::InvalidConfig("modality_noise must lie in [0, 0.5]".into()));
    }
    let media = out_dir.join("media");
    std::fs::create_dir_all(&media).map_err(io_err(&media))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // balanced labels per speaker
    let mut per_speaker: Vec<Vec<bool>> = (0..config.speakers)
        .map(|s| {
            let n = (0..config.utterances).filter(|i| (i % videos) % config.speakers == s).count();
            let mut labels: Vec<bool> = (0..n).map(|k| k % 2 == 0).collect();
            labels.shuffle(&mut rng);
            labels
        })
        .collect();

    let mut manifest = CorpusManifest::new();
    manifest.media_root = out_dir.to_path_buf();
    let mut cues = Vec::with_capacity(config.utterances);
    for v in 0..videos {
        let speaker = v % config.speakers;
        let base_pitch = 110.0 + 90.0 * speaker as f64 / config.speakers.max(2) as f64;
        let tint = [rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08)];
        let video_id = format!("v{v:03}");
        let mut samples = Vec::new();
        let mut frames = Vec::new();
        let mut t = 0.0;
        let sr = config.sample_rate;
        let fps = config.fps as f64;
        let push_frames = |frames: &mut Vec<RgbImage>, until: f64, level: &dyn Fn(f64) -> f64, rng: &mut ChaCha8Rng| {
            while (frames.len() as f64) / fps < until - 1e-9 {
                let ts = frames.len() as f64 / fps;
                frames.push(frame(config.frame_size, level(ts), tint, rng));
            }
        };
        hiss(&mut samples, sr, GAP, &mut rng);
        t += GAP;
        push_frames(&mut frames, t, &|_| 0.5, &mut rng);
        let mine = (0..config.utterances).filter(|i| i % videos == v).count();
        for slot in 0..mine {
            let label = per_speaker[speaker].pop().expect("label per utterance");
            let c = draw_cues(config.scenario, config.modality_noise, label, &mut rng);
            let duration = rng.gen_range(1.2..1.6);
            let (start, end) = (t, t + duration);
            tone(&mut samples, sr, duration, base_pitch, c.audio, &mut rng);
            let level: Box<dyn Fn(f64) -> f64> = match config.scenario {
                Scenario::RampTemporal => {
                    let (lo, hi) = (rng.gen_range(0.1..0.3), rng.gen_range(0.7..0.9));
                    let up = c.visual;
                    Box::new(move |ts: f64| {
                        let frac = ((ts - start) / duration).clamp(0.0, 1.0);
                        let x = if up { frac } else { 1.0 - frac };
                        lo + (hi - lo) * x
                    })
                }
                _ => {
                    let l = if c.visual { 0.72 } else { 0.28 } + rng.gen_range(-0.08..0.08);
                    Box::new(move |_| l)
                }
            };
            push_frames(&mut frames, end, &*level, &mut rng);
            t = end;
            hiss(&mut samples, sr, GAP, &mut rng);
            t += GAP;
            push_frames(&mut frames, t, &|_| 0.5, &mut rng);

            let mut words: Vec<String> = (0..FILLER_PER_UTTERANCE).map(|_| filler_word(rng.gen_range(0..FILLER))).collect();
            for _ in 0..KEYWORDS_PER_UTTERANCE {
                let k = rng.gen_range(0..KEYWORDS);
                let w = if c.text { positive_word(k) } else { negative_word(k) };
                let at = rng.gen_range(0..=words.len());
                words.insert(at, w);
            }
            let utterance_id = format!("{video_id}_u{slot:02}");
            manifest.utterances.push(Utterance {
                utterance_id: utterance_id.clone(),
                video_id: video_id.clone(),
                start,
                end,
                transcript: words.join(" "),
            });
            for a in 0..config.annotators {
                manifest.annotations.push(AnnotationRecord {
                    utterance_id: utterance_id.clone(),
                    annotator_id: format!("a{}", a + 1),
                    polarity: if label { Polarity::Positive } else { Polarity::Negative },
                    subjectivity: Subjectivity::Subjective,
                    subjectivity_rule: None,
                    gestures: if label { vec![Gesture::Smile] } else { vec![Gesture::Frown] },
                });
            }
            cues.push((utterance_id, c));
        }
        let audio_path = PathBuf::from(format!("media/{video_id}.wav"));
        let video_path = PathBuf::from(format!("media/{video_id}.pfv"));
        write_wav(&out_dir.join(&audio_path), &AudioSignal::new(samples, sr)?)?;
        write_pfv(&out_dir.join(&video_path), config.fps, &frames)?;
        manifest.videos.push(VideoRecord {
            video_id,
            speaker_id: format!("spk{speaker:02}"),
            audio_path,
            video_path,
            duration: t,
            speaker_meta: None,
        });
    }

    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&manifest, &manifest_path)?;
    let embeddings_path = out_dir.join("embeddings.vec");
    write_embeddings(&embeddings_path, config.embedding_dim, &mut rng)?;
    cues.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(SynthCorpus {
        manifest_path,
        embeddings_path,
        manifest,
        cues,
    })
}

/// Keyword vectors point along ±e0 and ±e1; filler is small isotropic
/// noise.
fn write_embeddings(path: &Path, dim: usize, rng: &mut ChaCha8Rng) -> Result<(), SynthError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    let noise = Normal::new(0.0, 0.1).expect("valid sigma");
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for k in 0..KEYWORDS {
        for (word, sign) in [(positive_word(k), 1.0), (negative_word(k), -1.0)] {
            let mut v: Vec<f64> = (0..dim).map(|_| noise.sample(rng)).collect();
            v[0] += sign;
            if dim > 1 {
                v[1] += sign * 0.5;
            }
            rows.push((word, v));
        }
    }
    for f in 0..FILLER {
        rows.push((filler_word(f), (0..dim).map(|_| noise.sample(rng)).collect()));
    }
    writeln!(out, "{} {}", rows.len(), dim).map_err(io_err(path))?;
    for (word, v) in rows {
        let token = tokenize(&word).concat();
        let values: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
        writeln!(out, "{token} {}", values.join(" ")).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::read_wav;
    use crate::corpus::{load_manifest, resolve_labels, ResolutionPolicy};
    use crate::text::EmbeddingTable;
    use crate::visual::{sample_frames, AutoDecoder};
    use std::collections::BTreeMap;

    fn small(scenario: Scenario) -> SynthConfig {
        SynthConfig {
            scenario,
            utterances: 40,
            speakers: 4,
            embedding_dim: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn separable_layout_and_media() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(&small(Scenario::Separable), dir.path()).unwrap();
        let m = load_manifest(&corpus.manifest_path).unwrap();
        assert_eq!(m.utterances.len(), 40);
        let speakers: std::collections::BTreeSet<_> = m.videos.iter().map(|v| &v.speaker_id).collect();
        assert_eq!(speakers.len(), 4);
        let resolved = resolve_labels(&m, ResolutionPolicy::default()).unwrap();
        let labels = resolved.binary_labels();
        assert_eq!(labels.len(), 40);
        assert_eq!(labels.values().filter(|&&p| p).count(), 20);
        for (id, c) in &corpus.cues {
            assert_eq!(labels[id], c.label);
            assert!(c.audio == c.label && c.visual == c.label && c.text == c.label);
        }
        let u = &m.utterances[0];
        let v = m.video(&u.video_id).unwrap();
        let wav = read_wav(&m.resolve_media(&v.audio_path)).unwrap();
        assert!((wav.duration() - v.duration).abs() < 0.01);
        let clip = sample_frames(&AutoDecoder, &m.resolve_media(&v.video_path), u.start, u.end, [4, 8, 8]).unwrap();
        let bright = clip.frame_mean(0) > 0.5;
        assert_eq!(bright, corpus.cues.iter().find(|(id, _)| id == &u.utterance_id).unwrap().1.visual);
        let table = EmbeddingTable::load(&corpus.embeddings_path).unwrap();
        assert_eq!(table.dim(), 8);
        assert!(u.tokens().iter().all(|t| table.vector(t).is_some()));
    }

    #[test]
    fn xor_bits_are_individually_uninformative() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small(Scenario::XorCorrelated);
        config.utterances = 400;
        config.seed = 5;
        let corpus = generate_corpus(&config, dir.path()).unwrap();
        let mut table: BTreeMap<(bool, bool), usize> = BTreeMap::new();
        for (_, c) in &corpus.cues {
            assert_eq!(c.label, c.audio ^ c.visual);
            *table.entry((c.audio, c.label)).or_default() += 1;
        }
        // P(label | audio bit) stays near one half
        for bit in [false, true] {
            let pos = table.get(&(bit, true)).copied().unwrap_or(0) as f64;
            let all = pos + table.get(&(bit, false)).copied().unwrap_or(0) as f64;
            assert!((pos / all - 0.5).abs() < 0.1, "{table:?}");
        }
    }

    #[test]
    fn ramp_clips_reverse_direction() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(&small(Scenario::RampTemporal), dir.path()).unwrap();
        let m = &corpus.manifest;
        for (id, c) in corpus.cues.iter().take(6) {
            let u = m.utterance(id).unwrap();
            let v = m.video(&u.video_id).unwrap();
            let clip = sample_frames(&AutoDecoder, &m.resolve_media(&v.video_path), u.start, u.end, [8, 8, 8]).unwrap();
            assert_eq!(clip.frame_mean(7) > clip.frame_mean(0), c.label);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut config = small(Scenario::Separable);
        config.modality_noise = 0.2;
        generate_corpus(&config, a.path()).unwrap();
        generate_corpus(&config, b.path()).unwrap();
        for f in ["manifest.jsonl", "embeddings.vec", "media/v000.wav", "media/v003.pfv"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}
