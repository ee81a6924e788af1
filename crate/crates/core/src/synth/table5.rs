use std::path::PathBuf;

use crate::corpus::{
    AnnotationRecord, CorpusManifest, Gesture, Polarity, Subjectivity, SubjectivityRule, Utterance, VideoRecord,
};

pub const TABLE5_SPEAKERS: usize = 24;
pub const TABLE5_POSITIVE: usize = 468;
pub const TABLE5_NEGATIVE: usize = 366;
pub const TABLE5_OBJECTIVE: usize = 180;
pub const TABLE5_UNIQUE_WORDS: usize = 4065;
const WORDS_PER_UTTERANCE: usize = 8;
const VIDEOS_PER_SPEAKER: usize = 3;

const LETTERS: [char; 24] = [
    'ا', 'ب', 'پ', 'ت', 'ج', 'چ', 'خ', 'د', 'ر', 'ز', 'ژ', 'س', 'ش', 'ف', 'ق', 'ک', 'گ', 'ل', 'م', 'ن', 'و', 'ه', 'ی', 'ع',
];

/// Distinct Persian-script pseudo-word for every index.
pub fn pseudo_word(mut index: usize) -> String {
    let mut s = String::new();
    loop {
        s.push(LETTERS[index % LETTERS.len()]);
        index /= LETTERS.len();
        if index == 0 {
            break;
        }
        index -= 1;
    }
    s
}

/// Annotated corpus with the published statistics: 24 speakers, 468
/// positive, 366 negative and 180 objective utterances over 4065 distinct
/// words. Three annotators; the third dissents on every seventh utterance
/// so the majority still yields the target label. No media files.
pub fn table5_fixture() -> CorpusManifest {
    let total = TABLE5_POSITIVE + TABLE5_NEGATIVE + TABLE5_OBJECTIVE;
    let mut m = CorpusManifest::new();
    let videos = TABLE5_SPEAKERS * VIDEOS_PER_SPEAKER;
    for v in 0..videos {
        let speaker = v % TABLE5_SPEAKERS;
        m.videos.push(VideoRecord {
            video_id: format!("v{v:03}"),
            speaker_id: format!("spk{speaker:02}"),
            audio_path: PathBuf::from(format!("media/v{v:03}.wav")),
            video_path: PathBuf::from(format!("media/v{v:03}.pfv")),
            duration: 120.0,
            speaker_meta: None,
        });
    }
    let mut word = 0usize;
    for i in 0..total {
        let video = i % videos;
        let slot = i / videos;
        let start = slot as f64 * 7.0;
        let transcript: Vec<String> = (0..WORDS_PER_UTTERANCE)
            .map(|_| {
                let w = pseudo_word(word % TABLE5_UNIQUE_WORDS);
                word += 1;
                w
            })
            .collect();
        let id = format!("u{i:04}");
        m.utterances.push(Utterance {
            utterance_id: id.clone(),
            video_id: format!("v{video:03}"),
            start,
            end: start + 6.0,
            transcript: transcript.join(" "),
        });
        let (subjectivity, polarity) = if i < TABLE5_POSITIVE {
            (Subjectivity::Subjective, Polarity::Positive)
        } else if i < TABLE5_POSITIVE + TABLE5_NEGATIVE {
            (Subjectivity::Subjective, Polarity::Negative)
        } else {
            (Subjectivity::Objective, Polarity::Neutral)
        };
        for a in 0..3 {
            let dissent = a == 2 && i % 7 == 0;
            let p = match (dissent, polarity) {
                (true, Polarity::Positive) => Polarity::Negative,
                (true, Polarity::Negative) => Polarity::Positive,
                (_, p) => p,
            };
            let mut gestures = match polarity {
                Polarity::Positive => vec![Gesture::Smile, Gesture::HeadNod],
                Polarity::Negative => vec![Gesture::Frown],
                Polarity::Neutral => vec![],
            };
            if dissent {
                gestures.push(Gesture::HeadShake);
            }
            m.annotations.push(AnnotationRecord {
                utterance_id: id.clone(),
                annotator_id: format!("a{}", a + 1),
                polarity: p,
                subjectivity,
                subjectivity_rule: (subjectivity == Subjectivity::Subjective).then_some(SubjectivityRule::ImplicitOpinion),
                gestures,
            });
        }
    }
    m
}
