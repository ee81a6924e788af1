//! Synthetic corpora with known structure, used to exercise every pipeline
//! without the original recordings.

mod scenarios;
mod table5;

pub use scenarios::{generate_corpus, Cues, Scenario, SynthConfig, SynthCorpus, SynthError};
pub use table5::{pseudo_word, table5_fixture, TABLE5_NEGATIVE, TABLE5_OBJECTIVE, TABLE5_POSITIVE, TABLE5_SPEAKERS, TABLE5_UNIQUE_WORDS};
