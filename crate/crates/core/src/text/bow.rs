use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TextError;
use crate::nn::{sigmoid, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BowKind {
    /// L2-regularized squared hinge loss (linear SVM).
    LinearMargin,
    Logistic,
}

/// Linear classifier over token counts of the training vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowModel {
    pub kind: BowKind,
    pub vocabulary: BTreeMap<String, usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

const ITERATIONS: usize = 400;
const LEARNING_RATE: f64 = 0.5;
const L2: f64 = 1e-4;

impl BowModel {
    fn counts(&self, tokens: &[String]) -> Vec<(usize, f64)> {
        let mut c: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(&i) = self.vocabulary.get(t) {
                *c.entry(i).or_default() += 1.0;
            }
        }
        c.into_iter().collect()
    }

    pub fn score(&self, tokens: &[String]) -> f64 {
        self.bias + self.counts(tokens).iter().map(|&(i, v)| self.weights[i] * v).sum::<f64>()
    }

    /// `(p_negative, p_positive)`; for the margin model the sigmoid of the
    /// raw margin, which preserves the decision.
    pub fn predict(&self, tokens: &[String]) -> [f64; 2] {
        let p = sigmoid(self.score(tokens));
        [1.0 - p, p]
    }
}

/// Full-batch gradient descent; deterministic, no seed needed.
pub fn train_bow_baseline(dataset: &[(Vec<String>, usize)], kind: BowKind) -> Result<BowModel, TextError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyTrainingSet.into());
    }
    let positives = dataset.iter().filter(|(_, y)| *y == 1).count();
    if positives == 0 || positives == dataset.len() {
        return Err(TrainError::DegenerateLabels { class: dataset[0].1 }.into());
    }
    let mut vocabulary = BTreeMap::new();
    for (tokens, _) in dataset {
        for t in tokens {
            let next = vocabulary.len();
            vocabulary.entry(t.clone()).or_insert(next);
        }
    }
    // indices follow sorted token order, independent of dataset order
    for (i, v) in vocabulary.values_mut().enumerate() {
        *v = i;
    }
    let mut model = BowModel {
        kind,
        weights: vec![0.0; vocabulary.len()],
        vocabulary,
        bias: 0.0,
    };
    let rows: Vec<(Vec<(usize, f64)>, f64)> = dataset
        .iter()
        .map(|(tokens, y)| (model.counts(tokens), *y as f64))
        .collect();
    let n = rows.len() as f64;
    for _ in 0..ITERATIONS {
        let mut gw = vec![0.0; model.weights.len()];
        let mut gb = 0.0;
        for (x, y) in &rows {
            let z = model.bias + x.iter().map(|&(i, v)| model.weights[i] * v).sum::<f64>();
            let d = match kind {
                BowKind::Logistic => sigmoid(z) - y,
                BowKind::LinearMargin => {
                    let t = 2.0 * y - 1.0;
                    let slack = 1.0 - t * z;
                    if slack > 0.0 {
                        -2.0 * t * slack
                    } else {
                        0.0
                    }
                }
            };
            for &(i, v) in x {
                gw[i] += d * v;
            }
            gb += d;
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= LEARNING_RATE * (g / n + L2 * *w);
        }
        model.bias -= LEARNING_RATE * gb / n;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn dataset() -> Vec<(Vec<String>, usize)> {
        vec![
            (toks("film khoob bood"), 1),
            (toks("khoob va ziba"), 1),
            (toks("film bad bood"), 0),
            (toks("bad va zesht"), 0),
            (toks("khoob"), 1),
            (toks("bad film"), 0),
        ]
    }

    #[test]
    fn indicator_token_gives_perfect_training_accuracy() {
        for kind in [BowKind::Logistic, BowKind::LinearMargin] {
            let m = train_bow_baseline(&dataset(), kind).unwrap();
            for (x, y) in dataset() {
                let p = m.predict(&x);
                assert_eq!(usize::from(p[1] > p[0]), y, "{kind:?} {x:?}");
            }
        }
    }

    #[test]
    fn empty_transcript_falls_back_to_bias() {
        let m = train_bow_baseline(&dataset(), BowKind::Logistic).unwrap();
        let p = m.predict(&[]);
        assert_eq!(m.score(&[]), m.bias);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![(toks("a"), 1), (toks("b"), 1)];
        assert!(train_bow_baseline(&data, BowKind::Logistic).is_err());
    }
}
