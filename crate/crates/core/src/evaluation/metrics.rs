use serde::{Deserialize, Serialize};

use super::EvaluationError;

/// Rounds half away from zero to `decimals` places, working on the shortest
/// decimal string that round-trips `value`. `0.845` therefore rounds to
/// `0.85` even though the nearest double is slightly below it.
pub fn round_half_up(value: f64, decimals: usize) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    let repr = format!("{}", value.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    for i in 0..decimals {
        digits.push(frac.get(i).copied().unwrap_or(0));
    }
    if frac.get(decimals).is_some_and(|&d| d >= 5) {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - decimals;
    let int_str: String = digits[..split].iter().map(|d| char::from(b'0' + d)).collect();
    let frac_str: String = digits[split..].iter().map(|d| char::from(b'0' + d)).collect();
    let negative = value < 0.0 && digits.iter().any(|&d| d != 0);
    let sign = if negative { "-" } else { "" };
    if decimals == 0 {
        format!("{sign}{int_str}")
    } else {
        format!("{sign}{int_str}.{frac_str}")
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Binary sentiment class; index 0 is negative, 1 positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Negative,
    Positive,
}

impl Sentiment {
    pub fn index(self) -> usize {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Sentiment::Positive
        } else {
            Sentiment::Negative
        }
    }
}

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_labels(predictions: &[Sentiment], truth: &[Sentiment]) -> Self {
        let mut m = Self::default();
        for (p, t) in predictions.iter().zip(truth) {
            m.counts[t.index()][p.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn precision(&self, class: Sentiment) -> f64 {
        let c = class.index();
        let predicted = self.counts[0][c] + self.counts[1][c];
        ratio(self.counts[c][c], predicted)
    }

    pub fn recall(&self, class: Sentiment) -> f64 {
        let c = class.index();
        ratio(self.counts[c][c], self.counts[c][0] + self.counts[c][1])
    }

    /// Swaps the meaning of the two classes.
    pub fn swapped(&self) -> Self {
        let [[a, b], [c, d]] = self.counts;
        Self { counts: [[d, c], [b, a]] }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Metrics for one configuration. Accuracy is a percentage; every other
/// value is in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    /// Unweighted mean over the two classes.
    pub macro_average: AverageMetrics,
    /// Pooled counts; for single-label binary data all three equal the
    /// accuracy fraction.
    pub micro_average: AverageMetrics,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsEntry {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let class = |c: Sentiment| {
            let precision = confusion.precision(c);
            let recall = confusion.recall(c);
            ClassMetrics {
                precision,
                recall,
                f_measure: f_measure(precision, recall),
                support: confusion.counts[c.index()].iter().sum(),
            }
        };
        let positive = class(Sentiment::Positive);
        let negative = class(Sentiment::Negative);
        let micro = ratio(confusion.correct(), confusion.total());
        Self {
            positive,
            negative,
            macro_average: AverageMetrics {
                precision: (positive.precision + negative.precision) / 2.0,
                recall: (positive.recall + negative.recall) / 2.0,
                f_measure: (positive.f_measure + negative.f_measure) / 2.0,
            },
            micro_average: AverageMetrics {
                precision: micro,
                recall: micro,
                f_measure: micro,
            },
            accuracy: micro * 100.0,
            confusion,
        }
    }

    pub fn class(&self, c: Sentiment) -> &ClassMetrics {
        match c {
            Sentiment::Positive => &self.positive,
            Sentiment::Negative => &self.negative,
        }
    }
}

pub fn compute_metrics(predictions: &[Sentiment], truth: &[Sentiment]) -> Result<MetricsEntry, EvaluationError> {
    if predictions.len() != truth.len() {
        return Err(EvaluationError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    Ok(MetricsEntry::from_confusion(ConfusionMatrix::from_labels(predictions, truth)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Sentiment::{Negative as N, Positive as P};

    #[test]
    fn half_up_on_shortest_repr() {
        assert_eq!(round_half_up(0.845, 2), "0.85");
        assert_eq!(round_half_up(0.8698, 2), "0.87");
        assert_eq!(round_half_up(0.125, 2), "0.13");
        assert_eq!(round_half_up(0.999, 2), "1.00");
        assert_eq!(round_half_up(33.333333, 2), "33.33");
        assert_eq!(round_half_up(100.0, 2), "100.00");
        assert_eq!(round_half_up(89.235, 2), "89.24");
        assert_eq!(round_half_up(-0.004, 2), "0.00");
        assert_eq!(round_half_up(-1.005, 2), "-1.01");
        assert_eq!(round_half_up(1e-7, 2), "0.00");
        assert_eq!(round_half_up(2.5, 0), "3");
    }

    #[test]
    fn f_measure_cells() {
        assert_eq!(round_half_up(f_measure(0.92, 0.83), 2), "0.87");
        assert_eq!(round_half_up(f_measure(0.78, 0.84), 2), "0.81");
        assert_eq!(round_half_up(f_measure(0.76, 0.85), 2), "0.80");
        assert_eq!(f_measure(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let truth = [P, N, P, N, P];
        let m = compute_metrics(&truth, &truth).unwrap();
        assert_eq!(m.accuracy, 100.0);
        for c in [m.positive, m.negative] {
            assert_eq!((c.precision, c.recall, c.f_measure), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn hand_counted_confusion() {
        // TP 3, FN 1, FP 2, TN 4
        let truth = [P, P, P, P, N, N, N, N, N, N];
        let pred = [P, P, P, N, P, P, N, N, N, N];
        let m = compute_metrics(&pred, &truth).unwrap();
        assert_eq!(m.confusion.counts, [[4, 2], [1, 3]]);
        assert_eq!(m.positive.precision, 3.0 / 5.0);
        assert_eq!(m.positive.recall, 3.0 / 4.0);
        assert_eq!(m.negative.precision, 4.0 / 5.0);
        assert_eq!(m.negative.recall, 4.0 / 6.0);
        assert_eq!(m.accuracy, 70.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(compute_metrics(&[], &[]), Err(EvaluationError::EmptyInput)));
        assert!(matches!(
            compute_metrics(&[P], &[P, N]),
            Err(EvaluationError::LengthMismatch { .. })
        ));
    }

    fn labels() -> impl Strategy<Value = (Vec<Sentiment>, Vec<Sentiment>)> {
        (1usize..60).prop_flat_map(|n| {
            let s = || prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { P } else { N }), n);
            (s(), s())
        })
    }

    proptest! {
        #[test]
        fn identities_hold((pred, truth) in labels()) {
            let m = compute_metrics(&pred, &truth).unwrap();
            let c = m.confusion;
            prop_assert_eq!(c.total() as usize, truth.len());
            prop_assert_eq!(m.accuracy, c.correct() as f64 / c.total() as f64 * 100.0);
            for cm in [m.positive, m.negative] {
                prop_assert_eq!(cm.f_measure, f_measure(cm.precision, cm.recall));
                for v in [cm.precision, cm.recall, cm.f_measure] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn swapping_classes_swaps_rows((pred, truth) in labels()) {
            let flip = |v: &[Sentiment]| v.iter().map(|s| Sentiment::from_index(1 - s.index())).collect::<Vec<_>>();
            let a = compute_metrics(&pred, &truth).unwrap();
            let b = compute_metrics(&flip(&pred), &flip(&truth)).unwrap();
            prop_assert_eq!(a.positive, b.negative);
            prop_assert_eq!(a.negative, b.positive);
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert_eq!(a.confusion.swapped(), b.confusion);
            prop_assert!((a.macro_average.f_measure - b.macro_average.f_measure).abs() < 1e-15);
        }
    }
}
