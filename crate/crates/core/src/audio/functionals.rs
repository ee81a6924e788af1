use serde::{Deserialize, Serialize};

use super::lld::{LldMatrix, VOICING};
use super::AudioError;

pub const FUNCTIONAL_NAMES: [&str; 9] = [
    "mean",
    "quadratic_mean",
    "std",
    "flatness",
    "skewness",
    "kurtosis",
    "q1",
    "q2",
    "q3",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalSet {
    /// All nine statistics per descriptor.
    #[default]
    Full,
    /// Frame average only.
    MeanOnly,
}

impl FunctionalSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            FunctionalSet::Full => &FUNCTIONAL_NAMES,
            FunctionalSet::MeanOnly => &FUNCTIONAL_NAMES[..1],
        }
    }
}

/// Per-utterance acoustic summary, descriptor-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalVector {
    pub values: Vec<f64>,
    /// `descriptor__functional` for every entry.
    pub layout: Vec<String>,
}

impl FunctionalVector {
    pub fn total_dim(&self) -> usize {
        self.values.len()
    }
}

/// Variance below this fraction of the squared magnitude counts as zero.
const ZERO_VARIANCE: f64 = 1e-20;

pub(crate) fn is_zero_variance(m2: f64, mean: f64, max_abs: f64) -> bool {
    m2 <= ZERO_VARIANCE * max_abs.max(mean.abs()).powi(2)
}

/// Linear interpolation between order statistics at `p·(n−1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// The nine statistics of one non-empty series, in [`FUNCTIONAL_NAMES`]
/// order. Skewness and excess kurtosis are 0 for a constant series.
pub fn series_functionals(x: &[f64]) -> [f64; 9] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let quad = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (std, skew, kurt) = if is_zero_variance(m2, mean, max_abs) {
        (0.0, 0.0, 0.0)
    } else {
        (m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let abs_mean = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let flatness = if abs_mean > 0.0 && x.iter().all(|v| *v != 0.0) {
        (x.iter().map(|v| v.abs().ln()).sum::<f64>() / n).exp() / abs_mean
    } else {
        0.0
    };
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    [
        mean,
        quad,
        std,
        flatness,
        skew,
        kurt,
        quantile(&sorted, 0.25),
        quantile(&sorted, 0.5),
        quantile(&sorted, 0.75),
    ]
}

/// Collapses each descriptor track to its functionals. With `voiced_gate`,
/// only frames whose voicing probability exceeds `threshold` count.
pub fn apply_functionals(
    llds: &LldMatrix,
    voiced_gate: bool,
    threshold: f64,
    set: FunctionalSet,
) -> Result<FunctionalVector, AudioError> {
    let rows: Vec<&Vec<f64>> = llds
        .rows
        .iter()
        .filter(|r| !voiced_gate || r[VOICING] > threshold)
        .collect();
    if rows.is_empty() {
        return Err(if llds.rows.is_empty() {
            AudioError::NoFrames
        } else {
            AudioError::EmptyAfterGating
        });
    }
    let names = set.names();
    let mut values = Vec::with_capacity(llds.descriptor_names.len() * names.len());
    let mut layout = Vec::with_capacity(values.capacity());
    for (j, d) in llds.descriptor_names.iter().enumerate() {
        let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let stats = series_functionals(&column);
        values.extend_from_slice(&stats[..names.len()]);
        layout.extend(names.iter().map(|f| format!("{d}__{f}")));
    }
    Ok(FunctionalVector { values, layout })
}
