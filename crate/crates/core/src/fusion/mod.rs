//! Feature-level (early) and decision-level (late) fusion over any
//! non-empty subset of audio, visual and text.

mod early;
mod late;
mod modality;

pub use early::{head_for, train_early, EarlyFusionConfig, EarlyModel, Standardizer, EARLY_MODEL};
pub use late::{meta_net, train_late, LateFusionConfig, LateModel, MetaKind, LATE_MODEL};
pub use modality::{Modality, ModalitySet};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::nn::TrainError;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("modality set must not be empty")]
    EmptySet,
    #[error("unknown modality set label {0:?}")]
    BadLabel(String),
    #[error("no {0} input for a set that includes it")]
    MissingModality(Modality),
    #[error("{modality} vector has {found} values, expected {expected}")]
    DimMismatch {
        modality: Modality,
        expected: usize,
        found: usize,
    },
    #[error("{0} input contains non-finite values")]
    NonFinite(Modality),
    #[error("{0} prediction is not a probability distribution")]
    InvalidDistribution(Modality),
    #[error("no trained unimodal model for {0}")]
    UntrainedUnimodal(Modality),
    #[error("model was trained for {expected}, queried with {found}")]
    SetMismatch { expected: ModalitySet, found: ModalitySet },
    #[error("{strategy} fusion model cannot take {input} inputs")]
    WrongInput { strategy: Strategy, input: &'static str },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Unimodal,
    Early,
    Late,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Unimodal => "unimodal",
            Strategy::Early => "early",
            Strategy::Late => "late",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub modality: Modality,
    pub offset: usize,
    pub length: usize,
}

/// Canonical-order concatenation of per-modality vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedFeatureVector {
    pub values: Vec<f64>,
    pub block_layout: Vec<Block>,
}

impl FusedFeatureVector {
    pub fn set(&self) -> ModalitySet {
        ModalitySet::from_modalities(self.block_layout.iter().map(|b| b.modality)).expect("layout is non-empty")
    }
}

pub fn block_layout(set: ModalitySet, dims: &BTreeMap<Modality, usize>) -> Result<Vec<Block>, FusionError> {
    let mut offset = 0;
    set.iter()
        .map(|m| {
            let length = *dims.get(&m).ok_or(FusionError::MissingModality(m))?;
            let block = Block {
                modality: m,
                offset,
                length,
            };
            offset += length;
            Ok(block)
        })
        .collect()
}

/// Concatenates the set's vectors in A, V, T order. `dims` holds the
/// registered width of each modality's representation.
pub fn early_fuse(
    features: &BTreeMap<Modality, Vec<f64>>,
    set: ModalitySet,
    dims: &BTreeMap<Modality, usize>,
) -> Result<FusedFeatureVector, FusionError> {
    let layout = block_layout(set, dims)?;
    let mut values = Vec::with_capacity(layout.iter().map(|b| b.length).sum());
    for block in &layout {
        let v = features
            .get(&block.modality)
            .ok_or(FusionError::MissingModality(block.modality))?;
        if v.len() != block.length {
            return Err(FusionError::DimMismatch {
                modality: block.modality,
                expected: block.length,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(FusionError::NonFinite(block.modality));
        }
        values.extend_from_slice(v);
    }
    Ok(FusedFeatureVector {
        values,
        block_layout: layout,
    })
}

/// Concatenated `(p_negative, p_positive)` pairs in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub set: ModalitySet,
    pub values: Vec<f64>,
}

impl DecisionVector {
    pub fn pair(&self, i: usize) -> [f64; 2] {
        [self.values[2 * i], self.values[2 * i + 1]]
    }
}

pub fn late_fuse(predictions: &BTreeMap<Modality, [f64; 2]>, set: ModalitySet) -> Result<DecisionVector, FusionError> {
    let mut values = Vec::with_capacity(2 * set.len());
    for m in set.iter() {
        let p = predictions.get(&m).ok_or(FusionError::MissingModality(m))?;
        let valid = p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) && (p[0] + p[1] - 1.0).abs() <= 1e-6;
        if !valid {
            return Err(FusionError::InvalidDistribution(m));
        }
        values.extend_from_slice(p);
    }
    Ok(DecisionVector { set, values })
}

/// What a fused model is queried with.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionInput {
    Features(BTreeMap<Modality, Vec<f64>>),
    Predictions(BTreeMap<Modality, [f64; 2]>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionModel {
    Early(EarlyModel),
    Late(LateModel),
}

impl FusionModel {
    pub fn set(&self) -> ModalitySet {
        match self {
            FusionModel::Early(m) => m.set,
            FusionModel::Late(m) => m.set,
        }
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            FusionModel::Early(_) => Strategy::Early,
            FusionModel::Late(_) => Strategy::Late,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedPrediction {
    pub probs: [f64; 2],
    pub strategy: Strategy,
}

pub fn predict_fused(model: &FusionModel, input: &FusionInput, set: ModalitySet) -> Result<FusedPrediction, FusionError> {
    if set != model.set() {
        return Err(FusionError::SetMismatch {
            expected: model.set(),
            found: set,
        });
    }
    let probs = match (model, input) {
        (FusionModel::Early(m), FusionInput::Features(f)) => m.predict(f)?,
        (FusionModel::Late(m), FusionInput::Predictions(p)) => m.predict(p)?,
        (FusionModel::Early(_), FusionInput::Predictions(_)) => {
            return Err(FusionError::WrongInput {
                strategy: Strategy::Early,
                input: "prediction",
            })
        }
        (FusionModel::Late(_), FusionInput::Features(_)) => {
            return Err(FusionError::WrongInput {
                strategy: Strategy::Late,
                input: "feature",
            })
        }
    };
    Ok(FusedPrediction {
        probs,
        strategy: model.strategy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Modality::{Audio as A, Text as T, Visual as V};

    fn dims(a: usize, v: usize, t: usize) -> BTreeMap<Modality, usize> {
        [(A, a), (V, v), (T, t)].into()
    }

    #[test]
    fn audio_text_layout() {
        let f: BTreeMap<_, _> = [(A, vec![0.5; 153]), (T, vec![1.0; 128])].into();
        let set = ModalitySet::parse("A+T").unwrap();
        let fused = early_fuse(&f, set, &dims(153, 500, 128)).unwrap();
        assert_eq!(fused.values.len(), 281);
        assert_eq!(
            fused.block_layout,
            vec![
                Block { modality: A, offset: 0, length: 153 },
                Block { modality: T, offset: 153, length: 128 }
            ]
        );
    }

    #[test]
    fn singleton_is_identity() {
        let t: Vec<f64> = (0..128).map(|i| i as f64 * 0.25).collect();
        let f: BTreeMap<_, _> = [(T, t.clone()), (A, vec![9.0; 153])].into();
        let fused = early_fuse(&f, ModalitySet::single(T), &dims(153, 500, 128)).unwrap();
        assert_eq!(fused.values, t);
    }

    #[test]
    fn full_set_length() {
        let f: BTreeMap<_, _> = [(A, vec![0.0; 153]), (V, vec![0.0; 500]), (T, vec![0.0; 128])].into();
        let fused = early_fuse(&f, ModalitySet::all(), &dims(153, 500, 128)).unwrap();
        assert_eq!(fused.values.len(), 781);
        assert_eq!(fused.set(), ModalitySet::all());
    }

    #[test]
    fn fuse_errors() {
        let f: BTreeMap<_, _> = [(A, vec![0.0; 10])].into();
        assert!(matches!(
            early_fuse(&f, ModalitySet::all(), &dims(10, 1, 1)),
            Err(FusionError::MissingModality(V))
        ));
        assert!(matches!(
            early_fuse(&f, ModalitySet::single(A), &dims(11, 1, 1)),
            Err(FusionError::DimMismatch { expected: 11, found: 10, .. })
        ));
        let bad: BTreeMap<_, _> = [(A, vec![f64::NAN])].into();
        assert!(matches!(
            early_fuse(&bad, ModalitySet::single(A), &dims(1, 1, 1)),
            Err(FusionError::NonFinite(A))
        ));
    }

    #[test]
    fn decision_vector_blocks_are_distributions() {
        let p: BTreeMap<_, _> = [(T, [0.2, 0.8]), (A, [0.6, 0.4])].into();
        let d = late_fuse(&p, ModalitySet::parse("A+T").unwrap()).unwrap();
        assert_eq!(d.values, vec![0.6, 0.4, 0.2, 0.8]);
        let bad: BTreeMap<_, _> = [(T, [0.2, 0.7])].into();
        assert!(late_fuse(&bad, ModalitySet::single(T)).is_err());
    }
}
