use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{early_fuse, Block, FusedFeatureVector, FusionError, Modality, ModalitySet};
use crate::artifact::ModelArtifact;
use crate::nn::{fit, Example, Head, MlpNet, Network, TrainConfig};

pub const EARLY_MODEL: &str = "fusion_early";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyFusionConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub training: TrainConfig,
}

impl Default for EarlyFusionConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 32],
            dropout: 0.2,
            training: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EarlyManifest {
    strategy: String,
    modality_set: ModalitySet,
    block_layout: Vec<Block>,
    standardizer: Standardizer,
}

/// Per-feature centring and scaling fitted on the training vectors, so
/// blocks of very different magnitude reach the head on equal terms.
/// Constant features are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(vectors: impl IntoIterator<Item = &'a [f64]>, width: usize) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; width];
        let mut m2 = vec![0.0; width];
        for v in vectors {
            n += 1;
            for (j, &x) in v.iter().enumerate() {
                let d = x - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (x - mean[j]);
            }
        }
        let scale = m2
            .iter()
            .map(|&s| {
                let sd = if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// MLP head over a [`FusedFeatureVector`]. The first layer sums block
/// partial products in canonical modality order.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyModel {
    pub set: ModalitySet,
    pub layout: Vec<Block>,
    pub config: EarlyFusionConfig,
    pub standardizer: Standardizer,
    pub net: MlpNet,
    pub artifact: ModelArtifact,
}

/// The classifier trained on a fused vector with this block layout.
pub fn head_for(layout: &[Block], config: &EarlyFusionConfig) -> MlpNet {
    let width = layout.iter().map(|b| b.length).sum();
    MlpNet::new(width, &config.hidden, Head::Softmax, config.dropout)
        .with_input_blocks(layout.iter().map(|b| (b.offset, b.length)).collect())
}

impl EarlyModel {
    pub fn dims(&self) -> BTreeMap<Modality, usize> {
        self.layout.iter().map(|b| (b.modality, b.length)).collect()
    }

    /// Fuses `features` canonically, whatever the map's construction order.
    pub fn predict(&self, features: &BTreeMap<Modality, Vec<f64>>) -> Result<[f64; 2], FusionError> {
        let fused = early_fuse(features, self.set, &self.dims())?;
        Ok(self.predict_fused(&fused))
    }

    pub fn predict_fused(&self, fused: &FusedFeatureVector) -> [f64; 2] {
        self.net.predict(&self.artifact.params, &self.standardizer.apply(&fused.values))
    }

    pub fn from_artifact(artifact: ModelArtifact) -> Result<Self, FusionError> {
        let config: EarlyFusionConfig = artifact.config(EARLY_MODEL)?;
        let manifest: EarlyManifest = serde_json::from_value(artifact.manifest.fusion.clone().unwrap_or_default())
            .map_err(|e| crate::artifact::ArtifactError::Config(e.to_string()))?;
        let net = head_for(&manifest.block_layout, &config);
        let width = net.mlp.layers[0].input;
        if manifest.standardizer.mean.len() != width || manifest.standardizer.scale.len() != width {
            return Err(crate::artifact::ArtifactError::Config("standardizer does not match the head".into()).into());
        }
        if net.param_count() != artifact.params.len() {
            return Err(crate::artifact::ArtifactError::Config("weight count does not match the head".into()).into());
        }
        Ok(Self {
            set: manifest.modality_set,
            layout: manifest.block_layout,
            config,
            standardizer: manifest.standardizer,
            net,
            artifact,
        })
    }
}

pub fn train_early(
    train: &[(&FusedFeatureVector, usize)],
    validation: &[(&FusedFeatureVector, usize)],
    config: &EarlyFusionConfig,
    seed: u64,
) -> Result<EarlyModel, FusionError> {
    let first = train.first().ok_or(crate::nn::TrainError::EmptyTrainingSet)?.0;
    let layout = first.block_layout.clone();
    let set = first.set();
    for (x, _) in train.iter().chain(validation) {
        if x.block_layout != layout {
            let found = x.set();
            if found != set {
                return Err(FusionError::SetMismatch { expected: set, found });
            }
            let (e, f) = layout
                .iter()
                .zip(&x.block_layout)
                .find(|(a, b)| a != b)
                .expect("layouts differ");
            return Err(FusionError::DimMismatch {
                modality: e.modality,
                expected: e.length,
                found: f.length,
            });
        }
    }
    let net = head_for(&layout, config);
    let standardizer = Standardizer::fit(train.iter().map(|(x, _)| x.values.as_slice()), first.values.len());
    let scaled_train: Vec<Vec<f64>> = train.iter().map(|(x, _)| standardizer.apply(&x.values)).collect();
    let scaled_validation: Vec<Vec<f64>> = validation.iter().map(|(x, _)| standardizer.apply(&x.values)).collect();
    let tr: Vec<Example<'_, Vec<f64>>> = scaled_train
        .iter()
        .zip(train)
        .map(|(input, (_, label))| Example { input, label: *label })
        .collect();
    let va: Vec<Example<'_, Vec<f64>>> = scaled_validation
        .iter()
        .zip(validation)
        .map(|(input, (_, label))| Example { input, label: *label })
        .collect();
    let outcome = fit(&net, &tr, &va, &config.training, seed)?;
    let mut artifact = ModelArtifact::new(EARLY_MODEL, config, &config.training, seed, &outcome);
    artifact.manifest.fusion = Some(
        serde_json::to_value(EarlyManifest {
            strategy: "early".into(),
            modality_set: set,
            block_layout: layout.clone(),
            standardizer: standardizer.clone(),
        })
        .expect("serializable"),
    );
    Ok(EarlyModel {
        set,
        layout,
        config: config.clone(),
        standardizer,
        net,
        artifact,
    })
}
