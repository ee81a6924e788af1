//! Run configuration: a TOML document, overridden by `POLYFUSE_*`
//! environment variables and then by `--set key=value` flags.

use std::path::PathBuf;

use polyfuse_core::audio::AudioFeatureConfig;
use polyfuse_core::corpus::SplitRatios;
use polyfuse_core::evaluation::{Configuration, ProtocolConfig};
use polyfuse_core::fusion::Strategy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "POLYFUSE_";
/// Looked up under the root when `--config` is not given.
pub const DEFAULT_CONFIG_FILE: &str = "polyfuse.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override {0:?} must look like section.key=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            manifest: "manifest.jsonl".into(),
            embeddings: "embeddings.vec".into(),
            cache_dir: "cache".into(),
            output_dir: "output".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let r = SplitRatios::DEFAULT;
        Self {
            train: r.train,
            validation: r.validation,
            test: r.test,
            seed: 0,
        }
    }
}

impl SplitSection {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            validation: self.validation,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub audio: AudioFeatureConfig,
    /// `[T, H, W]` of sampled clips; must equal `models.visual.input`.
    pub visual_shape: [usize; 3],
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            audio: AudioFeatureConfig::default(),
            visual_shape: [16, 64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// `A+V+T:early`, `A+T:late`, `T:unimodal`, ...
    pub configurations: Vec<String>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let mut all = Configuration::standard(Strategy::Early);
        all.extend(
            Configuration::standard(Strategy::Late)
                .into_iter()
                .filter(|c| c.strategy == Strategy::Late),
        );
        Self {
            configurations: all.iter().map(ToString::to_string).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resources {
    pub workers: usize,
}

impl Default for Resources {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSection {
    pub annotators: Vec<String>,
    pub bind: String,
    /// Append-only record log, relative to the root.
    pub log: PathBuf,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        Self {
            annotators: vec!["a1".into(), "a2".into(), "a3".into()],
            bind: "127.0.0.1:8080".into(),
            log: "annotations/log.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub split: SplitSection,
    pub features: FeatureSection,
    pub models: ProtocolConfig,
    pub evaluation: EvaluationSection,
    pub resources: Resources,
    pub annotation: AnnotationSection,
}

impl RunConfig {
    pub fn configurations(&self) -> Result<Vec<Configuration>, ConfigError> {
        self.evaluation
            .configurations
            .iter()
            .map(|s| s.parse().map_err(|e| ConfigError::Invalid(format!("{e}"))))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.split.ratios().is_valid() {
            return Err(ConfigError::Invalid("split ratios must be non-negative and sum to 1".into()));
        }
        let configurations = self.configurations()?;
        if configurations.is_empty() {
            return Err(ConfigError::Invalid("evaluation.configurations is empty".into()));
        }
        if self.features.visual_shape != self.models.visual.input {
            return Err(ConfigError::Invalid(format!(
                "features.visual_shape {:?} differs from models.visual.input {:?}",
                self.features.visual_shape, self.models.visual.input
            )));
        }
        self.models
            .visual
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.resources.workers == 0 {
            return Err(ConfigError::Invalid("resources.workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// A bare TOML literal (`3`, `0.5`, `true`, `[1, 2]`) or, failing that, a
/// plain string.
fn literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cursor = table;
    for key in parents {
        let slot = cursor
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = slot
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(format!("{} is not a section", path.join("."))))?;
    }
    cursor.insert(last.clone(), value);
    Ok(())
}

/// Builds the effective configuration. Environment variables map
/// `POLYFUSE_SPLIT__SEED=3` to `split.seed = 3`; variables without a `__`
/// separator (such as `POLYFUSE_ROOT`) are left to the command line parser.
pub fn load_config(
    file: Option<(&str, &str)>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &[String],
) -> Result<RunConfig, ConfigError> {
    let mut table = match file {
        Some((origin, text)) => text.parse::<toml::Table>().map_err(|e| ConfigError::Parse {
            origin: origin.into(),
            message: e.to_string(),
        })?,
        None => toml::Table::new(),
    };
    let mut env: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.contains("__"))
        .collect();
    env.sort();
    for (key, value) in env {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(ConfigError::BadOverride(key));
        }
        set_path(&mut table, &path, literal(&value))?;
    }
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
        if path.iter().any(String::is_empty) {
            return Err(ConfigError::BadOverride(o.clone()));
        }
        set_path(&mut table, &path, literal(value.trim()))?;
    }
    let config: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
        origin: "after overrides".into(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = load_config(None, [], &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.configurations().unwrap().len(), 11);
        let text = c.to_toml();
        assert_eq!(load_config(Some(("x", &text)), [], &[]).unwrap(), c);
    }

    #[test]
    fn precedence_file_env_flags() {
        let file = "[split]\nseed = 1\n[resources]\nworkers = 2\n";
        let env = [
            ("POLYFUSE_SPLIT__SEED".to_string(), "5".to_string()),
            ("POLYFUSE_PATHS__MANIFEST".to_string(), "m/x.jsonl".to_string()),
            ("POLYFUSE_ROOT".to_string(), "/elsewhere".to_string()),
            ("OTHER__THING".to_string(), "1".to_string()),
        ];
        let c = load_config(Some(("f", file)), env.clone(), &[]).unwrap();
        assert_eq!(c.split.seed, 5);
        assert_eq!(c.resources.workers, 2);
        assert_eq!(c.paths.manifest, PathBuf::from("m/x.jsonl"));
        let c = load_config(
            Some(("f", file)),
            env,
            &["split.seed=9".into(), "models.audio.hidden=[8, 4]".into()],
        )
        .unwrap();
        assert_eq!(c.split.seed, 9);
        assert_eq!(c.models.audio.hidden, vec![8, 4]);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        assert!(matches!(load_config(Some(("f", "[split]\ntrain = 0.9\n")), [], &[]), Err(ConfigError::Invalid(_))));
        assert!(matches!(load_config(Some(("f", "[nonsense]\nx = 1\n")), [], &[]), Err(ConfigError::Parse { .. })));
        assert!(matches!(load_config(None, [], &["novalue".into()]), Err(ConfigError::BadOverride(_))));
        assert!(load_config(None, [], &["evaluation.configurations=[\"A+Q\"]".into()]).is_err());
        assert!(load_config(None, [], &["features.visual_shape=[8, 16, 16]".into()]).is_err());
    }
}
