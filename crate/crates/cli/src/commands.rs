use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use polyfuse_annotation_service::{serve, AnnotationStore, StoreError};
use polyfuse_core::artifact::{ArtifactError, ModelArtifact};
use polyfuse_core::audio::AUDIO_PIPELINE_VERSION;
use polyfuse_core::cache::FeatureCache;
use polyfuse_core::corpus::{
    compute_agreement, compute_statistics, format_percentage, load_manifest, make_splits, resolve_labels,
    AgreementFacet, CorpusError, CorpusManifest, ResolutionPolicy, SplitAssignment, SplitName,
};
use polyfuse_core::evaluation::{
    evaluate_artifacts, render_report, run_protocol, Configuration, EvaluationError, EvaluationReport, ReportFormat,
};
use polyfuse_core::features::{build_features, load_protocol_data, FeatureError, FeatureSettings};
use polyfuse_core::fusion::Modality;
use polyfuse_core::synth::{generate_corpus, SynthConfig, SynthError};
use polyfuse_core::text::TEXT_PIPELINE_VERSION;
use polyfuse_core::visual::VISUAL_PIPELINE_VERSION;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

pub const EFFECTIVE_CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, manifest or request.
    #[error("{0}")]
    Validation(String),
    /// Unreadable media or missing/failed feature extraction.
    #[error("{0}")]
    Media(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Media(_) => 3,
            CliError::Training(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Io(e.to_string()),
            CorpusError::MissingMedia { .. } => CliError::Media(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Media(e.to_string())
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        use EvaluationError as E;
        match e {
            E::MissingFeatures { .. } => CliError::Media(format!("{e}; run `polyfuse features` first")),
            E::Corpus(c) => c.into(),
            E::LengthMismatch { .. }
            | E::EmptyInput
            | E::IncompleteReport { .. }
            | E::BadConfiguration(_)
            | E::BadReport(_)
            | E::SpeakerLeakage { .. }
            | E::EmptySplit(_) => CliError::Validation(e.to_string()),
            _ => CliError::Training(e.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Training(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) => CliError::Validation(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

fn out(w: &mut dyn Write, text: &str) -> Result<(), CliError> {
    w.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
}

/// Configuration plus the root directory every relative path hangs off.
pub struct Context {
    pub root: PathBuf,
    pub config: RunConfig,
}

impl Context {
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.path(&self.config.paths.manifest)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.path(&self.config.paths.cache_dir)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path(&self.config.paths.output_dir)
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_dir().join("report.json")
    }

    pub fn split_path(&self) -> PathBuf {
        self.output_dir().join("split.json")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir().join("models")
    }

    fn resolved_manifest(&self) -> Result<CorpusManifest, CliError> {
        let manifest = load_manifest(&self.manifest_path())?;
        Ok(resolve_labels(&manifest, ResolutionPolicy::default())?)
    }

    fn persist_config(&self, dir: &Path) -> Result<(), CliError> {
        write_file(&dir.join(EFFECTIVE_CONFIG_FILE), &self.config.to_toml())
    }

    fn needed_modalities(&self) -> Result<Vec<Modality>, CliError> {
        let configurations = self.config.configurations()?;
        Ok(Modality::ALL
            .into_iter()
            .filter(|m| configurations.iter().any(|c| c.set.contains(*m)))
            .collect())
    }
}

/// Validates the manifest and prints corpus statistics.
pub fn ingest(ctx: &Context, w: &mut dyn Write) -> Result<(), CliError> {
    let manifest = ctx.resolved_manifest()?;
    let stats = compute_statistics(&manifest);
    let table = stats.render_table();
    let dir = ctx.output_dir();
    write_file(&dir.join("statistics.txt"), &table)?;
    write_file(&dir.join("statistics.json"), &(stats.to_json() + "\n"))?;
    out(w, &table)?;
    let mut agreement = String::new();
    for facet in AgreementFacet::ALL {
        if let Ok(p) = compute_agreement(&manifest.annotations, facet) {
            agreement.push_str(&format!("{:?} agreement: {}\n", facet, format_percentage(p)));
        }
    }
    out(w, &agreement.to_lowercase())?;
    out(
        w,
        &format!(
            "{} unresolved, {} usable for training\n",
            manifest.unresolved.len(),
            manifest.binary_labels().len()
        ),
    )
}

/// Fills the feature cache for the labelled utterances. Any per-utterance
/// failure is listed and turns the run into a media error.
pub fn features(ctx: &Context, modalities: &[Modality], w: &mut dyn Write) -> Result<(), CliError> {
    let manifest = ctx.resolved_manifest()?;
    let ids: BTreeSet<String> = manifest.binary_labels().into_keys().collect();
    let cache = FeatureCache::new(ctx.cache_dir());
    let settings = FeatureSettings {
        audio: ctx.config.features.audio.clone(),
        visual_shape: ctx.config.features.visual_shape,
        embeddings: modalities
            .contains(&Modality::Text)
            .then(|| ctx.path(&ctx.config.paths.embeddings)),
        workers: ctx.config.resources.workers,
    };
    let report = build_features(&manifest, &ids, modalities, &cache, &settings)?;
    ctx.persist_config(&ctx.cache_dir())?;
    out(
        w,
        &format!(
            "built {}, skipped {}, failed {}\n",
            report.built,
            report.skipped,
            report.failures.len()
        ),
    )?;
    for (m, id, msg) in &report.failures {
        out(w, &format!("failed {m} {id}: {msg}\n"))?;
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Media(format!("{} feature extractions failed", report.failures.len())))
    }
}

fn pipeline_version(m: Modality) -> &'static str {
    match m {
        Modality::Audio => AUDIO_PIPELINE_VERSION,
        Modality::Visual => VISUAL_PIPELINE_VERSION,
        Modality::Text => TEXT_PIPELINE_VERSION,
    }
}

/// Splits by speaker, trains every configured system and writes the
/// artifacts, the split and the report.
pub fn train(ctx: &Context, w: &mut dyn Write) -> Result<(), CliError> {
    let manifest = ctx.resolved_manifest()?;
    let split = make_splits(&manifest, ctx.config.split.ratios(), ctx.config.split.seed)?;
    let configurations = ctx.config.configurations()?;
    let modalities = ctx.needed_modalities()?;
    let cache = FeatureCache::new(ctx.cache_dir());
    let (data, _) = load_protocol_data(&manifest, &manifest.binary_labels(), &modalities, &cache)
        .map_err(|e| CliError::Media(format!("{e}; run `polyfuse features` first")))?;
    let outcome = run_protocol(&data, &split, &configurations, &ctx.config.models)?;

    let output = ctx.output_dir();
    let models = ctx.models_dir();
    if models.exists() {
        std::fs::remove_dir_all(&models).map_err(io_err(&models))?;
    }
    let versions: BTreeMap<String, String> = modalities
        .iter()
        .map(|m| (m.name().to_string(), pipeline_version(*m).to_string()))
        .collect();
    for (key, artifact) in &outcome.artifacts {
        let mut artifact = artifact.clone();
        artifact.manifest.split_fingerprint = Some(split.fingerprint());
        artifact.manifest.pipeline_versions = versions.clone();
        let dir = models.join(key);
        artifact.save(&dir)?;
        ctx.persist_config(&dir)?;
    }
    write_file(&ctx.split_path(), &(serde_json::to_string_pretty(&split).expect("split serializes") + "\n"))?;
    write_report(ctx, &outcome.report)?;
    ctx.persist_config(&output)?;
    out(
        w,
        &format!(
            "split {} (train {}, validation {}, test {})\n{} models written to {}\n",
            split.fingerprint(),
            split.count(SplitName::Train),
            split.count(SplitName::Validation),
            split.count(SplitName::Test),
            outcome.artifacts.len(),
            models.display()
        ),
    )?;
    out(w, &render_report(&outcome.report, ReportFormat::TextTable, None)?)
}

fn write_report(ctx: &Context, report: &EvaluationReport) -> Result<(), CliError> {
    let json = render_report(report, ReportFormat::Json, None)?;
    write_file(&ctx.report_path(), &json)
}

/// Re-scores the saved models on the saved split's test utterances.
pub fn evaluate(ctx: &Context, w: &mut dyn Write) -> Result<(), CliError> {
    let manifest = ctx.resolved_manifest()?;
    let split_path = ctx.split_path();
    let text = std::fs::read_to_string(&split_path)
        .map_err(|e| CliError::Training(format!("{}: {e}; run `polyfuse train` first", split_path.display())))?;
    let split: SplitAssignment =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", split_path.display())))?;
    let configurations = ctx.config.configurations()?;
    let modalities = ctx.needed_modalities()?;
    let mut artifacts = BTreeMap::new();
    let models = ctx.models_dir();
    if let Ok(entries) = std::fs::read_dir(&models) {
        for entry in entries.flatten() {
            if entry.path().is_dir() {
                let artifact = ModelArtifact::load(&entry.path())?;
                if artifact.manifest.split_fingerprint.as_deref() != Some(split.fingerprint().as_str()) {
                    return Err(CliError::Validation(format!(
                        "model {} was trained on a different split",
                        entry.path().display()
                    )));
                }
                artifacts.insert(entry.file_name().to_string_lossy().into_owned(), artifact);
            }
        }
    }
    let cache = FeatureCache::new(ctx.cache_dir());
    let (data, _) = load_protocol_data(&manifest, &manifest.binary_labels(), &modalities, &cache)
        .map_err(|e| CliError::Media(format!("{e}; run `polyfuse features` first")))?;
    let report = evaluate_artifacts(&data, &split, &configurations, &artifacts, ctx.config.models.seed)?;
    write_report(ctx, &report)?;
    out(w, &render_report(&report, ReportFormat::TextTable, None)?)
}

/// Renders the saved report; every configured system must be present.
pub fn report(ctx: &Context, format: ReportFormat, dest: Option<&Path>, w: &mut dyn Write) -> Result<(), CliError> {
    let path = ctx.report_path();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Validation(format!("{}: {e}; run `polyfuse train` first", path.display())))?;
    let report = EvaluationReport::from_json(&text)?;
    let required: Vec<Configuration> = ctx.config.configurations()?;
    let rendered = render_report(&report, format, Some(&required))?;
    match dest {
        Some(p) => write_file(&ctx.path(p), &rendered),
        None => out(w, &rendered),
    }
}

pub fn synth(config: &SynthConfig, dir: &Path, w: &mut dyn Write) -> Result<(), CliError> {
    let corpus = generate_corpus(config, dir)?;
    out(
        w,
        &format!(
            "{} corpus: {} utterances, {} videos, {} speakers\nmanifest {}\nembeddings {}\n",
            config.scenario,
            corpus.manifest.utterances.len(),
            corpus.manifest.videos.len(),
            config.speakers,
            corpus.manifest_path.display(),
            corpus.embeddings_path.display()
        ),
    )
}

/// Runs the annotation service until interrupted.
pub fn serve_annotations(ctx: &Context) -> Result<(), CliError> {
    let manifest = load_manifest(&ctx.manifest_path())?;
    let a = &ctx.config.annotation;
    let store = AnnotationStore::open(manifest, a.annotators.iter().cloned(), &ctx.path(&a.log))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.bind)
            .await
            .map_err(|e| CliError::Io(format!("{}: {e}", a.bind)))?;
        eprintln!("serving annotations on http://{}", listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?);
        serve(listener, Arc::new(store)).await.map_err(|e| CliError::Io(e.to_string()))
    })
}
