//! The `polyfuse` command line: corpus ingestion, feature caching, training,
//! evaluation, reporting, synthetic corpora and the annotation server.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use polyfuse_core::evaluation::ReportFormat;
use polyfuse_core::fusion::Modality;
use polyfuse_core::synth::{Scenario, SynthConfig};

pub use commands::{CliError, Context};
pub use config::{load_config, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "polyfuse", version, about = "Multimodal sentiment analysis toolkit")]
pub struct Cli {
    /// Directory that every relative path is resolved against.
    #[arg(long, global = true, env = "POLYFUSE_ROOT", default_value = ".")]
    pub root: PathBuf,
    /// TOML config; defaults to `polyfuse.toml` under the root if present.
    #[arg(long, short, global = true, env = "POLYFUSE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set split.seed=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Audio,
    Visual,
    Text,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Audio => Modality::Audio,
            ModalityArg::Visual => Modality::Visual,
            ModalityArg::Text => Modality::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Separable,
    XorCorrelated,
    RampTemporal,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the manifest and print corpus statistics.
    Ingest,
    /// Extract and cache per-utterance features.
    Features {
        /// Defaults to every modality used by the configured systems.
        #[arg(long, value_enum, value_delimiter = ',')]
        modalities: Vec<ModalityArg>,
    },
    /// Train every configured system on a speaker-independent split.
    Train,
    /// Score the saved models on the saved test split.
    Evaluate,
    /// Render the saved evaluation report.
    Report {
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with media and embeddings.
    Synth {
        #[arg(long, value_enum, default_value = "separable")]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 200)]
        utterances: usize,
        #[arg(long, default_value_t = 10)]
        speakers: usize,
        #[arg(long, default_value_t = 2)]
        videos_per_speaker: usize,
        #[arg(long, default_value_t = 3)]
        annotators: usize,
        /// Fraction of utterances whose cue is flipped, per modality.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        embedding_dim: usize,
        /// Output directory, relative to the root.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Serve the annotation HTTP API.
    ServeAnnotations {
        /// Address to listen on; overrides `annotation.bind`.
        #[arg(long)]
        bind: Option<String>,
        /// Registered annotator; repeatable. Overrides `annotation.annotators`.
        #[arg(long = "annotator")]
        annotators: Vec<String>,
    },
}

/// Reads the config file (if any), applies environment and flag overrides.
pub fn context(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<Context, CliError> {
    let path = match &cli.config {
        Some(p) if p.is_absolute() => Some(p.clone()),
        Some(p) => Some(cli.root.join(p)),
        None => Some(cli.root.join(config::DEFAULT_CONFIG_FILE)).filter(|p| p.exists()),
    };
    let text = match &path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|source| config::ConfigError::Io {
            path: p.clone(),
            source,
        })?),
        None => None,
    };
    let origin = path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let config = load_config(text.as_deref().map(|t| (origin.as_str(), t)), env, &cli.overrides)?;
    Ok(Context {
        root: cli.root.clone(),
        config,
    })
}

pub fn run(cli: Cli, env: impl IntoIterator<Item = (String, String)>, w: &mut dyn Write) -> Result<(), CliError> {
    if let Command::Synth {
        scenario,
        utterances,
        speakers,
        videos_per_speaker,
        annotators,
        noise,
        seed,
        embedding_dim,
        out,
    } = &cli.command
    {
        let config = SynthConfig {
            scenario: match scenario {
                ScenarioArg::Separable => Scenario::Separable,
                ScenarioArg::XorCorrelated => Scenario::XorCorrelated,
                ScenarioArg::RampTemporal => Scenario::RampTemporal,
            },
            utterances: *utterances,
            speakers: *speakers,
            videos_per_speaker: *videos_per_speaker,
            annotators: *annotators,
            modality_noise: *noise,
            seed: *seed,
            embedding_dim: *embedding_dim,
            ..SynthConfig::default()
        };
        let dir = if out.is_absolute() {
            out.clone()
        } else if out.as_os_str() == "." {
            cli.root.clone()
        } else {
            cli.root.join(out)
        };
        return commands::synth(&config, &dir, w);
    }

    let mut ctx = context(&cli, env)?;
    match cli.command {
        Command::Ingest => commands::ingest(&ctx, w),
        Command::Features { modalities } => {
            let modalities: Vec<Modality> = if modalities.is_empty() {
                let configurations = ctx.config.configurations()?;
                Modality::ALL
                    .into_iter()
                    .filter(|m| configurations.iter().any(|c| c.set.contains(*m)))
                    .collect()
            } else {
                let mut ms: Vec<Modality> = modalities.into_iter().map(Modality::from).collect();
                ms.sort();
                ms.dedup();
                ms
            };
            commands::features(&ctx, &modalities, w)
        }
        Command::Train => commands::train(&ctx, w),
        Command::Evaluate => commands::evaluate(&ctx, w),
        Command::Report { format, out } => {
            let format = match format {
                FormatArg::Text => ReportFormat::TextTable,
                FormatArg::Json => ReportFormat::Json,
            };
            commands::report(&ctx, format, out.as_deref(), w)
        }
        Command::ServeAnnotations { bind, annotators } => {
            if let Some(bind) = bind {
                ctx.config.annotation.bind = bind;
            }
            if !annotators.is_empty() {
                ctx.config.annotation.annotators = annotators;
            }
            commands::serve_annotations(&ctx)
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
}
