//! Optional pipeline config file and inference provider configs.
//!
//! Precedence for every setting: command-line flag, then config file, then
//! built-in default. Provider endpoints and credentials can additionally be
//! overridden from the environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flipbench::eval::{
    DecodeParams, GoldEcho, HttpInferenceProvider, InferenceProvider, PairedLabel,
    ProcessInferenceProvider,
};
use flipbench::provider::{ProcessCommand, RetryPolicy};
use flipbench::QuestionInstance;
use serde::{Deserialize, Serialize};

pub const ENV_PROVIDER_URL: &str = "FLIPBENCH_PROVIDER_URL";
pub const ENV_API_KEY: &str = "FLIPBENCH_API_KEY";
pub const ENV_EMBED_URL: &str = "FLIPBENCH_EMBED_URL";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub run_id: Option<String>,
    pub seed: Option<u64>,
    pub generate: GenerateSection,
    pub audit: AuditSection,
    pub export: ExportSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub dataset: Option<String>,
    pub pairs_per_category: Option<usize>,
    pub triples: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub share_pools: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub embedder: Option<String>,
    pub embed_url: Option<String>,
    pub embed_command: Option<Vec<String>>,
    pub cache: Option<PathBuf>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub mode: Option<String>,
    pub schedule: Option<String>,
    pub stages: Option<u32>,
    pub ramp_frac: Option<f64>,
    pub terminal: Option<f64>,
    pub epochs: Option<u64>,
    pub batch_size: Option<u64>,
    pub noisy_prefix: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub provider: Option<String>,
    pub concurrency: Option<usize>,
    pub noisy_prefix: Option<PathBuf>,
    pub instruction: Option<String>,
    pub strategy: Option<String>,
}

fn parse_by_extension<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parse {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parse {}", path.display()))
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => parse_by_extension(p),
            None => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderKind {
    Http {
        #[serde(default)]
        url: Option<String>,
        /// Name of the environment variable holding the bearer token.
        #[serde(default)]
        api_key_env: Option<String>,
    },
    Process {
        command: Vec<String>,
    },
    GoldEcho,
    PairedLabel {
        #[serde(default)]
        train: Option<PathBuf>,
    },
}

fn default_max_new_tokens() -> u32 {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    #[serde(flatten)]
    pub kind: ProviderKind,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub decode: Option<DecodeParams>,
    #[serde(default)]
    pub retry: Option<RetryPolicy>,
    /// Tag written into every result record.
    #[serde(default)]
    pub strategy: Option<String>,
}

impl ProviderConfig {
    /// `spec` is a config file path, or the name of a built-in mock.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() {
            return parse_by_extension(path);
        }
        let kind = match spec {
            "gold-echo" => ProviderKind::GoldEcho,
            "paired-label" => ProviderKind::PairedLabel { train: None },
            "http" => ProviderKind::Http {
                url: None,
                api_key_env: None,
            },
            _ => bail!("provider {spec:?} is neither a config file nor a built-in mock"),
        };
        Ok(Self {
            kind,
            max_new_tokens: default_max_new_tokens(),
            decode: None,
            retry: None,
            strategy: None,
        })
    }

    pub fn build(
        &self,
        test: &[QuestionInstance],
        train: Option<&[QuestionInstance]>,
    ) -> Result<Box<dyn InferenceProvider>> {
        Ok(match &self.kind {
            ProviderKind::Http { url, api_key_env } => {
                let url = std::env::var(ENV_PROVIDER_URL)
                    .ok()
                    .or_else(|| url.clone())
                    .with_context(|| format!("http provider needs a url (config or {ENV_PROVIDER_URL})"))?;
                let key_var = api_key_env.as_deref().unwrap_or(ENV_API_KEY);
                let key = std::env::var(key_var).ok();
                Box::new(HttpInferenceProvider::new(url, key))
            }
            ProviderKind::Process { command } => {
                let (program, args) = command.split_first().context("process provider needs a command")?;
                Box::new(ProcessInferenceProvider {
                    command: ProcessCommand {
                        program: program.into(),
                        args: args.to_vec(),
                    },
                })
            }
            ProviderKind::GoldEcho => Box::new(GoldEcho::new(test)),
            ProviderKind::PairedLabel { .. } => {
                let train = train.context("paired-label mock needs the training split (--train)")?;
                Box::new(PairedLabel::new(train, test))
            }
        })
    }

    pub fn train_path(&self) -> Option<&Path> {
        match &self.kind {
            ProviderKind::PairedLabel { train } => train.as_deref(),
            _ => None,
        }
    }
}
