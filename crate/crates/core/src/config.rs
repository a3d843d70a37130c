//! Shared settings for the CLI and the service: a TOML file of flat keys,
//! with environment variables taking precedence.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::chunking::{ChunkingError, ChunkingParams};
use crate::corpus::{default_rules, load_rules, CorpusError, RedactionRule};
use crate::embedding::{EmbeddingProvider, ReferenceEmbedder, RemoteEmbedder, REFERENCE_DIM};
use crate::generation::{GenParams, GenerationError, GeneratorSet, ModelSlots, PipelineName, RemoteGenerator, ScriptedGenerator};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("{0} is required for remote generation (or set gen_script)")]
    MissingEndpoint(&'static str),
    #[error(transparent)]
    Chunking(#[from] ChunkingError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedProviderKind {
    Reference,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub listen_addr: String,
    pub storage_root: PathBuf,
    pub api_token: Option<String>,
    pub kb_id: String,
    pub pipeline: PipelineName,
    /// The two rater ids whose ratings feed the agreement statistic.
    pub raters: [String; 2],
    pub chunk_size: usize,
    pub overlap: usize,
    pub top_k: usize,
    pub redaction_rules: Option<PathBuf>,
    pub embed_provider: EmbedProviderKind,
    pub embed_endpoint: Option<String>,
    pub embed_api_key: Option<String>,
    pub embed_dim: usize,
    pub gen_endpoint_base: Option<String>,
    pub gen_endpoint_finetuned: Option<String>,
    pub gen_api_key: Option<String>,
    pub model_base: String,
    pub model_finetuned: String,
    /// JSON fixture for the scripted generator; replaces remote endpoints.
    pub gen_script: Option<PathBuf>,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            listen_addr: "127.0.0.1:8080".into(),
            storage_root: PathBuf::from("./data"),
            api_token: None,
            kb_id: "admissions".into(),
            pipeline: PipelineName::FinetunedRag,
            raters: ["rater-a".into(), "rater-b".into()],
            chunk_size: 512,
            overlap: 64,
            top_k: 3,
            redaction_rules: None,
            embed_provider: EmbedProviderKind::Reference,
            embed_endpoint: None,
            embed_api_key: None,
            embed_dim: REFERENCE_DIM,
            gen_endpoint_base: None,
            gen_endpoint_finetuned: None,
            gen_api_key: None,
            model_base: "base".into(),
            model_finetuned: "finetuned".into(),
            gen_script: None,
            temperature: 0.2,
            max_tokens: 512,
        }
    }
}

impl Settings {
    /// Reads the optional file, then applies process environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut s = match path {
            Some(p) => Self::from_file(p)?,
            None => Settings::default(),
        };
        s.apply_env(|k| std::env::var(k).ok())?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut s: Settings = toml::from_str(&raw).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        // Relative paths in the file are relative to the file itself.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut s.redaction_rules, &mut s.gen_script].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if s.storage_root.is_relative() {
            s.storage_root = base.join(&s.storage_root);
        }
        Ok(s)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("LISTEN_ADDR") {
            self.listen_addr = v;
        }
        if let Some(v) = get("STORAGE_ROOT") {
            self.storage_root = v.into();
        }
        if let Some(v) = get("API_TOKEN") {
            self.api_token = Some(v);
        }
        if let Some(v) = get("PIPELINE") {
            self.pipeline = v.parse().map_err(|message| ConfigError::Invalid { key: "PIPELINE", message })?;
        }
        if let Some(v) = get("EMBED_PROVIDER") {
            self.embed_provider = match v.as_str() {
                "reference" => EmbedProviderKind::Reference,
                "remote" => EmbedProviderKind::Remote,
                other => {
                    return Err(ConfigError::Invalid { key: "EMBED_PROVIDER", message: format!("unknown provider `{other}`") })
                }
            };
        }
        if let Some(v) = get("EMBED_ENDPOINT") {
            self.embed_endpoint = Some(v);
        }
        if let Some(v) = get("EMBED_API_KEY") {
            self.embed_api_key = Some(v);
        }
        if let Some(v) = get("GEN_ENDPOINT_BASE") {
            self.gen_endpoint_base = Some(v);
        }
        if let Some(v) = get("GEN_ENDPOINT_FINETUNED") {
            self.gen_endpoint_finetuned = Some(v);
        }
        if let Some(v) = get("GEN_API_KEY") {
            self.gen_api_key = Some(v);
        }
        Ok(())
    }

    pub fn chunking(&self) -> Result<ChunkingParams, ConfigError> {
        Ok(ChunkingParams::new(self.chunk_size, self.overlap)?)
    }

    pub fn models(&self) -> ModelSlots {
        ModelSlots { base: self.model_base.clone(), finetuned: self.model_finetuned.clone() }
    }

    pub fn gen_params(&self) -> GenParams {
        GenParams { max_tokens: self.max_tokens, temperature: self.temperature }
    }

    pub fn rules(&self) -> Result<Vec<RedactionRule>, ConfigError> {
        Ok(match &self.redaction_rules {
            Some(p) => load_rules(p)?,
            None => default_rules(),
        })
    }

    pub fn embedder(&self) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
        match self.embed_provider {
            EmbedProviderKind::Reference => Ok(Arc::new(ReferenceEmbedder::new(self.embed_dim))),
            EmbedProviderKind::Remote => {
                let endpoint = self.embed_endpoint.clone().ok_or(ConfigError::Invalid {
                    key: "embed_endpoint",
                    message: "required when embed_provider = \"remote\"".into(),
                })?;
                Ok(Arc::new(RemoteEmbedder::new(endpoint, self.embed_api_key.clone(), self.embed_dim)))
            }
        }
    }

    pub fn generators(&self) -> Result<GeneratorSet, ConfigError> {
        if let Some(script) = &self.gen_script {
            return Ok(GeneratorSet::shared(Arc::new(ScriptedGenerator::from_file(script)?)));
        }
        let base = self.gen_endpoint_base.clone().ok_or(ConfigError::MissingEndpoint("GEN_ENDPOINT_BASE"))?;
        let finetuned = self
            .gen_endpoint_finetuned
            .clone()
            .ok_or(ConfigError::MissingEndpoint("GEN_ENDPOINT_FINETUNED"))?;
        Ok(GeneratorSet {
            base: Arc::new(RemoteGenerator::new(base, &self.model_base, self.gen_api_key.clone())),
            finetuned: Arc::new(RemoteGenerator::new(finetuned, &self.model_finetuned, self.gen_api_key.clone())),
        })
    }
}
