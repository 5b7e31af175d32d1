//! Configuration resolution: built-in defaults, then the config file,
//! then command-line flags, highest precedence last.

use dr3_core::codec::PromptTemplates;
use dr3_core::llm::{HttpBackend, ScriptedBackend, API_KEY_ENV};
use dr3_core::retrieval::{load_index, Bm25Index, Corpus, HttpRetriever, Retriever};
use dr3_core::trace::RunConfig;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// A configuration or usage problem (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub retriever: RetrieverSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
pub struct BackendSection {
    pub kind: Option<String>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub script_path: Option<PathBuf>,
    pub text_pointer: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct RetrieverSection {
    pub kind: Option<String>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub base_url: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct RunSection {
    pub t_d: Option<usize>,
    pub max_sub_questions: Option<usize>,
    pub redecompose_shots: Option<usize>,
    pub retry_limit: Option<usize>,
    pub templates_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
pub struct EvalSection {
    pub workers: Option<usize>,
    pub mode: Option<String>,
    pub dataset: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))
    }
}

/// Flag-level overrides shared by every subcommand.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct CommonFlags {
    /// Config file (TOML) with backend / retriever / run / eval sections
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Completion backend kind: http or scripted
    #[arg(long)]
    pub backend: Option<String>,
    /// Script file for the scripted backend (JSON list of {match, response})
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Base URL of the completion API
    #[arg(long)]
    pub base_url: Option<String>,
    /// Model name sent to the completion API
    #[arg(long)]
    pub model: Option<String>,
    /// Retriever kind: bm25 or http
    #[arg(long)]
    pub retriever: Option<String>,
    /// Passage corpus (JSONL with id/title/text per line)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Prebuilt index cache (see the index subcommand)
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Base URL of an external retrieval service
    #[arg(long)]
    pub retriever_url: Option<String>,
    /// Passage replacements per sub-question during correction
    #[arg(long)]
    pub t_d: Option<usize>,
    /// Maximum consecutive sub-questions per attempt
    #[arg(long)]
    pub max_subq: Option<usize>,
    /// Exemplars in the decomposition-revision prompt
    #[arg(long)]
    pub redecompose_shots: Option<usize>,
    /// Transport retries for the HTTP backend
    #[arg(long)]
    pub retry_limit: Option<usize>,
    /// Directory with react_plus.txt / discriminator.txt / redecompose.txt
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

/// How to build completion backends after precedence resolution.
pub enum BackendSpec {
    Scripted(ScriptedBackend),
    Http(HttpBackend),
}

impl BackendSpec {
    /// A fresh backend instance (scripted cursors start at zero).
    pub fn instantiate(&self) -> Box<dyn dr3_core::llm::CompletionBackend> {
        match self {
            BackendSpec::Scripted(s) => Box::new(s.fresh()),
            BackendSpec::Http(h) => Box::new(h.clone()),
        }
    }
}

/// Fully resolved settings.
pub struct Settings {
    pub file: FileConfig,
    pub flags: CommonFlags,
}

impl Settings {
    pub fn resolve(flags: CommonFlags) -> Result<Self, ConfigError> {
        let file = FileConfig::load(flags.config.as_deref())?;
        Ok(Settings { file, flags })
    }

    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let defaults = RunConfig::default();
        let config = RunConfig {
            t_d: self.flags.t_d.or(self.file.run.t_d).unwrap_or(defaults.t_d),
            max_sub_questions: self
                .flags
                .max_subq
                .or(self.file.run.max_sub_questions)
                .unwrap_or(defaults.max_sub_questions),
            redecompose_shots: self
                .flags
                .redecompose_shots
                .or(self.file.run.redecompose_shots)
                .unwrap_or(defaults.redecompose_shots),
            retry_limit: self
                .flags
                .retry_limit
                .or(self.file.run.retry_limit)
                .unwrap_or(defaults.retry_limit),
        };
        config.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(config)
    }

    pub fn templates(&self) -> Result<PromptTemplates, ConfigError> {
        let dir = self
            .flags
            .templates
            .clone()
            .or_else(|| self.file.run.templates_dir.clone());
        match dir {
            Some(dir) => PromptTemplates::load_dir(&dir).map_err(|e| ConfigError(e.to_string())),
            None => Ok(PromptTemplates::builtin()),
        }
    }

    pub fn backend_spec(&self) -> Result<BackendSpec, ConfigError> {
        let kind = self
            .flags
            .backend
            .clone()
            .or_else(|| self.file.backend.kind.clone())
            .unwrap_or_else(|| "http".to_string());
        match kind.as_str() {
            "scripted" => {
                let path = self
                    .flags
                    .script
                    .clone()
                    .or_else(|| self.file.backend.script_path.clone())
                    .ok_or_else(|| {
                        ConfigError("scripted backend needs --script or backend.script_path".into())
                    })?;
                let script =
                    ScriptedBackend::load(&path).map_err(|e| ConfigError(e.to_string()))?;
                Ok(BackendSpec::Scripted(script))
            }
            "http" => {
                let base_url = self
                    .flags
                    .base_url
                    .clone()
                    .or_else(|| self.file.backend.base_url.clone())
                    .ok_or_else(|| {
                        ConfigError("http backend needs --base-url or backend.base_url".into())
                    })?;
                let model = self
                    .flags
                    .model
                    .clone()
                    .or_else(|| self.file.backend.model.clone())
                    .unwrap_or_default();
                let run = self.run_config()?;
                let mut backend = HttpBackend::new(base_url, model)
                    .with_retry(run.retry_limit, std::time::Duration::from_millis(500));
                if let Some(pointer) = &self.file.backend.text_pointer {
                    backend = backend.with_text_pointer(pointer.clone());
                }
                if let Ok(key) = std::env::var(API_KEY_ENV) {
                    if !key.is_empty() {
                        backend = backend.with_api_key(key);
                    }
                }
                Ok(BackendSpec::Http(backend))
            }
            other => Err(ConfigError(format!("unknown backend kind {other:?}"))),
        }
    }

    pub fn build_retriever(&self) -> Result<Box<dyn Retriever>, ConfigError> {
        let kind = self
            .flags
            .retriever
            .clone()
            .or_else(|| self.file.retriever.kind.clone())
            .unwrap_or_else(|| "bm25".to_string());
        match kind.as_str() {
            "bm25" => {
                let index_path = self
                    .flags
                    .index
                    .clone()
                    .or_else(|| self.file.retriever.index.clone());
                if let Some(path) = index_path {
                    let index = load_index(&path).map_err(|e| ConfigError(e.to_string()))?;
                    return Ok(Box::new(index));
                }
                let corpus_path = self
                    .flags
                    .corpus
                    .clone()
                    .or_else(|| self.file.retriever.corpus.clone())
                    .ok_or_else(|| {
                        ConfigError(
                            "bm25 retriever needs --corpus/--index or the retriever section".into(),
                        )
                    })?;
                let corpus = Corpus::load(&corpus_path).map_err(|e| ConfigError(e.to_string()))?;
                let index = Bm25Index::build(&corpus).map_err(|e| ConfigError(e.to_string()))?;
                Ok(Box::new(index))
            }
            "http" => {
                let base_url = self
                    .flags
                    .retriever_url
                    .clone()
                    .or_else(|| self.file.retriever.base_url.clone())
                    .ok_or_else(|| {
                        ConfigError(
                            "http retriever needs --retriever-url or retriever.base_url".into(),
                        )
                    })?;
                Ok(Box::new(HttpRetriever::new(base_url)))
            }
            other => Err(ConfigError(format!("unknown retriever kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dr3.toml");
        std::fs::write(&path, "[run]\nt_d = 5\n").unwrap();

        // Default.
        let settings = Settings::resolve(CommonFlags::default()).unwrap();
        assert_eq!(settings.run_config().unwrap().t_d, 3);

        // File overrides default.
        let flags = CommonFlags {
            config: Some(path.clone()),
            ..CommonFlags::default()
        };
        let settings = Settings::resolve(flags).unwrap();
        assert_eq!(settings.run_config().unwrap().t_d, 5);

        // Flag overrides file.
        let flags = CommonFlags {
            config: Some(path),
            t_d: Some(2),
            ..CommonFlags::default()
        };
        let settings = Settings::resolve(flags).unwrap();
        assert_eq!(settings.run_config().unwrap().t_d, 2);
    }

    #[test]
    fn unknown_backend_kind_is_a_config_error() {
        let flags = CommonFlags {
            backend: Some("quantum".into()),
            ..CommonFlags::default()
        };
        let settings = Settings::resolve(flags).unwrap();
        assert!(settings.backend_spec().is_err());
    }

    #[test]
    fn scripted_backend_requires_a_script_path() {
        let flags = CommonFlags {
            backend: Some("scripted".into()),
            ..CommonFlags::default()
        };
        let settings = Settings::resolve(flags).unwrap();
        assert!(settings.backend_spec().is_err());
    }
}
