//! TOML configuration. Every section is optional; missing keys take defaults.

use std::path::{Path, PathBuf};

use clausewise_core::annotator::{HttpClientConfig, Lexicon, PromptTemplate};
use clausewise_core::explainer::{ExplanationTemplates, DEFAULT_MAX_SENTENCES};
use clausewise_core::ingestion::{BoilerplateRules, FetchConfig};
use clausewise_core::segmenter::SegmenterConfig;
use clausewise_core::{CategoryVocabulary, RiskWeights};
use serde::{Deserialize, Serialize};

/// Environment variable naming the config file when no flag is given.
pub const CONFIG_ENV: &str = "CLAUSEWISE_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub fetch: FetchConfig,
    pub backend: BackendConfig,
    pub completion: CompletionConfig,
    pub paths: PathsConfig,
    pub store: StoreConfig,
    pub server: ServerConfig,
    pub segmenter: SegmenterConfig,
    pub explainer: ExplainerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Lexicon,
    Llm,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Lexicon => "lexicon",
            BackendKind::Llm => "llm",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexicon" => Ok(BackendKind::Lexicon),
            "llm" => Ok(BackendKind::Llm),
            _ => Err(format!("unknown backend {s:?} (expected lexicon or llm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub default: BackendKind,
    /// Annotate with the lexicon when the completion endpoint is down.
    pub fallback_to_lexicon: bool,
    pub retries: u32,
    pub parallelism: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            default: BackendKind::Lexicon,
            fallback_to_lexicon: false,
            retries: 1,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompletionMode {
    #[default]
    Http,
    Replay,
    Record,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionConfig {
    pub mode: CompletionMode,
    /// Replay files are read from (replay) or written to (record) here.
    pub replay_dir: Option<PathBuf>,
    pub http: HttpClientConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub weights: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub prompt_template: Option<PathBuf>,
    pub summary_template: Option<PathBuf>,
    pub explanation_templates: Option<PathBuf>,
    pub boilerplate: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    pub dir: PathBuf,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            dir: PathBuf::from("clausewise-store"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    /// Origins allowed by CORS; empty allows any origin.
    pub cors_origins: Vec<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1".into(),
            port: 8787,
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainerKind {
    #[default]
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub mode: ExplainerKind,
    /// Upper bound on sentences in a rephrased explanation.
    pub max_sentences: usize,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            mode: ExplainerKind::default(),
            max_sentences: DEFAULT_MAX_SENTENCES,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &Path, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config = Self::from_toml_str(&text).map_err(|e| invalid(path, e.message()))?;
        if config.explainer.max_sentences == 0 {
            return Err(invalid(path, "explainer.max_sentences must be at least 1"));
        }
        Ok(config)
    }

    /// The explicit path if given, else `$CLAUSEWISE_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Config::default()),
            },
        }
    }
}

/// Data files named by [`PathsConfig`], loaded and cross-validated.
#[derive(Debug, Clone)]
pub struct Resources {
    pub vocab: CategoryVocabulary,
    pub weights: RiskWeights,
    pub lexicon: Lexicon,
    pub prompt: PromptTemplate,
    pub summary_prompt: PromptTemplate,
    pub templates: ExplanationTemplates,
    pub boilerplate: BoilerplateRules,
}

impl Resources {
    pub fn load(paths: &PathsConfig) -> Result<Self, ConfigError> {
        let vocab = CategoryVocabulary::load(paths.vocabulary.as_deref()).map_err(|e| ConfigError::Invalid {
            path: "vocabulary".into(),
            message: e.to_string(),
        })?;
        let weights = match &paths.weights {
            Some(p) => RiskWeights::load(p).map_err(|e| invalid(p, e))?,
            None => RiskWeights::embedded(),
        };
        let lexicon = match &paths.lexicon {
            Some(p) => Lexicon::load(p).map_err(|e| invalid(p, e))?,
            None => Lexicon::embedded(),
        };
        lexicon.validate(&vocab).map_err(|e| ConfigError::Invalid {
            path: paths
                .lexicon
                .as_ref()
                .map_or("<embedded lexicon>".into(), |p| p.display().to_string()),
            message: e.to_string(),
        })?;
        let prompt = match &paths.prompt_template {
            Some(p) => PromptTemplate::load(p, true).map_err(|e| invalid(p, e))?,
            None => PromptTemplate::annotation_default(),
        };
        let summary_prompt = match &paths.summary_template {
            Some(p) => PromptTemplate::load(p, false).map_err(|e| invalid(p, e))?,
            None => PromptTemplate::summary_default(),
        };
        let templates = match &paths.explanation_templates {
            Some(p) => ExplanationTemplates::load(p).map_err(|e| invalid(p, e))?,
            None => ExplanationTemplates::embedded(),
        };
        let boilerplate = match &paths.boilerplate {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                BoilerplateRules::from_json_str(&text).map_err(|e| invalid(p, e))?
            }
            None => BoilerplateRules::embedded().clone(),
        };
        Ok(Resources {
            vocab,
            weights,
            lexicon,
            prompt,
            summary_prompt,
            templates,
            boilerplate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(Config::from_toml_str("").unwrap(), Config::default());
    }

    #[test]
    fn sections_parse() {
        let c = Config::from_toml_str(
            r#"
            [fetch]
            timeout_ms = 500
            [backend]
            default = "llm"
            fallback_to_lexicon = true
            [completion]
            mode = "replay"
            replay_dir = "replays"
            [completion.http]
            model = "small"
            [store]
            dir = "/tmp/x"
            [server]
            port = 9000
            cors_origins = ["chrome-extension://abc"]
            [segmenter]
            min_segment_chars = 10
            [explainer]
            mode = "llm"
            max_sentences = 2
            "#,
        )
        .unwrap();
        assert_eq!(c.fetch.timeout_ms, 500);
        assert_eq!(c.fetch.max_redirects, 5);
        assert_eq!(c.backend.default, BackendKind::Llm);
        assert_eq!(c.backend.retries, 1);
        assert_eq!(c.completion.mode, CompletionMode::Replay);
        assert_eq!(c.completion.http.model, "small");
        assert_eq!(c.server.port, 9000);
        assert_eq!(c.segmenter.min_segment_chars, 10);
        assert_eq!(c.explainer.mode, ExplainerKind::Llm);
        assert_eq!(c.explainer.max_sentences, 2);
    }

    #[test]
    fn zero_sentence_limit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[explainer]\nmax_sentences = 0\n").unwrap();
        assert!(matches!(Config::load(&path), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml_str("[store]\ndirectory = \"x\"\n").is_err());
        assert!(Config::from_toml_str("[nope]\n").is_err());
    }

    #[test]
    fn embedded_resources_load() {
        let r = Resources::load(&PathsConfig::default()).unwrap();
        assert_eq!(r.weights.version, "default-1");
    }
}
