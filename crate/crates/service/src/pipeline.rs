//! ingestion → segmentation → annotation → risk → explanations, with results
//! cached in the store by analysis id.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::Utc;
use clausewise_core::annotator::{
    annotate_policy, AnnotatorBackend, CompletionClient, FallbackBackend, HttpCompletionClient, LlmBackend, LlmOptions,
    RecordingClient, ReplayClient, SummaryBackend,
};
use clausewise_core::explainer::{generate_explanations, ExplainMode};
use clausewise_core::ingestion::{extract_text_with, registrable_domain, FetchError, Fetcher, PolicySource};
use clausewise_core::risk::{extract_features, report_from_features};
use clausewise_core::segmenter::segment_with;
use clausewise_core::text::sha256_hex;
use clausewise_core::{LexiconBackend, PolicyDocument};
use serde::Serialize;
use tokio::sync::OnceCell;

use crate::config::{BackendKind, CompletionMode, Config, ConfigError, ExplainerKind, Resources};
use crate::record::{AnalysisRecord, DomainReport};
use crate::store::{Store, StoreError};

/// Domain recorded for raw text submitted without one.
pub const LOCAL_DOMAIN: &str = "local";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum AnalyzeInput {
    Url(String),
    Text {
        text: String,
        domain: Option<String>,
    },
    /// A local document, e.g. a file given on the command line.
    Bytes {
        body: Vec<u8>,
        content_type: String,
        domain: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Input,
    Fetch,
    Extract,
    Annotate,
    Risk,
    Store,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Fetch => "fetch",
            Stage::Extract => "extract",
            Stage::Annotate => "annotate",
            Stage::Risk => "risk",
            Stage::Store => "store",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{stage} stage failed: {message}")]
pub struct AnalyzeError {
    pub stage: Stage,
    pub message: String,
}

impl AnalyzeError {
    fn new(stage: Stage, message: impl ToString) -> Self {
        AnalyzeError {
            stage,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub record: Arc<AnalysisRecord>,
    /// True when the record came from the store instead of a fresh run.
    pub cached: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("fetcher: {0}")]
    Fetch(#[from] FetchError),
}

/// Deterministic id for an analysis of `content_hash` under the given
/// configuration.
pub fn analysis_id(content_hash: &str, weights_version: &str, vocab_version: &str, backend: &str) -> String {
    sha256_hex(format!("{content_hash}\n{weights_version}\n{vocab_version}\n{backend}"))
}

/// Build the completion client named by the config.
pub fn completion_client(config: &Config) -> Result<Arc<dyn CompletionClient>, String> {
    let http = || HttpCompletionClient::new(config.completion.http.clone());
    let dir = || {
        config
            .completion
            .replay_dir
            .clone()
            .ok_or_else(|| "completion.replay_dir is required in replay and record modes".to_string())
    };
    Ok(match config.completion.mode {
        CompletionMode::Http => Arc::new(http()),
        CompletionMode::Replay => Arc::new(ReplayClient::new(dir()?)),
        CompletionMode::Record => Arc::new(RecordingClient::new(http(), dir()?)),
    })
}

/// Loaded resources plus the annotators built from them.
pub struct Backends {
    config: Config,
    resources: Resources,
    lexicon: Arc<LexiconBackend>,
    completion: Result<Arc<dyn CompletionClient>, String>,
    llm: Option<Arc<dyn AnnotatorBackend>>,
}

impl Backends {
    pub fn new(config: Config, resources: Resources) -> Self {
        let lexicon = Arc::new(
            LexiconBackend::new(resources.lexicon.clone(), &resources.vocab)
                .expect("lexicon was validated when resources loaded"),
        );
        let completion = completion_client(&config);
        let llm = completion.as_ref().ok().map(|client| {
            let backend = LlmBackend::new(client.clone(), resources.prompt.clone(), llm_options(&config));
            if config.backend.fallback_to_lexicon {
                Arc::new(FallbackBackend::new(backend, lexicon.clone())) as Arc<dyn AnnotatorBackend>
            } else {
                Arc::new(backend)
            }
        });
        Backends {
            config,
            resources,
            lexicon,
            completion,
            llm,
        }
    }

    pub fn load(config: Config) -> Result<Self, SetupError> {
        let resources = Resources::load(&config.paths)?;
        Ok(Self::new(config, resources))
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn lexicon_backend(&self) -> &Arc<LexiconBackend> {
        &self.lexicon
    }

    pub fn completion(&self) -> Result<&Arc<dyn CompletionClient>, String> {
        self.completion.as_ref().map_err(Clone::clone)
    }

    /// The configured LLM annotator without lexicon fallback.
    pub fn llm_backend(&self) -> Result<LlmBackend<Arc<dyn CompletionClient>>, String> {
        Ok(LlmBackend::new(
            self.completion()?.clone(),
            self.resources.prompt.clone(),
            llm_options(&self.config),
        ))
    }

    pub fn summary_backend(&self) -> Result<SummaryBackend<Arc<dyn CompletionClient>>, String> {
        Ok(SummaryBackend::new(
            self.completion()?.clone(),
            self.resources.summary_prompt.clone(),
            self.resources.lexicon.clone(),
            llm_options(&self.config),
        ))
    }

    pub fn backend(&self, kind: BackendKind) -> Result<Arc<dyn AnnotatorBackend>, String> {
        match kind {
            BackendKind::Lexicon => Ok(self.lexicon.clone()),
            BackendKind::Llm => self
                .llm
                .clone()
                .ok_or_else(|| self.completion.clone().err().unwrap_or_default()),
        }
    }

    /// Identity of a backend as it enters the analysis id.
    pub fn backend_id(&self, kind: BackendKind) -> String {
        let lexicon = format!("lexicon:{}", self.resources.lexicon.version);
        match kind {
            BackendKind::Lexicon => lexicon,
            BackendKind::Llm if self.config.backend.fallback_to_lexicon => {
                format!("llm:{}+{lexicon}", self.config.completion.http.model)
            }
            BackendKind::Llm => format!("llm:{}", self.config.completion.http.model),
        }
    }
}

fn llm_options(config: &Config) -> LlmOptions {
    LlmOptions {
        model: config.completion.http.model.clone(),
        max_tokens: config.completion.http.max_tokens,
        retries: config.backend.retries,
    }
}

/// Everything that runs after the bytes are in hand. Shared with blocking
/// worker threads.
pub struct Engine {
    backends: Backends,
    store: Arc<Store>,
}

impl Engine {
    pub fn new(backends: Backends, store: Arc<Store>) -> Self {
        Engine { backends, store }
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Extract, then either return the stored record or run the rest of the
    /// pipeline and store the result.
    pub fn analyze_body(&self, source: PolicySource, body: &[u8], kind: BackendKind) -> Result<Analysis, AnalyzeError> {
        let b = &self.backends;
        let extracted = extract_text_with(body, &source.content_type, &b.resources.boilerplate)
            .map_err(|e| AnalyzeError::new(Stage::Extract, e))?;
        let document = PolicyDocument::new(source, extracted);
        if document.text.trim().is_empty() {
            return Err(AnalyzeError::new(Stage::Extract, "no policy text found"));
        }
        let backend_id = b.backend_id(kind);
        let id = analysis_id(
            &document.content_hash,
            &b.resources.weights.version,
            &b.resources.vocab.version,
            &backend_id,
        );
        if let Some(record) = self.store.get(&id).map_err(|e| AnalyzeError::new(Stage::Store, e))? {
            return Ok(Analysis {
                record: Arc::new(record),
                cached: true,
            });
        }

        let segments = segment_with(&document, b.config.segmenter);
        let backend = b.backend(kind).map_err(|e| AnalyzeError::new(Stage::Annotate, e))?;
        let annotated = annotate_policy(
            &segments,
            backend.as_ref(),
            &b.resources.vocab,
            b.config.backend.parallelism,
        )
        .map_err(|e| AnalyzeError::new(Stage::Annotate, e))?;
        if annotated.degraded > 0 {
            tracing::warn!(degraded = annotated.degraded, "annotations degraded to ambiguous");
        }
        let annotations = annotated.annotations;
        let features = extract_features(&annotations);
        let risk =
            report_from_features(&features, &b.resources.weights).map_err(|e| AnalyzeError::new(Stage::Risk, e))?;
        let mode = match (&b.config.explainer.mode, &b.completion) {
            (ExplainerKind::Llm, Ok(client)) => ExplainMode::Llm {
                client: client.as_ref(),
                options: llm_options(&b.config),
                max_sentences: b.config.explainer.max_sentences,
            },
            _ => ExplainMode::Template,
        };
        let explanations = generate_explanations(&risk, &segments, &annotations, &b.resources.templates, &mode);

        let record = AnalysisRecord {
            analysis_id: id,
            domain: document.source.domain.clone(),
            backend: backend_id,
            document,
            segments,
            annotations,
            features,
            risk,
            explanations,
            created_at: Utc::now(),
        };
        if let Some(bad) = record.dangling_reference() {
            return Err(AnalyzeError::new(
                Stage::Risk,
                format!("record references unknown segment {bad}"),
            ));
        }
        self.store
            .put(&record)
            .map_err(|e| AnalyzeError::new(Stage::Store, e))?;
        Ok(Analysis {
            record: Arc::new(record),
            cached: false,
        })
    }
}

type Flight = Arc<OnceCell<Result<Analysis, AnalyzeError>>>;

pub struct Analyzer {
    engine: Arc<Engine>,
    fetcher: Fetcher,
    inflight: Mutex<HashMap<String, Flight>>,
}

impl Analyzer {
    pub fn new(config: Config) -> Result<Self, SetupError> {
        let store = Arc::new(Store::open(&config.store.dir)?);
        Self::with_parts(Backends::load(config)?, store)
    }

    pub fn with_parts(backends: Backends, store: Arc<Store>) -> Result<Self, SetupError> {
        let fetcher = Fetcher::new(backends.config.fetch.clone())?;
        Ok(Analyzer {
            engine: Arc::new(Engine::new(backends, store)),
            fetcher,
            inflight: Mutex::new(HashMap::new()),
        })
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn store(&self) -> &Arc<Store> {
        self.engine.store()
    }

    /// Analyze `input`. Concurrent calls with the same input and backend
    /// share one run.
    pub async fn analyze(&self, input: AnalyzeInput, backend: Option<BackendKind>) -> Result<Analysis, AnalyzeError> {
        let kind = backend.unwrap_or(self.engine.backends.config.backend.default);
        let key = sha256_hex(serde_json::to_vec(&(&input, kind.as_str())).expect("input serializes"));
        let flight = self
            .inflight
            .lock()
            .expect("inflight table poisoned")
            .entry(key.clone())
            .or_default()
            .clone();
        let result = flight.get_or_init(|| self.run(input, kind)).await.clone();
        let mut inflight = self.inflight.lock().expect("inflight table poisoned");
        if inflight.get(&key).is_some_and(|f| Arc::ptr_eq(f, &flight)) {
            inflight.remove(&key);
        }
        result
    }

    async fn run(&self, input: AnalyzeInput, kind: BackendKind) -> Result<Analysis, AnalyzeError> {
        let (source, body) = match input {
            AnalyzeInput::Url(url) => {
                let fetched = self
                    .fetcher
                    .fetch(&url)
                    .await
                    .map_err(|e| AnalyzeError::new(Stage::Fetch, e))?;
                (fetched.source, fetched.body)
            }
            AnalyzeInput::Text { text, domain } => {
                if text.trim().is_empty() {
                    return Err(AnalyzeError::new(Stage::Input, "text must be non-empty"));
                }
                let domain = domain.unwrap_or_else(|| LOCAL_DOMAIN.to_string());
                let source = PolicySource::local(&domain, "text/plain", text.as_bytes())
                    .map_err(|e| AnalyzeError::new(Stage::Input, e))?;
                (source, text.into_bytes())
            }
            AnalyzeInput::Bytes {
                body,
                content_type,
                domain,
            } => {
                let source = PolicySource::local(&domain, &content_type, &body)
                    .map_err(|e| AnalyzeError::new(Stage::Input, e))?;
                (source, body)
            }
        };
        let engine = self.engine.clone();
        tokio::task::spawn_blocking(move || engine.analyze_body(source, &body, kind))
            .await
            .map_err(|e| AnalyzeError::new(Stage::Annotate, format!("worker failed: {e}")))?
    }

    /// Summary of the newest record for `domain`. A host name is reduced to
    /// its registrable domain first.
    pub fn report(&self, domain: &str) -> Result<Option<DomainReport>, StoreError> {
        let domain = registrable_domain(domain.trim());
        Ok(self.store().newest_for_domain(&domain)?.map(|r| r.summary()))
    }
}

/// Content type for a local file, from its extension.
pub fn content_type_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("html" | "htm" | "xhtml") => "text/html",
        Some("pdf") => "application/pdf",
        _ => "text/plain",
    }
}
