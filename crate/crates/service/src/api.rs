//! HTTP API, versioned under `/v1`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::BackendKind;
use crate::pipeline::{AnalyzeError, AnalyzeInput, Analyzer, Stage};

/// `hit` when the record came from the store, `miss` otherwise.
pub const CACHE_HEADER: &str = "x-cache";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeRequest {
    pub url: Option<String>,
    pub text: Option<String>,
    /// Domain to file raw text under; ignored for URLs.
    pub domain: Option<String>,
    pub backend: Option<BackendKind>,
}

impl AnalyzeRequest {
    pub fn into_input(self) -> Result<(AnalyzeInput, Option<BackendKind>), String> {
        let input = match (self.url, self.text) {
            (Some(url), None) => {
                if self.domain.is_some() {
                    return Err("domain is only accepted with text".into());
                }
                AnalyzeInput::Url(url)
            }
            (None, Some(text)) => AnalyzeInput::Text {
                text,
                domain: self.domain,
            },
            _ => return Err("exactly one of url and text is required".into()),
        };
        Ok((input, self.backend))
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a AnalyzeError,
}

fn status_for(stage: Stage) -> StatusCode {
    match stage {
        Stage::Input => StatusCode::BAD_REQUEST,
        Stage::Fetch => StatusCode::BAD_GATEWAY,
        Stage::Extract => StatusCode::UNPROCESSABLE_ENTITY,
        Stage::Annotate => StatusCode::SERVICE_UNAVAILABLE,
        Stage::Risk | Stage::Store => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn json_response(status: StatusCode, value: &impl Serialize) -> Response {
    let body = serde_json::to_vec(value).expect("responses serialize");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(err: AnalyzeError) -> Response {
    json_response(status_for(err.stage), &ErrorBody { error: &err })
}

fn not_found(what: &str) -> Response {
    let err = AnalyzeError {
        stage: Stage::Input,
        message: format!("{what} not found"),
    };
    json_response(StatusCode::NOT_FOUND, &ErrorBody { error: &err })
}

fn store_failure(e: impl ToString) -> Response {
    error_response(AnalyzeError {
        stage: Stage::Store,
        message: e.to_string(),
    })
}

async fn analyze(State(analyzer): State<Arc<Analyzer>>, body: Bytes) -> Response {
    let parsed = serde_json::from_slice::<AnalyzeRequest>(&body)
        .map_err(|e| e.to_string())
        .and_then(AnalyzeRequest::into_input);
    let (input, backend) = match parsed {
        Ok(x) => x,
        Err(message) => {
            return error_response(AnalyzeError {
                stage: Stage::Input,
                message,
            })
        }
    };
    match analyzer.analyze(input, backend).await {
        Ok(analysis) => {
            let mut response = json_response(StatusCode::OK, analysis.record.as_ref());
            let cache = if analysis.cached { "hit" } else { "miss" };
            response
                .headers_mut()
                .insert(HeaderName::from_static(CACHE_HEADER), HeaderValue::from_static(cache));
            response
        }
        Err(e) => error_response(e),
    }
}

async fn domain_report(State(analyzer): State<Arc<Analyzer>>, Path(domain): Path<String>) -> Response {
    match analyzer.report(&domain) {
        Ok(Some(report)) => json_response(StatusCode::OK, &report),
        Ok(None) => not_found("domain"),
        Err(e) => store_failure(e),
    }
}

async fn analysis(State(analyzer): State<Arc<Analyzer>>, Path(id): Path<String>) -> Response {
    match analyzer.store().get(&id) {
        Ok(Some(record)) => json_response(StatusCode::OK, &record),
        Ok(None) => not_found("analysis"),
        Err(e) => store_failure(e),
    }
}

async fn segments(State(analyzer): State<Arc<Analyzer>>, Path(id): Path<String>) -> Response {
    match analyzer.store().get(&id) {
        Ok(Some(record)) => json_response(StatusCode::OK, &record.segments),
        Ok(None) => not_found("analysis"),
        Err(e) => store_failure(e),
    }
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE])
        .expose_headers([HeaderName::from_static(CACHE_HEADER)]);
    if origins.is_empty() {
        layer.allow_origin(Any)
    } else {
        let list: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
        layer.allow_origin(AllowOrigin::list(list))
    }
}

pub fn router(analyzer: Arc<Analyzer>) -> Router {
    let origins = analyzer.engine().backends().config().server.cors_origins.clone();
    Router::new()
        .route("/v1/analyze", post(analyze))
        .route("/v1/domains/{domain}/report", get(domain_report))
        .route("/v1/analyses/{id}", get(analysis))
        .route("/v1/analyses/{id}/segments", get(segments))
        .route("/healthz", get(|| async { "ok" }))
        .layer(cors(&origins))
        .with_state(analyzer)
}

/// Serve until the future `shutdown` completes.
pub async fn serve(
    analyzer: Arc<Analyzer>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(analyzer))
        .with_graceful_shutdown(shutdown)
        .await
}
