use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::get;
use axum::Router;
use clausewise_core::ingestion::{FetchConfig, FetchError, Fetcher};

#[derive(Clone, Default)]
struct Hits(Arc<Mutex<Vec<Instant>>>);

async fn policy(State(hits): State<Hits>) -> Response {
    hits.0.lock().unwrap().push(Instant::now());
    (
        [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
        "<html><body><h1>Privacy</h1><p>We collect your email.</p></body></html>",
    )
        .into_response()
}

async fn sized(Path(n): Path<usize>) -> Response {
    ([(header::CONTENT_TYPE, "text/plain")], "x".repeat(n)).into_response()
}

async fn streamed(Path(n): Path<usize>) -> Response {
    let chunks = (0..n).map(|_| Ok::<_, std::io::Error>(vec![b'y'; 10]));
    Response::builder()
        .header(header::CONTENT_TYPE, "text/plain")
        .body(Body::from_stream(futures_util::stream::iter(chunks)))
        .unwrap()
}

async fn hop(Path(n): Path<usize>) -> Response {
    if n == 0 {
        ([(header::CONTENT_TYPE, "text/plain")], "arrived").into_response()
    } else {
        Redirect::temporary(&format!("/hop/{}", n - 1)).into_response()
    }
}

async fn slow() -> &'static str {
    tokio::time::sleep(Duration::from_secs(2)).await;
    "late"
}

async fn serve() -> (String, Hits) {
    let hits = Hits::default();
    let app = Router::new()
        .route("/policy", get(policy))
        .route("/size/{n}", get(sized))
        .route("/stream/{n}", get(streamed))
        .route("/hop/{n}", get(hop))
        .route("/slow", get(slow))
        .route("/missing", get(|| async { StatusCode::NOT_FOUND }))
        .with_state(hits.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}"), hits)
}

fn fetcher(config: FetchConfig) -> Fetcher {
    Fetcher::new(FetchConfig {
        per_host_delay_ms: 0,
        ..config
    })
    .unwrap()
}

fn quick() -> FetchConfig {
    FetchConfig {
        per_host_delay_ms: 0,
        ..Default::default()
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn html_page_is_fetched_with_source_metadata() {
    let (base, _) = serve().await;
    let f = fetcher(quick());
    let got = f.fetch(&format!("{base}/policy")).await.unwrap();
    assert_eq!(got.source.content_type, "text/html");
    assert_eq!(got.source.domain, "127.0.0.1");
    assert_eq!(got.source.url.as_deref(), Some(format!("{base}/policy").as_str()));
    assert_eq!(got.source.raw_bytes_hash.len(), 64);
    assert!(String::from_utf8(got.body).unwrap().contains("email"));
}

#[tokio::test(flavor = "multi_thread")]
async fn not_found_is_a_status_error() {
    let (base, _) = serve().await;
    let err = fetcher(quick()).fetch(&format!("{base}/missing")).await.unwrap_err();
    assert!(matches!(err, FetchError::Status { status: 404, .. }), "{err}");
    assert!(err.to_string().contains("404"));
    assert!(err.url().ends_with("/missing"));
}

#[tokio::test(flavor = "multi_thread")]
async fn body_size_limit_is_inclusive() {
    let (base, _) = serve().await;
    let f = fetcher(FetchConfig {
        max_body_bytes: 100,
        ..quick()
    });
    assert_eq!(f.fetch(&format!("{base}/size/100")).await.unwrap().body.len(), 100);
    let err = f.fetch(&format!("{base}/size/101")).await.unwrap_err();
    assert!(matches!(err, FetchError::TooLarge { limit: 100, .. }), "{err}");
    // No Content-Length: the limit is enforced while streaming.
    let err = f.fetch(&format!("{base}/stream/11")).await.unwrap_err();
    assert!(matches!(err, FetchError::TooLarge { .. }), "{err}");
    assert_eq!(f.fetch(&format!("{base}/stream/10")).await.unwrap().body.len(), 100);
}

#[tokio::test(flavor = "multi_thread")]
async fn at_most_five_redirects() {
    let (base, _) = serve().await;
    let f = fetcher(quick());
    let ok = f.fetch(&format!("{base}/hop/5")).await.unwrap();
    assert_eq!(ok.body, b"arrived");
    assert!(ok.source.url.unwrap().ends_with("/hop/0"));
    let err = f.fetch(&format!("{base}/hop/6")).await.unwrap_err();
    assert!(matches!(err, FetchError::TooManyRedirects { limit: 5, .. }), "{err}");
}

#[tokio::test(flavor = "multi_thread")]
async fn slow_server_times_out() {
    let (base, _) = serve().await;
    let f = fetcher(FetchConfig {
        timeout_ms: 200,
        ..quick()
    });
    let err = f.fetch(&format!("{base}/slow")).await.unwrap_err();
    assert!(matches!(err, FetchError::Timeout { .. }), "{err}");
}

#[tokio::test(flavor = "multi_thread")]
async fn non_http_urls_are_rejected() {
    let f = fetcher(quick());
    for bad in ["ftp://example.com/privacy", "not a url", "/relative"] {
        assert!(
            matches!(f.fetch(bad).await, Err(FetchError::InvalidUrl { .. })),
            "{bad}"
        );
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_host_is_a_transport_error() {
    let f = fetcher(FetchConfig {
        timeout_ms: 2_000,
        ..quick()
    });
    let err = f.fetch("http://127.0.0.1:9/policy").await.unwrap_err();
    assert!(
        matches!(err, FetchError::Transport { .. } | FetchError::Timeout { .. }),
        "{err}"
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn same_host_requests_respect_delay() {
    let (base, hits) = serve().await;
    let delay = Duration::from_millis(150);
    let f = Fetcher::new(FetchConfig {
        per_host_delay_ms: delay.as_millis() as u64,
        max_parallel: 4,
        ..Default::default()
    })
    .unwrap();
    let urls: Vec<String> = (0..4).map(|_| format!("{base}/policy")).collect();
    let results = f.fetch_all(&urls).await;
    assert!(results.iter().all(Result::is_ok));
    let mut times = hits.0.lock().unwrap().clone();
    times.sort();
    assert_eq!(times.len(), 4);
    for w in times.windows(2) {
        let gap = w[1] - w[0];
        assert!(gap >= delay, "requests {gap:?} apart");
    }
}
