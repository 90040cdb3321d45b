//! JSON-over-HTTP front end.
//!
//! `GET /api/search`, `GET /api/document/{doc_id}`, `GET /doc/{doc_id}?page=n` (share link,
//! same body as the document endpoint), `GET /api/health`, `GET /api/stats`. Errors are
//! `{"error": {"code", "message"}}`.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{ConnectInfo, Path, RawQuery, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;

use super::{RateLimitConfig, RateLimiter, SearchMode, SearchRequest, SearchService, ServiceError, DEFAULT_PAGE_SIZE};
use crate::metadata::FilterPredicate;

pub const GENERATION_HEADER: &str = "x-index-generation";

/// Server settings read from `ASSET_BASE_URL`, `INDEX_DIR`, `BIND_ADDR` and `RATE_LIMIT`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub asset_base: String,
    pub index_dir: PathBuf,
    pub bind_addr: SocketAddr,
    pub rate_limit: Option<RateLimitConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            asset_base: "/assets".into(),
            index_dir: PathBuf::from("index"),
            bind_addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            rate_limit: Some(RateLimitConfig {
                rate_per_sec: 10.0,
                burst: 20,
            }),
        }
    }
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut cfg = Self::default();
        if let Some(v) = get("ASSET_BASE_URL") {
            cfg.asset_base = v;
        }
        if let Some(v) = get("INDEX_DIR") {
            cfg.index_dir = PathBuf::from(v);
        }
        if let Some(v) = get("BIND_ADDR") {
            cfg.bind_addr = v.parse().map_err(|_| format!("BIND_ADDR {v:?} is not a socket address"))?;
        }
        if let Some(v) = get("RATE_LIMIT") {
            cfg.rate_limit = RateLimitConfig::parse(&v)?;
        }
        Ok(cfg)
    }
}

#[derive(Clone)]
struct AppState {
    service: Arc<SearchService>,
    limiter: Arc<RateLimiter>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = Json(json!({"error": {"code": self.code(), "message": self.to_string()}}));
        let mut resp = (status, body).into_response();
        if let ServiceError::RateLimited { retry_after } = self {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(retry_after));
        }
        resp
    }
}

pub fn router(service: Arc<SearchService>, limiter: Arc<RateLimiter>) -> Router {
    let state = AppState { service, limiter };
    let limited = Router::new()
        .route("/api/search", get(search))
        .route("/api/document/{doc_id}", get(document))
        .route("/doc/{doc_id}", get(document))
        .route_layer(middleware::from_fn_with_state(state.clone(), rate_limit));
    Router::new()
        .route("/api/health", get(health))
        .route("/api/stats", get(stats))
        .merge(limited)
        .with_state(state)
}

fn client_key(req: &Request) -> String {
    if let Some(forwarded) = req.headers().get("x-forwarded-for").and_then(|v| v.to_str().ok()) {
        if let Some(first) = forwarded.split(',').next().map(str::trim).filter(|s| !s.is_empty()) {
            return first.to_string();
        }
    }
    req.extensions()
        .get::<ConnectInfo<SocketAddr>>()
        .map(|c| c.0.ip().to_string())
        .unwrap_or_else(|| "anonymous".into())
}

async fn rate_limit(State(state): State<AppState>, req: Request, next: Next) -> Response {
    match state.limiter.check(&client_key(&req)) {
        Ok(()) => next.run(req).await,
        Err(retry_after) => ServiceError::RateLimited { retry_after }.into_response(),
    }
}

fn params(raw: Option<String>) -> Vec<(String, String)> {
    raw.map(|q| url::form_urlencoded::parse(q.as_bytes()).into_owned().collect())
        .unwrap_or_default()
}

fn single<'a>(params: &'a [(String, String)], name: &str) -> Result<Option<&'a str>, ServiceError> {
    let mut found = params.iter().filter(|(k, _)| k == name).map(|(_, v)| v.as_str());
    let first = found.next();
    if found.next().is_some() {
        return Err(ServiceError::BadRequest(format!("parameter {name} given more than once")));
    }
    Ok(first.filter(|v| !v.is_empty()))
}

fn number<T: std::str::FromStr>(params: &[(String, String)], name: &str) -> Result<Option<T>, ServiceError> {
    single(params, name)?
        .map(|v| {
            v.parse()
                .map_err(|_| ServiceError::BadRequest(format!("{name} must be a non-negative integer")))
        })
        .transpose()
}

/// Builds a request from query parameters. `domains` is comma-separated and may repeat.
pub fn parse_search_params(params: &[(String, String)]) -> Result<SearchRequest, ServiceError> {
    let mode: SearchMode = single(params, "mode")?
        .ok_or_else(|| ServiceError::BadRequest("mode is required".into()))?
        .parse()
        .map_err(ServiceError::BadRequest)?;
    let q = single(params, "q")?.unwrap_or("").to_string();
    let domains: Vec<String> = params
        .iter()
        .filter(|(k, _)| k == "domains")
        .flat_map(|(_, v)| v.split(','))
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .map(String::from)
        .collect();
    let filters = FilterPredicate::from_parts(
        (!domains.is_empty()).then_some(domains),
        single(params, "date_from")?,
        single(params, "date_to")?,
        number(params, "page_count_max")?,
    )?;
    Ok(SearchRequest {
        mode,
        q,
        filters,
        page: number(params, "page")?.unwrap_or(1),
        page_size: number(params, "page_size")?.unwrap_or(DEFAULT_PAGE_SIZE),
    })
}

fn with_generation<T: Serialize>(body: T, generation: &str) -> Response {
    let mut resp = Json(body).into_response();
    if let Ok(v) = HeaderValue::from_str(generation) {
        resp.headers_mut().insert(GENERATION_HEADER, v);
    }
    resp
}

async fn search(State(state): State<AppState>, RawQuery(raw): RawQuery) -> Result<Response, ServiceError> {
    let req = parse_search_params(&params(raw))?;
    let service = state.service.clone();
    tokio::task::spawn_blocking(move || {
        let snap = service.snapshot()?;
        let resp = service.search_in(&snap, &req)?;
        Ok(with_generation(resp, &snap.manifest.generation))
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn document(
    State(state): State<AppState>,
    Path(doc_id): Path<String>,
    RawQuery(raw): RawQuery,
) -> Result<Response, ServiceError> {
    let params = params(raw);
    let page = number::<u32>(&params, "page")?;
    let detail = state.service.document_detail(&doc_id, page)?;
    Ok(Json(detail).into_response())
}

async fn health(State(state): State<AppState>) -> Result<Response, ServiceError> {
    let snap = state.service.snapshot()?;
    Ok(Json(json!({"status": "ok", "generation": snap.manifest.generation})).into_response())
}

async fn stats(State(state): State<AppState>) -> Result<Response, ServiceError> {
    let snap = state.service.snapshot()?;
    let m = &snap.manifest;
    Ok(Json(json!({
        "generation": m.generation,
        "documents": snap.metadata.len(),
        "pages": snap.metadata.page_total(),
        "text_index": snap.text_index.stats(),
        "image_index": snap.image_index.stats(),
        "keyword_pages": snap.keyword.page_count(),
        "keyword_terms": snap.keyword.term_count(),
        "text_model": m.text_model.model_id,
        "image_model": m.image_model.model_id,
    }))
    .into_response())
}

pub fn headers_generation(headers: &HeaderMap) -> Option<&str> {
    headers.get(GENERATION_HEADER).and_then(|v| v.to_str().ok())
}

/// Serves on `listener` until `shutdown` resolves. SIGHUP reloads the index directory.
pub async fn serve_listener(
    listener: tokio::net::TcpListener,
    service: Arc<SearchService>,
    limiter: Arc<RateLimiter>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    #[cfg(unix)]
    {
        let service = service.clone();
        let mut hup = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::hangup())?;
        tokio::spawn(async move {
            while hup.recv().await.is_some() {
                let s = service.clone();
                match tokio::task::spawn_blocking(move || s.reload()).await {
                    Ok(Ok(())) => tracing::info!("index snapshot reloaded"),
                    Ok(Err(e)) => tracing::warn!("reload failed, keeping current snapshot: {e}"),
                    Err(e) => tracing::warn!("reload task failed: {e}"),
                }
            }
        });
    }
    let app = router(service, limiter);
    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(shutdown)
        .await
}

pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let (service, err) = SearchService::from_index_dir(config.asset_base.clone(), config.index_dir.clone());
    if let Some(e) = err {
        tracing::warn!("starting without an index snapshot: {e}");
    }
    let limiter = RateLimiter::new(config.rate_limit, Arc::new(super::MonotonicClock::default()));
    let listener = tokio::net::TcpListener::bind(config.bind_addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    serve_listener(listener, Arc::new(service), Arc::new(limiter), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn search_params() {
        let r = parse_search_params(&p(&[
            ("mode", "keyword"),
            ("q", "\"clean water\""),
            ("domains", "EPA.gov,sec.gov"),
            ("domains", "ca.gov"),
            ("date_from", "2020"),
            ("page", "2"),
        ]))
        .unwrap();
        assert_eq!(r.mode, SearchMode::Keyword);
        assert_eq!(r.page, 2);
        assert_eq!(r.page_size, DEFAULT_PAGE_SIZE);
        assert_eq!(r.filters.domains.unwrap().len(), 3);
        assert_eq!(r.filters.date_from.as_deref(), Some("20200000000000"));
    }

    #[test]
    fn search_param_errors() {
        let status = |pairs: &[(&str, &str)]| parse_search_params(&p(pairs)).unwrap_err().status();
        assert_eq!(status(&[("q", "x")]), 400);
        assert_eq!(status(&[("mode", "fuzzy"), ("q", "x")]), 400);
        assert_eq!(status(&[("mode", "keyword"), ("page", "-1")]), 400);
        assert_eq!(status(&[("mode", "keyword"), ("domains", "a b")]), 422);
        assert_eq!(status(&[("mode", "keyword"), ("date_from", "2021"), ("date_to", "2020")]), 400);
    }

    #[test]
    fn env_config() {
        let cfg = ServiceConfig::from_lookup(|k| match k {
            "RATE_LIMIT" => Some("off".into()),
            "BIND_ADDR" => Some("0.0.0.0:9000".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.rate_limit, None);
        assert_eq!(cfg.bind_addr.port(), 9000);
        assert!(ServiceConfig::from_lookup(|k| (k == "BIND_ADDR").then(|| "nope".into())).is_err());
    }
}
