//! Search request handling over an atomically swappable index snapshot, plus the HTTP API.

pub mod http;
mod rate_limit;
mod snapshot;
mod topk;

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::embed::{embed_query, EmbedError, Modality};
use crate::keyword_index::KeywordQuery;
use crate::metadata::{iso_crawl_date, FilterPredicate, MetadataError};
use crate::types::PageKey;

pub use rate_limit::{Clock, ManualClock, MonotonicClock, RateLimitConfig, RateLimiter};
pub use snapshot::{IndexManifest, Snapshot, SnapshotError, MANIFEST_FILE, MANIFEST_VERSION};
pub use topk::{filtered_topk, initial_k, FilteredTopK, TopKError};

pub const DEFAULT_PAGE_SIZE: usize = 24;
pub const MAX_PAGE_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Semantic,
    Visual,
    Keyword,
}

impl std::str::FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "semantic" => Ok(SearchMode::Semantic),
            "visual" => Ok(SearchMode::Visual),
            "keyword" => Ok(SearchMode::Keyword),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRequest {
    pub mode: SearchMode,
    pub q: String,
    pub filters: FilterPredicate,
    pub page: usize,
    pub page_size: usize,
}

impl SearchRequest {
    pub fn new(mode: SearchMode, q: impl Into<String>) -> Self {
        Self {
            mode,
            q: q.into(),
            filters: FilterPredicate::default(),
            page: 1,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultItem {
    pub doc_id: String,
    pub page_number: u32,
    pub score: f64,
    pub url: String,
    pub domain: String,
    pub crawl_date: String,
    pub page_count: u32,
    pub thumbnail_url: String,
    pub page_image_url: String,
    pub download_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub items: Vec<ResultItem>,
    pub page: usize,
    pub page_size: usize,
    pub k_used: Option<usize>,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLink {
    pub page_number: u32,
    pub thumbnail_url: String,
    pub page_image_url: String,
    pub share_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentDetail {
    pub doc_id: String,
    pub url: String,
    pub domain: String,
    pub crawl_date: String,
    pub crawl_timestamp: String,
    pub page_count: u32,
    pub mime: Option<String>,
    pub digest: String,
    pub download_url: String,
    pub selected_page: u32,
    pub share_path: String,
    pub pages: Vec<PageLink>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssetKind {
    Thumb,
    Full,
    Document,
}

/// Client-fetchable asset location under `base`.
pub fn asset_url(base: &str, doc_id: &str, page_number: u32, kind: AssetKind) -> String {
    let base = base.trim_end_matches('/');
    match kind {
        AssetKind::Thumb => format!("{base}/{doc_id}/p{page_number}.thumb.png"),
        AssetKind::Full => format!("{base}/{doc_id}/p{page_number}.full.png"),
        AssetKind::Document => format!("{base}/{doc_id}/doc.pdf"),
    }
}

pub fn share_path(doc_id: &str, page_number: u32) -> String {
    format!("/doc/{doc_id}?page={page_number}")
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    InvalidDomain(String),
    #[error("{0}")]
    NotFound(String),
    #[error("rate limit exceeded")]
    RateLimited { retry_after: u64 },
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::BadRequest(_) => 400,
            ServiceError::InvalidDomain(_) => 422,
            ServiceError::NotFound(_) => 404,
            ServiceError::RateLimited { .. } => 429,
            ServiceError::Unavailable(_) => 503,
            ServiceError::Internal(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::InvalidDomain(_) => "invalid_domain",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::RateLimited { .. } => "rate_limited",
            ServiceError::Unavailable(_) => "unavailable",
            ServiceError::Internal(_) => "internal",
        }
    }
}

impl From<MetadataError> for ServiceError {
    fn from(e: MetadataError) -> Self {
        match e {
            MetadataError::InvalidDomain(_) => ServiceError::InvalidDomain(e.to_string()),
            MetadataError::InvalidFilter(_) => ServiceError::BadRequest(e.to_string()),
            MetadataError::NotFound(_) => ServiceError::NotFound(e.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<TopKError> for ServiceError {
    fn from(e: TopKError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl From<EmbedError> for ServiceError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::EmptyQuery | EmbedError::EmptyInput => {
                ServiceError::BadRequest(format!("query has no searchable terms: {e}"))
            }
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

pub struct SearchService {
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    asset_base: String,
    index_dir: Option<PathBuf>,
}

impl SearchService {
    pub fn new(asset_base: impl Into<String>) -> Self {
        Self {
            snapshot: RwLock::new(None),
            asset_base: asset_base.into(),
            index_dir: None,
        }
    }

    pub fn with_snapshot(asset_base: impl Into<String>, snapshot: Snapshot) -> Self {
        let s = Self::new(asset_base);
        s.swap(snapshot);
        s
    }

    /// Serves `dir`. Starts unavailable if the directory cannot be loaded yet.
    pub fn from_index_dir(asset_base: impl Into<String>, dir: PathBuf) -> (Self, Option<SnapshotError>) {
        let mut s = Self::new(asset_base);
        s.index_dir = Some(dir);
        let err = s.reload().err();
        (s, err)
    }

    pub fn asset_base(&self) -> &str {
        &self.asset_base
    }

    pub fn snapshot(&self) -> Result<Arc<Snapshot>, ServiceError> {
        self.snapshot
            .read()
            .unwrap()
            .clone()
            .ok_or_else(|| ServiceError::Unavailable("no index snapshot is loaded".into()))
    }

    /// Replaces the served snapshot. Requests already holding the old one finish on it.
    pub fn swap(&self, snapshot: Snapshot) {
        *self.snapshot.write().unwrap() = Some(Arc::new(snapshot));
    }

    /// Reloads from the configured index directory. On failure the current snapshot stays.
    pub fn reload(&self) -> Result<(), SnapshotError> {
        let Some(dir) = &self.index_dir else {
            return Ok(());
        };
        let snap = Snapshot::load(dir)?;
        self.swap(snap);
        Ok(())
    }

    pub fn handle_search(&self, req: &SearchRequest) -> Result<SearchResponse, ServiceError> {
        let snap = self.snapshot()?;
        self.search_in(&snap, req)
    }

    pub fn search_in(&self, snap: &Snapshot, req: &SearchRequest) -> Result<SearchResponse, ServiceError> {
        if req.q.trim().is_empty() {
            return Err(ServiceError::BadRequest("q must not be empty".into()));
        }
        if req.page == 0 {
            return Err(ServiceError::BadRequest("page must be at least 1".into()));
        }
        if req.page_size == 0 || req.page_size > MAX_PAGE_SIZE {
            return Err(ServiceError::BadRequest(format!(
                "page_size must be between 1 and {MAX_PAGE_SIZE}"
            )));
        }
        req.filters.validate()?;
        let n_needed = req
            .page
            .checked_mul(req.page_size)
            .ok_or_else(|| ServiceError::BadRequest("page is too large".into()))?;
        let offset = n_needed - req.page_size;

        let (ranked, k_used, exhausted): (Vec<(PageKey, f64)>, Option<usize>, bool) = match req.mode {
            SearchMode::Semantic | SearchMode::Visual => {
                let (index, embedder, modality) = if req.mode == SearchMode::Semantic {
                    (&snap.text_index, &snap.text_embedder, Modality::Text)
                } else {
                    (&snap.image_index, &snap.image_embedder, Modality::Image)
                };
                let q = embed_query(&req.q, modality, embedder.as_ref())?;
                if q.model_id != index.model_id() {
                    return Err(ServiceError::Internal(format!(
                        "query model {} does not match index model {}",
                        q.model_id,
                        index.model_id()
                    )));
                }
                let top = filtered_topk(index, &q.values, snap.manifest.nprobe, &snap.metadata, &req.filters, n_needed)?;
                let ranked = top
                    .hits
                    .into_iter()
                    .map(|h| (h.page_key, f64::from(h.score)))
                    .collect();
                (ranked, Some(top.k_used), top.exhausted)
            }
            SearchMode::Keyword => {
                let query = KeywordQuery::parse(&req.q)
                    .ok_or_else(|| ServiceError::BadRequest("query has no searchable terms".into()))?;
                let mut ranked = Vec::new();
                for hit in snap.keyword.search(&query) {
                    if req.filters.is_empty() || snap.metadata.page_matches(&hit.page_key, &req.filters)? {
                        ranked.push((hit.page_key, hit.score));
                    }
                }
                let exhausted = ranked.len() <= n_needed;
                ranked.truncate(n_needed);
                (ranked, None, exhausted)
            }
        };

        let mut items = Vec::new();
        for (key, score) in ranked.into_iter().skip(offset) {
            items.push(self.result_item(snap, key, score)?);
        }
        Ok(SearchResponse {
            items,
            page: req.page,
            page_size: req.page_size,
            k_used,
            exhausted,
        })
    }

    fn result_item(&self, snap: &Snapshot, key: PageKey, score: f64) -> Result<ResultItem, ServiceError> {
        let doc = snap.metadata.get_document(&key.doc_id)?;
        let base = &self.asset_base;
        Ok(ResultItem {
            thumbnail_url: asset_url(base, &doc.doc_id, key.page_number, AssetKind::Thumb),
            page_image_url: asset_url(base, &doc.doc_id, key.page_number, AssetKind::Full),
            download_url: asset_url(base, &doc.doc_id, 0, AssetKind::Document),
            doc_id: key.doc_id,
            page_number: key.page_number,
            score,
            url: doc.url.clone(),
            domain: doc.domain.clone(),
            crawl_date: iso_crawl_date(&doc.crawl_timestamp),
            page_count: doc.page_count,
        })
    }

    /// Detail for the inspection view. `page` selects the focused page and defaults to the
    /// first available one.
    pub fn document_detail(&self, doc_id: &str, page: Option<u32>) -> Result<DocumentDetail, ServiceError> {
        let snap = self.snapshot()?;
        let doc = snap.metadata.get_document(doc_id)?;
        let selected = match page {
            Some(p) if doc.pages.binary_search(&p).is_ok() => p,
            Some(p) => {
                return Err(ServiceError::NotFound(format!("document {doc_id} has no page {p}")));
            }
            None => doc.pages.first().copied().unwrap_or(1),
        };
        let base = &self.asset_base;
        Ok(DocumentDetail {
            doc_id: doc.doc_id.clone(),
            url: doc.url.clone(),
            domain: doc.domain.clone(),
            crawl_date: iso_crawl_date(&doc.crawl_timestamp),
            crawl_timestamp: doc.crawl_timestamp.clone(),
            page_count: doc.page_count,
            mime: doc.mime.clone(),
            digest: doc.digest.clone(),
            download_url: asset_url(base, &doc.doc_id, 0, AssetKind::Document),
            selected_page: selected,
            share_path: share_path(&doc.doc_id, selected),
            pages: doc
                .pages
                .iter()
                .map(|&p| PageLink {
                    page_number: p,
                    thumbnail_url: asset_url(base, &doc.doc_id, p, AssetKind::Thumb),
                    page_image_url: asset_url(base, &doc.doc_id, p, AssetKind::Full),
                    share_path: share_path(&doc.doc_id, p),
                })
                .collect(),
        })
    }
}
