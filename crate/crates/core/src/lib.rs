//! Page-level multimodal search over documents recovered from web archives.
//!
//! The crate is split along the batch pipeline and the serving path:
//!
//! * [`ingest`] reads CDX indices and WARC records and produces a deduplicated manifest.
//! * [`docparse`] splits documents into pages, extracts text and renders rasters.
//! * [`embed`] turns page text and page images into unit-norm vectors.
//! * [`vector_index`] and [`keyword_index`] hold the searchable structures.
//! * [`metadata`] stores per-document facts and evaluates facet filters.
//! * [`service`] answers search requests over an immutable index snapshot.
//! * [`pipeline`] runs the batch stages with resumability and cost accounting.

pub mod codec;
pub mod docparse;
pub mod embed;
pub mod ingest;
pub mod keyword_index;
pub mod metadata;
pub mod pipeline;
pub mod service;
pub mod types;
pub mod vector_index;

pub use docparse::{ParseStatus, ParsedDocument, PageRecord, Raster};
pub use embed::{EmbedderSpec, EmbeddingVector, Modality};
pub use ingest::{CdxEntry, DocumentRecord, Manifest, SelectionCounters};
pub use keyword_index::{KeywordIndex, KeywordQuery, ScoredPage};
pub use metadata::{FilterPredicate, MetadataStore, PageMeta};
pub use service::{SearchMode, SearchRequest, SearchResponse, SearchService};
pub use types::PageKey;
pub use vector_index::{FlatIndex, IvfIndex, SearchHit, VectorIndex};
