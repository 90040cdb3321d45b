//! Page and query embeddings behind a provider contract.
//!
//! The reference provider is a seeded feature-hashing projection that needs no model files.
//! Model-backed providers run out of process and speak the framed protocol in [`wire`].

mod external;
mod hashing;
pub mod shard;
mod tokenize;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::docparse::Raster;

pub use external::ExternalEmbedder;
pub use hashing::{
    downsample_gray, fnv1a64, hash_project, image_pseudo_tokens, visual_code, HashImageEmbedder,
    HashTextEmbedder, INTENSITY_BUCKETS, VISUAL_GRID,
};
pub use tokenize::{tokenize, tokenize_and_truncate};

pub const DEFAULT_TOKEN_LIMIT: usize = 512;
pub const DEFAULT_TEXT_DIM: usize = 768;
pub const DEFAULT_IMAGE_DIM: usize = 512;
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Text => 0,
            Modality::Image => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Text),
            1 => Some(Modality::Image),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub model_id: String,
    pub modality: Modality,
    pub dim: usize,
    /// Text providers only.
    pub token_limit: Option<usize>,
    pub deterministic: bool,
    pub seed: u64,
}

impl EmbedderSpec {
    pub fn default_text() -> Self {
        Self {
            model_id: "hash-text-v1".into(),
            modality: Modality::Text,
            dim: DEFAULT_TEXT_DIM,
            token_limit: Some(DEFAULT_TOKEN_LIMIT),
            deterministic: true,
            seed: 0x5eed,
        }
    }

    pub fn default_image() -> Self {
        Self {
            model_id: "hash-image-v1".into(),
            modality: Modality::Image,
            dim: DEFAULT_IMAGE_DIM,
            token_limit: None,
            deterministic: true,
            seed: 0x1ace,
        }
    }
}

/// A unit-norm embedding tagged with the space it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub modality: Modality,
    pub model_id: String,
}

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. Fails on zero or non-finite input rather than
    /// returning a zero vector.
    pub fn normalized(
        raw: &[f64],
        modality: Modality,
        model_id: &str,
    ) -> Result<Self, EmbedError> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Degenerate("non-finite component".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::Degenerate("zero vector".into()));
        }
        Ok(Self {
            values: raw.iter().map(|v| (v / norm) as f32).collect(),
            modality,
            model_id: model_id.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f32 {
        crate::vector_index::dot(&self.values, &other.values)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("input has no tokens to embed")]
    EmptyInput,
    #[error("embedder produces {have:?} vectors, {want:?} requested")]
    WrongModality { have: Modality, want: Modality },
    #[error("degenerate embedding: {0}")]
    Degenerate(String),
    #[error("provider failure: {0}")]
    Provider(String),
}

pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;

    fn embed_text_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed_image_batch(&self, images: &[Raster]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    /// Embeds a free-text query into this embedder's space. For image embedders this is the
    /// joint text-to-image encoder.
    fn embed_query_text(&self, query: &str) -> Result<EmbeddingVector, EmbedError>;
}

fn expect_modality(e: &dyn Embedder, want: Modality) -> Result<(), EmbedError> {
    let have = e.spec().modality;
    if have != want {
        return Err(EmbedError::WrongModality { have, want });
    }
    Ok(())
}

pub fn embed_text(text: &str, embedder: &dyn Embedder) -> Result<EmbeddingVector, EmbedError> {
    expect_modality(embedder, Modality::Text)?;
    one(embedder.embed_text_batch(&[text])?)
}

pub fn embed_image(raster: &Raster, embedder: &dyn Embedder) -> Result<EmbeddingVector, EmbedError> {
    expect_modality(embedder, Modality::Image)?;
    one(embedder.embed_image_batch(std::slice::from_ref(raster))?)
}

/// Embeds a search query with the embedder for `modality`.
pub fn embed_query(
    query: &str,
    modality: Modality,
    embedder: &dyn Embedder,
) -> Result<EmbeddingVector, EmbedError> {
    if query.trim().is_empty() {
        return Err(EmbedError::EmptyQuery);
    }
    expect_modality(embedder, modality)?;
    embedder.embed_query_text(query)
}

fn one(mut v: Vec<EmbeddingVector>) -> Result<EmbeddingVector, EmbedError> {
    match v.len() {
        1 => Ok(v.pop().unwrap()),
        n => Err(EmbedError::Provider(format!("expected 1 vector, got {n}"))),
    }
}
