//! Inner-product top-k search over unit-norm page embeddings.
//!
//! [`FlatIndex`] is exhaustive and exact; [`IvfIndex`] probes the `nprobe` nearest k-means
//! cells. Hits are ordered by score descending, then page key ascending.

mod flat;
mod ivf;
mod kmeans;

use std::cmp::Ordering;

use serde::Serialize;

use crate::codec::CodecError;
use crate::embed::EmbeddingVector;
use crate::types::PageKey;

pub use flat::FlatIndex;
pub use ivf::{default_nlist, default_nprobe, IvfIndex, IvfParams};
pub use kmeans::kmeans;

/// Stored vectors must be within this distance of unit length.
pub const UNIT_NORM_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub page_key: PageKey,
    pub score: f32,
}

#[derive(Debug, thiserror::Error)]
pub enum VectorIndexError {
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("model mismatch: index holds {expected:?} vectors, got {got:?}")]
    ModelMismatch { expected: String, got: String },
    #[error("duplicate page key {0}")]
    DuplicateId(PageKey),
    #[error("vector for {key} is not unit norm (norm {norm})")]
    NotUnitNorm { key: PageKey, norm: f32 },
    #[error("insufficient data: {count} vectors for {nlist} lists")]
    InsufficientData { count: usize, nlist: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Eight-lane f32 dot product. The summation order is fixed, so equal inputs give
/// bit-identical scores on every code path.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
        + tail
}

/// Ranking order shared by every index: score descending, then page key ascending.
pub fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.page_key.cmp(&b.page_key))
}

/// Sorted top `k` of `candidates`.
pub(crate) fn top_k<'a>(candidates: impl Iterator<Item = (&'a PageKey, f32)>, k: usize) -> Vec<SearchHit> {
    let mut scored: Vec<(&PageKey, f32)> = candidates.collect();
    let order = |a: &(&PageKey, f32), b: &(&PageKey, f32)| {
        b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
    };
    if k < scored.len() {
        scored.select_nth_unstable_by(k, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    scored
        .into_iter()
        .map(|(key, score)| SearchHit {
            page_key: key.clone(),
            score,
        })
        .collect()
}

fn check_unit(key: &PageKey, v: &[f32]) -> Result<(), VectorIndexError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(VectorIndexError::NotUnitNorm {
            key: key.clone(),
            norm: f32::NAN,
        });
    }
    let norm = dot(v, v).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(VectorIndexError::NotUnitNorm {
            key: key.clone(),
            norm,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexStats {
    pub kind: &'static str,
    pub model_id: String,
    pub dim: usize,
    pub count: usize,
    pub nlist: usize,
    pub bytes: usize,
}

/// Either index kind behind one search surface.
#[derive(Debug, Clone)]
pub enum VectorIndex {
    Flat(FlatIndex),
    Ivf(IvfIndex),
}

impl VectorIndex {
    pub fn dim(&self) -> usize {
        match self {
            VectorIndex::Flat(i) => i.dim(),
            VectorIndex::Ivf(i) => i.dim(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VectorIndex::Flat(i) => i.len(),
            VectorIndex::Ivf(i) => i.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn model_id(&self) -> &str {
        match self {
            VectorIndex::Flat(i) => i.model_id(),
            VectorIndex::Ivf(i) => i.model_id(),
        }
    }

    /// `nprobe` is ignored by flat indices; IVF indices fall back to their default.
    pub fn search(
        &self,
        query: &[f32],
        k: usize,
        nprobe: Option<usize>,
    ) -> Result<Vec<SearchHit>, VectorIndexError> {
        match self {
            VectorIndex::Flat(i) => i.search(query, k),
            VectorIndex::Ivf(i) => i.search(query, k, nprobe.unwrap_or_else(|| default_nprobe(i.nlist()))),
        }
    }

    /// Like [`search`](Self::search) but also checks the query's model id.
    pub fn search_embedding(
        &self,
        query: &EmbeddingVector,
        k: usize,
        nprobe: Option<usize>,
    ) -> Result<Vec<SearchHit>, VectorIndexError> {
        if query.model_id != self.model_id() {
            return Err(VectorIndexError::ModelMismatch {
                expected: self.model_id().to_string(),
                got: query.model_id.clone(),
            });
        }
        self.search(&query.values, k, nprobe)
    }

    pub fn page_keys(&self) -> Vec<PageKey> {
        match self {
            VectorIndex::Flat(i) => i.ids().to_vec(),
            VectorIndex::Ivf(i) => i.page_keys(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            VectorIndex::Flat(i) => i.encode(),
            VectorIndex::Ivf(i) => i.encode(),
        }
    }

    /// Loads either file kind, dispatching on the magic.
    pub fn decode(bytes: &[u8]) -> Result<Self, VectorIndexError> {
        match bytes.get(..4) {
            Some(b"FLT1") => Ok(VectorIndex::Flat(FlatIndex::decode(bytes)?)),
            Some(b"IVF1") => Ok(VectorIndex::Ivf(IvfIndex::decode(bytes)?)),
            _ => Err(CodecError::BadMagic { expected: *b"FLT1" }.into()),
        }
    }

    pub fn stats(&self) -> IndexStats {
        let bytes = self.encode().len();
        match self {
            VectorIndex::Flat(i) => IndexStats {
                kind: "flat",
                model_id: i.model_id().to_string(),
                dim: i.dim(),
                count: i.len(),
                nlist: 0,
                bytes,
            },
            VectorIndex::Ivf(i) => IndexStats {
                kind: "ivf",
                model_id: i.model_id().to_string(),
                dim: i.dim(),
                count: i.len(),
                nlist: i.nlist(),
                bytes,
            },
        }
    }
}

/// Writes an index to `sink`.
pub fn save_index<W: std::io::Write>(index: &VectorIndex, mut sink: W) -> std::io::Result<()> {
    sink.write_all(&index.encode())
}

/// Reads an index previously written by [`save_index`].
pub fn load_index<R: std::io::Read>(mut source: R) -> Result<VectorIndex, VectorIndexError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf).map_err(CodecError::from)?;
    VectorIndex::decode(&buf)
}
