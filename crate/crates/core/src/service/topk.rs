//! Ranked retrieval restricted by a metadata predicate.

use crate::metadata::{FilterPredicate, MetadataError, MetadataStore};
use crate::vector_index::{SearchHit, VectorIndex, VectorIndexError};

#[derive(Debug, thiserror::Error)]
pub enum TopKError {
    #[error(transparent)]
    Index(#[from] VectorIndexError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredTopK {
    /// At most `n_needed` hits that pass the predicate, best first.
    pub hits: Vec<SearchHit>,
    /// The last k fetched from the index, clamped to its size.
    pub k_used: usize,
    /// No further matching hits exist beyond `hits`.
    pub exhausted: bool,
}

pub fn initial_k(n_needed: usize) -> usize {
    n_needed.saturating_mul(4).max(64)
}

/// Fetches the top k, filters, and doubles k until `n_needed` hits pass or the whole index
/// has been fetched.
pub fn filtered_topk(
    index: &VectorIndex,
    query: &[f32],
    nprobe: Option<usize>,
    store: &MetadataStore,
    pred: &FilterPredicate,
    n_needed: usize,
) -> Result<FilteredTopK, TopKError> {
    let count = index.len();
    let mut k = initial_k(n_needed);
    loop {
        let k_eff = k.min(count);
        let hits = index.search(query, k_eff, nprobe)?;
        let mut filtered = Vec::with_capacity(hits.len());
        for hit in hits {
            if pred.is_empty() || store.page_matches(&hit.page_key, pred)? {
                filtered.push(hit);
            }
        }
        let done = k_eff >= count;
        if filtered.len() >= n_needed || done {
            let exhausted = done && filtered.len() <= n_needed;
            filtered.truncate(n_needed);
            return Ok(FilteredTopK {
                hits: filtered,
                k_used: k_eff,
                exhausted,
            });
        }
        k = k.saturating_mul(2);
    }
}
