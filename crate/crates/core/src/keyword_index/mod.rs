//! Positional inverted index with conjunctive keyword and exact phrase queries, ranked by BM25.
//!
//! Pages are indexed into an in-memory builder and frozen into immutable [`Segment`]s. A
//! [`KeywordIndex`] searches any number of segments with corpus-wide statistics.

mod segment;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::codec::CodecError;
use crate::embed::tokenize;
use crate::types::PageKey;

pub use segment::{open_segment, persist_segment, Segment};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, thiserror::Error)]
pub enum KeywordIndexError {
    #[error("page {0} is already indexed")]
    DuplicatePage(PageKey),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Keywords,
    Phrase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordQuery {
    pub kind: QueryKind,
    pub terms: Vec<String>,
}

impl KeywordQuery {
    /// A query wrapped in double quotes is a phrase; anything else is a conjunction of its
    /// tokens (stray quotes are ignored). Returns `None` when there are no tokens.
    pub fn parse(q: &str) -> Option<Self> {
        let trimmed = q.trim();
        let quoted = trimmed.len() >= 2 && trimmed.starts_with('"') && trimmed.ends_with('"');
        let terms = tokenize(trimmed);
        if terms.is_empty() {
            return None;
        }
        let kind = if quoted && terms.len() >= 2 {
            QueryKind::Phrase
        } else {
            QueryKind::Keywords
        };
        Some(Self { kind, terms })
    }

    pub fn keywords(terms: &[&str]) -> Self {
        Self {
            kind: QueryKind::Keywords,
            terms: terms.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn phrase(terms: &[&str]) -> Self {
        Self {
            kind: if terms.len() >= 2 { QueryKind::Phrase } else { QueryKind::Keywords },
            terms: terms.iter().map(|t| t.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPage {
    pub page_key: PageKey,
    pub score: f64,
}

/// Accumulates pages in memory before freezing them into a [`Segment`].
#[derive(Debug, Default)]
pub struct SegmentBuilder {
    lengths: BTreeMap<PageKey, u32>,
    postings: HashMap<String, Vec<(PageKey, Vec<u32>)>>,
}

impl SegmentBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records every token of `text` with its 0-based position. Text is not truncated.
    pub fn index_page(&mut self, key: PageKey, text: &str) -> Result<(), KeywordIndexError> {
        if self.lengths.contains_key(&key) {
            return Err(KeywordIndexError::DuplicatePage(key));
        }
        let tokens = tokenize(text);
        let mut per_term: HashMap<&str, Vec<u32>> = HashMap::new();
        for (pos, t) in tokens.iter().enumerate() {
            per_term.entry(t.as_str()).or_default().push(pos as u32);
        }
        for (term, positions) in per_term {
            self.postings
                .entry(term.to_string())
                .or_default()
                .push((key.clone(), positions));
        }
        self.lengths.insert(key, tokens.len() as u32);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn finish(self) -> Segment {
        Segment::from_parts(self.lengths, self.postings)
    }
}

/// Read-only view over one or more segments with disjoint page sets.
#[derive(Debug, Clone, Default)]
pub struct KeywordIndex {
    segments: Vec<Segment>,
    total_pages: u64,
    total_length: u64,
}

struct TermStats {
    idf: f64,
}

impl KeywordIndex {
    pub fn new(segments: Vec<Segment>) -> Result<Self, KeywordIndexError> {
        let mut seen = std::collections::HashSet::new();
        for seg in &segments {
            for key in seg.pages() {
                if !seen.insert(key.clone()) {
                    return Err(KeywordIndexError::DuplicatePage(key.clone()));
                }
            }
        }
        let total_pages = segments.iter().map(|s| s.page_count() as u64).sum();
        let total_length = segments.iter().map(Segment::total_length).sum();
        Ok(Self {
            segments,
            total_pages,
            total_length,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn page_count(&self) -> u64 {
        self.total_pages
    }

    pub fn term_count(&self) -> usize {
        let mut terms: Vec<&str> = self.segments.iter().flat_map(|s| s.terms()).collect();
        terms.sort_unstable();
        terms.dedup();
        terms.len()
    }

    pub fn page_keys(&self) -> impl Iterator<Item = &PageKey> {
        self.segments.iter().flat_map(|s| s.pages())
    }

    fn avgdl(&self) -> f64 {
        if self.total_pages == 0 {
            0.0
        } else {
            self.total_length as f64 / self.total_pages as f64
        }
    }

    fn term_stats(&self, term: &str) -> TermStats {
        let df: u64 = self.segments.iter().map(|s| s.doc_freq(term) as u64).sum();
        let n = self.total_pages as f64;
        let df = df as f64;
        TermStats {
            idf: ((n - df + 0.5) / (df + 0.5) + 1.0).ln(),
        }
    }

    fn bm25(&self, idf: f64, tf: usize, dl: u32) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - BM25_B + BM25_B * f64::from(dl) / self.avgdl();
        idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm)
    }

    pub fn search(&self, query: &KeywordQuery) -> Vec<ScoredPage> {
        match query.kind {
            QueryKind::Keywords => self.search_keywords(&query.terms),
            QueryKind::Phrase => self.search_phrase(&query.terms),
        }
    }

    /// Pages containing every term, BM25-ranked.
    pub fn search_keywords<S: AsRef<str>>(&self, terms: &[S]) -> Vec<ScoredPage> {
        self.run(terms, false)
    }

    /// Pages where the terms occur at consecutive positions in order. A single term is a
    /// keyword search.
    pub fn search_phrase<S: AsRef<str>>(&self, terms: &[S]) -> Vec<ScoredPage> {
        self.run(terms, terms.len() >= 2)
    }

    fn run<S: AsRef<str>>(&self, terms: &[S], phrase: bool) -> Vec<ScoredPage> {
        let sequence: Vec<&str> = terms.iter().map(AsRef::as_ref).collect();
        if sequence.is_empty() {
            return Vec::new();
        }
        let mut distinct = sequence.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let idfs: Vec<f64> = distinct.iter().map(|t| self.term_stats(t).idf).collect();

        let mut out = Vec::new();
        for seg in &self.segments {
            let lists: Option<Vec<Vec<(u32, Vec<u32>)>>> =
                distinct.iter().map(|t| seg.postings(t)).collect();
            let Some(lists) = lists else { continue };
            for (ordinal, positions) in intersect(&lists) {
                if phrase {
                    let by_term: HashMap<&str, &[u32]> = distinct
                        .iter()
                        .copied()
                        .zip(positions.iter().copied())
                        .collect();
                    if !phrase_matches(&sequence, &by_term) {
                        continue;
                    }
                }
                let dl = seg.length(ordinal);
                let score = positions
                    .iter()
                    .zip(&idfs)
                    .map(|(p, idf)| self.bm25(*idf, p.len(), dl))
                    .sum();
                out.push(ScoredPage {
                    page_key: seg.page(ordinal).clone(),
                    score,
                });
            }
        }
        out.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.page_key.cmp(&b.page_key))
        });
        out
    }
}

/// Ordinals present in every list, with each list's positions for that ordinal.
fn intersect(lists: &[Vec<(u32, Vec<u32>)>]) -> Vec<(u32, Vec<&[u32]>)> {
    let mut out = Vec::new();
    let Some((shortest_idx, shortest)) = lists.iter().enumerate().min_by_key(|(_, l)| l.len()) else {
        return out;
    };
    let mut cursors = vec![0usize; lists.len()];
    'outer: for (ordinal, _) in shortest {
        let mut positions = Vec::with_capacity(lists.len());
        for (i, list) in lists.iter().enumerate() {
            if i == shortest_idx {
                continue;
            }
            let c = &mut cursors[i];
            while *c < list.len() && list[*c].0 < *ordinal {
                *c += 1;
            }
            if *c == list.len() || list[*c].0 != *ordinal {
                continue 'outer;
            }
        }
        for (i, list) in lists.iter().enumerate() {
            let entry = if i == shortest_idx {
                shortest.iter().find(|(o, _)| o == ordinal).unwrap()
            } else {
                &list[cursors[i]]
            };
            positions.push(entry.1.as_slice());
        }
        out.push((*ordinal, positions));
    }
    out
}

fn phrase_matches(sequence: &[&str], positions: &HashMap<&str, &[u32]>) -> bool {
    let first = positions[sequence[0]];
    first.iter().any(|&start| {
        sequence.iter().enumerate().skip(1).all(|(offset, term)| {
            positions[term]
                .binary_search(&(start + offset as u32))
                .is_ok()
        })
    })
}
