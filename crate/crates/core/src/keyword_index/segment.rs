//! Immutable keyword segment and its file format.
//!
//! Layout: `"KWS1"`, version `u32`, page count `u64`, pages (page key, token length `u32`) in
//! key order, term count `u64`, term dictionary in byte order (term, postings offset `u64`,
//! document frequency `u32`), postings block length `u64`, postings block, CRC32.
//!
//! A term's postings are varint-encoded: per entry the page ordinal delta, the number of
//! positions, then position deltas.

use std::collections::{BTreeMap, HashMap};

use crate::codec::{CodecError, Reader, Writer};
use crate::types::PageKey;

const MAGIC: [u8; 4] = *b"KWS1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pages: Vec<PageKey>,
    lengths: Vec<u32>,
    terms: Vec<String>,
    offsets: Vec<u64>,
    doc_freqs: Vec<u32>,
    postings: Vec<u8>,
}

impl Segment {
    pub(super) fn from_parts(
        lengths: BTreeMap<PageKey, u32>,
        postings: HashMap<String, Vec<(PageKey, Vec<u32>)>>,
    ) -> Self {
        let ordinal: HashMap<&PageKey, u32> = lengths
            .keys()
            .enumerate()
            .map(|(i, k)| (k, i as u32))
            .collect();
        let mut terms: Vec<(&String, &Vec<(PageKey, Vec<u32>)>)> = postings.iter().collect();
        terms.sort_by(|a, b| a.0.cmp(b.0));

        let mut block = Writer::new();
        let mut names = Vec::with_capacity(terms.len());
        let mut offsets = Vec::with_capacity(terms.len());
        let mut doc_freqs = Vec::with_capacity(terms.len());
        for (term, entries) in terms {
            let mut entries: Vec<(u32, &Vec<u32>)> =
                entries.iter().map(|(k, p)| (ordinal[k], p)).collect();
            entries.sort_by_key(|e| e.0);
            names.push(term.clone());
            offsets.push(block.len() as u64);
            doc_freqs.push(entries.len() as u32);
            let mut prev = 0u32;
            for (ord, positions) in entries {
                block.varint(u64::from(ord - prev));
                prev = ord;
                block.varint(positions.len() as u64);
                let mut last = 0u32;
                for &p in positions {
                    block.varint(u64::from(p - last));
                    last = p;
                }
            }
        }
        let (pages, lengths) = lengths.into_iter().unzip();
        Self {
            pages,
            lengths,
            terms: names,
            offsets,
            doc_freqs,
            postings: block.into_inner(),
        }
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn pages(&self) -> impl Iterator<Item = &PageKey> {
        self.pages.iter()
    }

    pub fn page(&self, ordinal: u32) -> &PageKey {
        &self.pages[ordinal as usize]
    }

    pub fn length(&self, ordinal: u32) -> u32 {
        self.lengths[ordinal as usize]
    }

    pub fn total_length(&self) -> u64 {
        self.lengths.iter().map(|l| u64::from(*l)).sum()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    fn term_index(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.term_index(term).map_or(0, |i| self.doc_freqs[i])
    }

    /// Decoded `(page ordinal, positions)` entries for `term`, ordinals ascending.
    pub fn postings(&self, term: &str) -> Option<Vec<(u32, Vec<u32>)>> {
        let i = self.term_index(term)?;
        let mut r = Reader::new(&self.postings);
        r.seek(self.offsets[i] as usize).ok()?;
        let mut out = Vec::with_capacity(self.doc_freqs[i] as usize);
        let mut ord = 0u32;
        for _ in 0..self.doc_freqs[i] {
            ord += r.varint().ok()? as u32;
            let n = r.varint().ok()? as usize;
            let mut positions = Vec::with_capacity(n);
            let mut p = 0u32;
            for _ in 0..n {
                p += r.varint().ok()? as u32;
                positions.push(p);
            }
            out.push((ord, positions));
        }
        Some(out)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&MAGIC);
        w.u32(VERSION);
        w.u64(self.pages.len() as u64);
        for (key, len) in self.pages.iter().zip(&self.lengths) {
            w.page_key(key);
            w.u32(*len);
        }
        w.u64(self.terms.len() as u64);
        for ((term, off), df) in self.terms.iter().zip(&self.offsets).zip(&self.doc_freqs) {
            w.str(term);
            w.u64(*off);
            w.u32(*df);
        }
        w.u64(self.postings.len() as u64);
        w.bytes(&self.postings);
        w.finish_with_crc()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::open_checked(bytes, MAGIC, VERSION)?;
        let n_pages = r.u64()? as usize;
        let mut pages = Vec::with_capacity(n_pages.min(1 << 20));
        let mut lengths = Vec::with_capacity(n_pages.min(1 << 20));
        for _ in 0..n_pages {
            pages.push(r.page_key()?);
            lengths.push(r.u32()?);
        }
        if pages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CodecError::Malformed("page keys not strictly ascending".into()));
        }
        let n_terms = r.u64()? as usize;
        let mut terms = Vec::with_capacity(n_terms.min(1 << 20));
        let mut offsets = Vec::with_capacity(n_terms.min(1 << 20));
        let mut doc_freqs = Vec::with_capacity(n_terms.min(1 << 20));
        for _ in 0..n_terms {
            terms.push(r.str()?);
            offsets.push(r.u64()?);
            doc_freqs.push(r.u32()?);
        }
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CodecError::Malformed("term dictionary not sorted".into()));
        }
        let block_len = r.u64()? as usize;
        let postings = r.take(block_len)?.to_vec();
        r.expect_end()?;
        if offsets.iter().any(|o| *o as usize > postings.len()) {
            return Err(CodecError::Malformed("postings offset out of range".into()));
        }
        Ok(Self {
            pages,
            lengths,
            terms,
            offsets,
            doc_freqs,
            postings,
        })
    }
}

/// Writes a segment to `sink`.
pub fn persist_segment<W: std::io::Write>(segment: &Segment, mut sink: W) -> std::io::Result<()> {
    sink.write_all(&segment.encode())
}

/// Reads a segment written by [`persist_segment`].
pub fn open_segment<R: std::io::Read>(mut source: R) -> Result<Segment, CodecError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    Segment::decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::super::SegmentBuilder;
    use super::*;

    #[test]
    fn empty_segment_round_trips() {
        let seg = SegmentBuilder::new().finish();
        let mut buf = Vec::new();
        persist_segment(&seg, &mut buf).unwrap();
        assert_eq!(open_segment(&buf[..]).unwrap(), seg);
    }

    #[test]
    fn corruption_is_detected() {
        let mut b = SegmentBuilder::new();
        b.index_page(PageKey::new("d", 1), "clean water act").unwrap();
        let bytes = b.finish().encode();
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        assert!(matches!(Segment::decode(&bad), Err(CodecError::ChecksumFailure)));
        assert!(matches!(Segment::decode(&bytes[..bytes.len() - 2]), Err(CodecError::ChecksumFailure)));
    }
}
