use std::collections::HashSet;

use crate::codec::{Reader, Writer};
use crate::types::PageKey;

use super::{check_unit, dot, top_k, SearchHit, VectorIndexError};

const MAGIC: [u8; 4] = *b"FLT1";
const VERSION: u32 = 1;

/// Exhaustive inner-product index. Its results are the reference for every other search path.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    model_id: String,
    ids: Vec<PageKey>,
    data: Vec<f32>,
    seen: HashSet<PageKey>,
}

impl FlatIndex {
    pub fn new(model_id: impl Into<String>, dim: usize) -> Self {
        Self {
            dim,
            model_id: model_id.into(),
            ids: Vec::new(),
            data: Vec::new(),
            seen: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn ids(&self) -> &[PageKey] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PageKey, &[f32])> {
        self.ids.iter().zip(self.data.chunks_exact(self.dim.max(1)))
    }

    pub fn add(&mut self, key: PageKey, vector: &[f32]) -> Result<(), VectorIndexError> {
        if vector.len() != self.dim {
            return Err(VectorIndexError::DimMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        check_unit(&key, vector)?;
        if !self.seen.insert(key.clone()) {
            return Err(VectorIndexError::DuplicateId(key));
        }
        self.ids.push(key);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, VectorIndexError> {
        if query.len() != self.dim {
            return Err(VectorIndexError::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(VectorIndexError::InvalidParameter("k must be at least 1".into()));
        }
        Ok(top_k(self.iter().map(|(key, v)| (key, dot(query, v))), k))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&MAGIC);
        w.u32(VERSION);
        w.u32(self.dim as u32);
        w.u64(self.ids.len() as u64);
        w.str(&self.model_id);
        for key in &self.ids {
            w.page_key(key);
        }
        w.f32s(&self.data);
        w.finish_with_crc()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, VectorIndexError> {
        let mut r = Reader::open_checked(bytes, MAGIC, VERSION)?;
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let model_id = r.str()?;
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            ids.push(r.page_key()?);
        }
        let data = r.f32s(count * dim)?;
        r.expect_end()?;
        let seen: HashSet<PageKey> = ids.iter().cloned().collect();
        if seen.len() != ids.len() {
            return Err(crate::codec::CodecError::Malformed("duplicate ids".into()).into());
        }
        Ok(Self {
            dim,
            model_id,
            ids,
            data,
            seen,
        })
    }
}
