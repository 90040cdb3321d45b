//! Embedding shard files: `"EMB1"`, modality `u8`, dim `u32`, count `u64`, then `count` rows of
//! page key (`u32` length + doc id bytes, `u32` page number) and `dim` little-endian `f32`.

use crate::codec::{CodecError, Reader, Writer};
use crate::types::PageKey;

use super::Modality;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingShard {
    pub modality: Modality,
    pub dim: usize,
    pub rows: Vec<(PageKey, Vec<f32>)>,
}

impl EmbeddingShard {
    pub fn new(modality: Modality, dim: usize) -> Self {
        Self {
            modality,
            dim,
            rows: Vec::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(b"EMB1");
        w.u8(self.modality.code());
        w.u32(self.dim as u32);
        w.u64(self.rows.len() as u64);
        for (key, values) in &self.rows {
            debug_assert_eq!(values.len(), self.dim);
            w.page_key(key);
            w.f32s(values);
        }
        w.into_inner()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        if r.remaining() < 4 || r.take(4)? != b"EMB1" {
            return Err(CodecError::BadMagic { expected: *b"EMB1" });
        }
        let modality = Modality::from_code(r.u8()?)
            .ok_or_else(|| CodecError::Malformed("unknown modality".into()))?;
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let mut rows = Vec::new();
        for _ in 0..count {
            let key = r.page_key()?;
            rows.push((key, r.f32s(dim)?));
        }
        r.expect_end()?;
        Ok(Self {
            modality,
            dim,
            rows,
        })
    }
}
