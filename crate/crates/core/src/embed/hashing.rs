//! Seeded feature hashing: the deterministic reference embedder.

use crate::docparse::Raster;

use super::{
    tokenize, tokenize_and_truncate, EmbedError, Embedder, EmbedderSpec, EmbeddingVector, Modality,
};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub const VISUAL_GRID: usize = 16;
pub const INTENSITY_BUCKETS: u32 = 8;
const VISUAL_CODE_SEED: u64 = 0x7669_7375_616c;

/// 64-bit FNV-1a over the seed's little-endian bytes followed by `data`.
pub fn fnv1a64(seed: u64, data: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(data) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Accumulates +-1 per token at `hash % dim`; the sign is the hash's top bit.
pub fn hash_project<'a>(tokens: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Vec<f64> {
    let mut acc = vec![0.0f64; dim];
    for t in tokens {
        let h = fnv1a64(seed, t.as_bytes());
        let idx = (h % dim as u64) as usize;
        acc[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }
    acc
}

/// Mean luma of each cell of a 16x16 grid laid over the raster. Pixel `x` belongs to column
/// `x * 16 / width`.
pub fn downsample_gray(raster: &Raster) -> [f64; VISUAL_GRID * VISUAL_GRID] {
    let grid = VISUAL_GRID as u32;
    let span = |cell: u32, extent: u32| {
        let lo = (cell * extent).div_ceil(grid).min(extent - 1);
        let hi = ((cell + 1) * extent).div_ceil(grid).max(lo + 1).min(extent);
        lo..hi
    };
    let mut out = [0.0; VISUAL_GRID * VISUAL_GRID];
    for cy in 0..grid {
        for cx in 0..grid {
            let mut sum = 0u64;
            let mut n = 0u64;
            for y in span(cy, raster.height) {
                let row = y as usize * raster.width as usize;
                for x in span(cx, raster.width) {
                    let i = (row + x as usize) * 3;
                    let p = &raster.pixels[i..i + 3];
                    sum += 299 * u64::from(p[0]) + 587 * u64::from(p[1]) + 114 * u64::from(p[2]);
                    n += 1;
                }
            }
            out[(cy * grid + cx) as usize] = sum as f64 / (1000.0 * n as f64);
        }
    }
    out
}

fn bucket(gray: f64) -> u8 {
    ((gray * f64::from(INTENSITY_BUCKETS) / 256.0).floor() as u32).min(INTENSITY_BUCKETS - 1) as u8
}

/// `px{i}:{bucket}` for each of the 256 cells.
pub fn image_pseudo_tokens(buckets: &[u8]) -> Vec<String> {
    buckets
        .iter()
        .enumerate()
        .map(|(i, b)| format!("px{i}:{b}"))
        .collect()
}

/// The 16x16 bucket pattern that stands for a token sequence in image space.
pub fn visual_code(tokens: &[String]) -> [u8; VISUAL_GRID * VISUAL_GRID] {
    let joined = tokens.join(" ");
    let mut out = [0u8; VISUAL_GRID * VISUAL_GRID];
    for (i, cell) in out.iter_mut().enumerate() {
        let h = fnv1a64(VISUAL_CODE_SEED, format!("{joined}\u{1f}{i}").as_bytes());
        *cell = ((h >> 32) % u64::from(INTENSITY_BUCKETS)) as u8;
    }
    out
}

#[derive(Debug, Clone)]
pub struct HashTextEmbedder {
    spec: EmbedderSpec,
}

impl HashTextEmbedder {
    pub fn new(spec: EmbedderSpec) -> Self {
        assert_eq!(spec.modality, Modality::Text);
        Self { spec }
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let limit = self.spec.token_limit.unwrap_or(super::DEFAULT_TOKEN_LIMIT);
        let tokens = tokenize_and_truncate(text, limit);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let raw = hash_project(tokens.iter().map(String::as_str), self.spec.dim, self.spec.seed);
        EmbeddingVector::normalized(&raw, Modality::Text, &self.spec.model_id)
    }
}

impl Default for HashTextEmbedder {
    fn default() -> Self {
        Self::new(EmbedderSpec::default_text())
    }
}

impl Embedder for HashTextEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_text_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }

    fn embed_image_batch(&self, _images: &[Raster]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Err(EmbedError::WrongModality {
            have: Modality::Text,
            want: Modality::Image,
        })
    }

    fn embed_query_text(&self, query: &str) -> Result<EmbeddingVector, EmbedError> {
        self.embed_one(query)
    }
}

#[derive(Debug, Clone)]
pub struct HashImageEmbedder {
    spec: EmbedderSpec,
}

impl HashImageEmbedder {
    pub fn new(spec: EmbedderSpec) -> Self {
        assert_eq!(spec.modality, Modality::Image);
        Self { spec }
    }

    fn project_buckets(&self, buckets: &[u8]) -> Result<EmbeddingVector, EmbedError> {
        let tokens = image_pseudo_tokens(buckets);
        let raw = hash_project(tokens.iter().map(String::as_str), self.spec.dim, self.spec.seed);
        EmbeddingVector::normalized(&raw, Modality::Image, &self.spec.model_id)
    }
}

impl Default for HashImageEmbedder {
    fn default() -> Self {
        Self::new(EmbedderSpec::default_image())
    }
}

impl Embedder for HashImageEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_text_batch(&self, _texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Err(EmbedError::WrongModality {
            have: Modality::Image,
            want: Modality::Text,
        })
    }

    fn embed_image_batch(&self, images: &[Raster]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        images
            .iter()
            .map(|img| {
                let buckets: Vec<u8> = downsample_gray(img).iter().map(|g| bucket(*g)).collect();
                self.project_buckets(&buckets)
            })
            .collect()
    }

    fn embed_query_text(&self, query: &str) -> Result<EmbeddingVector, EmbedError> {
        let tokens = tokenize_and_truncate(query, super::DEFAULT_TOKEN_LIMIT);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        debug_assert_eq!(tokenize(&tokens.join(" ")), tokens);
        self.project_buckets(&visual_code(&tokens))
    }
}
