//! Deterministic inputs shared by the benchmarks.

use docsearch::keyword_index::SegmentBuilder;
use docsearch::{FlatIndex, KeywordIndex, PageKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const WORDS: [&str; 24] = [
    "water", "quality", "report", "annual", "budget", "energy", "climate", "health", "safety",
    "permit", "survey", "river", "forest", "county", "census", "labor", "grant", "notice",
    "audit", "school", "housing", "bridge", "flood", "drought",
];

pub fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| (x / norm) as f32).collect()
        })
        .collect()
}

pub fn flat_index(vectors: &[Vec<f32>]) -> FlatIndex {
    let mut flat = FlatIndex::new("bench", vectors[0].len());
    for (i, v) in vectors.iter().enumerate() {
        flat.add(PageKey::new(format!("{i:08}"), 1), v).expect("unit vectors");
    }
    flat
}

pub fn random_text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

pub fn keyword_index(pages: usize, seed: u64) -> KeywordIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = SegmentBuilder::new();
    for i in 0..pages {
        let n = rng.random_range(20..200);
        builder
            .index_page(PageKey::new(format!("{i:08}"), 1), &random_text(&mut rng, n))
            .expect("unique keys");
    }
    KeywordIndex::new(vec![builder.finish()]).expect("single segment")
}
