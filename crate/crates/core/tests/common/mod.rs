//! Synthetic corpora and brute-force reference implementations shared by integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use docsearch::docparse::simpletext::render_visual_code;
use docsearch::docparse::Raster;
use docsearch::embed::{tokenize, visual_code, Embedder, HashImageEmbedder, HashTextEmbedder};
use docsearch::ingest::{parse_cdx_line, DocumentRecord};
use docsearch::keyword_index::{KeywordIndex, SegmentBuilder};
use docsearch::metadata::{DocMeta, FilterPredicate, MetadataStore};
use docsearch::service::Snapshot;
use docsearch::vector_index::{FlatIndex, VectorIndex};
use docsearch::PageKey;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DOMAINS: [&str; 6] = ["epa.gov", "sec.gov", "ca.gov", "nasa.gov", "usda.gov", "noaa.gov"];

pub const VOCAB: [&str; 40] = [
    "water", "clean", "act", "report", "annual", "budget", "energy", "policy", "federal", "state",
    "river", "permit", "safety", "health", "air", "quality", "data", "climate", "ocean", "survey",
    "filing", "securities", "exchange", "rule", "notice", "grant", "farm", "crop", "forest", "fire",
    "space", "launch", "orbit", "mission", "audit", "review", "plan", "county", "city", "district",
];

pub struct Corpus {
    pub records: Vec<DocumentRecord>,
    pub texts: BTreeMap<PageKey, String>,
    pub images: BTreeMap<PageKey, Raster>,
    pub store: MetadataStore,
    pub text_index: FlatIndex,
    pub image_index: FlatIndex,
    pub keyword: KeywordIndex,
    pub text_embedder: Arc<HashTextEmbedder>,
    pub image_embedder: Arc<HashImageEmbedder>,
}

impl Corpus {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot::from_parts(
            VectorIndex::Flat(self.text_index.clone()),
            VectorIndex::Flat(self.image_index.clone()),
            self.keyword.clone(),
            self.store.clone(),
            self.text_embedder.clone(),
            self.image_embedder.clone(),
        )
    }

    pub fn page_total(&self) -> usize {
        self.images.len()
    }
}

pub fn record(i: usize, domain: &str, ts: &str, pages: u32) -> DocumentRecord {
    let line = format!(
        "gov,x)/d{i}.pdf {ts} https://host{}.{domain}/d{i}.pdf application/pdf 200 DIGEST{i:06} - - 100 {} corpus.warc.gz",
        i % 3,
        i * 100
    );
    let mut r = DocumentRecord::from_entry(parse_cdx_line(&line, i + 1).unwrap());
    r.page_count = Some(pages);
    r
}

fn random_words(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n)
        .map(|_| *VOCAB.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds a corpus of about `target_pages` pages. Roughly one page in ten has no text.
pub fn build_corpus(target_pages: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text_embedder = Arc::new(HashTextEmbedder::default());
    let image_embedder = Arc::new(HashImageEmbedder::default());
    let mut records = Vec::new();
    let mut texts = BTreeMap::new();
    let mut images = BTreeMap::new();
    let mut store = MetadataStore::new();
    let mut text_index = FlatIndex::new(text_embedder.spec().model_id.clone(), text_embedder.spec().dim);
    let mut image_index = FlatIndex::new(image_embedder.spec().model_id.clone(), image_embedder.spec().dim);
    let mut kw = SegmentBuilder::new();
    let mut total = 0;
    let mut i = 0;
    while total < target_pages {
        let pages = rng.random_range(1..=6u32);
        let domain = DOMAINS[rng.random_range(0..DOMAINS.len())];
        let ts = format!(
            "{}{:02}{:02}{:02}0000",
            rng.random_range(2008..2025),
            rng.random_range(1..=12),
            rng.random_range(1..=28),
            rng.random_range(0..24)
        );
        let r = record(i, domain, &ts, pages);
        for p in 1..=pages {
            let key = PageKey::new(r.doc_id.clone(), p);
            let code_tokens: Vec<String> = (0..2).map(|_| VOCAB.choose(&mut rng).unwrap().to_string()).collect();
            let raster = render_visual_code(&visual_code(&code_tokens), 32, 32);
            let v = image_embedder.embed_image_batch(std::slice::from_ref(&raster)).unwrap().remove(0);
            image_index.add(key.clone(), &v.values).unwrap();
            images.insert(key.clone(), raster);
            if rng.random_range(0..10) != 0 {
                let n = rng.random_range(1..15);
                let text = random_words(&mut rng, n);
                // Short texts can hash to a zero vector; such pages stay keyword-searchable only.
                if let Ok(mut v) = text_embedder.embed_text_batch(&[text.as_str()]) {
                    text_index.add(key.clone(), &v.remove(0).values).unwrap();
                }
                kw.index_page(key.clone(), &text).unwrap();
                texts.insert(key, text);
            }
        }
        store.insert_document(&r, (1..=pages).collect()).unwrap();
        records.push(r);
        total += pages as usize;
        i += 1;
    }
    Corpus {
        records,
        texts,
        images,
        store,
        text_index,
        image_index,
        keyword: KeywordIndex::new(vec![kw.finish()]).unwrap(),
        text_embedder,
        image_embedder,
    }
}

/// Predicate evaluation written independently of the store.
pub fn oracle_matches(doc: &DocMeta, pred: &FilterPredicate) -> bool {
    pred.domains.as_ref().is_none_or(|d| d.contains(&doc.domain))
        && pred.date_from.as_ref().is_none_or(|f| doc.crawl_timestamp >= *f)
        && pred.date_to.as_ref().is_none_or(|t| doc.crawl_timestamp <= *t)
        && pred.page_count_max.is_none_or(|m| doc.page_count <= m)
}

pub fn random_predicate(rng: &mut ChaCha8Rng) -> FilterPredicate {
    let domains = rng.random_bool(0.6).then(|| {
        let n = rng.random_range(1..=3);
        DOMAINS.choose_multiple(rng, n).map(|d| d.to_string()).collect()
    });
    let (mut a, mut b) = (rng.random_range(2008..2025u32), rng.random_range(2008..2025u32));
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    FilterPredicate {
        domains,
        date_from: rng.random_bool(0.5).then(|| format!("{a}0000000000")),
        date_to: rng.random_bool(0.5).then(|| format!("{b}9999999999")),
        page_count_max: rng.random_bool(0.4).then(|| rng.random_range(1..=6)),
    }
}

/// Exhaustive scoring of every vector, sorted by score then key.
pub fn brute_force_vector(index: &FlatIndex, query: &[f32]) -> Vec<(PageKey, f64)> {
    let mut all: Vec<(PageKey, f32)> = index
        .iter()
        .map(|(k, v)| (k.clone(), docsearch::vector_index::dot(v, query)))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.into_iter().map(|(k, s)| (k, f64::from(s))).collect()
}

/// Naive BM25 over raw page texts with conjunctive or exact-phrase matching.
pub fn brute_force_keyword(texts: &BTreeMap<PageKey, String>, query: &[String], phrase: bool) -> Vec<(PageKey, f64)> {
    let docs: Vec<(&PageKey, Vec<String>)> = texts.iter().map(|(k, t)| (k, tokenize(t))).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
    let distinct: Vec<&String> = {
        let mut seen = HashSet::new();
        query.iter().filter(|t| seen.insert(*t)).collect()
    };
    let df: HashMap<&String, f64> = distinct
        .iter()
        .map(|t| (*t, docs.iter().filter(|(_, d)| d.contains(t)).count() as f64))
        .collect();
    let mut out = Vec::new();
    for (key, toks) in &docs {
        let hit = if phrase && query.len() >= 2 {
            toks.windows(query.len()).any(|w| w == query)
        } else {
            distinct.iter().all(|t| toks.contains(t))
        };
        if !hit {
            continue;
        }
        let dl = toks.len() as f64;
        let score: f64 = distinct
            .iter()
            .map(|t| {
                let idf = ((n - df[t] + 0.5) / (df[t] + 0.5) + 1.0).ln();
                let tf = toks.iter().filter(|x| x == t).count() as f64;
                idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * dl / avgdl))
            })
            .sum();
        out.push(((*key).clone(), score));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn filter_ranked(store: &MetadataStore, ranked: Vec<(PageKey, f64)>, pred: &FilterPredicate) -> Vec<(PageKey, f64)> {
    ranked
        .into_iter()
        .filter(|(k, _)| oracle_matches(store.get_document(&k.doc_id).unwrap(), pred))
        .collect()
}

pub fn paginate<T: Clone>(ranked: &[T], page: usize, page_size: usize) -> Vec<T> {
    ranked.iter().skip((page - 1) * page_size).take(page_size).cloned().collect()
}
