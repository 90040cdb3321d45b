//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.
//!
//! Run with `cargo test -p docsearch-core --test acceptance` (add `--release` for timings
//! representative of an optimised build).

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use docsearch::embed::{embed_image, embed_query, embed_text, tokenize, Embedder, HashImageEmbedder, HashTextEmbedder, Modality};
use docsearch::ingest::SelectionCounters;
use docsearch::keyword_index::{open_segment, persist_segment, KeywordQuery, SegmentBuilder};
use docsearch::pipeline::cost::{line_cost, pages_per_dollar, round_to_thousands, Cents};
use docsearch::pipeline::fixture::write_fixture;
use docsearch::pipeline::{cost_report, extrapolate, CostLine, Pipeline, PipelineConfig, Stage, StageRecord};
use docsearch::service::{SearchMode, SearchRequest, SearchService};
use docsearch::vector_index::{load_index, save_index, IvfParams, VectorIndex};
use docsearch::{FlatIndex, IvfIndex, KeywordIndex, PageKey, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const CHILD_ENV: &str = "DOCSEARCH_ACCEPTANCE_CHILD";
const CHILD_ARG_ENV: &str = "DOCSEARCH_ACCEPTANCE_ARG";

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within_runtime(start: Instant, limit: Duration) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:.2?}, limit {limit:?}");
    Ok(())
}

// Cost and extrapolation

fn cost_golden() -> Check {
    let start = Instant::now();
    let single = line_cost(515.67, 1.204).map_err(|e| e.to_string())?;
    ensure!(single == Cents(62087), "515.67 h x 1.204 = {single}, want 620.87");
    let lines = [
        CostLine { label: "pre-processing".into(), duration_hours: 1090.55, rate_per_hour: 1.204 },
        CostLine { label: "vector indexing".into(), duration_hours: 54.64, rate_per_hour: 1.204 },
        CostLine { label: "keyword indexing".into(), duration_hours: 38.79, rate_per_hour: 0.768 },
    ];
    let report = cost_report(&lines, 70_958_487).map_err(|e| e.to_string())?;
    let rows: Vec<i64> = report.rows.iter().map(|r| r.cost.0).collect();
    ensure!(rows == [131302, 6579, 2979], "row costs {rows:?}");
    ensure!(report.total_cost == Cents(140860), "total {}", report.total_cost);
    // Pages per dollar against the rounded $1,500 budget.
    let ppd = pages_per_dollar(70_958_487, Cents(150000)).ok_or("no pages per dollar")?;
    ensure!((ppd - 47_305.658).abs() < 0.01, "pages per dollar {ppd}");
    ensure!(round_to_thousands(ppd) == 47_000, "rounded {}", round_to_thousands(ppd));
    within_runtime(start, Duration::from_secs(1))
}

fn extrapolation() -> Check {
    let record = StageRecord { stage: Stage::Parse, duration_hours: 515.67, instance_rate_per_hour: 1.204 };
    let out = extrapolate(&record, 4_736_080, 10_015_993).map_err(|e| e.to_string())?;
    ensure!((out.duration_hours - 1090.55).abs() <= 0.01, "extrapolated {} h", out.duration_hours);
    let same = extrapolate(&record, 7, 7).map_err(|e| e.to_string())?;
    ensure!(same.duration_hours == record.duration_hours, "identity gave {}", same.duration_hours);
    let zero = extrapolate(&record, 7, 0).map_err(|e| e.to_string())?;
    ensure!(zero.duration_hours == 0.0, "zero gave {}", zero.duration_hours);
    Ok(())
}

// Selection arithmetic

fn selection_arithmetic() -> Check {
    let full = SelectionCounters::from_aggregates(10_532_521, 516_528);
    ensure!(full.selected == 10_015_993, "selected {}", full.selected);
    ensure!(full.is_conserved(), "aggregate counters not conserved: {full:?}");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = write_fixture(dir.path(), 16, 20).map_err(|e| e.to_string())?;
    ensure!(fx.expected.cdx_lines == 20, "fixture has {} CDX lines", fx.expected.cdx_lines);
    let cfg = PipelineConfig::load(&fx.config_path).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(cfg.clone()).map_err(|e| e.to_string())?;
    for stage in [Stage::List, Stage::Download, Stage::Parse] {
        pipeline.run_stage(stage, false).map_err(|e| e.to_string())?;
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(cfg.run_dir.join("parse_summary.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let counters: SelectionCounters =
        serde_json::from_value(summary["counters"].clone()).map_err(|e| e.to_string())?;
    ensure!(counters.total_lines == 20, "total_lines {}", counters.total_lines);
    ensure!(counters.malformed_lines == fx.expected.malformed_lines, "malformed {}", counters.malformed_lines);
    ensure!(counters.pdf_candidates == fx.expected.pdf_candidates, "candidates {}", counters.pdf_candidates);
    ensure!(counters.distinct_digests == fx.expected.distinct_digests, "digests {}", counters.distinct_digests);
    ensure!(counters.rejected_page_count == fx.expected.rejected_page_count, "rejected {}", counters.rejected_page_count);
    ensure!(counters.is_conserved(), "fixture counters not conserved: {counters:?}");
    ensure!(
        counters.selected == counters.distinct_digests - counters.rejected_page_count,
        "selected {} != {} - {}",
        counters.selected,
        counters.distinct_digests,
        counters.rejected_page_count
    );
    Ok(())
}

// ANN quality

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / norm) as f32).collect()
}

fn flat_of(vectors: &[Vec<f32>]) -> FlatIndex {
    let mut flat = FlatIndex::new("random", vectors[0].len());
    for (i, v) in vectors.iter().enumerate() {
        flat.add(PageKey::new(format!("{i:06}"), 1), v).unwrap();
    }
    flat
}

fn mean_recall(flat: &FlatIndex, ivf: &IvfIndex, queries: &[Vec<f32>], nprobe: usize) -> f64 {
    let mut total = 0.0;
    for q in queries {
        let truth: BTreeSet<PageKey> = flat.search(q, 10).unwrap().into_iter().map(|h| h.page_key).collect();
        let got = ivf.search(q, 10, nprobe).unwrap();
        total += got.iter().filter(|h| truth.contains(&h.page_key)).count() as f64 / 10.0;
    }
    total / queries.len() as f64
}

fn ann_gate() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let vectors: Vec<Vec<f32>> = (0..10_000).map(|_| random_unit(&mut rng, 64)).collect();
    let queries: Vec<Vec<f32>> = (0..100).map(|_| random_unit(&mut rng, 64)).collect();
    let flat = flat_of(&vectors);
    let ivf = IvfIndex::build(&flat, IvfParams { nlist: Some(64), ..IvfParams::default() }).map_err(|e| e.to_string())?;
    let recall = mean_recall(&flat, &ivf, &queries, 8);
    let full = mean_recall(&flat, &ivf, &queries, 64);
    println!("      recall@10 nprobe=8: {recall:.4}; nprobe=nlist: {full:.4}");
    ensure!(full == 1.0, "nprobe=nlist recall {full}");
    within_runtime(start, Duration::from_secs(60))?;
    ensure!(recall >= 0.90, "mean recall@10 {recall:.4} < 0.90");
    Ok(())
}

/// Not a criterion: the same parameters on clustered data, for context next to the gate.
fn ann_clustered_note() {
    let mut rng = ChaCha8Rng::seed_from_u64(65);
    let centers: Vec<Vec<f32>> = (0..64).map(|_| random_unit(&mut rng, 64)).collect();
    let around = |rng: &mut ChaCha8Rng| {
        let c = &centers[rng.random_range(0..centers.len())];
        let noise = random_unit(rng, 64);
        let v: Vec<f64> = c.iter().zip(&noise).map(|(a, b)| f64::from(*a) + 0.15 * f64::from(*b)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| (x / n) as f32).collect::<Vec<f32>>()
    };
    let vectors: Vec<Vec<f32>> = (0..10_000).map(|_| around(&mut rng)).collect();
    let queries: Vec<Vec<f32>> = (0..100).map(|_| around(&mut rng)).collect();
    let flat = flat_of(&vectors);
    let ivf = IvfIndex::build(&flat, IvfParams { nlist: Some(64), ..IvfParams::default() }).unwrap();
    println!("NOTE  clustered data, same parameters: recall@10 {:.4}", mean_recall(&flat, &ivf, &queries, 8));
}

// Filtered top-k

fn query_for(rng: &mut ChaCha8Rng, mode: SearchMode) -> String {
    let n = rng.random_range(1..=3);
    let words: Vec<&str> = (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
    if mode == SearchMode::Keyword && n >= 2 && rng.random_bool(0.4) {
        format!("\"{}\"", words.join(" "))
    } else if mode == SearchMode::Keyword {
        words[..n.min(2)].join(" ")
    } else {
        words.join(" ")
    }
}

fn filtered_topk_oracle() -> Check {
    let start = Instant::now();
    let corpus = build_corpus(5000, 2024);
    ensure!(corpus.page_total() >= 5000, "corpus has {} pages", corpus.page_total());
    let service = SearchService::with_snapshot("/assets", corpus.snapshot());
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut compared = 0;
    for mode in [SearchMode::Semantic, SearchMode::Visual, SearchMode::Keyword] {
        for _ in 0..20 {
            let pred = random_predicate(&mut rng);
            let q = query_for(&mut rng, mode);
            let ranked = match mode {
                SearchMode::Semantic => {
                    let v = embed_query(&q, Modality::Text, corpus.text_embedder.as_ref()).map_err(|e| e.to_string())?;
                    brute_force_vector(&corpus.text_index, &v.values)
                }
                SearchMode::Visual => {
                    let v = embed_query(&q, Modality::Image, corpus.image_embedder.as_ref()).map_err(|e| e.to_string())?;
                    brute_force_vector(&corpus.image_index, &v.values)
                }
                SearchMode::Keyword => {
                    let terms = tokenize(&q);
                    let phrase = q.starts_with('"') && terms.len() >= 2;
                    brute_force_keyword(&corpus.texts, &terms, phrase)
                }
            };
            let expected = filter_ranked(&corpus.store, ranked, &pred);
            let page_size = 10;
            for page in 1..=3 {
                let req = SearchRequest { filters: pred.clone(), page, page_size, ..SearchRequest::new(mode, q.clone()) };
                let resp = service.handle_search(&req).map_err(|e| format!("{mode:?} {q:?}: {e}"))?;
                let want = paginate(&expected, page, page_size);
                let got: Vec<(PageKey, f64)> =
                    resp.items.iter().map(|i| (PageKey::new(i.doc_id.clone(), i.page_number), i.score)).collect();
                let keys_match = got.iter().map(|g| &g.0).eq(want.iter().map(|w| &w.0));
                ensure!(keys_match, "{mode:?} {q:?} {pred:?} page {page}: got {:?}, want {:?}", got, want);
                for (g, w) in got.iter().zip(&want) {
                    ensure!((g.1 - w.1).abs() <= 1e-6 * w.1.abs().max(1.0), "{mode:?} {q:?}: score {} vs {}", g.1, w.1);
                }
                let exhausted = expected.len() <= page * page_size;
                if mode != SearchMode::Keyword && exhausted {
                    ensure!(resp.exhausted, "{mode:?} {q:?} page {page}: expected exhausted");
                }
                compared += 1;
            }
        }
    }
    ensure!(compared == 180, "compared {compared} pages");
    within_runtime(start, Duration::from_secs(120))
}

// Keyword and phrase

fn keyword_phrase_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let words = &VOCAB[..12];
    let mut texts = BTreeMap::new();
    for i in 0..1000 {
        let n = rng.random_range(3..40);
        let text: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
        texts.insert(PageKey::new(format!("doc{i:04}"), 1), text.join(" "));
    }
    // Two segments, split by key, merged at query time.
    let mut a = SegmentBuilder::new();
    let mut b = SegmentBuilder::new();
    for (i, (k, t)) in texts.iter().enumerate() {
        let builder = if i % 3 == 0 { &mut a } else { &mut b };
        builder.index_page(k.clone(), t).map_err(|e| e.to_string())?;
    }
    let index = KeywordIndex::new(vec![a.finish(), b.finish()]).map_err(|e| e.to_string())?;
    for q in 0..200 {
        let n = rng.random_range(1..=3);
        let terms: Vec<String> = (0..n).map(|_| words[rng.random_range(0..words.len())].to_string()).collect();
        let conj = index.search(&KeywordQuery::keywords(&terms.iter().map(String::as_str).collect::<Vec<_>>()));
        let phrase = index.search_phrase(&terms);
        let want_conj = brute_force_keyword(&texts, &terms, false);
        let want_phrase = brute_force_keyword(&texts, &terms, true);
        for (name, got, want) in [("conjunctive", &conj, &want_conj), ("phrase", &phrase, &want_phrase)] {
            let got_set: BTreeSet<&PageKey> = got.iter().map(|s| &s.page_key).collect();
            let want_set: BTreeSet<&PageKey> = want.iter().map(|w| &w.0).collect();
            ensure!(got_set == want_set, "query {q} {name} {terms:?}: {} results, oracle {}", got_set.len(), want_set.len());
            ensure!(
                got.iter().map(|s| &s.page_key).eq(want.iter().map(|w| &w.0)),
                "query {q} {name} {terms:?}: order differs"
            );
        }
        let conj_set: BTreeSet<&PageKey> = conj.iter().map(|s| &s.page_key).collect();
        ensure!(phrase.iter().all(|p| conj_set.contains(&p.page_key)), "query {q}: phrase result outside conjunctive set");
    }
    Ok(())
}

// Embeddings

fn random_texts(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extras = ["Déjà", "vu", "ÜBER", "naïve", "x86_64", "2020", "co-op", "e-mail", "U.S.", "ＡＢＣ"];
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..700);
            (0..len)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        extras[rng.random_range(0..extras.len())].to_string()
                    } else {
                        VOCAB[rng.random_range(0..VOCAB.len())].to_string()
                    }
                })
                .collect::<Vec<_>>()
                .join(if rng.random_bool(0.5) { " " } else { ", " })
        })
        .collect()
}

fn random_rasters(n: usize, seed: u64) -> Vec<Raster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (w, h) = (rng.random_range(1..120), rng.random_range(1..120));
            let pixels = (0..w * h * 3).map(|_| rng.random()).collect();
            Raster::new(w, h, pixels).unwrap()
        })
        .collect()
}

fn embedding_bytes() -> Vec<u8> {
    let text = HashTextEmbedder::default();
    let image = HashImageEmbedder::default();
    let mut out = Vec::new();
    for t in random_texts(1000, 5) {
        for x in embed_text(&t, &text).unwrap().values {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    for r in random_rasters(1000, 6) {
        for x in embed_image(&r, &image).unwrap().values {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn child(mode: &str, arg: &str) -> Command {
    let mut cmd = Command::new(std::env::current_exe().unwrap());
    cmd.env(CHILD_ENV, mode).env(CHILD_ARG_ENV, arg);
    cmd
}

fn embedding_invariants() -> Check {
    let text = HashTextEmbedder::default();
    let image = HashImageEmbedder::default();
    for (i, t) in random_texts(1000, 5).iter().enumerate() {
        let v = embed_text(t, &text).map_err(|e| format!("text {i}: {e}"))?;
        ensure!(v.dim() == text.spec().dim, "text {i}: dim {}", v.dim());
        ensure!((v.norm() - 1.0).abs() <= 1e-6, "text {i}: norm {}", v.norm());
    }
    for (i, r) in random_rasters(1000, 6).iter().enumerate() {
        let v = embed_image(r, &image).map_err(|e| format!("raster {i}: {e}"))?;
        ensure!(v.dim() == image.spec().dim, "raster {i}: dim {}", v.dim());
        ensure!((v.norm() - 1.0).abs() <= 1e-6, "raster {i}: norm {}", v.norm());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("run{run}.bin"));
        let status = child("embed", path.to_str().unwrap()).status().map_err(|e| e.to_string())?;
        ensure!(status.success(), "embedding child exited with {status}");
        runs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure!(runs[0] == runs[1], "two processes produced different embeddings");
    ensure!(runs[0] == embedding_bytes(), "child and parent embeddings differ");
    Ok(())
}

// Serialization

fn serialization_round_trips() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let vectors: Vec<Vec<f32>> = (0..3000).map(|_| random_unit(&mut rng, 32)).collect();
    let flat = flat_of(&vectors);
    let ivf = IvfIndex::build(&flat, IvfParams { nlist: Some(32), ..IvfParams::default() }).map_err(|e| e.to_string())?;
    let queries: Vec<Vec<f32>> = (0..100).map(|_| random_unit(&mut rng, 32)).collect();
    for (name, index) in [("flat", VectorIndex::Flat(flat)), ("ivf", VectorIndex::Ivf(ivf))] {
        let path = dir.path().join(format!("{name}.idx"));
        save_index(&index, std::fs::File::create(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let loaded = load_index(std::fs::File::open(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        for (i, q) in queries.iter().enumerate() {
            let a = index.search(q, 10, Some(4)).map_err(|e| e.to_string())?;
            let b = loaded.search(q, 10, Some(4)).map_err(|e| e.to_string())?;
            ensure!(a == b, "{name} query {i}: results differ after reload");
        }
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        for pos in [5, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x40;
            ensure!(VectorIndex::decode(&bad).is_err(), "{name}: flipped byte {pos} accepted");
        }
        ensure!(VectorIndex::decode(&bytes[..bytes.len() - 3]).is_err(), "{name}: truncated file accepted");
    }

    let corpus = build_corpus(600, 101);
    let segments: Vec<_> = corpus.keyword.segments().to_vec();
    let mut reloaded = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let path = dir.path().join(format!("seg{i}.kws"));
        persist_segment(seg, std::fs::File::create(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        for pos in [6, bytes.len() / 3, bytes.len() - 2] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x01;
            ensure!(open_segment(&bad[..]).is_err(), "segment {i}: flipped byte {pos} accepted");
        }
        reloaded.push(open_segment(&bytes[..]).map_err(|e| e.to_string())?);
    }
    let reloaded = KeywordIndex::new(reloaded).map_err(|e| e.to_string())?;
    for i in 0..100 {
        let q = query_for(&mut rng, SearchMode::Keyword);
        let query = KeywordQuery::parse(&q).ok_or("empty query")?;
        ensure!(corpus.keyword.search(&query) == reloaded.search(&query), "keyword query {i} {q:?} differs after reload");
    }
    Ok(())
}

// End to end

fn index_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn end_to_end() -> Check {
    let clean_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = write_fixture(clean_dir.path(), 100, 7).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::load(&fx.config_path).map_err(|e| e.to_string())?;
    Pipeline::new(cfg.clone()).map_err(|e| e.to_string())?.run_all(false).map_err(|e| e.to_string())?;

    let (service, err) = SearchService::from_index_dir("/assets", cfg.index_dir.clone());
    ensure!(err.is_none(), "index directory does not load: {err:?}");
    for planted in &fx.planted {
        let resp = service.handle_search(&SearchRequest::new(planted.mode, &planted.query)).map_err(|e| e.to_string())?;
        let top = resp.items.first().ok_or(format!("{:?} query returned nothing", planted.mode))?;
        ensure!(
            top.doc_id == planted.doc_id && top.page_number == planted.page_number,
            "{:?} {:?}: rank 1 is {}#{}, want {}#{}",
            planted.mode,
            planted.query,
            top.doc_id,
            top.page_number,
            planted.doc_id,
            planted.page_number
        );
    }

    // Same crawl in a second directory, killed mid-run in a child process and resumed.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx2 = write_fixture(dir.path(), 100, 7).map_err(|e| e.to_string())?;
    let cfg2 = PipelineConfig::load(&fx2.config_path).map_err(|e| e.to_string())?;
    let ledger = cfg2.run_dir.join("ledger.json");
    let mut proc = child("pipeline", fx2.config_path.to_str().unwrap()).spawn().map_err(|e| e.to_string())?;
    let deadline = Instant::now() + Duration::from_secs(120);
    while Instant::now() < deadline {
        if std::fs::read_to_string(&ledger).unwrap_or_default().contains("\"parse\"") {
            break;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    proc.kill().map_err(|e| e.to_string())?;
    proc.wait().map_err(|e| e.to_string())?;
    ensure!(!cfg2.index_dir.join("index.json").exists(), "child finished before it was killed");
    Pipeline::new(cfg2.clone()).map_err(|e| e.to_string())?.run_all(false).map_err(|e| format!("resume: {e}"))?;
    let (a, b) = (index_files(&cfg.index_dir)?, index_files(&cfg2.index_dir)?);
    ensure!(a.keys().eq(b.keys()), "index files differ: {:?} vs {:?}", a.keys(), b.keys());
    for (name, bytes) in &a {
        ensure!(b[name] == *bytes, "{name} differs after kill and resume");
    }
    Ok(())
}

fn run_child(mode: &str) -> ExitCode {
    let arg = PathBuf::from(std::env::var(CHILD_ARG_ENV).unwrap_or_default());
    match mode {
        "embed" => {
            std::fs::write(&arg, embedding_bytes()).unwrap();
        }
        "pipeline" => {
            let cfg = PipelineConfig::load(&arg).unwrap();
            Pipeline::new(cfg).unwrap().run_all(false).unwrap();
        }
        other => panic!("unknown child mode {other}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    if let Ok(mode) = std::env::var(CHILD_ENV) {
        return run_child(&mode);
    }
    let criteria: [(&str, fn() -> Check); 9] = [
        ("cost report golden", cost_golden),
        ("extrapolation", extrapolation),
        ("selection arithmetic", selection_arithmetic),
        ("ann quality gate", ann_gate),
        ("filtered top-k oracle", filtered_topk_oracle),
        ("keyword and phrase oracle", keyword_phrase_oracle),
        ("embedding invariants", embedding_invariants),
        ("serialization round trips", serialization_round_trips),
        ("end to end", end_to_end),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match result {
            Ok(()) => println!("PASS  {name} ({took:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({took:.2?}): {why}");
            }
        }
    }
    if filter.is_empty() || filter.iter().any(|f| "ann".contains(f.as_str())) {
        ann_clustered_note();
    }
    println!("{failed} criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
