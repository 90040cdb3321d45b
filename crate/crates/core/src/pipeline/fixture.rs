//! Synthetic crawl fixtures: simpletext documents stored in a WARC file with a matching CDX
//! index and pipeline config. Generation is deterministic for a given seed.
//!
//! Besides ordinary documents a fixture contains a page planted for a text query, a text-less
//! page planted for a visual query, an oversized document, a document with an unrenderable
//! page, a duplicate capture, and CDX lines that must be filtered out.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::ingest::{doc_id_for_digest, WarcWriter};
use crate::service::SearchMode;

const WORDS: [&str; 48] = [
    "annual", "report", "water", "quality", "budget", "policy", "federal", "program", "safety",
    "energy", "climate", "ocean", "survey", "permit", "river", "health", "notice", "grant",
    "filing", "securities", "exchange", "county", "district", "forest", "wildlife", "transport",
    "highway", "bridge", "housing", "education", "school", "student", "labor", "wage", "census",
    "population", "agriculture", "crop", "drought", "flood", "emergency", "response", "audit",
    "inspection", "compliance", "standard", "research", "laboratory",
];

const HOSTS: [&str; 8] = [
    "www.sec.gov",
    "oag.ca.gov",
    "www.epa.gov",
    "www.nasa.gov",
    "www.usda.gov",
    "www.noaa.gov",
    "www.census.gov",
    "www.dot.gov",
];

pub const SEMANTIC_PLANT: &str = "zephyr quasar nimbus";
pub const VISUAL_PLANT: &str = "redacted documents";
pub const OVERSIZED_PAGES: usize = 55;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedQuery {
    pub mode: SearchMode,
    pub query: String,
    pub doc_id: String,
    pub page_number: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExpectedCounts {
    pub cdx_lines: u64,
    pub malformed_lines: u64,
    pub pdf_candidates: u64,
    pub distinct_digests: u64,
    pub rejected_page_count: u64,
    /// Documents expected to reach the indices.
    pub served_documents: u64,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub dir: PathBuf,
    pub config_path: PathBuf,
    pub cdx_path: PathBuf,
    pub warc_path: PathBuf,
    pub planted: Vec<PlantedQuery>,
    pub text_less_page: (String, u32),
    pub partial_doc: String,
    pub oversized_doc: String,
    pub expected: ExpectedCounts,
}

/// Base32 content digest in the style CDX indices use.
pub fn content_digest(payload: &[u8]) -> String {
    data_encoding::BASE32_NOPAD.encode(&Sha256::digest(payload)[..20])
}

fn url_key(url: &str) -> String {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    let (host, path) = rest.split_once('/').unwrap_or((rest, ""));
    let host = host.trim_start_matches("www.");
    let mut labels: Vec<&str> = host.split('.').collect();
    labels.reverse();
    format!("{})/{}", labels.join(","), path.to_ascii_lowercase())
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn random_page(rng: &mut ChaCha8Rng) -> String {
    if rng.random_range(0..8) == 0 {
        let n = rng.random_range(1..4);
        format!("#image {}", words(rng, n))
    } else {
        let lines = rng.random_range(1..5);
        (0..lines)
            .map(|_| {
                let n = rng.random_range(3..12);
                words(rng, n)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

struct Capture {
    url: String,
    timestamp: String,
    payload: Vec<u8>,
}

/// Writes `crawl.warc.gz`, `index.cdx` and `pipeline.conf` into `dir`. `documents` must be
/// at least 4.
pub fn write_fixture(dir: &Path, documents: usize, seed: u64) -> io::Result<Fixture> {
    if documents < 4 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "a fixture needs at least 4 documents"));
    }
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs: Vec<Vec<String>> = Vec::with_capacity(documents);
    for i in 0..documents {
        let pages = match i {
            0 => vec![random_page(&mut rng), SEMANTIC_PLANT.to_string(), random_page(&mut rng)],
            1 => vec![format!("#image {VISUAL_PLANT}"), words(&mut rng, 8)],
            2 => (0..OVERSIZED_PAGES).map(|_| words(&mut rng, 5)).collect(),
            3 => vec![words(&mut rng, 6), "#corrupt".into(), words(&mut rng, 6)],
            _ => {
                let n = rng.random_range(1..=5);
                (0..n).map(|_| random_page(&mut rng)).collect()
            }
        };
        docs.push(pages);
    }

    let mut captures = Vec::new();
    for (i, pages) in docs.iter().enumerate() {
        let host = HOSTS[i % HOSTS.len()];
        let ext = if i % 5 == 4 { "" } else { ".pdf" };
        captures.push(Capture {
            url: format!("https://{host}/files/doc{i:04}{ext}"),
            timestamp: format!(
                "{}{:02}{:02}{:02}{:02}{:02}",
                rng.random_range(2008..2025),
                rng.random_range(1..=12),
                rng.random_range(1..=28),
                rng.random_range(0..24),
                rng.random_range(0..60),
                rng.random_range(0..60)
            ),
            payload: pages.join("\u{0C}").into_bytes(),
        });
    }

    let warc_name = "crawl.warc.gz";
    let warc_path = dir.join(warc_name);
    let mut writer = WarcWriter::new(Vec::new());
    let mut cdx = String::from(" CDX N b a m s k r M S V g\n");
    let mut expected = ExpectedCounts::default();
    let push = |cdx: &mut String, line: String, expected: &mut ExpectedCounts| {
        cdx.push_str(&line);
        cdx.push('\n');
        expected.cdx_lines += 1;
    };
    let mut digests = Vec::new();
    for c in &captures {
        let (offset, length) = writer.write_response(&c.url, &c.timestamp, "application/pdf", &c.payload, true)?;
        let digest = content_digest(&c.payload);
        let line = format!(
            "{} {} {} application/pdf 200 {digest} - - {length} {offset} {warc_name}",
            url_key(&c.url),
            c.timestamp,
            c.url
        );
        push(&mut cdx, line, &mut expected);
        expected.pdf_candidates += 1;
        digests.push(digest);
    }
    // A later capture of document 4 under another URL: same digest, so it is a duplicate.
    let dup = &captures[4];
    let (offset, length) = writer.write_response("https://www.sec.gov/mirror/copy.pdf", "20251231000000", "application/pdf", &dup.payload, true)?;
    push(
        &mut cdx,
        format!(
            "gov,sec)/mirror/copy.pdf 20251231000000 https://www.sec.gov/mirror/copy.pdf application/pdf 200 {} - - {length} {offset} {warc_name}",
            digests[4]
        ),
        &mut expected,
    );
    expected.pdf_candidates += 1;
    push(
        &mut cdx,
        format!("gov,epa)/missing.pdf 20200101000000 https://www.epa.gov/missing.pdf application/pdf 404 MISSINGDIGEST - - 120 0 {warc_name}"),
        &mut expected,
    );
    push(
        &mut cdx,
        format!("gov,epa)/index.html 20200101000000 https://www.epa.gov/index.html text/html 200 HTMLDIGEST - - 120 0 {warc_name}"),
        &mut expected,
    );
    push(&mut cdx, "gov,epa)/broken.pdf 2020 truncated line".into(), &mut expected);
    expected.malformed_lines = 1;
    expected.distinct_digests = documents as u64;
    expected.rejected_page_count = 1;
    expected.served_documents = documents as u64 - 1;

    std::fs::write(&warc_path, writer.into_inner())?;
    let cdx_path = dir.join("index.cdx");
    std::fs::write(&cdx_path, cdx)?;
    let config_path = dir.join("pipeline.conf");
    let mut conf = String::new();
    let _ = writeln!(conf, "# generated fixture, seed {seed}");
    let _ = writeln!(conf, "cdx = index.cdx");
    let _ = writeln!(conf, "warc_dir = .");
    let _ = writeln!(conf, "run_dir = run");
    let _ = writeln!(conf, "workers = 4");
    let _ = writeln!(conf, "dpi = 36");
    let _ = writeln!(conf, "thumb_max = 64");
    let _ = writeln!(conf, "rate.embed_text = 0.768");
    let _ = writeln!(conf, "rate.embed_image = 0.768");
    std::fs::write(&config_path, conf)?;

    let id = |i: usize| doc_id_for_digest(&digests[i]);
    Ok(Fixture {
        dir: dir.to_path_buf(),
        config_path,
        cdx_path,
        warc_path,
        planted: vec![
            PlantedQuery {
                mode: SearchMode::Semantic,
                query: SEMANTIC_PLANT.into(),
                doc_id: id(0),
                page_number: 2,
            },
            PlantedQuery {
                mode: SearchMode::Visual,
                query: VISUAL_PLANT.into(),
                doc_id: id(1),
                page_number: 1,
            },
            PlantedQuery {
                mode: SearchMode::Keyword,
                query: format!("\"{SEMANTIC_PLANT}\""),
                doc_id: id(0),
                page_number: 2,
            },
        ],
        text_less_page: (id(1), 1),
        partial_doc: id(3),
        oversized_doc: id(2),
        expected,
    })
}
