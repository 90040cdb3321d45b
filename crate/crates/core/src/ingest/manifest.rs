use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cdx::{is_cdx_header, is_pdf_candidate, parse_cdx_line, CdxEntry, CdxError};

pub const DEFAULT_MAX_PAGES: u32 = 50;

/// Derives the stable document id for a content digest.
pub fn doc_id_for_digest(digest: &str) -> String {
    let hash = Sha256::digest(digest.as_bytes());
    hash[..12].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub source: CdxEntry,
    /// Filled in once the document has been parsed.
    pub page_count: Option<u32>,
}

impl DocumentRecord {
    pub fn from_entry(source: CdxEntry) -> Self {
        Self {
            doc_id: doc_id_for_digest(&source.digest),
            source,
            page_count: None,
        }
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub doc_id: String,
    pub url: String,
    pub timestamp: String,
    pub digest: String,
    pub warc_file: String,
    pub offset: u64,
    pub length: u64,
    pub mime: Option<String>,
    pub url_key: String,
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_count: Option<u32>,
}

impl From<&DocumentRecord> for ManifestRecord {
    fn from(r: &DocumentRecord) -> Self {
        let s = &r.source;
        ManifestRecord {
            doc_id: r.doc_id.clone(),
            url: s.original_url.clone(),
            timestamp: s.timestamp.clone(),
            digest: s.digest.clone(),
            warc_file: s.warc_file.clone(),
            offset: s.offset,
            length: s.length,
            mime: s.mime.clone(),
            url_key: s.url_key.clone(),
            status: s.status,
            page_count: r.page_count,
        }
    }
}

impl From<ManifestRecord> for DocumentRecord {
    fn from(m: ManifestRecord) -> Self {
        DocumentRecord {
            doc_id: m.doc_id,
            page_count: m.page_count,
            source: CdxEntry {
                url_key: m.url_key,
                timestamp: m.timestamp,
                original_url: m.url,
                mime: m.mime,
                status: m.status,
                digest: m.digest,
                redirect: None,
                meta: None,
                length: m.length,
                offset: m.offset,
                warc_file: m.warc_file,
            },
        }
    }
}

fn preferred(a: &CdxEntry, b: &CdxEntry) -> bool {
    (&a.timestamp, &a.warc_file, a.offset) < (&b.timestamp, &b.warc_file, b.offset)
}

/// Keeps one capture per digest: earliest timestamp, then smallest `(warc_file, offset)`.
///
/// Merging is associative and commutative, so sources can be reduced in any grouping.
#[derive(Debug, Default, Clone)]
pub struct DedupAccumulator {
    by_digest: HashMap<String, CdxEntry>,
}

impl DedupAccumulator {
    pub fn insert(&mut self, entry: CdxEntry) {
        match self.by_digest.get_mut(&entry.digest) {
            Some(existing) => {
                if preferred(&entry, existing) {
                    *existing = entry;
                }
            }
            None => {
                self.by_digest.insert(entry.digest.clone(), entry);
            }
        }
    }

    pub fn merge(mut self, other: DedupAccumulator) -> DedupAccumulator {
        for entry in other.by_digest.into_values() {
            self.insert(entry);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }

    /// Records sorted by `doc_id`.
    pub fn into_records(self) -> Vec<DocumentRecord> {
        let mut out: Vec<DocumentRecord> = self
            .by_digest
            .into_values()
            .map(DocumentRecord::from_entry)
            .collect();
        out.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        out
    }
}

pub fn deduplicate(entries: impl IntoIterator<Item = CdxEntry>) -> Vec<DocumentRecord> {
    let mut acc = DedupAccumulator::default();
    for e in entries {
        acc.insert(e);
    }
    acc.into_records()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounters {
    pub total_lines: u64,
    pub malformed_lines: u64,
    pub pdf_candidates: u64,
    pub distinct_digests: u64,
    pub selected: u64,
    pub rejected_page_count: u64,
}

impl SelectionCounters {
    /// Counters for a run where only the aggregate digest and rejection counts are known.
    pub fn from_aggregates(distinct_digests: u64, rejected_page_count: u64) -> Self {
        Self {
            distinct_digests,
            rejected_page_count,
            selected: distinct_digests - rejected_page_count,
            ..Self::default()
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.rejected_page_count <= self.distinct_digests
            && self.selected == self.distinct_digests - self.rejected_page_count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// Count malformed lines and continue.
    #[default]
    Skip,
    Abort,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("reading {source_name}: {error}")]
    Io {
        source_name: String,
        #[source]
        error: io::Error,
    },
    #[error("{source_name}: {error}")]
    Cdx {
        source_name: String,
        #[source]
        error: CdxError,
    },
    #[error("manifest line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("doc_id collision between digests {0:?} and {1:?}")]
    DocIdCollision(String, String),
    #[error("max_pages must be at least 1")]
    InvalidMaxPages,
}

/// The selected document set plus the counters of both selection phases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub max_pages: u32,
    /// Sorted by `doc_id`.
    pub records: Vec<DocumentRecord>,
    /// Documents dropped by the page-count rule, sorted by `doc_id`.
    pub rejected: Vec<DocumentRecord>,
    pub counters: SelectionCounters,
}

impl Manifest {
    pub fn empty(max_pages: u32) -> Self {
        Self {
            max_pages,
            records: Vec::new(),
            rejected: Vec::new(),
            counters: SelectionCounters::default(),
        }
    }

    /// Second selection phase: records parsed page counts and moves documents with more than
    /// `max_pages` pages into `rejected`. Documents missing from `page_counts` stay selected.
    pub fn apply_page_counts(&mut self, page_counts: &BTreeMap<String, u32>) {
        let records = std::mem::take(&mut self.records);
        for mut r in records {
            if let Some(&n) = page_counts.get(&r.doc_id) {
                r.page_count = Some(n);
            }
            if r.page_count.is_some_and(|n| n > self.max_pages) {
                self.rejected.push(r);
            } else {
                self.records.push(r);
            }
        }
        self.rejected.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        self.counters.rejected_page_count = self.rejected.len() as u64;
        self.counters.selected = self.records.len() as u64;
    }

    pub fn get(&self, doc_id: &str) -> Option<&DocumentRecord> {
        self.records
            .binary_search_by(|r| r.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(&ManifestRecord::from(r)).map_err(io::Error::other)?;
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_records<R: BufRead>(input: R) -> Result<Vec<DocumentRecord>, ManifestError> {
        let mut out = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|error| ManifestError::Io {
                source_name: "manifest".into(),
                error,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| ManifestError::Format {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            out.push(DocumentRecord::from(rec));
        }
        out.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Ok(out)
    }
}

struct SourceScan {
    counters: SelectionCounters,
    dedup: DedupAccumulator,
}

fn scan_source<R: BufRead>(
    name: &str,
    reader: R,
    policy: ErrorPolicy,
) -> Result<SourceScan, ManifestError> {
    let mut counters = SelectionCounters::default();
    let mut dedup = DedupAccumulator::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|error| ManifestError::Io {
            source_name: name.to_string(),
            error,
        })?;
        if line.trim().is_empty() || is_cdx_header(&line) {
            continue;
        }
        counters.total_lines += 1;
        match parse_cdx_line(&line, i + 1) {
            Ok(entry) => {
                if is_pdf_candidate(&entry) {
                    counters.pdf_candidates += 1;
                    dedup.insert(entry);
                }
            }
            Err(error) => match policy {
                ErrorPolicy::Skip => {
                    tracing::debug!(source = name, %error, "skipping malformed CDX line");
                    counters.malformed_lines += 1;
                }
                ErrorPolicy::Abort => {
                    return Err(ManifestError::Cdx {
                        source_name: name.to_string(),
                        error,
                    })
                }
            },
        }
    }
    Ok(SourceScan { counters, dedup })
}

/// Builds a manifest from named readers. Sources are scanned in parallel and merged by digest.
pub fn build_manifest_from_readers<R: BufRead + Send>(
    sources: Vec<(String, R)>,
    max_pages: u32,
    policy: ErrorPolicy,
) -> Result<Manifest, ManifestError> {
    if max_pages == 0 {
        return Err(ManifestError::InvalidMaxPages);
    }
    let scans: Vec<SourceScan> = sources
        .into_par_iter()
        .map(|(name, reader)| scan_source(&name, reader, policy))
        .collect::<Result<_, _>>()?;

    let mut counters = SelectionCounters::default();
    let mut dedup = DedupAccumulator::default();
    for scan in scans {
        counters.total_lines += scan.counters.total_lines;
        counters.malformed_lines += scan.counters.malformed_lines;
        counters.pdf_candidates += scan.counters.pdf_candidates;
        dedup = dedup.merge(scan.dedup);
    }
    let records = dedup.into_records();
    for pair in records.windows(2) {
        if pair[0].doc_id == pair[1].doc_id {
            return Err(ManifestError::DocIdCollision(
                pair[0].source.digest.clone(),
                pair[1].source.digest.clone(),
            ));
        }
    }
    counters.distinct_digests = records.len() as u64;
    counters.selected = counters.distinct_digests;

    Ok(Manifest {
        max_pages,
        records,
        rejected: Vec::new(),
        counters,
    })
}

/// Builds a manifest from CDX files on disk; `.gz` files are decompressed transparently.
pub fn build_manifest(
    cdx_sources: &[PathBuf],
    max_pages: u32,
    policy: ErrorPolicy,
) -> Result<Manifest, ManifestError> {
    let mut readers: Vec<(String, Box<dyn BufRead + Send>)> = Vec::new();
    for path in cdx_sources {
        readers.push((path.display().to_string(), open_cdx(path)?));
    }
    build_manifest_from_readers(readers, max_pages, policy)
}

fn open_cdx(path: &Path) -> Result<Box<dyn BufRead + Send>, ManifestError> {
    let file = File::open(path).map_err(|error| ManifestError::Io {
        source_name: path.display().to_string(),
        error,
    })?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(flate2::read::MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}
