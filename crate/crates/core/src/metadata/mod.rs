//! Document and page metadata with faceted filtering by domain, crawl date and page count.
//!
//! Filtering is at page granularity using the parent document's fields. Timestamps are
//! fixed-width 14-digit strings and compare lexicographically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::ingest::DocumentRecord;
use crate::types::PageKey;

#[derive(Debug, thiserror::Error)]
pub enum MetadataError {
    #[error("malformed url {0:?}")]
    MalformedUrl(String),
    #[error("unknown page {0}")]
    UnknownKey(PageKey),
    #[error("document {0} not found")]
    NotFound(String),
    #[error("document {0} loaded twice")]
    DuplicateDocument(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid domain filter {0:?}")]
    InvalidDomain(String),
    #[error("metadata file: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercased last two labels of the URL's host.
pub fn extract_domain(url: &str) -> Result<String, MetadataError> {
    let parsed = url::Url::parse(url).map_err(|_| MetadataError::MalformedUrl(url.to_string()))?;
    let host = parsed
        .host_str()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| MetadataError::MalformedUrl(url.to_string()))?
        .trim_end_matches('.')
        .to_ascii_lowercase();
    let labels: Vec<&str> = host.split('.').collect();
    let start = labels.len().saturating_sub(2);
    Ok(labels[start..].join("."))
}

/// `YYYYMMDDhhmmss` as `YYYY-MM-DDThh:mm:ssZ`.
pub fn iso_crawl_date(ts: &str) -> String {
    if ts.len() != 14 || !ts.bytes().all(|b| b.is_ascii_digit()) {
        return ts.to_string();
    }
    format!(
        "{}-{}-{}T{}:{}:{}Z",
        &ts[0..4],
        &ts[4..6],
        &ts[6..8],
        &ts[8..10],
        &ts[10..12],
        &ts[12..14]
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    pub doc_id: String,
    pub url: String,
    pub domain: String,
    pub crawl_timestamp: String,
    pub page_count: u32,
    pub mime: Option<String>,
    pub digest: String,
    /// Page numbers present in the indices, ascending.
    pub pages: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PageMeta<'a> {
    pub page_key: PageKey,
    pub url: &'a str,
    pub domain: &'a str,
    pub crawl_timestamp: &'a str,
    pub page_count: u32,
    pub mime: Option<&'a str>,
    pub digest: &'a str,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterPredicate {
    pub domains: Option<BTreeSet<String>>,
    pub date_from: Option<String>,
    pub date_to: Option<String>,
    pub page_count_max: Option<u32>,
}

fn valid_domain(d: &str) -> bool {
    !d.is_empty()
        && d.split('.').all(|label| {
            !label.is_empty()
                && label.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
                && !label.starts_with('-')
                && !label.ends_with('-')
        })
}

/// Pads a date prefix (`YYYY`, `YYYYMM`, ... up to 14 digits) to full width with `fill`.
fn pad_date(raw: &str, fill: char) -> Result<String, MetadataError> {
    let digits: String = raw.chars().filter(|c| *c != '-').collect();
    if digits.len() < 4 || digits.len() > 14 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(MetadataError::InvalidFilter(format!("bad date bound {raw:?}")));
    }
    let mut out = digits;
    while out.len() < 14 {
        out.push(fill);
    }
    Ok(out)
}

impl FilterPredicate {
    pub fn is_empty(&self) -> bool {
        self.domains.is_none()
            && self.date_from.is_none()
            && self.date_to.is_none()
            && self.page_count_max.is_none()
    }

    /// Builds a predicate from user-facing fields: domains are lowercased and checked for
    /// hostname syntax, and date prefixes widen to the whole period they name.
    pub fn from_parts(
        domains: Option<Vec<String>>,
        date_from: Option<&str>,
        date_to: Option<&str>,
        page_count_max: Option<u32>,
    ) -> Result<Self, MetadataError> {
        let domains = match domains {
            None => None,
            Some(list) => {
                let mut set = BTreeSet::new();
                for d in list {
                    let d = d.trim().to_ascii_lowercase();
                    if !valid_domain(&d) {
                        return Err(MetadataError::InvalidDomain(d));
                    }
                    set.insert(d);
                }
                Some(set)
            }
        };
        let pred = Self {
            domains,
            date_from: date_from.map(|d| pad_date(d, '0')).transpose()?,
            date_to: date_to.map(|d| pad_date(d, '9')).transpose()?,
            page_count_max,
        };
        pred.validate()?;
        Ok(pred)
    }

    pub fn validate(&self) -> Result<(), MetadataError> {
        if let (Some(from), Some(to)) = (&self.date_from, &self.date_to) {
            if from > to {
                return Err(MetadataError::InvalidFilter(format!(
                    "date_from {from} is after date_to {to}"
                )));
            }
        }
        Ok(())
    }

    pub fn matches(&self, doc: &DocMeta) -> bool {
        if let Some(domains) = &self.domains {
            if !domains.contains(&doc.domain) {
                return false;
            }
        }
        if let Some(from) = &self.date_from {
            if doc.crawl_timestamp.as_str() < from.as_str() {
                return false;
            }
        }
        if let Some(to) = &self.date_to {
            if doc.crawl_timestamp.as_str() > to.as_str() {
                return false;
            }
        }
        if let Some(max) = self.page_count_max {
            if doc.page_count > max {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataStore {
    docs: BTreeMap<String, DocMeta>,
}

impl MetadataStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a selected document with the page numbers that made it into the indices.
    pub fn insert_document(
        &mut self,
        record: &DocumentRecord,
        mut pages: Vec<u32>,
    ) -> Result<(), MetadataError> {
        if self.docs.contains_key(&record.doc_id) {
            return Err(MetadataError::DuplicateDocument(record.doc_id.clone()));
        }
        pages.sort_unstable();
        pages.dedup();
        let src = &record.source;
        let meta = DocMeta {
            doc_id: record.doc_id.clone(),
            url: src.original_url.clone(),
            domain: extract_domain(&src.original_url)?,
            crawl_timestamp: src.timestamp.clone(),
            page_count: record.page_count.unwrap_or(pages.len() as u32),
            mime: src.mime.clone(),
            digest: src.digest.clone(),
            pages,
        };
        self.docs.insert(meta.doc_id.clone(), meta);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn page_total(&self) -> usize {
        self.docs.values().map(|d| d.pages.len()).sum()
    }

    pub fn documents(&self) -> impl Iterator<Item = &DocMeta> {
        self.docs.values()
    }

    pub fn get_document(&self, doc_id: &str) -> Result<&DocMeta, MetadataError> {
        self.docs
            .get(doc_id)
            .ok_or_else(|| MetadataError::NotFound(doc_id.to_string()))
    }

    pub fn contains_page(&self, key: &PageKey) -> bool {
        self.docs
            .get(&key.doc_id)
            .is_some_and(|d| d.pages.binary_search(&key.page_number).is_ok())
    }

    pub fn page(&self, key: &PageKey) -> Result<PageMeta<'_>, MetadataError> {
        let doc = self.doc_for(key)?;
        Ok(PageMeta {
            page_key: key.clone(),
            url: &doc.url,
            domain: &doc.domain,
            crawl_timestamp: &doc.crawl_timestamp,
            page_count: doc.page_count,
            mime: doc.mime.as_deref(),
            digest: &doc.digest,
        })
    }

    fn doc_for(&self, key: &PageKey) -> Result<&DocMeta, MetadataError> {
        match self.docs.get(&key.doc_id) {
            Some(d) if d.pages.binary_search(&key.page_number).is_ok() => Ok(d),
            _ => Err(MetadataError::UnknownKey(key.clone())),
        }
    }

    /// Keeps the keys whose document satisfies `pred`, in their original order.
    pub fn apply_filter(
        &self,
        keys: &[PageKey],
        pred: &FilterPredicate,
    ) -> Result<Vec<PageKey>, MetadataError> {
        let mut out = Vec::new();
        for key in keys {
            if pred.matches(self.doc_for(key)?) {
                out.push(key.clone());
            }
        }
        Ok(out)
    }

    pub fn page_matches(&self, key: &PageKey, pred: &FilterPredicate) -> Result<bool, MetadataError> {
        Ok(pred.matches(self.doc_for(key)?))
    }

    /// Keys that the store does not know about.
    pub fn dangling<'a>(&self, keys: impl IntoIterator<Item = &'a PageKey>) -> Vec<PageKey> {
        keys.into_iter()
            .filter(|k| !self.contains_page(k))
            .cloned()
            .collect()
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("metadata serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, MetadataError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), MetadataError> {
        codec::write_atomic(path, &self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MetadataError> {
        Self::from_json(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_cdx_line;
    use proptest::prelude::*;

    fn record(url: &str, ts: &str, digest: &str, pages: u32) -> DocumentRecord {
        let line = format!("k {ts} {url} application/pdf 200 {digest} - - 10 0 f.warc.gz");
        let mut r = DocumentRecord::from_entry(parse_cdx_line(&line, 1).unwrap());
        r.page_count = Some(pages);
        r
    }

    fn store(docs: &[(&str, &str, u32)]) -> (MetadataStore, Vec<PageKey>) {
        let mut s = MetadataStore::new();
        let mut keys = Vec::new();
        for (i, (url, ts, pages)) in docs.iter().enumerate() {
            let r = record(url, ts, &format!("D{i}"), *pages);
            for p in 1..=*pages {
                keys.push(PageKey::new(r.doc_id.clone(), p));
            }
            s.insert_document(&r, (1..=*pages).collect()).unwrap();
        }
        (s, keys)
    }

    #[test]
    fn domains() {
        assert_eq!(extract_domain("https://www.sec.gov/a.pdf").unwrap(), "sec.gov");
        assert_eq!(extract_domain("https://oag.ca.gov/x").unwrap(), "ca.gov");
        assert_eq!(extract_domain("http://WWW.EPA.GOV./x").unwrap(), "epa.gov");
        assert_eq!(extract_domain("http://localhost/x").unwrap(), "localhost");
        assert!(matches!(extract_domain("not a url"), Err(MetadataError::MalformedUrl(_))));
    }

    #[test]
    fn iso_dates() {
        assert_eq!(iso_crawl_date("20201115123045"), "2020-11-15T12:30:45Z");
    }

    #[test]
    fn empty_predicate_is_identity() {
        let (s, keys) = store(&[("https://a.epa.gov/x", "20200101000000", 3)]);
        assert_eq!(s.apply_filter(&keys, &FilterPredicate::default()).unwrap(), keys);
    }

    #[test]
    fn domain_filter_preserves_order() {
        let (s, keys) = store(&[
            ("https://www.epa.gov/a", "20200101000000", 2),
            ("https://www.sec.gov/b", "20200101000000", 2),
            ("https://x.epa.gov/c", "20200101000000", 1),
        ]);
        let mut shuffled = keys.clone();
        shuffled.reverse();
        let pred = FilterPredicate::from_parts(Some(vec!["EPA.gov".into()]), None, None, None).unwrap();
        let got = s.apply_filter(&shuffled, &pred).unwrap();
        let want: Vec<PageKey> = shuffled
            .iter()
            .filter(|k| s.page(k).unwrap().domain == "epa.gov")
            .cloned()
            .collect();
        assert_eq!(got, want);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn date_prefixes_cover_whole_period() {
        let (s, keys) = store(&[
            ("https://a.gov/1", "20201231235959", 1),
            ("https://a.gov/2", "20210101000000", 1),
        ]);
        let pred = FilterPredicate::from_parts(None, Some("2020"), Some("2020-12"), None).unwrap();
        assert_eq!(s.apply_filter(&keys, &pred).unwrap(), vec![keys[0].clone()]);
        assert!(FilterPredicate::from_parts(None, Some("2021"), Some("2020"), None).is_err());
        assert!(FilterPredicate::from_parts(None, Some("20x1"), None, None).is_err());
    }

    #[test]
    fn bad_domain_format_is_distinguished() {
        assert!(matches!(
            FilterPredicate::from_parts(Some(vec!["bad domain".into()]), None, None, None),
            Err(MetadataError::InvalidDomain(_))
        ));
    }

    #[test]
    fn unknown_keys_error() {
        let (s, _) = store(&[("https://a.gov/1", "20200101000000", 2)]);
        let missing = PageKey::new("nope", 1);
        assert!(matches!(
            s.apply_filter(&[missing.clone()], &FilterPredicate::default()),
            Err(MetadataError::UnknownKey(_))
        ));
        assert_eq!(s.dangling([&missing]), vec![missing]);
    }

    #[test]
    fn document_detail_matches_record() {
        let r = record("https://www.sec.gov/a.pdf", "20201115123045", "AAAB", 3);
        let mut s = MetadataStore::new();
        s.insert_document(&r, vec![3, 1, 2]).unwrap();
        let d = s.get_document(&r.doc_id).unwrap();
        assert_eq!(d.url, r.source.original_url);
        assert_eq!(d.crawl_timestamp, r.source.timestamp);
        assert_eq!(d.digest, r.source.digest);
        assert_eq!(d.mime, r.source.mime);
        assert_eq!(d.pages, vec![1, 2, 3]);
        assert_eq!(d.pages.len() as u32, d.page_count);
        assert!(s.get_document("missing").is_err());
        assert!(s.insert_document(&r, vec![1]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let (s, _) = store(&[("https://a.gov/1", "20200101000000", 2)]);
        assert_eq!(MetadataStore::from_json(&s.to_json()).unwrap(), s);
    }

    const DOMAINS: [&str; 4] = ["epa.gov", "sec.gov", "ca.gov", "nasa.gov"];

    fn arb_pred() -> impl Strategy<Value = FilterPredicate> {
        (
            prop::option::of(prop::collection::btree_set(0..DOMAINS.len(), 0..3)),
            prop::option::of(2015u32..2025),
            prop::option::of(2015u32..2025),
            prop::option::of(1u32..6),
        )
            .prop_map(|(d, from, to, max)| FilterPredicate {
                domains: d.map(|s| s.into_iter().map(|i| DOMAINS[i].to_string()).collect()),
                date_from: from.map(|y| format!("{y}0000000000")),
                date_to: to.map(|y| format!("{y}9999999999")),
                page_count_max: max,
            })
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<(usize, u32, u32)>> {
        prop::collection::vec((0..DOMAINS.len(), 2015u32..2025, 1u32..6), 1..40)
    }

    fn build(corpus: &[(usize, u32, u32)]) -> (MetadataStore, Vec<PageKey>) {
        let docs: Vec<(String, String, u32)> = corpus
            .iter()
            .enumerate()
            .map(|(i, (d, y, p))| (format!("https://h{i}.{}/x.pdf", DOMAINS[*d]), format!("{y}0601000000"), *p))
            .collect();
        let refs: Vec<(&str, &str, u32)> = docs.iter().map(|(u, t, p)| (u.as_str(), t.as_str(), *p)).collect();
        store(&refs)
    }

    proptest! {
        #[test]
        fn filter_equals_scan(corpus in arb_corpus(), pred in arb_pred(), seed in any::<u64>()) {
            let (s, mut keys) = build(&corpus);
            keys.sort_by_key(|k| (crate::embed::fnv1a64(seed, k.to_string().as_bytes()), k.clone()));
            let want: Vec<PageKey> = keys.iter().filter(|k| {
                let m = s.page(k).unwrap();
                pred.domains.as_ref().is_none_or(|d| d.contains(m.domain))
                    && pred.date_from.as_ref().is_none_or(|f| m.crawl_timestamp >= f.as_str())
                    && pred.date_to.as_ref().is_none_or(|t| m.crawl_timestamp <= t.as_str())
                    && pred.page_count_max.is_none_or(|x| m.page_count <= x)
            }).cloned().collect();
            prop_assert_eq!(s.apply_filter(&keys, &pred).unwrap(), want);
        }

        #[test]
        fn disjoint_fields_compose(corpus in arb_corpus(), p in arb_pred(), q in arb_pred()) {
            let (s, keys) = build(&corpus);
            let p = FilterPredicate { page_count_max: None, ..p };
            let q = FilterPredicate { domains: None, date_from: None, date_to: None, ..q };
            let both = FilterPredicate { page_count_max: q.page_count_max, ..p.clone() };
            let staged = s.apply_filter(&s.apply_filter(&keys, &p).unwrap(), &q).unwrap();
            prop_assert_eq!(s.apply_filter(&keys, &both).unwrap(), staged);
        }
    }
}
