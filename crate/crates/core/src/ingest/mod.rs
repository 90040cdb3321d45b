//! CDX parsing, PDF candidate selection, digest deduplication and WARC payload access.

mod cdx;
mod manifest;
mod warc;

pub use cdx::{is_cdx_header, is_pdf_candidate, parse_cdx_line, CdxEntry, CdxError};
pub use manifest::{
    build_manifest, build_manifest_from_readers, deduplicate, doc_id_for_digest, DedupAccumulator,
    DocumentRecord, ErrorPolicy, Manifest, ManifestError, ManifestRecord, SelectionCounters,
    DEFAULT_MAX_PAGES,
};
pub use warc::{read_warc_record, WarcError, WarcRecordView, WarcWriter};
