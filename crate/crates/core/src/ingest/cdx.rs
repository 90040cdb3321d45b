use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

/// One capture line of an 11-field CDX index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdxEntry {
    pub url_key: String,
    /// `YYYYMMDDhhmmss`, UTC.
    pub timestamp: String,
    pub original_url: String,
    pub mime: Option<String>,
    pub status: Option<u16>,
    pub digest: String,
    pub redirect: Option<String>,
    pub meta: Option<String>,
    pub length: u64,
    pub offset: u64,
    pub warc_file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CdxError {
    #[error("line {line}: malformed {field}: {message}")]
    Malformed {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: unsupported CDX dialect ({message}); only the 11-field space-separated form is accepted")]
    UnsupportedDialect { line: usize, message: String },
}

const FIELD_NAMES: [&str; 11] = [
    "urlkey",
    "timestamp",
    "original",
    "mimetype",
    "statuscode",
    "digest",
    "redirect",
    "meta",
    "length",
    "offset",
    "filename",
];

/// True for the ` CDX N b a m s k r M S V g` style legend line at the top of a CDX file.
pub fn is_cdx_header(line: &str) -> bool {
    line.trim_start().starts_with("CDX ")
}

pub fn parse_cdx_line(line: &str, line_no: usize) -> Result<CdxEntry, CdxError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    if fields.len() >= 3 && fields[2].starts_with('{') {
        return Err(CdxError::UnsupportedDialect {
            line: line_no,
            message: "CDXJ JSON block".into(),
        });
    }
    if fields.len() != FIELD_NAMES.len() {
        return Err(CdxError::Malformed {
            line: line_no,
            field: "field_count",
            message: format!("expected 11 fields, found {}", fields.len()),
        });
    }

    let malformed = |idx: usize, message: String| CdxError::Malformed {
        line: line_no,
        field: FIELD_NAMES[idx],
        message,
    };
    let required = |idx: usize| -> Result<String, CdxError> {
        match fields[idx] {
            "-" => Err(malformed(idx, "required field is \"-\"".into())),
            v => Ok(v.to_string()),
        }
    };
    let optional = |idx: usize| match fields[idx] {
        "-" => None,
        v => Some(v.to_string()),
    };
    let number = |idx: usize| -> Result<u64, CdxError> {
        let raw = fields[idx];
        if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed(idx, format!("{raw:?} is not a base-10 integer")));
        }
        raw.parse::<u64>()
            .map_err(|e| malformed(idx, format!("{raw:?}: {e}")))
    };

    let timestamp = required(1)?;
    if timestamp.len() != 14
        || !timestamp.bytes().all(|b| b.is_ascii_digit())
        || NaiveDateTime::parse_from_str(&timestamp, "%Y%m%d%H%M%S").is_err()
    {
        return Err(malformed(1, format!("{timestamp:?} is not a valid 14-digit UTC timestamp")));
    }

    let status = match fields[4] {
        "-" => None,
        raw => {
            if raw.len() != 3 || !raw.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed(4, format!("{raw:?} is not a 3-digit status")));
            }
            Some(raw.parse::<u16>().expect("three ascii digits"))
        }
    };

    let length = number(8)?;
    if length == 0 {
        return Err(malformed(8, "length must be positive".into()));
    }

    Ok(CdxEntry {
        url_key: required(0)?,
        timestamp,
        original_url: required(2)?,
        mime: optional(3),
        status,
        digest: required(5)?,
        redirect: optional(6),
        meta: optional(7),
        length,
        offset: number(9)?,
        warc_file: required(10)?,
    })
}

/// A capture is a PDF candidate when it returned 200 and either its URL path ends in
/// `.pdf` (case-insensitive, query and fragment ignored) or its MIME type is
/// `application/pdf`.
pub fn is_pdf_candidate(entry: &CdxEntry) -> bool {
    if entry.status != Some(200) {
        return false;
    }
    let mime_is_pdf = entry
        .mime
        .as_deref()
        .is_some_and(|m| m.trim().eq_ignore_ascii_case("application/pdf"));
    mime_is_pdf || url_path_is_pdf(&entry.original_url)
}

fn url_path_is_pdf(raw: &str) -> bool {
    let path = match url::Url::parse(raw) {
        Ok(u) => u.path().to_string(),
        Err(_) => {
            let cut = raw.find(['?', '#']).unwrap_or(raw.len());
            raw[..cut].to_string()
        }
    };
    path.to_ascii_lowercase().ends_with(".pdf")
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = "gov,epa)/x.pdf 20201115123045 https://epa.gov/x.pdf application/pdf 200 AAAB - - 1000 5000 f.warc.gz";

    fn entry(url: &str, mime: &str, status: u16) -> CdxEntry {
        let mut e = parse_cdx_line(LINE, 1).unwrap();
        e.original_url = url.into();
        e.mime = Some(mime.into());
        e.status = Some(status);
        e
    }

    #[test]
    fn parses_reference_line() {
        let e = parse_cdx_line(LINE, 1).unwrap();
        assert_eq!(e.timestamp, "20201115123045");
        assert_eq!(e.offset, 5000);
        assert_eq!(e.length, 1000);
        assert_eq!(e.digest, "AAAB");
        assert_eq!(e.status, Some(200));
        assert_eq!(e.redirect, None);
        assert_eq!(e.meta, None);
        assert_eq!(e.warc_file, "f.warc.gz");
    }

    #[test]
    fn ten_fields_is_malformed() {
        let line = "gov,epa)/x.pdf 20201115123045 https://epa.gov/x.pdf application/pdf 200 AAAB - 1000 5000 f.warc.gz";
        match parse_cdx_line(line, 7) {
            Err(CdxError::Malformed { line, field, .. }) => {
                assert_eq!(line, 7);
                assert_eq!(field, "field_count");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_length_names_the_field() {
        let line = LINE.replace(" 1000 ", " notanum ");
        match parse_cdx_line(&line, 3) {
            Err(CdxError::Malformed { field, .. }) => assert_eq!(field, "length"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_timestamps_and_zero_length() {
        for ts in ["2020111512304", "20201315123045", "2020111512304x", "20200230000000"] {
            let line = LINE.replace("20201115123045", ts);
            assert!(
                matches!(parse_cdx_line(&line, 1), Err(CdxError::Malformed { field: "timestamp", .. })),
                "{ts}"
            );
        }
        let line = LINE.replace(" 1000 ", " 0 ");
        assert!(matches!(parse_cdx_line(&line, 1), Err(CdxError::Malformed { field: "length", .. })));
        let line = LINE.replace(" AAAB ", " - ");
        assert!(matches!(parse_cdx_line(&line, 1), Err(CdxError::Malformed { field: "digest", .. })));
    }

    #[test]
    fn cdxj_is_rejected_as_dialect() {
        let line = r#"gov,epa)/x.pdf 20201115123045 {"url": "https://epa.gov/x.pdf"}"#;
        assert!(matches!(parse_cdx_line(line, 1), Err(CdxError::UnsupportedDialect { .. })));
    }

    #[test]
    fn candidate_rules() {
        assert!(is_pdf_candidate(&entry("https://a.gov/r.PDF?v=2", "text/html", 200)));
        assert!(is_pdf_candidate(&entry("https://a.gov/doc", "application/pdf", 200)));
        assert!(is_pdf_candidate(&entry("https://a.gov/doc", "Application/PDF", 200)));
        assert!(!is_pdf_candidate(&entry("https://a.gov/r.pdf", "application/pdf", 404)));
        assert!(!is_pdf_candidate(&entry("https://a.gov/r.html?f=x.pdf", "text/html", 200)));
        assert!(!is_pdf_candidate(&entry("https://a.gov/r.html#x.pdf", "text/html", 200)));
    }

    #[test]
    fn header_detection() {
        assert!(is_cdx_header(" CDX N b a m s k r M S V g"));
        assert!(!is_cdx_header(LINE));
    }
}
