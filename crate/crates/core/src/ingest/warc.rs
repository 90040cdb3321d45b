use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};

use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum WarcError {
    #[error("bad magic at offset {offset}: no WARC/1.0 or WARC/1.1 version line")]
    BadMagic { offset: u64 },
    #[error("truncated record: {0}")]
    Truncated(String),
    #[error("decompression error: {0}")]
    Decompression(io::Error),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("unsupported record type {0:?}")]
    UnsupportedType(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecordView {
    pub version: String,
    /// Header names are lowercased.
    pub record_headers: BTreeMap<String, String>,
    /// Present for `response` records carrying an HTTP message.
    pub http_status: Option<u16>,
    pub http_headers: BTreeMap<String, String>,
    pub payload: Vec<u8>,
}

impl WarcRecordView {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.record_headers
            .get(&name.to_ascii_lowercase())
            .map(String::as_str)
    }

    pub fn record_type(&self) -> &str {
        self.header("warc-type").unwrap_or("")
    }
}

const MAX_LINE: usize = 64 * 1024;

fn read_line<R: BufRead>(r: &mut R, gz: bool) -> Result<Option<String>, WarcError> {
    let mut buf = Vec::new();
    let n = r
        .by_ref()
        .take(MAX_LINE as u64)
        .read_until(b'\n', &mut buf)
        .map_err(|e| io_error(e, gz))?;
    if n == 0 {
        return Ok(None);
    }
    if !buf.ends_with(b"\n") {
        return Err(WarcError::Truncated("header line without terminator".into()));
    }
    while buf.last().is_some_and(|b| *b == b'\n' || *b == b'\r') {
        buf.pop();
    }
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| WarcError::Malformed("non UTF-8 header line".into()))
}

fn io_error(e: io::Error, gz: bool) -> WarcError {
    match e.kind() {
        io::ErrorKind::UnexpectedEof => WarcError::Truncated(e.to_string()),
        io::ErrorKind::InvalidInput | io::ErrorKind::InvalidData if gz => {
            WarcError::Decompression(e)
        }
        _ => WarcError::Io(e),
    }
}

fn parse_header_line(line: &str) -> Result<(String, String), WarcError> {
    let (name, value) = line
        .split_once(':')
        .ok_or_else(|| WarcError::Malformed(format!("header line without colon: {line:?}")))?;
    Ok((name.trim().to_ascii_lowercase(), value.trim().to_string()))
}

/// Reads the record starting at `offset`. The record may be stored plain or as its own gzip
/// member.
pub fn read_warc_record<S: Read + Seek>(
    source: &mut S,
    offset: u64,
) -> Result<WarcRecordView, WarcError> {
    source.seek(SeekFrom::Start(offset))?;
    let mut magic = [0u8; 2];
    let mut got = 0;
    while got < 2 {
        let n = source.read(&mut magic[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    source.seek(SeekFrom::Start(offset))?;
    if got == 2 && magic == [0x1f, 0x8b] {
        let decoder = flate2::read::GzDecoder::new(source);
        parse_record(BufReader::new(decoder), offset, true)
    } else {
        parse_record(BufReader::new(source), offset, false)
    }
}

fn parse_record<R: BufRead>(mut r: R, offset: u64, gz: bool) -> Result<WarcRecordView, WarcError> {
    let version = match read_line(&mut r, gz) {
        Ok(Some(v)) => v,
        Ok(None) => return Err(WarcError::BadMagic { offset }),
        Err(WarcError::Malformed(_)) | Err(WarcError::Truncated(_)) => {
            return Err(WarcError::BadMagic { offset })
        }
        Err(e) => return Err(e),
    };
    if version != "WARC/1.0" && version != "WARC/1.1" {
        return Err(WarcError::BadMagic { offset });
    }

    let mut record_headers = BTreeMap::new();
    loop {
        let line = read_line(&mut r, gz)?
            .ok_or_else(|| WarcError::Truncated("end of input inside record headers".into()))?;
        if line.is_empty() {
            break;
        }
        let (name, value) = parse_header_line(&line)?;
        record_headers.insert(name, value);
    }

    let content_length: usize = record_headers
        .get("content-length")
        .ok_or_else(|| WarcError::Malformed("missing Content-Length".into()))?
        .parse()
        .map_err(|_| WarcError::Malformed("unparseable Content-Length".into()))?;

    let record_type = record_headers
        .get("warc-type")
        .cloned()
        .unwrap_or_default();
    if !matches!(record_type.as_str(), "response" | "resource" | "revisit") {
        return Err(WarcError::UnsupportedType(record_type));
    }

    let mut block = vec![0u8; content_length];
    r.read_exact(&mut block).map_err(|e| io_error(e, gz))?;

    let is_http = record_type == "response"
        && record_headers
            .get("content-type")
            .is_some_and(|ct| ct.to_ascii_lowercase().starts_with("application/http"));

    let mut view = WarcRecordView {
        version,
        record_headers,
        http_status: None,
        http_headers: BTreeMap::new(),
        payload: Vec::new(),
    };
    if is_http {
        let (head_len, sep_len) = find_header_end(&block)
            .ok_or_else(|| WarcError::Malformed("HTTP header block is not terminated".into()))?;
        let head = std::str::from_utf8(&block[..head_len])
            .map_err(|_| WarcError::Malformed("non UTF-8 HTTP headers".into()))?;
        let mut lines = head.split('\n').map(|l| l.trim_end_matches('\r'));
        let status_line = lines.next().unwrap_or_default();
        view.http_status = status_line
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse().ok());
        for line in lines.filter(|l| !l.is_empty()) {
            let (name, value) = parse_header_line(line)?;
            view.http_headers.insert(name, value);
        }
        block.drain(..head_len + sep_len);
    }
    view.payload = block;
    Ok(view)
}

fn find_header_end(block: &[u8]) -> Option<(usize, usize)> {
    let crlf = block.windows(4).position(|w| w == b"\r\n\r\n").map(|p| (p, 4));
    let lf = block.windows(2).position(|w| w == b"\n\n").map(|p| (p, 2));
    match (crlf, lf) {
        (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
        (a, b) => a.or(b),
    }
}

/// Appends WARC response records to a sink, tracking the offset of each record.
pub struct WarcWriter<W: Write> {
    out: W,
    position: u64,
}

impl<W: Write> WarcWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, position: 0 }
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Writes one `response` record and returns `(offset, stored_length)`.
    pub fn write_response(
        &mut self,
        target_uri: &str,
        warc_date: &str,
        content_type: &str,
        payload: &[u8],
        gzip: bool,
    ) -> io::Result<(u64, u64)> {
        let http_head = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\n\r\n",
            payload.len()
        );
        let mut block = http_head.into_bytes();
        block.extend_from_slice(payload);

        let id = Sha256::digest(format!("{target_uri} {warc_date}").as_bytes());
        let hex: String = id[..16].iter().map(|b| format!("{b:02x}")).collect();
        let mut record = format!(
            "WARC/1.1\r\nWARC-Type: response\r\nWARC-Target-URI: {target_uri}\r\nWARC-Date: {warc_date}\r\n\
             WARC-Record-ID: <urn:uuid:{}-{}-{}-{}-{}>\r\nContent-Type: application/http; msgtype=response\r\n\
             Content-Length: {}\r\n\r\n",
            &hex[0..8],
            &hex[8..12],
            &hex[12..16],
            &hex[16..20],
            &hex[20..32],
            block.len()
        )
        .into_bytes();
        record.extend_from_slice(&block);
        record.extend_from_slice(b"\r\n\r\n");

        let bytes = if gzip {
            let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(&record)?;
            enc.finish()?
        } else {
            record
        };
        let offset = self.position;
        self.out.write_all(&bytes)?;
        self.position += bytes.len() as u64;
        Ok((offset, bytes.len() as u64))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn fixture(gzip: bool) -> (Vec<u8>, Vec<(u64, u64)>) {
        let mut w = WarcWriter::new(Vec::new());
        let a = w
            .write_response("https://a.gov/x.pdf", "2020-11-15T12:30:45Z", "application/pdf", b"%PDF-1.4 first", gzip)
            .unwrap();
        let b = w
            .write_response("https://a.gov/y.pdf", "2020-11-16T00:00:00Z", "application/pdf", b"second\r\n\r\npayload", gzip)
            .unwrap();
        (w.into_inner(), vec![a, b])
    }

    #[test]
    fn reads_plain_records_at_offsets() {
        let (bytes, offs) = fixture(false);
        let mut src = Cursor::new(bytes);
        let r = read_warc_record(&mut src, offs[1].0).unwrap();
        assert_eq!(r.record_type(), "response");
        assert_eq!(r.http_status, Some(200));
        assert_eq!(r.payload, b"second\r\n\r\npayload");
        assert_eq!(r.http_headers.get("content-type").unwrap(), "application/pdf");
        assert_eq!(r.header("WARC-Target-URI"), Some("https://a.gov/y.pdf"));
    }

    #[test]
    fn payload_length_is_content_length_minus_http_head() {
        let (bytes, offs) = fixture(false);
        let r = read_warc_record(&mut Cursor::new(bytes), offs[0].0).unwrap();
        let declared: usize = r.header("content-length").unwrap().parse().unwrap();
        let head = "HTTP/1.1 200 OK\r\nContent-Type: application/pdf\r\nContent-Length: 14\r\n\r\n";
        assert_eq!(r.payload.len(), declared - head.len());
    }

    #[test]
    fn gzip_member_matches_plain_record() {
        let (plain, plain_offs) = fixture(false);
        let (gz, gz_offs) = fixture(true);
        for i in 0..2 {
            let a = read_warc_record(&mut Cursor::new(&plain), plain_offs[i].0).unwrap();
            let b = read_warc_record(&mut Cursor::new(&gz), gz_offs[i].0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mid_record_offset_is_bad_magic() {
        let (bytes, _) = fixture(false);
        assert!(matches!(
            read_warc_record(&mut Cursor::new(bytes), 5),
            Err(WarcError::BadMagic { offset: 5 })
        ));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let (bytes, offs) = fixture(false);
        let cut = &bytes[..(offs[1].0 + offs[1].1 - 12) as usize];
        assert!(matches!(
            read_warc_record(&mut Cursor::new(cut), offs[1].0),
            Err(WarcError::Truncated(_))
        ));
    }

    #[test]
    fn corrupt_gzip_is_a_decompression_error() {
        let (mut gz, offs) = fixture(true);
        let start = offs[0].0 as usize + 12;
        for b in &mut gz[start..start + 20] {
            *b ^= 0xa5;
        }
        match read_warc_record(&mut Cursor::new(gz), offs[0].0) {
            Err(WarcError::Decompression(_)) | Err(WarcError::Truncated(_)) | Err(WarcError::BadMagic { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn request_records_are_rejected() {
        let rec = b"WARC/1.0\r\nWARC-Type: request\r\nContent-Length: 0\r\n\r\n\r\n\r\n";
        assert!(matches!(
            read_warc_record(&mut Cursor::new(rec.to_vec()), 0),
            Err(WarcError::UnsupportedType(t)) if t == "request"
        ));
    }

    #[test]
    fn resource_payload_is_verbatim() {
        let rec = b"WARC/1.0\r\nwarc-type: resource\r\ncontent-length: 5\r\n\r\nhello\r\n\r\n";
        let r = read_warc_record(&mut Cursor::new(rec.to_vec()), 0).unwrap();
        assert_eq!(r.payload, b"hello");
        assert_eq!(r.http_status, None);
    }
}
