//! Page splitting, per-page text extraction and page rasterization.

mod adapter;
mod raster;
pub mod simpletext;

use rayon::prelude::*;

pub use adapter::{RasterizerContract, StagedDocument};
pub use raster::{make_thumbnail, thumbnail_dims, Raster, RasterError};

pub const DEFAULT_DPI: u32 = 110;
pub const DEFAULT_THUMB_MAX: u32 = 256;
pub const MIN_DPI: u32 = 36;
pub const MAX_DPI: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Partial,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatHint {
    Pdf,
    SimpleText,
}

impl FormatHint {
    pub fn detect(bytes: &[u8]) -> Self {
        if bytes.starts_with(b"%PDF-") {
            FormatHint::Pdf
        } else {
            FormatHint::SimpleText
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRecord {
    pub doc_id: String,
    pub page_number: u32,
    /// `None` when the page has no extractable text; never an empty string.
    pub text: Option<String>,
    pub image: Raster,
    pub thumb: Raster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDocument {
    pub doc_id: String,
    /// Pages that rendered, in document order. Numbers are the page's position in the
    /// source document, so a partial document may have gaps.
    pub pages: Vec<PageRecord>,
    /// Total pages in the source document, including pages that failed to render.
    pub page_count: u32,
    pub failed_pages: Vec<(u32, String)>,
    pub parse_status: ParseStatus,
}

impl ParsedDocument {
    pub fn failed(doc_id: &str) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            pages: Vec::new(),
            page_count: 0,
            failed_pages: Vec::new(),
            parse_status: ParseStatus::Failed,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("unparseable document: {0}")]
    Unparseable(String),
    #[error("PDF input needs a rasterizer adapter")]
    NoAdapter,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RenderError {
    #[error("dpi {0} outside [{MIN_DPI}, {MAX_DPI}]")]
    InvalidDpi(u32),
    #[error("render failure: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageFilter {
    Keep,
    Drop,
}

/// US-Letter (8.5 x 11 in) at `dpi`.
pub fn page_size_px(dpi: u32) -> Result<(u32, u32), RenderError> {
    if !(MIN_DPI..=MAX_DPI).contains(&dpi) {
        return Err(RenderError::InvalidDpi(dpi));
    }
    Ok((dpi * 17 / 2, dpi * 11))
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub dpi: u32,
    pub thumb_max: u32,
    pub pdf: Option<RasterizerContract>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            dpi: DEFAULT_DPI,
            thumb_max: DEFAULT_THUMB_MAX,
            pdf: None,
        }
    }
}

/// Drops documents with more than `max_pages` pages. Zero-page documents are kept.
pub fn filter_by_page_count(doc: &ParsedDocument, max_pages: u32) -> PageFilter {
    if doc.page_count > max_pages {
        PageFilter::Drop
    } else {
        PageFilter::Keep
    }
}

fn assemble(
    doc_id: &str,
    rendered: Vec<(u32, Option<String>, Result<Raster, RenderError>)>,
    thumb_max: u32,
) -> ParsedDocument {
    let page_count = rendered.len() as u32;
    let mut pages = Vec::new();
    let mut failed_pages = Vec::new();
    for (page_number, text, image) in rendered {
        match image {
            Ok(image) => {
                let thumb = make_thumbnail(&image, thumb_max);
                pages.push(PageRecord {
                    doc_id: doc_id.to_string(),
                    page_number,
                    text,
                    image,
                    thumb,
                });
            }
            Err(e) => failed_pages.push((page_number, e.to_string())),
        }
    }
    let parse_status = match (pages.is_empty(), failed_pages.is_empty()) {
        (_, true) => ParseStatus::Ok,
        (false, false) => ParseStatus::Partial,
        (true, false) => ParseStatus::Failed,
    };
    if parse_status == ParseStatus::Failed {
        pages.clear();
    }
    ParsedDocument {
        doc_id: doc_id.to_string(),
        pages,
        page_count,
        failed_pages,
        parse_status,
    }
}

/// Splits a payload into pages, extracting text and rendering each page plus its thumbnail.
pub fn split_document(
    doc_id: &str,
    bytes: &[u8],
    hint: FormatHint,
    opts: &ParseOptions,
) -> Result<ParsedDocument, ParseError> {
    if bytes.is_empty() {
        return Err(ParseError::Unparseable("empty payload".into()));
    }
    page_size_px(opts.dpi).map_err(|e| ParseError::Unparseable(e.to_string()))?;
    match hint {
        FormatHint::SimpleText => {
            let pages = simpletext::split_pages(bytes)?;
            let rendered = pages
                .par_iter()
                .enumerate()
                .map(|(i, p)| (i as u32 + 1, p.text.clone(), simpletext::render(p, opts.dpi)))
                .collect();
            Ok(assemble(doc_id, rendered, opts.thumb_max))
        }
        FormatHint::Pdf => {
            let adapter = opts.pdf.as_ref().ok_or(ParseError::NoAdapter)?;
            let staged = StagedDocument::new(bytes)?;
            let n = adapter.page_count(staged.path())?;
            let rendered = (1..=n)
                .map(|page| {
                    let image = adapter.render(staged.path(), page, opts.dpi);
                    let text = match &image {
                        Ok(_) => adapter.text(staged.path(), page).unwrap_or(None),
                        Err(_) => None,
                    };
                    (page, text, image)
                })
                .collect();
            Ok(assemble(doc_id, rendered, opts.thumb_max))
        }
    }
}

/// Renders one simpletext page on its own.
pub fn render_page_image(page: &simpletext::SimpleTextPage, dpi: u32) -> Result<Raster, RenderError> {
    simpletext::render(page, dpi)
}

pub fn page_image_name(page_number: u32) -> String {
    format!("p{page_number}.full.png")
}

pub fn page_thumb_name(page_number: u32) -> String {
    format!("p{page_number}.thumb.png")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> ParseOptions {
        ParseOptions {
            dpi: 72,
            ..Default::default()
        }
    }

    fn doc_with_pages(n: u32) -> ParsedDocument {
        let text: Vec<String> = (1..=n).map(|i| format!("page {i}")).collect();
        split_document("d", text.join("\x0c").as_bytes(), FormatHint::SimpleText, &opts()).unwrap()
    }

    #[test]
    fn simpletext_pages_are_dense_and_one_based() {
        let doc = split_document("d1", b"a\x0cb\x0cc", FormatHint::SimpleText, &opts()).unwrap();
        assert_eq!(doc.parse_status, ParseStatus::Ok);
        let numbers: Vec<u32> = doc.pages.iter().map(|p| p.page_number).collect();
        assert_eq!(numbers, vec![1, 2, 3]);
        assert!(doc.pages.iter().all(|p| p.text.is_some()));
        assert_eq!((doc.pages[0].image.width, doc.pages[0].image.height), (612, 792));
        assert_eq!((doc.pages[0].thumb.width, doc.pages[0].thumb.height), (197, 256));
    }

    #[test]
    fn image_only_page_has_absent_text() {
        let doc = split_document("d", b"#image pie chart", FormatHint::SimpleText, &opts()).unwrap();
        assert_eq!(doc.pages[0].text, None);
    }

    #[test]
    fn zero_byte_payload_is_unparseable() {
        assert!(matches!(
            split_document("d", b"", FormatHint::SimpleText, &opts()),
            Err(ParseError::Unparseable(_))
        ));
    }

    #[test]
    fn corrupt_page_fails_alone() {
        let doc = split_document("d", b"one\x0c#corrupt\ntwo\x0cthree", FormatHint::SimpleText, &opts()).unwrap();
        assert_eq!(doc.parse_status, ParseStatus::Partial);
        assert_eq!(doc.page_count, 3);
        let numbers: Vec<u32> = doc.pages.iter().map(|p| p.page_number).collect();
        assert_eq!(numbers, vec![1, 3]);
        assert_eq!(doc.failed_pages[0].0, 2);
    }

    #[test]
    fn all_pages_corrupt_is_failed_and_empty() {
        let doc = split_document("d", b"#corrupt\x0c#corrupt", FormatHint::SimpleText, &opts()).unwrap();
        assert_eq!(doc.parse_status, ParseStatus::Failed);
        assert!(doc.pages.is_empty());
    }

    #[test]
    fn letter_page_sizes() {
        assert_eq!(page_size_px(72).unwrap(), (612, 792));
        assert_eq!(page_size_px(110).unwrap(), (935, 1210));
        assert!(matches!(page_size_px(35), Err(RenderError::InvalidDpi(35))));
        assert!(matches!(page_size_px(301), Err(RenderError::InvalidDpi(301))));
    }

    #[test]
    fn rendering_is_deterministic() {
        let pages = simpletext::split_pages(b"Deterministic output please").unwrap();
        assert_eq!(render_page_image(&pages[0], 72).unwrap(), render_page_image(&pages[0], 72).unwrap());
    }

    #[test]
    fn page_count_filter_boundary() {
        assert_eq!(filter_by_page_count(&doc_with_pages(50), 50), PageFilter::Keep);
        assert_eq!(filter_by_page_count(&doc_with_pages(51), 50), PageFilter::Drop);
        let empty = ParsedDocument { parse_status: ParseStatus::Ok, ..ParsedDocument::failed("e") };
        assert_eq!(filter_by_page_count(&empty, 50), PageFilter::Keep);
    }

    #[test]
    fn pdf_without_adapter_is_an_error() {
        assert!(matches!(
            split_document("d", b"%PDF-1.7", FormatHint::Pdf, &opts()),
            Err(ParseError::NoAdapter)
        ));
    }

    #[test]
    fn format_detection() {
        assert_eq!(FormatHint::detect(b"%PDF-1.4\n"), FormatHint::Pdf);
        assert_eq!(FormatHint::detect(b"plain"), FormatHint::SimpleText);
    }
}
