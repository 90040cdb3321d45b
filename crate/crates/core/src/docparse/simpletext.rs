//! The built-in `simpletext` document format.
//!
//! A document is UTF-8 text with pages separated by form feed (0x0C). Within a page, a line
//! that starts with `#image ` plants a visual code for the tokens that follow it (the page is
//! rendered as that code instead of as text), and a line that is exactly `#corrupt` makes the
//! page fail to render. Directive lines are not part of the page text.

use crate::embed::{fnv1a64, tokenize, visual_code, VISUAL_GRID};

use super::raster::Raster;
use super::{page_size_px, ParseError, RenderError};

pub const FORM_FEED: char = '\u{0C}';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleTextPage {
    pub text: Option<String>,
    pub visual_tokens: Option<Vec<String>>,
    pub corrupt: bool,
}

pub fn split_pages(bytes: &[u8]) -> Result<Vec<SimpleTextPage>, ParseError> {
    if bytes.is_empty() {
        return Err(ParseError::Unparseable("empty payload".into()));
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseError::Unparseable(format!("simpletext is not UTF-8: {e}")))?;
    Ok(text.split(FORM_FEED).map(parse_page).collect())
}

fn parse_page(raw: &str) -> SimpleTextPage {
    let mut visual_tokens = None;
    let mut corrupt = false;
    let mut body = Vec::new();
    for line in raw.lines() {
        if let Some(rest) = line.strip_prefix("#image ") {
            visual_tokens = Some(tokenize(rest));
        } else if line.trim_end() == "#corrupt" {
            corrupt = true;
        } else {
            body.push(line);
        }
    }
    let joined = body.join("\n");
    let trimmed = joined.trim();
    let text = if tokenize(trimmed).is_empty() {
        None
    } else {
        Some(trimmed.to_string())
    };
    SimpleTextPage {
        text,
        visual_tokens,
        corrupt,
    }
}

const INK: u8 = 0;
const PAPER: u8 = 255;

/// Renders a simpletext page onto a US-Letter raster at `dpi`.
pub fn render(page: &SimpleTextPage, dpi: u32) -> Result<Raster, RenderError> {
    if page.corrupt {
        return Err(RenderError::Failed("corrupt page stream".into()));
    }
    let (w, h) = page_size_px(dpi)?;
    match &page.visual_tokens {
        Some(tokens) => Ok(render_visual_code(&visual_code(tokens), w, h)),
        None => Ok(render_text(page.text.as_deref().unwrap_or(""), dpi, w, h)),
    }
}

/// Paints a 16x16 grid of intensity buckets across the whole raster. Pixel `(x, y)` belongs to
/// cell `(x*16/w, y*16/h)`, so area-averaging back to 16x16 recovers the buckets exactly.
pub fn render_visual_code(code: &[u8; VISUAL_GRID * VISUAL_GRID], w: u32, h: u32) -> Raster {
    let grid = VISUAL_GRID as u64;
    let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
    for y in 0..h as u64 {
        let cy = (y * grid / h as u64) as usize;
        for x in 0..w as u64 {
            let cx = (x * grid / w as u64) as usize;
            let v = code[cy * VISUAL_GRID + cx] * 32 + 16;
            pixels.extend_from_slice(&[v, v, v]);
        }
    }
    Raster {
        width: w,
        height: h,
        pixels,
    }
}

// 5x7 pseudo-glyph for a character; stable across runs and platforms.
fn glyph(c: char) -> u64 {
    let mut buf = [0u8; 4];
    fnv1a64(0x6c79_7068, c.encode_utf8(&mut buf).as_bytes()) & ((1 << 35) - 1)
}

fn render_text(text: &str, dpi: u32, w: u32, h: u32) -> Raster {
    let mut pixels = vec![PAPER; w as usize * h as usize * 3];
    let margin = dpi / 2;
    let cell_w = (dpi / 12).max(6);
    let cell_h = (dpi / 6).max(8);
    let cols = ((w - 2 * margin) / cell_w) as usize;
    let rows = ((h - 2 * margin) / cell_h) as usize;
    if cols == 0 || rows == 0 {
        return Raster {
            width: w,
            height: h,
            pixels,
        };
    }
    let px = (cell_w - 1) / 5;
    let py = (cell_h - 1) / 7;

    let mut row = 0usize;
    'lines: for line in text.lines() {
        let chars: Vec<char> = line.chars().collect();
        let chunks: Vec<&[char]> = if chars.is_empty() {
            vec![&[]]
        } else {
            chars.chunks(cols).collect()
        };
        for chunk in chunks {
            if row >= rows {
                break 'lines;
            }
            for (col, &c) in chunk.iter().enumerate() {
                if c.is_whitespace() {
                    continue;
                }
                let bits = glyph(c);
                let x0 = margin + col as u32 * cell_w;
                let y0 = margin + row as u32 * cell_h;
                for gy in 0..7u32 {
                    for gx in 0..5u32 {
                        if bits >> (gy * 5 + gx) & 1 == 0 {
                            continue;
                        }
                        for dy in 0..py {
                            for dx in 0..px {
                                let x = x0 + gx * px + dx;
                                let y = y0 + gy * py + dy;
                                let i = (y as usize * w as usize + x as usize) * 3;
                                pixels[i..i + 3].fill(INK);
                            }
                        }
                    }
                }
            }
            row += 1;
        }
    }
    Raster {
        width: w,
        height: h,
        pixels,
    }
}
