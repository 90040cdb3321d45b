//! Subprocess adapter for real PDF documents.
//!
//! Each command template is split on whitespace into argv (no shell). `{input}`, `{page}` and
//! `{dpi}` are substituted per invocation.
//!
//! * `page_count` prints the number of pages (bare integer, or `Pages: N`).
//! * `text` prints the page's UTF-8 text; empty output means the page has no text layer.
//! * `render` prints a header line `<width> <height>\n` followed by exactly
//!   `width * height * 3` bytes of 8-bit RGB.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use super::raster::Raster;
use super::{RenderError, ParseError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterizerContract {
    pub page_count_cmd: String,
    pub text_cmd: String,
    pub render_cmd: String,
}

fn expand(template: &str, input: &Path, page: u32, dpi: u32) -> Vec<String> {
    template
        .split_whitespace()
        .map(|arg| {
            arg.replace("{input}", &input.to_string_lossy())
                .replace("{page}", &page.to_string())
                .replace("{dpi}", &dpi.to_string())
        })
        .collect()
}

fn run(argv: &[String]) -> Result<Vec<u8>, String> {
    let (program, args) = argv.split_first().ok_or("empty command template")?;
    let out = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| format!("spawning {program}: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "{program} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(out.stdout)
}

/// A document written to a uniquely named temp file for the lifetime of the adapter calls.
pub struct StagedDocument {
    file: tempfile::NamedTempFile,
}

impl StagedDocument {
    pub fn new(bytes: &[u8]) -> std::io::Result<Self> {
        let mut file = tempfile::Builder::new()
            .prefix("docparse-")
            .suffix(".pdf")
            .tempfile()?;
        file.write_all(bytes)?;
        file.flush()?;
        Ok(Self { file })
    }

    pub fn path(&self) -> &Path {
        self.file.path()
    }
}

impl RasterizerContract {
    pub fn page_count(&self, input: &Path) -> Result<u32, ParseError> {
        let out = run(&expand(&self.page_count_cmd, input, 0, 0)).map_err(ParseError::Unparseable)?;
        let text = String::from_utf8_lossy(&out);
        let from_label = text.lines().find_map(|l| {
            l.strip_prefix("Pages:")
                .and_then(|v| v.trim().parse::<u32>().ok())
        });
        from_label
            .or_else(|| text.trim().parse().ok())
            .ok_or_else(|| ParseError::Unparseable(format!("no page count in {:?}", text.trim())))
    }

    pub fn text(&self, input: &Path, page: u32) -> Result<Option<String>, RenderError> {
        let out = run(&expand(&self.text_cmd, input, page, 0)).map_err(RenderError::Failed)?;
        let text = String::from_utf8_lossy(&out);
        let trimmed = text.trim();
        Ok((!crate::embed::tokenize(trimmed).is_empty()).then(|| trimmed.to_string()))
    }

    pub fn render(&self, input: &Path, page: u32, dpi: u32) -> Result<Raster, RenderError> {
        let out = run(&expand(&self.render_cmd, input, page, dpi)).map_err(RenderError::Failed)?;
        let nl = out
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| RenderError::Failed("missing dimension header".into()))?;
        let header = std::str::from_utf8(&out[..nl])
            .map_err(|_| RenderError::Failed("non UTF-8 dimension header".into()))?;
        let mut dims = header.split_whitespace().map(str::parse::<u32>);
        let (Some(Ok(w)), Some(Ok(h)), None) = (dims.next(), dims.next(), dims.next()) else {
            return Err(RenderError::Failed(format!("bad dimension header {header:?}")));
        };
        Raster::new(w, h, out[nl + 1..].to_vec()).map_err(|e| RenderError::Failed(e.to_string()))
    }
}
