//! Framed request/response protocol for out-of-process embedding providers.
//!
//! Every message is a frame: `u32` little-endian body length, then the body.
//!
//! Request body: `"EMQ1"`, kind `u8` (0 text, 1 PNG image, 2 text query into image space),
//! count `u32`, then `count` items of `u32` length + bytes.
//!
//! Response body: `"EMR1"`, modality `u8` (0 text, 1 image), count `u32`, dim `u32`, then
//! `count * dim` little-endian `f32`. A provider-side failure is `"EME1"` + UTF-8 message.

use std::io::{self, Read, Write};

use crate::codec::{CodecError, Reader, Writer};
use crate::docparse::Raster;

use super::{Embedder, Modality};

const MAX_FRAME: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    Text,
    ImagePng,
    ImageQuery,
}

impl RequestKind {
    fn code(self) -> u8 {
        match self {
            RequestKind::Text => 0,
            RequestKind::ImagePng => 1,
            RequestKind::ImageQuery => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub kind: RequestKind,
    pub items: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Vectors {
        modality: Modality,
        dim: usize,
        rows: Vec<Vec<f32>>,
    },
    Error(String),
}

pub fn write_frame<W: Write>(out: &mut W, body: &[u8]) -> io::Result<()> {
    out.write_all(&(body.len() as u32).to_le_bytes())?;
    out.write_all(body)?;
    out.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(input: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = input.read(&mut len[got..])?;
        if n == 0 {
            return if got == 0 {
                Ok(None)
            } else {
                Err(io::ErrorKind::UnexpectedEof.into())
            };
        }
        got += n;
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len as usize];
    input.read_exact(&mut body)?;
    Ok(Some(body))
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(b"EMQ1");
        w.u8(self.kind.code());
        w.u32(self.items.len() as u32);
        for item in &self.items {
            w.u32(item.len() as u32);
            w.bytes(item);
        }
        w.into_inner()
    }

    pub fn decode(body: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(body);
        if r.take(4)? != b"EMQ1" {
            return Err(CodecError::BadMagic { expected: *b"EMQ1" });
        }
        let kind = match r.u8()? {
            0 => RequestKind::Text,
            1 => RequestKind::ImagePng,
            2 => RequestKind::ImageQuery,
            k => return Err(CodecError::Malformed(format!("unknown request kind {k}"))),
        };
        let count = r.u32()? as usize;
        let mut items = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = r.u32()? as usize;
            items.push(r.take(len)?.to_vec());
        }
        r.expect_end()?;
        Ok(Request { kind, items })
    }
}

impl Response {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Response::Vectors {
                modality,
                dim,
                rows,
            } => {
                w.bytes(b"EMR1");
                w.u8(modality.code());
                w.u32(rows.len() as u32);
                w.u32(*dim as u32);
                for row in rows {
                    w.f32s(row);
                }
            }
            Response::Error(msg) => {
                w.bytes(b"EME1");
                w.bytes(msg.as_bytes());
            }
        }
        w.into_inner()
    }

    pub fn decode(body: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(body);
        match r.take(4)? {
            b"EME1" => Ok(Response::Error(
                String::from_utf8_lossy(r.take(r.remaining())?).into_owned(),
            )),
            b"EMR1" => {
                let modality = Modality::from_code(r.u8()?)
                    .ok_or_else(|| CodecError::Malformed("unknown modality".into()))?;
                let count = r.u32()? as usize;
                let dim = r.u32()? as usize;
                let mut rows = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    rows.push(r.f32s(dim)?);
                }
                r.expect_end()?;
                Ok(Response::Vectors {
                    modality,
                    dim,
                    rows,
                })
            }
            _ => Err(CodecError::BadMagic { expected: *b"EMR1" }),
        }
    }
}

fn answer(embedder: &dyn Embedder, body: &[u8]) -> Response {
    let request = match Request::decode(body) {
        Ok(r) => r,
        Err(e) => return Response::Error(format!("bad request: {e}")),
    };
    let result = match request.kind {
        RequestKind::Text => {
            let texts: Result<Vec<&str>, _> =
                request.items.iter().map(|b| std::str::from_utf8(b)).collect();
            match texts {
                Ok(texts) => embedder.embed_text_batch(&texts),
                Err(e) => return Response::Error(format!("text item is not UTF-8: {e}")),
            }
        }
        RequestKind::ImagePng => {
            let images: Result<Vec<Raster>, _> =
                request.items.iter().map(|b| Raster::decode_png(b)).collect();
            match images {
                Ok(images) => embedder.embed_image_batch(&images),
                Err(e) => return Response::Error(format!("image item: {e}")),
            }
        }
        RequestKind::ImageQuery => request
            .items
            .iter()
            .map(|b| embedder.embed_query_text(&String::from_utf8_lossy(b)))
            .collect(),
    };
    match result {
        Ok(vectors) => Response::Vectors {
            modality: embedder.spec().modality,
            dim: embedder.spec().dim,
            rows: vectors.into_iter().map(|v| v.values).collect(),
        },
        Err(e) => Response::Error(e.to_string()),
    }
}

/// Answers framed requests from `input` until it closes.
pub fn serve_provider<R: Read, W: Write>(
    embedder: &dyn Embedder,
    mut input: R,
    mut output: W,
) -> io::Result<()> {
    while let Some(body) = read_frame(&mut input)? {
        write_frame(&mut output, &answer(embedder, &body).encode())?;
    }
    Ok(())
}
