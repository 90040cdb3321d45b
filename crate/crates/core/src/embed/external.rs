use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use crate::docparse::Raster;

use super::wire::{read_frame, write_frame, Request, RequestKind, Response};
use super::{EmbedError, Embedder, EmbedderSpec, EmbeddingVector};

/// Runs a provider command per batch and exchanges one framed request/response over its
/// stdin/stdout.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    spec: EmbedderSpec,
    argv: Vec<String>,
    timeout: Duration,
    max_batch: usize,
}

impl ExternalEmbedder {
    pub fn new(spec: EmbedderSpec, argv: Vec<String>, timeout: Duration, max_batch: usize) -> Self {
        Self {
            spec,
            argv,
            timeout,
            max_batch: max_batch.max(1),
        }
    }

    fn exchange(&self, request: Request) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let expected = request.items.len();
        let (program, args) = self
            .argv
            .split_first()
            .ok_or_else(|| EmbedError::Provider("empty provider command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EmbedError::Provider(format!("spawning {program}: {e}")))?;

        let mut stdin = child.stdin.take().expect("piped");
        let mut stdout = child.stdout.take().expect("piped");
        let body = request.encode();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let _ = tx.send(read_frame(&mut stdout));
        });
        let written = write_frame(&mut stdin, &body).and_then(|_| stdin.flush());
        drop(stdin);

        let frame = match rx.recv_timeout(self.timeout) {
            Ok(frame) => frame,
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(EmbedError::Provider(format!(
                    "timed out after {:?}",
                    self.timeout
                )));
            }
        };
        let _ = child.wait();
        written.map_err(|e| EmbedError::Provider(format!("writing request: {e}")))?;
        let frame = frame
            .map_err(|e| EmbedError::Provider(format!("reading response: {e}")))?
            .ok_or_else(|| EmbedError::Provider("provider closed without a response".into()))?;

        match Response::decode(&frame).map_err(|e| EmbedError::Provider(e.to_string()))? {
            Response::Error(msg) => Err(EmbedError::Provider(msg)),
            Response::Vectors {
                modality,
                dim,
                rows,
            } => {
                if modality != self.spec.modality || dim != self.spec.dim || rows.len() != expected
                {
                    return Err(EmbedError::Provider(format!(
                        "response shape {modality:?}/{dim}x{} does not match {:?}/{}x{expected}",
                        rows.len(),
                        self.spec.modality,
                        self.spec.dim
                    )));
                }
                rows.iter()
                    .map(|row| {
                        let raw: Vec<f64> = row.iter().map(|v| f64::from(*v)).collect();
                        EmbeddingVector::normalized(&raw, modality, &self.spec.model_id)
                            .map_err(|e| EmbedError::Provider(e.to_string()))
                    })
                    .collect()
            }
        }
    }

    fn batched(&self, kind: RequestKind, items: Vec<Vec<u8>>) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.max_batch) {
            out.extend(self.exchange(Request {
                kind,
                items: chunk.to_vec(),
            })?);
        }
        Ok(out)
    }
}

impl Embedder for ExternalEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_text_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        self.batched(
            RequestKind::Text,
            texts.iter().map(|t| t.as_bytes().to_vec()).collect(),
        )
    }

    fn embed_image_batch(&self, images: &[Raster]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        self.batched(
            RequestKind::ImagePng,
            images.iter().map(Raster::encode_png).collect(),
        )
    }

    fn embed_query_text(&self, query: &str) -> Result<EmbeddingVector, EmbedError> {
        let kind = match self.spec.modality {
            super::Modality::Text => RequestKind::Text,
            super::Modality::Image => RequestKind::ImageQuery,
        };
        self.batched(kind, vec![query.as_bytes().to_vec()])?
            .pop()
            .ok_or_else(|| EmbedError::Provider("empty response".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_program_is_a_provider_failure() {
        let e = ExternalEmbedder::new(
            EmbedderSpec::default_text(),
            vec!["/nonexistent/provider".into()],
            Duration::from_secs(1),
            8,
        );
        assert!(matches!(e.embed_text_batch(&["x"]), Err(EmbedError::Provider(_))));
    }

    #[test]
    fn silent_provider_times_out() {
        let e = ExternalEmbedder::new(
            EmbedderSpec::default_text(),
            vec!["sleep".into(), "5".into()],
            Duration::from_millis(200),
            8,
        );
        let err = e.embed_text_batch(&["x"]).unwrap_err();
        assert!(err.to_string().contains("timed out") || err.to_string().contains("closed"), "{err}");
    }
}
