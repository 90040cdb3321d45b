//! Stage bodies. Each reads only its declared inputs through [`StageContext`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Artifact, Failure, PipelineConfig, PipelineError, Stage, VectorIndexKind};
use super::{IMAGE_INDEX_FILE, KEYWORD_SEGMENT_FILE, METADATA_FILE, TEXT_INDEX_FILE};
use crate::codec;
use crate::docparse::{
    filter_by_page_count, page_image_name, page_thumb_name, split_document, FormatHint, PageFilter,
    ParseOptions, ParseStatus, Raster,
};
use crate::embed::shard::EmbeddingShard;
use crate::embed::{
    Embedder, EmbedderSpec, EmbeddingVector, ExternalEmbedder, HashImageEmbedder, HashTextEmbedder, Modality,
};
use crate::ingest::{build_manifest, read_warc_record, DocumentRecord, Manifest, SelectionCounters};
use crate::keyword_index::SegmentBuilder;
use crate::metadata::{extract_domain, MetadataStore};
use crate::service::{IndexManifest, Snapshot, MANIFEST_FILE};
use crate::types::PageKey;
use crate::vector_index::{FlatIndex, IvfIndex, IvfParams, VectorIndex};

pub(super) struct StageContext<'a> {
    pub cfg: &'a PipelineConfig,
    pub stage: Stage,
    pub force: bool,
}

#[derive(Debug, Default)]
pub(super) struct StageReport {
    pub counts: BTreeMap<String, u64>,
    pub failures: Vec<Failure>,
}

impl StageReport {
    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n as u64);
    }
}

impl<'a> StageContext<'a> {
    pub fn new(cfg: &'a PipelineConfig, stage: Stage, force: bool) -> Self {
        Self { cfg, stage, force }
    }

    fn input(&self, a: Artifact) -> PathBuf {
        assert!(self.stage.inputs().contains(&a), "{} reads undeclared input {a:?}", self.stage);
        a.path(self.cfg)
    }

    fn output(&self, a: Artifact) -> PathBuf {
        assert!(self.stage.outputs().contains(&a), "{} writes undeclared output {a:?}", self.stage);
        a.path(self.cfg)
    }

    /// Directory holding a directory-shaped artifact (its marker file's parent).
    fn dir_of(&self, path: PathBuf) -> PathBuf {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    fn fail(&self, message: impl std::fmt::Display) -> PipelineError {
        PipelineError::Stage {
            stage: self.stage,
            message: message.to_string(),
        }
    }

    fn read(&self, path: &Path) -> Result<Vec<u8>, PipelineError> {
        std::fs::read(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
        codec::write_atomic(path, bytes).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| self.fail(e))?;
        bytes.push(b'\n');
        self.write(path, &bytes)
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<T, PipelineError> {
        serde_json::from_slice(&self.read(path)?).map_err(|e| self.fail(format!("{}: {e}", path.display())))
    }

    fn read_records(&self, path: &Path) -> Result<Vec<DocumentRecord>, PipelineError> {
        Manifest::read_records(&self.read(path)?[..]).map_err(|e| self.fail(e))
    }

    fn read_pages(&self, path: &Path) -> Result<Vec<PageLine>, PipelineError> {
        let bytes = self.read(path)?;
        let mut out = Vec::new();
        for (i, line) in bytes.split(|b| *b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            out.push(
                serde_json::from_slice(line)
                    .map_err(|e| self.fail(format!("{} line {}: {e}", path.display(), i + 1)))?,
            );
        }
        Ok(out)
    }
}

/// One line of `pages.jsonl`: a rendered page and its text, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageLine {
    pub doc_id: String,
    pub page_number: u32,
    pub text: Option<String>,
}

impl PageLine {
    pub fn key(&self) -> PageKey {
        PageKey::new(self.doc_id.clone(), self.page_number)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FetchedIndex {
    fetched: Vec<String>,
    failed: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocSummary {
    doc_id: String,
    page_count: Option<u32>,
    parse_status: ParseStatus,
    failed_pages: Vec<u32>,
    rejected: bool,
    selected: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParseSummary {
    counters: SelectionCounters,
    unparsed: usize,
    documents: Vec<DocSummary>,
}

pub(super) fn run(ctx: &StageContext) -> Result<StageReport, PipelineError> {
    match ctx.stage {
        Stage::List => list(ctx),
        Stage::Download => download(ctx),
        Stage::Parse => parse(ctx),
        Stage::EmbedText => embed(ctx, Modality::Text),
        Stage::EmbedImage => embed(ctx, Modality::Image),
        Stage::Metadata => metadata(ctx),
        Stage::Upload => upload(ctx),
        Stage::VectorIndex => vector_index(ctx),
        Stage::KeywordIndex => keyword_index(ctx),
    }
}

pub(super) fn write_failures(cfg: &PipelineConfig, stage: Stage, failures: &[Failure]) -> Result<(), PipelineError> {
    let path = cfg.run_dir.join("failures").join(format!("{}.json", stage.name()));
    if failures.is_empty() {
        return match std::fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(PipelineError::Io {
                path: path.display().to_string(),
                source: e,
            }),
            _ => Ok(()),
        };
    }
    let mut bytes = serde_json::to_vec_pretty(failures).expect("failures serialize");
    bytes.push(b'\n');
    codec::write_atomic(&path, &bytes).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn list(ctx: &StageContext) -> Result<StageReport, PipelineError> {
    ctx.input(Artifact::CdxFiles);
    let m = build_manifest(&ctx.cfg.cdx, ctx.cfg.max_pages, ctx.cfg.error_policy).map_err(|e| ctx.fail(e))?;
    ctx.write(&ctx.output(Artifact::Manifest), m.to_jsonl().as_bytes())?;
    ctx.write_json(&ctx.output(Artifact::ListStats), &m.counters)?;
    let mut r = StageReport::default();
    r.count("lines", m.counters.total_lines as usize);
    r.count("malformed_lines", m.counters.malformed_lines as usize);
    r.count("pdf_candidates", m.counters.pdf_candidates as usize);
    r.count("documents", m.records.len());
    Ok(r)
}

fn download(ctx: &StageContext) -> Result<StageReport, PipelineError> {
    let records = ctx.read_records(&ctx.input(Artifact::Manifest))?;
    let warc_dir = ctx.input(Artifact::WarcFiles);
    let marker = ctx.output(Artifact::Docs);
    let docs_dir = ctx.dir_of(marker.clone());
    let results: Vec<Result<u64, Failure>> = records
        .par_iter()
        .map(|r| {
            let fail = |error: String| Failure {
                id: r.doc_id.clone(),
                error,
            };
            let out = docs_dir.join(format!("{}.bin", r.doc_id));
            if !ctx.force {
                if let Ok(meta) = std::fs::metadata(&out) {
                    return Ok(meta.len());
                }
            }
            let path = warc_dir.join(&r.source.warc_file);
            let file = File::open(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
            let rec = read_warc_record(&mut BufReader::new(file), r.source.offset)
                .map_err(|e| fail(format!("{} @ {}: {e}", r.source.warc_file, r.source.offset)))?;
            if let Some(status) = rec.http_status.filter(|s| *s != 200) {
                return Err(fail(format!("archived response has HTTP status {status}")));
            }
            if rec.payload.is_empty() {
                return Err(fail(format!("{} record has no payload", rec.record_type())));
            }
            codec::write_atomic(&out, &rec.payload).map_err(|e| fail(e.to_string()))?;
            Ok(rec.payload.len() as u64)
        })
        .collect();
    let mut report = StageReport::default();
    let mut index = FetchedIndex {
        fetched: Vec::new(),
        failed: Vec::new(),
    };
    let mut bytes = 0;
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(n) => {
                bytes += n;
                index.fetched.push(r.doc_id.clone());
            }
            Err(f) => {
                index.failed.push(r.doc_id.clone());
                report.failures.push(f);
            }
        }
    }
    report.count("fetched", index.fetched.len());
    report.count("failed", index.failed.len());
    report.count("bytes", bytes as usize);
    ctx.write_json(&marker, &index)?;
    Ok(report)
}

struct DocParse {
    doc_id: String,
    page_count: Option<u32>,
    status: ParseStatus,
    failed_pages: Vec<u32>,
    rejected: bool,
    pages: Vec<PageLine>,
    error: Option<String>,
}

fn parse(ctx: &StageContext) -> Result<StageReport, PipelineError> {
    let cfg = ctx.cfg;
    let records = ctx.read_records(&ctx.input(Artifact::Manifest))?;
    let counters: SelectionCounters = ctx.read_json(&ctx.input(Artifact::ListStats))?;
    let docs_marker = ctx.input(Artifact::Docs);
    let fetched: FetchedIndex = ctx.read_json(&docs_marker)?;
    let fetched: HashSet<String> = fetched.fetched.into_iter().collect();
    let docs_dir = ctx.dir_of(docs_marker);
    let images_marker = ctx.output(Artifact::PageImages);
    let images_dir = ctx.dir_of(images_marker.clone());
    let opts = ParseOptions {
        dpi: cfg.dpi,
        thumb_max: cfg.thumb_max,
        pdf: cfg.rasterizer.clone(),
    };

    let parsed: Vec<DocParse> = records
        .par_iter()
        .map(|r| {
            let mut out = DocParse {
                doc_id: r.doc_id.clone(),
                page_count: None,
                status: ParseStatus::Failed,
                failed_pages: Vec::new(),
                rejected: false,
                pages: Vec::new(),
                error: None,
            };
            if !fetched.contains(&r.doc_id) {
                out.error = Some("not downloaded".into());
                return Ok(out);
            }
            if let Err(e) = extract_domain(&r.source.original_url) {
                out.error = Some(e.to_string());
                return Ok(out);
            }
            let bytes = ctx.read(&docs_dir.join(format!("{}.bin", r.doc_id)))?;
            let doc = match split_document(&r.doc_id, &bytes, FormatHint::detect(&bytes), &opts) {
                Ok(doc) => doc,
                Err(e) => {
                    out.error = Some(e.to_string());
                    return Ok(out);
                }
            };
            out.page_count = Some(doc.page_count);
            out.status = doc.parse_status;
            out.failed_pages = doc.failed_pages.iter().map(|(n, _)| *n).collect();
            if filter_by_page_count(&doc, cfg.max_pages) == PageFilter::Drop {
                out.rejected = true;
                return Ok(out);
            }
            if doc.parse_status == ParseStatus::Failed {
                out.error = Some(match doc.failed_pages.first() {
                    Some((n, e)) => format!("no page rendered; page {n}: {e}"),
                    None => "document has no pages".into(),
                });
                return Ok(out);
            }
            let dir = images_dir.join(&r.doc_id);
            for page in doc.pages {
                ctx.write(&dir.join(page_image_name(page.page_number)), &page.image.encode_png())?;
                ctx.write(&dir.join(page_thumb_name(page.page_number)), &page.thumb.encode_png())?;
                out.pages.push(PageLine {
                    doc_id: page.doc_id,
                    page_number: page.page_number,
                    text: page.text,
                });
            }
            Ok(out)
        })
        .collect::<Result<_, PipelineError>>()?;

    let page_counts: BTreeMap<String, u32> = parsed
        .iter()
        .filter_map(|d| d.page_count.map(|n| (d.doc_id.clone(), n)))
        .collect();
    let mut manifest = Manifest {
        max_pages: cfg.max_pages,
        records,
        rejected: Vec::new(),
        counters,
    };
    manifest.apply_page_counts(&page_counts);

    let mut report = StageReport::default();
    let servable: BTreeSet<&str> = parsed
        .iter()
        .filter(|d| !d.rejected && !d.pages.is_empty())
        .map(|d| d.doc_id.as_str())
        .collect();
    let mut documents = Vec::new();
    let mut pages_jsonl = String::new();
    let (mut n_pages, mut n_text, mut partial) = (0, 0, 0);
    for d in &parsed {
        let selected = servable.contains(d.doc_id.as_str());
        if let Some(e) = &d.error {
            report.failures.push(Failure {
                id: d.doc_id.clone(),
                error: e.clone(),
            });
        } else if d.status == ParseStatus::Partial && selected {
            partial += 1;
            report.failures.push(Failure {
                id: d.doc_id.clone(),
                error: format!("pages failed to render: {:?}", d.failed_pages),
            });
        }
        for p in &d.pages {
            n_pages += 1;
            n_text += usize::from(p.text.is_some());
            pages_jsonl.push_str(&serde_json::to_string(p).expect("page line serializes"));
            pages_jsonl.push('\n');
        }
        documents.push(DocSummary {
            doc_id: d.doc_id.clone(),
            page_count: d.page_count,
            parse_status: d.status,
            failed_pages: d.failed_pages.clone(),
            rejected: d.rejected,
            selected,
        });
    }
    let selected = Manifest {
        records: manifest
            .records
            .iter()
            .filter(|r| servable.contains(r.doc_id.as_str()))
            .cloned()
            .collect(),
        ..manifest.clone()
    };
    let unparsed = manifest.records.len() - selected.records.len();

    ctx.write(&ctx.output(Artifact::Pages), pages_jsonl.as_bytes())?;
    ctx.write(&ctx.output(Artifact::Selected), selected.to_jsonl().as_bytes())?;
    ctx.write_json(
        &ctx.output(Artifact::ParseSummary),
        &ParseSummary {
            counters: manifest.counters,
            unparsed,
            documents,
        },
    )?;
    ctx.write_json(&images_marker, &serde_json::json!({"documents": servable.len(), "pages": n_pages}))?;

    report.count("documents", servable.len());
    report.count("pages", n_pages);
    report.count("text_pages", n_text);
    report.count("partial", partial);
    report.count("rejected_page_count", manifest.counters.rejected_page_count as usize);
    report.count("unparsed", unparsed);
    Ok(report)
}

fn embedder_for(cfg: &PipelineConfig, modality: Modality) -> Arc<dyn Embedder> {
    let (spec, provider, batch) = match modality {
        Modality::Text => (&cfg.text_model, &cfg.text_provider, cfg.batch_size),
        Modality::Image => (&cfg.image_model, &cfg.image_provider, cfg.image_batch_size),
    };
    match provider {
        Some(argv) => Arc::new(ExternalEmbedder::new(spec.clone(), argv.clone(), cfg.provider_timeout, batch)),
        None => match modality {
            Modality::Text => Arc::new(HashTextEmbedder::new(spec.clone())),
            Modality::Image => Arc::new(HashImageEmbedder::new(spec.clone())),
        },
    }
}

fn check_vector(spec: &EmbedderSpec, v: &EmbeddingVector) -> Result<(), String> {
    if v.model_id != spec.model_id || v.dim() != spec.dim || v.modality != spec.modality {
        return Err(format!(
            "embedder returned {} ({:?}, dim {}), expected {} ({:?}, dim {})",
            v.model_id,
            v.modality,
            v.dim(),
            spec.model_id,
            spec.modality,
            spec.dim
        ));
    }
    Ok(())
}

enum EmbedInput<'a> {
    Text(&'a str),
    Image(PathBuf),
}

fn embed(ctx: &StageContext, modality: Modality) -> Result<StageReport, PipelineError> {
    let cfg = ctx.cfg;
    let pages = ctx.read_pages(&ctx.input(Artifact::Pages))?;
    let (spec, batch, output) = match modality {
        Modality::Text => (&cfg.text_model, cfg.batch_size, Artifact::TextEmbeddings),
        Modality::Image => (&cfg.image_model, cfg.image_batch_size, Artifact::ImageEmbeddings),
    };
    let images_dir = match modality {
        Modality::Image => Some(ctx.dir_of(ctx.input(Artifact::PageImages))),
        Modality::Text => None,
    };
    let items: Vec<(PageKey, EmbedInput)> = pages
        .iter()
        .filter_map(|p| match (&images_dir, &p.text) {
            (Some(dir), _) => Some((p.key(), EmbedInput::Image(dir.join(&p.doc_id).join(page_image_name(p.page_number))))),
            (None, Some(t)) => Some((p.key(), EmbedInput::Text(t))),
            (None, None) => None,
        })
        .collect();
    let embedder = embedder_for(cfg, modality);

    let embed_batch = |chunk: &[(PageKey, EmbedInput)]| -> Result<Vec<EmbeddingVector>, String> {
        match modality {
            Modality::Text => {
                let texts: Vec<&str> = chunk
                    .iter()
                    .map(|(_, i)| match i {
                        EmbedInput::Text(t) => *t,
                        EmbedInput::Image(_) => unreachable!(),
                    })
                    .collect();
                embedder.embed_text_batch(&texts).map_err(|e| e.to_string())
            }
            Modality::Image => {
                let mut rasters = Vec::with_capacity(chunk.len());
                for (_, i) in chunk {
                    let EmbedInput::Image(path) = i else { unreachable!() };
                    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
                    rasters.push(Raster::decode_png(&bytes).map_err(|e| format!("{}: {e}", path.display()))?);
                }
                embedder.embed_image_batch(&rasters).map_err(|e| e.to_string())
            }
        }
    };

    let results: Vec<Vec<Result<(PageKey, Vec<f32>), Failure>>> = items
        .par_chunks(batch)
        .map(|chunk| {
            let vectors = match embed_batch(chunk) {
                Ok(v) if v.len() == chunk.len() => Ok(v),
                Ok(v) => Err(format!("embedder returned {} vectors for {} inputs", v.len(), chunk.len())),
                Err(e) => Err(e),
            };
            match vectors {
                Ok(vs) => chunk
                    .iter()
                    .zip(vs)
                    .map(|((key, _), v)| {
                        check_vector(spec, &v)
                            .map(|()| (key.clone(), v.values))
                            .map_err(|error| Failure { id: key.to_string(), error })
                    })
                    .collect(),
                // Retry one at a time so a single bad input does not sink its batch.
                Err(_) if chunk.len() > 1 => chunk
                    .iter()
                    .map(|item| match embed_batch(std::slice::from_ref(item)) {
                        Ok(mut v) if v.len() == 1 => {
                            let v = v.remove(0);
                            check_vector(spec, &v)
                                .map(|()| (item.0.clone(), v.values))
                                .map_err(|error| Failure { id: item.0.to_string(), error })
                        }
                        Ok(v) => Err(Failure {
                            id: item.0.to_string(),
                            error: format!("embedder returned {} vectors for 1 input", v.len()),
                        }),
                        Err(error) => Err(Failure {
                            id: item.0.to_string(),
                            error,
                        }),
                    })
                    .collect(),
                Err(error) => vec![Err(Failure {
                    id: chunk[0].0.to_string(),
                    error,
                })],
            }
        })
        .collect();

    let mut shard = EmbeddingShard::new(modality, spec.dim);
    let mut report = StageReport::default();
    for r in results.into_iter().flatten() {
        match r {
            Ok(row) => shard.rows.push(row),
            Err(f) => report.failures.push(f),
        }
    }
    shard.rows.sort_by(|a, b| a.0.cmp(&b.0));
    report.count("embedded", shard.rows.len());
    report.count("failed", report.failures.len());
    report.count("skipped_no_text", pages.len() - items.len());
    ctx.write(&ctx.output(output), &shard.encode())?;
    Ok(report)
}

fn metadata(ctx: &StageContext) -> Result<StageReport, PipelineError> {
    let records = ctx.read_records(&ctx.input(Artifact::Selected))?;
    let pages = ctx.read_pages(&ctx.input(Artifact::Pages))?;
    let mut by_doc: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for p in &pages {
        by_doc.entry(&p.doc_id).or_default().push(p.page_number);
    }
    let mut store = MetadataStore::new();
    for r in &records {
        let doc_pages = by_doc.remove(r.doc_id.as_str()).unwrap_or_default();
        store.insert_document(r, doc_pages).map_err(|e| ctx.fail(e))?;
    }
    if let Some(orphan) = by_doc.keys().next() {
        return Err(ctx.fail(format!("pages.jsonl lists {orphan}, which is not a selected document")));
    }
    ctx.write(&ctx.output(Artifact::MetadataStore), &store.to_json())?;
    let mut report = StageReport::default();
    report.count("documents", store.len());
    report.count("pages", store.page_total());
    Ok(report)
}

fn upload(ctx: &StageContext) -> Result<StageReport, PipelineError> {
    let records = ctx.read_records(&ctx.input(Artifact::Selected))?;
    let pages = ctx.read_pages(&ctx.input(Artifact::Pages))?;
    let images_dir = ctx.dir_of(ctx.input(Artifact::PageImages));
    let docs_dir = ctx.dir_of(ctx.input(Artifact::Docs));
    let marker = ctx.output(Artifact::Published);
    let publish = ctx.dir_of(marker.clone());
    let mut by_doc: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for p in &pages {
        by_doc.entry(&p.doc_id).or_default().push(p.page_number);
    }
    let copies: Vec<(PathBuf, PathBuf)> = records
        .iter()
        .flat_map(|r| {
            let id = r.doc_id.as_str();
            let mut v = vec![(docs_dir.join(format!("{id}.bin")), publish.join(id).join("doc.pdf"))];
            for &n in by_doc.get(id).map(Vec::as_slice).unwrap_or_default() {
                for name in [page_image_name(n), page_thumb_name(n)] {
                    v.push((images_dir.join(id).join(&name), publish.join(id).join(&name)));
                }
            }
            v
        })
        .collect();
    let bytes: u64 = copies
        .par_iter()
        .map(|(from, to)| {
            let data = ctx.read(from)?;
            ctx.write(to, &data)?;
            Ok(data.len() as u64)
        })
        .collect::<Result<Vec<u64>, PipelineError>>()?
        .into_iter()
        .sum();
    ctx.write_json(&marker, &serde_json::json!({"documents": records.len(), "files": copies.len()}))?;
    let mut report = StageReport::default();
    report.count("documents", records.len());
    report.count("files", copies.len());
    report.count("bytes", bytes as usize);
    Ok(report)
}

fn build_vector_index(ctx: &StageContext, shard: EmbeddingShard, spec: &EmbedderSpec) -> Result<VectorIndex, PipelineError> {
    if shard.modality != spec.modality || (!shard.rows.is_empty() && shard.dim != spec.dim) {
        return Err(ctx.fail(format!(
            "{:?} embeddings of dim {} do not match model {} (dim {})",
            shard.modality, shard.dim, spec.model_id, spec.dim
        )));
    }
    let mut flat = FlatIndex::new(spec.model_id.clone(), spec.dim);
    for (key, v) in &shard.rows {
        flat.add(key.clone(), v).map_err(|e| ctx.fail(e))?;
    }
    match ctx.cfg.vector_index {
        VectorIndexKind::Ivf if !flat.is_empty() => {
            let params = IvfParams {
                nlist: ctx.cfg.nlist.map(|n| n.min(flat.len())),
                iters: ctx.cfg.ivf_iters,
                seed: ctx.cfg.ivf_seed,
            };
            Ok(VectorIndex::Ivf(IvfIndex::build(&flat, params).map_err(|e| ctx.fail(e))?))
        }
        _ => Ok(VectorIndex::Flat(flat)),
    }
}

fn vector_index(ctx: &StageContext) -> Result<StageReport, PipelineError> {
    let mut report = StageReport::default();
    for (input, output, spec, label) in [
        (Artifact::TextEmbeddings, Artifact::TextIndex, &ctx.cfg.text_model, "text"),
        (Artifact::ImageEmbeddings, Artifact::ImageIndex, &ctx.cfg.image_model, "image"),
    ] {
        let shard = EmbeddingShard::decode(&ctx.read(&ctx.input(input))?).map_err(|e| ctx.fail(e))?;
        let index = build_vector_index(ctx, shard, spec)?;
        let stats = index.stats();
        report.count(&format!("{label}_vectors"), stats.count);
        report.count(&format!("{label}_nlist"), stats.nlist);
        ctx.write(&ctx.output(output), &index.encode())?;
    }
    Ok(report)
}

fn keyword_index(ctx: &StageContext) -> Result<StageReport, PipelineError> {
    let pages = ctx.read_pages(&ctx.input(Artifact::Pages))?;
    let mut builder = SegmentBuilder::new();
    for p in &pages {
        if let Some(text) = &p.text {
            builder.index_page(p.key(), text).map_err(|e| ctx.fail(e))?;
        }
    }
    let segment = builder.finish();
    let mut report = StageReport::default();
    report.count("pages", segment.page_count());
    report.count("terms", segment.terms().count());
    ctx.write(&ctx.output(Artifact::KeywordSegment), &segment.encode())?;
    Ok(report)
}

/// Writes `index.json` once the metadata store and all indices exist.
pub(super) fn publish_index_manifest(cfg: &PipelineConfig) -> Result<bool, PipelineError> {
    let parts = [
        Artifact::MetadataStore,
        Artifact::TextIndex,
        Artifact::ImageIndex,
        Artifact::KeywordSegment,
    ];
    if !parts.iter().all(|a| a.path(cfg).exists()) {
        return Ok(false);
    }
    let nprobe = match cfg.vector_index {
        VectorIndexKind::Ivf => cfg.nprobe,
        VectorIndexKind::Flat => None,
    };
    let manifest = IndexManifest::describe(
        &cfg.index_dir,
        cfg.text_model.clone(),
        cfg.image_model.clone(),
        TEXT_INDEX_FILE,
        IMAGE_INDEX_FILE,
        vec![KEYWORD_SEGMENT_FILE.to_string()],
        METADATA_FILE,
        nprobe,
    )
    .map_err(|e| PipelineError::Stage {
        stage: Stage::KeywordIndex,
        message: format!("index manifest: {e}"),
    })?;
    let path = cfg.index_dir.join(MANIFEST_FILE);
    codec::write_atomic(&path, &manifest.to_json()).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DanglingKey {
    pub index: &'static str,
    pub page_key: PageKey,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub generation: String,
    pub checked: usize,
    pub dangling: Vec<DanglingKey>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.dangling.is_empty()
    }
}

/// Loads an index directory (verifying checksums) and lists index keys unknown to the
/// metadata store.
pub fn audit_index_dir(dir: &Path) -> Result<AuditReport, crate::service::SnapshotError> {
    let snap = Snapshot::load(dir)?;
    let mut checked = 0;
    let mut dangling = Vec::new();
    let sources: [(&'static str, Vec<PageKey>); 3] = [
        ("text", snap.text_index.page_keys()),
        ("image", snap.image_index.page_keys()),
        ("keyword", snap.keyword.page_keys().cloned().collect()),
    ];
    for (index, keys) in sources {
        checked += keys.len();
        for page_key in snap.metadata.dangling(keys.iter()) {
            dangling.push(DanglingKey { index, page_key });
        }
    }
    Ok(AuditReport {
        generation: snap.manifest.generation.clone(),
        checked,
        dangling,
    })
}
