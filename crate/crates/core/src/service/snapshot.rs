//! A loaded index generation and the `index.json` manifest describing it.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{Embedder, EmbedderSpec, HashImageEmbedder, HashTextEmbedder, Modality};
use crate::keyword_index::{KeywordIndex, Segment};
use crate::metadata::MetadataStore;
use crate::vector_index::VectorIndex;

pub const MANIFEST_FILE: &str = "index.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("index manifest: {0}")]
    Manifest(String),
    #[error("{file} does not match its recorded checksum")]
    Checksum { file: String },
    #[error("{file}: {message}")]
    Component { file: String, message: String },
}

/// Versioned description of one index generation. Contains no timestamps, so identical
/// inputs give a byte-identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    /// Hash over the component checksums.
    pub generation: String,
    pub text_model: EmbedderSpec,
    pub image_model: EmbedderSpec,
    pub text_index: String,
    pub image_index: String,
    pub keyword_segments: Vec<String>,
    pub metadata: String,
    pub nprobe: Option<usize>,
    pub documents: usize,
    pub pages: usize,
    pub text_vectors: usize,
    pub image_vectors: usize,
    /// Component file name to hex SHA-256.
    pub files: BTreeMap<String, String>,
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>, SnapshotError> {
    let path = dir.join(name);
    std::fs::read(&path).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl IndexManifest {
    /// Describes component files already present in `dir`.
    #[allow(clippy::too_many_arguments)]
    pub fn describe(
        dir: &Path,
        text_model: EmbedderSpec,
        image_model: EmbedderSpec,
        text_index: &str,
        image_index: &str,
        keyword_segments: Vec<String>,
        metadata: &str,
        nprobe: Option<usize>,
    ) -> Result<Self, SnapshotError> {
        let mut files = BTreeMap::new();
        let mut names = vec![text_index.to_string(), image_index.to_string(), metadata.to_string()];
        names.extend(keyword_segments.iter().cloned());
        for name in &names {
            files.insert(name.clone(), sha256_hex(&read(dir, name)?));
        }
        let mut generation = Sha256::new();
        for (name, digest) in &files {
            generation.update(name.as_bytes());
            generation.update([0]);
            generation.update(digest.as_bytes());
            generation.update([0]);
        }
        let generation: String = generation.finalize().iter().map(|b| format!("{b:02x}")).collect();
        let mut manifest = Self {
            format_version: MANIFEST_VERSION,
            generation: generation[..16].to_string(),
            text_model,
            image_model,
            text_index: text_index.to_string(),
            image_index: image_index.to_string(),
            keyword_segments,
            metadata: metadata.to_string(),
            nprobe,
            documents: 0,
            pages: 0,
            text_vectors: 0,
            image_vectors: 0,
            files,
        };
        let snap = Snapshot::load_components(dir, &manifest)?;
        manifest.documents = snap.metadata.len();
        manifest.pages = snap.metadata.page_total();
        manifest.text_vectors = snap.text_index.len();
        manifest.image_vectors = snap.image_index.len();
        Ok(manifest)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    pub fn read(dir: &Path) -> Result<Self, SnapshotError> {
        let bytes = read(dir, MANIFEST_FILE)?;
        let manifest: Self =
            serde_json::from_slice(&bytes).map_err(|e| SnapshotError::Manifest(e.to_string()))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(SnapshotError::Manifest(format!(
                "format version {} is not supported",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }
}

/// Everything one request reads. Immutable once built.
pub struct Snapshot {
    pub manifest: IndexManifest,
    pub text_index: VectorIndex,
    pub image_index: VectorIndex,
    pub keyword: KeywordIndex,
    pub metadata: MetadataStore,
    pub text_embedder: Arc<dyn Embedder>,
    pub image_embedder: Arc<dyn Embedder>,
}

struct Components {
    text_index: VectorIndex,
    image_index: VectorIndex,
    keyword: KeywordIndex,
    metadata: MetadataStore,
}

fn component<T, E: std::fmt::Display>(file: &str, r: Result<T, E>) -> Result<T, SnapshotError> {
    r.map_err(|e| SnapshotError::Component {
        file: file.to_string(),
        message: e.to_string(),
    })
}

impl Snapshot {
    fn load_components(dir: &Path, m: &IndexManifest) -> Result<Components, SnapshotError> {
        let checked = |name: &str| -> Result<Vec<u8>, SnapshotError> {
            let bytes = read(dir, name)?;
            match m.files.get(name) {
                Some(want) if *want == sha256_hex(&bytes) => Ok(bytes),
                _ => Err(SnapshotError::Checksum { file: name.to_string() }),
            }
        };
        let text_index = component(&m.text_index, VectorIndex::decode(&checked(&m.text_index)?))?;
        let image_index = component(&m.image_index, VectorIndex::decode(&checked(&m.image_index)?))?;
        let mut segments = Vec::new();
        for name in &m.keyword_segments {
            segments.push(component(name, Segment::decode(&checked(name)?))?);
        }
        let keyword = component("keyword segments", KeywordIndex::new(segments))?;
        let metadata = component(&m.metadata, MetadataStore::from_json(&checked(&m.metadata)?))?;
        for (index, spec, file) in [
            (&text_index, &m.text_model, &m.text_index),
            (&image_index, &m.image_model, &m.image_index),
        ] {
            if index.model_id() != spec.model_id || (!index.is_empty() && index.dim() != spec.dim) {
                return Err(SnapshotError::Component {
                    file: file.clone(),
                    message: format!("index built with {} does not match manifest model {}", index.model_id(), spec.model_id),
                });
            }
        }
        Ok(Components {
            text_index,
            image_index,
            keyword,
            metadata,
        })
    }

    /// Loads `dir/index.json` and its components with the built-in query embedders.
    pub fn load(dir: &Path) -> Result<Self, SnapshotError> {
        let manifest = IndexManifest::read(dir)?;
        let text: Arc<dyn Embedder> = Arc::new(HashTextEmbedder::new(manifest.text_model.clone()));
        let image: Arc<dyn Embedder> = Arc::new(HashImageEmbedder::new(manifest.image_model.clone()));
        Self::load_with(dir, manifest, text, image)
    }

    /// Loads with caller-supplied query embedders, which must match the manifest's models.
    pub fn load_with(
        dir: &Path,
        manifest: IndexManifest,
        text_embedder: Arc<dyn Embedder>,
        image_embedder: Arc<dyn Embedder>,
    ) -> Result<Self, SnapshotError> {
        for (e, spec, modality) in [
            (&text_embedder, &manifest.text_model, Modality::Text),
            (&image_embedder, &manifest.image_model, Modality::Image),
        ] {
            if e.spec().model_id != spec.model_id || e.spec().modality != modality {
                return Err(SnapshotError::Manifest(format!(
                    "query embedder {} does not match index model {}",
                    e.spec().model_id,
                    spec.model_id
                )));
            }
        }
        let c = Self::load_components(dir, &manifest)?;
        Ok(Self {
            manifest,
            text_index: c.text_index,
            image_index: c.image_index,
            keyword: c.keyword,
            metadata: c.metadata,
            text_embedder,
            image_embedder,
        })
    }

    /// Assembles a snapshot from in-memory parts.
    pub fn from_parts(
        text_index: VectorIndex,
        image_index: VectorIndex,
        keyword: KeywordIndex,
        metadata: MetadataStore,
        text_embedder: Arc<dyn Embedder>,
        image_embedder: Arc<dyn Embedder>,
    ) -> Self {
        let manifest = IndexManifest {
            format_version: MANIFEST_VERSION,
            generation: "in-memory".into(),
            text_model: text_embedder.spec().clone(),
            image_model: image_embedder.spec().clone(),
            text_index: String::new(),
            image_index: String::new(),
            keyword_segments: Vec::new(),
            metadata: String::new(),
            nprobe: None,
            documents: metadata.len(),
            pages: metadata.page_total(),
            text_vectors: text_index.len(),
            image_vectors: image_index.len(),
            files: BTreeMap::new(),
        };
        Self {
            manifest,
            text_index,
            image_index,
            keyword,
            metadata,
            text_embedder,
            image_embedder,
        }
    }

    pub fn with_generation(mut self, generation: impl Into<String>) -> Self {
        self.manifest.generation = generation.into();
        self
    }
}
