//! Batch stages from CDX listing to serving-ready indices, with a per-run ledger.
//!
//! Each stage declares the artifacts it reads and writes. Outputs are written atomically and
//! a stage is marked complete in `ledger.json` only after all of them exist, so an
//! interrupted run resumes at the first incomplete stage. Re-running a completed stage is a
//! no-op unless forced.

mod config;
pub mod cost;
pub mod fixture;
mod ledger;
mod stages;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ConfigError, PipelineConfig, VectorIndexKind, DEFAULT_RATE_PER_HOUR};
pub use cost::{cost_report, extrapolate, CostLine, CostReport, StageRecord};
pub use ledger::{Ledger, LedgerEntry, StageStatus};
pub use stages::{audit_index_dir, AuditReport, PageLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    List,
    Download,
    Parse,
    EmbedText,
    EmbedImage,
    Metadata,
    Upload,
    VectorIndex,
    KeywordIndex,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::List,
        Stage::Download,
        Stage::Parse,
        Stage::EmbedText,
        Stage::EmbedImage,
        Stage::Metadata,
        Stage::Upload,
        Stage::VectorIndex,
        Stage::KeywordIndex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::List => "list",
            Stage::Download => "download",
            Stage::Parse => "parse",
            Stage::EmbedText => "embed_text",
            Stage::EmbedImage => "embed_image",
            Stage::Metadata => "metadata",
            Stage::Upload => "upload",
            Stage::VectorIndex => "vector_index",
            Stage::KeywordIndex => "keyword_index",
        }
    }

    pub fn inputs(self) -> &'static [Artifact] {
        use Artifact::*;
        match self {
            Stage::List => &[CdxFiles],
            Stage::Download => &[Manifest, WarcFiles],
            Stage::Parse => &[Manifest, ListStats, Docs],
            Stage::EmbedText => &[Pages],
            Stage::EmbedImage => &[Pages, PageImages],
            Stage::Metadata => &[Selected, Pages],
            Stage::Upload => &[Selected, Pages, PageImages, Docs],
            Stage::VectorIndex => &[TextEmbeddings, ImageEmbeddings],
            Stage::KeywordIndex => &[Pages],
        }
    }

    pub fn outputs(self) -> &'static [Artifact] {
        use Artifact::*;
        match self {
            Stage::List => &[Manifest, ListStats],
            Stage::Download => &[Docs],
            Stage::Parse => &[Pages, PageImages, Selected, ParseSummary],
            Stage::EmbedText => &[TextEmbeddings],
            Stage::EmbedImage => &[ImageEmbeddings],
            Stage::Metadata => &[MetadataStore],
            Stage::Upload => &[Published],
            Stage::VectorIndex => &[TextIndex, ImageIndex],
            Stage::KeywordIndex => &[KeywordSegment],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.replace('-', "_");
        let alias = match norm.as_str() {
            "fetch" => "download",
            "build_vector_index" => "vector_index",
            "build_keyword_index" => "keyword_index",
            other => other,
        };
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == alias)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// A file or directory passed between stages. Paths resolve through the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Artifact {
    CdxFiles,
    WarcFiles,
    Manifest,
    ListStats,
    /// `docs/` with `fetched.json` as its completion marker.
    Docs,
    Pages,
    /// `pages/{doc_id}/p{n}.{full,thumb}.png`.
    PageImages,
    Selected,
    ParseSummary,
    TextEmbeddings,
    ImageEmbeddings,
    MetadataStore,
    Published,
    TextIndex,
    ImageIndex,
    KeywordSegment,
}

pub const TEXT_INDEX_FILE: &str = "text.idx";
pub const IMAGE_INDEX_FILE: &str = "image.idx";
pub const KEYWORD_SEGMENT_FILE: &str = "keyword.kws";
pub const METADATA_FILE: &str = "metadata.json";

impl Artifact {
    /// The path whose presence marks the artifact as complete.
    pub fn path(self, cfg: &PipelineConfig) -> PathBuf {
        let run = &cfg.run_dir;
        match self {
            Artifact::CdxFiles => cfg.cdx.first().cloned().unwrap_or_default(),
            Artifact::WarcFiles => cfg.warc_dir.clone(),
            Artifact::Manifest => run.join("manifest.jsonl"),
            Artifact::ListStats => run.join("list_stats.json"),
            Artifact::Docs => run.join("docs").join("fetched.json"),
            Artifact::Pages => run.join("pages.jsonl"),
            Artifact::PageImages => run.join("pages").join("rendered.json"),
            Artifact::Selected => run.join("selected.jsonl"),
            Artifact::ParseSummary => run.join("parse_summary.json"),
            Artifact::TextEmbeddings => run.join("embeddings").join("text.emb"),
            Artifact::ImageEmbeddings => run.join("embeddings").join("image.emb"),
            Artifact::MetadataStore => cfg.index_dir.join(METADATA_FILE),
            Artifact::Published => cfg.publish_dir.join("published.json"),
            Artifact::TextIndex => cfg.index_dir.join(TEXT_INDEX_FILE),
            Artifact::ImageIndex => cfg.index_dir.join(IMAGE_INDEX_FILE),
            Artifact::KeywordSegment => cfg.index_dir.join(KEYWORD_SEGMENT_FILE),
        }
    }

    pub fn producer(self) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.outputs().contains(&self))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage}: missing input {artifact}{}", producer.map(|p| format!(" (run the {p} stage first)")).unwrap_or_default())]
    MissingInput {
        stage: Stage,
        artifact: String,
        producer: Option<Stage>,
    },
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outcome: Outcome,
    pub duration_secs: f64,
    pub counts: std::collections::BTreeMap<String, u64>,
    pub failures: Vec<Failure>,
}

pub struct Pipeline {
    config: PipelineConfig,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::Stage {
                stage: Stage::List,
                message: format!("worker pool: {e}"),
            })?;
        Ok(Self { config, pool })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.config.run_dir.join("ledger.json")
    }

    pub fn ledger(&self) -> Result<Ledger, PipelineError> {
        Ledger::load(&self.ledger_path())
    }

    fn check_inputs(&self, stage: Stage, ledger: &Ledger) -> Result<(), PipelineError> {
        for &artifact in stage.inputs() {
            let producer = artifact.producer();
            let path = artifact.path(&self.config);
            let present = match artifact {
                Artifact::CdxFiles => !self.config.cdx.is_empty() && self.config.cdx.iter().all(|p| p.exists()),
                _ => path.exists(),
            };
            let produced = producer.is_none_or(|p| ledger.is_complete(p));
            if !present || !produced {
                let shown = match artifact {
                    Artifact::CdxFiles if self.config.cdx.is_empty() => "cdx (no CDX files configured)".to_string(),
                    Artifact::CdxFiles => self
                        .config
                        .cdx
                        .iter()
                        .find(|p| !p.exists())
                        .map(|p| p.display().to_string())
                        .unwrap_or_default(),
                    _ => path.display().to_string(),
                };
                return Err(PipelineError::MissingInput {
                    stage,
                    artifact: shown,
                    producer,
                });
            }
        }
        Ok(())
    }

    fn outputs_present(&self, stage: Stage) -> bool {
        stage.outputs().iter().all(|a| a.path(&self.config).exists())
    }

    /// Runs one stage. A completed stage whose outputs are present is skipped unless `force`.
    pub fn run_stage(&self, stage: Stage, force: bool) -> Result<StageOutcome, PipelineError> {
        let mut ledger = self.ledger()?;
        if !force && ledger.is_complete(stage) && self.outputs_present(stage) {
            let entry = ledger.entry_mut(stage);
            entry.last_outcome = Outcome::Skipped;
            let counts = entry.counts.clone();
            ledger.save(&self.ledger_path())?;
            self.publish_if_ready(stage, &ledger)?;
            return Ok(StageOutcome {
                stage,
                outcome: Outcome::Skipped,
                duration_secs: 0.0,
                counts,
                failures: Vec::new(),
            });
        }
        self.check_inputs(stage, &ledger)?;

        ledger.mark_running(stage);
        ledger.save(&self.ledger_path())?;
        let started = Instant::now();
        let ctx = stages::StageContext::new(&self.config, stage, force);
        let result = self.pool.install(|| stages::run(&ctx));
        let duration_secs = started.elapsed().as_secs_f64();

        let mut ledger = self.ledger()?;
        match result {
            Ok(report) => {
                stages::write_failures(&self.config, stage, &report.failures)?;
                ledger.mark_complete(stage, duration_secs, report.counts.clone(), report.failures.len());
                ledger.save(&self.ledger_path())?;
                self.publish_if_ready(stage, &ledger)?;
                Ok(StageOutcome {
                    stage,
                    outcome: Outcome::Ran,
                    duration_secs,
                    counts: report.counts,
                    failures: report.failures,
                })
            }
            Err(e) => {
                ledger.mark_failed(stage, duration_secs, &e.to_string());
                ledger.save(&self.ledger_path())?;
                Err(e)
            }
        }
    }

    /// Writes `index.json` after the last of the serving components completes. It is
    /// rewritten whenever one of them is rebuilt so it always describes the files on disk.
    fn publish_if_ready(&self, stage: Stage, ledger: &Ledger) -> Result<(), PipelineError> {
        const SERVING: [Stage; 3] = [Stage::Metadata, Stage::VectorIndex, Stage::KeywordIndex];
        if SERVING.contains(&stage) && SERVING.iter().all(|s| ledger.is_complete(*s)) {
            stages::publish_index_manifest(&self.config)?;
        }
        Ok(())
    }

    pub fn index_manifest_path(&self) -> PathBuf {
        self.config.index_dir.join(crate::service::MANIFEST_FILE)
    }

    pub fn run_all(&self, force: bool) -> Result<Vec<StageOutcome>, PipelineError> {
        Stage::ALL.into_iter().map(|s| self.run_stage(s, force)).collect()
    }

    /// Priced rows for every completed stage, using the configured hourly rates.
    pub fn stage_records(&self) -> Result<Vec<StageRecord>, PipelineError> {
        let ledger = self.ledger()?;
        Ok(Stage::ALL
            .into_iter()
            .filter_map(|s| {
                ledger.get(s).filter(|e| e.status == StageStatus::Completed).map(|e| StageRecord {
                    stage: s,
                    duration_hours: e.duration_secs / 3600.0,
                    instance_rate_per_hour: self.config.rate_for(s),
                })
            })
            .collect())
    }

    pub fn cost_report(&self) -> Result<CostReport, PipelineError> {
        let records = self.stage_records()?;
        let ledger = self.ledger()?;
        let pages = ledger
            .get(Stage::Parse)
            .and_then(|e| e.counts.get("pages").copied())
            .unwrap_or(0);
        let lines: Vec<CostLine> = records.iter().map(CostLine::from).collect();
        cost_report(&lines, pages).map_err(|e| PipelineError::Stage {
            stage: Stage::List,
            message: format!("cost report: {e}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert_eq!("fetch".parse::<Stage>().unwrap(), Stage::Download);
        assert_eq!("build-vector-index".parse::<Stage>().unwrap(), Stage::VectorIndex);
        assert_eq!("embed-text".parse::<Stage>().unwrap(), Stage::EmbedText);
    }

    #[test]
    fn every_input_has_a_producer_earlier_in_order() {
        for (i, s) in Stage::ALL.into_iter().enumerate() {
            for a in s.inputs() {
                if let Some(p) = a.producer() {
                    assert!(Stage::ALL[..i].contains(&p), "{s} reads {a:?} from later stage {p}");
                }
            }
        }
    }
}
