//! `key = value` configuration for a pipeline run.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths resolve against the
//! directory holding the config file. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::docparse::{RasterizerContract, DEFAULT_DPI, DEFAULT_THUMB_MAX};
use crate::embed::EmbedderSpec;
use crate::ingest::{ErrorPolicy, DEFAULT_MAX_PAGES};

use super::Stage;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{key}: {message}")]
    Value { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorIndexKind {
    Flat,
    Ivf,
}

pub const DEFAULT_RATE_PER_HOUR: f64 = 1.204;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cdx: Vec<PathBuf>,
    pub warc_dir: PathBuf,
    pub run_dir: PathBuf,
    pub index_dir: PathBuf,
    pub publish_dir: PathBuf,
    pub workers: usize,
    pub max_pages: u32,
    pub error_policy: ErrorPolicy,
    pub dpi: u32,
    pub thumb_max: u32,
    pub text_model: EmbedderSpec,
    pub image_model: EmbedderSpec,
    pub text_provider: Option<Vec<String>>,
    pub image_provider: Option<Vec<String>>,
    pub provider_timeout: Duration,
    pub batch_size: usize,
    pub image_batch_size: usize,
    pub vector_index: VectorIndexKind,
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
    pub ivf_seed: u64,
    pub ivf_iters: usize,
    pub rasterizer: Option<RasterizerContract>,
    pub default_rate: f64,
    pub rates: BTreeMap<Stage, f64>,
}

impl PipelineConfig {
    /// Defaults rooted at `base`: work under `base/run`, indices under `base/run/index`.
    pub fn with_base(base: &Path) -> Self {
        let run_dir = base.join("run");
        Self {
            cdx: Vec::new(),
            warc_dir: base.to_path_buf(),
            index_dir: run_dir.join("index"),
            publish_dir: run_dir.join("publish"),
            run_dir,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            max_pages: DEFAULT_MAX_PAGES,
            error_policy: ErrorPolicy::Skip,
            dpi: DEFAULT_DPI,
            thumb_max: DEFAULT_THUMB_MAX,
            text_model: EmbedderSpec::default_text(),
            image_model: EmbedderSpec::default_image(),
            text_provider: None,
            image_provider: None,
            provider_timeout: Duration::from_secs(60),
            batch_size: 64,
            image_batch_size: 8,
            vector_index: VectorIndexKind::Flat,
            nlist: None,
            nprobe: None,
            ivf_seed: 0x1f5eed,
            ivf_iters: 20,
            rasterizer: None,
            default_rate: DEFAULT_RATE_PER_HOUR,
            rates: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::with_base(base);
        let mut index_dir_set = false;
        let mut publish_dir_set = false;
        let mut seen = std::collections::HashSet::new();
        let (mut pc, mut tx, mut rd) = (None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("{key} is set twice"),
                });
            }
            let path = |v: &str| resolve(base, v);
            match key {
                "cdx" => cfg.cdx = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(path).collect(),
                "warc_dir" => cfg.warc_dir = path(value),
                "run_dir" => cfg.run_dir = path(value),
                "index_dir" => {
                    cfg.index_dir = path(value);
                    index_dir_set = true;
                }
                "publish_dir" => {
                    cfg.publish_dir = path(value);
                    publish_dir_set = true;
                }
                "workers" => cfg.workers = positive(key, value)?,
                "max_pages" => cfg.max_pages = positive(key, value)?,
                "error_policy" => {
                    cfg.error_policy = match value {
                        "skip" => ErrorPolicy::Skip,
                        "abort" => ErrorPolicy::Abort,
                        _ => return Err(bad(key, "expected skip or abort")),
                    }
                }
                "dpi" => cfg.dpi = positive(key, value)?,
                "thumb_max" => cfg.thumb_max = positive(key, value)?,
                "text_model" => cfg.text_model.model_id = value.to_string(),
                "text_dim" => cfg.text_model.dim = positive(key, value)?,
                "text_seed" => cfg.text_model.seed = number(key, value)?,
                "token_limit" => cfg.text_model.token_limit = Some(positive(key, value)?),
                "image_model" => cfg.image_model.model_id = value.to_string(),
                "image_dim" => cfg.image_model.dim = positive(key, value)?,
                "image_seed" => cfg.image_model.seed = number(key, value)?,
                "text_provider" => cfg.text_provider = Some(argv(key, value)?),
                "image_provider" => cfg.image_provider = Some(argv(key, value)?),
                "provider_timeout_secs" => cfg.provider_timeout = Duration::from_secs(positive(key, value)?),
                "batch_size" => cfg.batch_size = positive(key, value)?,
                "image_batch_size" => cfg.image_batch_size = positive(key, value)?,
                "vector_index" => {
                    cfg.vector_index = match value {
                        "flat" => VectorIndexKind::Flat,
                        "ivf" => VectorIndexKind::Ivf,
                        _ => return Err(bad(key, "expected flat or ivf")),
                    }
                }
                "nlist" => cfg.nlist = if value == "auto" { None } else { Some(positive(key, value)?) },
                "nprobe" => cfg.nprobe = Some(positive(key, value)?),
                "ivf_seed" => cfg.ivf_seed = number(key, value)?,
                "ivf_iters" => cfg.ivf_iters = positive(key, value)?,
                "rasterizer_page_count" => pc = Some(value.to_string()),
                "rasterizer_text" => tx = Some(value.to_string()),
                "rasterizer_render" => rd = Some(value.to_string()),
                "rate" => cfg.default_rate = rate(key, value)?,
                _ => match key.strip_prefix("rate.") {
                    Some(stage) => {
                        let stage: Stage = stage.parse().map_err(|e: String| bad(key, &e))?;
                        cfg.rates.insert(stage, rate(key, value)?);
                    }
                    None => {
                        return Err(ConfigError::Syntax {
                            line: i + 1,
                            message: format!("unknown key {key:?}"),
                        })
                    }
                },
            }
        }
        if !index_dir_set {
            cfg.index_dir = cfg.run_dir.join("index");
        }
        if !publish_dir_set {
            cfg.publish_dir = cfg.run_dir.join("publish");
        }
        cfg.rasterizer = match (pc, tx, rd) {
            (None, None, None) => None,
            (Some(page_count_cmd), Some(text_cmd), Some(render_cmd)) => Some(RasterizerContract {
                page_count_cmd,
                text_cmd,
                render_cmd,
            }),
            _ => {
                return Err(bad(
                    "rasterizer_*",
                    "rasterizer_page_count, rasterizer_text and rasterizer_render go together",
                ))
            }
        };
        Ok(cfg)
    }

    pub fn rate_for(&self, stage: Stage) -> f64 {
        self.rates.get(&stage).copied().unwrap_or(self.default_rate)
    }
}

fn resolve(base: &Path, v: &str) -> PathBuf {
    let p = PathBuf::from(v);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn bad(key: &str, message: &str) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    let parsed = match v.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok().and_then(|n| n.to_string().parse().ok()),
        None => v.parse().ok(),
    };
    parsed.ok_or_else(|| bad(key, &format!("{v:?} is not a valid number")))
}

fn positive<T: std::str::FromStr + PartialOrd + Default>(key: &str, v: &str) -> Result<T, ConfigError> {
    let n: T = number(key, v)?;
    if n <= T::default() {
        return Err(bad(key, "must be positive"));
    }
    Ok(n)
}

fn rate(key: &str, v: &str) -> Result<f64, ConfigError> {
    let r: f64 = v.parse().map_err(|_| bad(key, "not a number"))?;
    if !(r.is_finite() && r > 0.0) {
        return Err(bad(key, "rates must be positive"));
    }
    Ok(r)
}

fn argv(key: &str, v: &str) -> Result<Vec<String>, ConfigError> {
    let parts: Vec<String> = v.split_whitespace().map(String::from).collect();
    if parts.is_empty() {
        return Err(bad(key, "empty command"));
    }
    Ok(parts)
}
