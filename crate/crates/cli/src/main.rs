use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use docsearch::embed::wire::serve_provider;
use docsearch::embed::{Embedder, HashImageEmbedder, HashTextEmbedder};
use docsearch::pipeline::cost::{line_cost, pages_per_dollar, parse_cost_lines};
use docsearch::pipeline::fixture::write_fixture;
use docsearch::pipeline::{
    audit_index_dir, cost_report, CostLine, Outcome, Pipeline, PipelineConfig, Stage, StageOutcome,
};
use docsearch::service::http::{serve, ServiceConfig};
use docsearch::service::IndexManifest;

#[derive(Parser)]
#[command(name = "pipeline", version, about = "Build and serve a page-level document search index")]
struct Cli {
    /// Pipeline config file.
    #[arg(long, global = true, default_value = "pipeline.conf")]
    config: PathBuf,
    /// Re-run stages even if the ledger marks them complete.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse CDX files into a deduplicated manifest.
    List,
    /// Pull manifest records out of the WARC files.
    Fetch,
    /// Split documents into pages with text and rasters.
    Parse,
    EmbedText,
    EmbedImage,
    /// Build the metadata store.
    Metadata,
    /// Copy documents and page images to the publish directory.
    Upload,
    BuildVectorIndex,
    BuildKeywordIndex,
    /// Run every stage in order, skipping completed ones.
    RunAll,
    /// Print the cost table for completed stages, or for a `label,hours,rate` file.
    Report {
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        records: Option<PathBuf>,
        /// Page total used for pages per dollar. Defaults to the parse stage count.
        #[arg(long)]
        pages: Option<u64>,
        /// Dollar figure for pages per dollar instead of the computed total.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Serve the HTTP API. Settings come from ASSET_BASE_URL, INDEX_DIR, BIND_ADDR and
    /// RATE_LIMIT; the flags override them.
    Serve {
        #[arg(long)]
        index_dir: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Check that every indexed page key exists in the metadata store.
    Audit {
        #[arg(long)]
        index_dir: Option<PathBuf>,
    },
    /// Print the index manifest.
    Stats {
        #[arg(long)]
        index_dir: Option<PathBuf>,
    },
    /// Answer framed embedding requests on stdin/stdout with the hash embedders.
    Provider {
        #[arg(value_enum)]
        modality: ProviderModality,
    },
    /// Write a synthetic crawl (WARC, CDX and config) into a directory.
    Fixture {
        dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        documents: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderModality {
    Text,
    Image,
}

fn stage_of(cmd: &Command) -> Option<Stage> {
    Some(match cmd {
        Command::List => Stage::List,
        Command::Fetch => Stage::Download,
        Command::Parse => Stage::Parse,
        Command::EmbedText => Stage::EmbedText,
        Command::EmbedImage => Stage::EmbedImage,
        Command::Metadata => Stage::Metadata,
        Command::Upload => Stage::Upload,
        Command::BuildVectorIndex => Stage::VectorIndex,
        Command::BuildKeywordIndex => Stage::KeywordIndex,
        _ => return None,
    })
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    PipelineConfig::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))
}

/// The configured index directory, or `index` when there is no config file.
fn index_dir(cli: &Cli, flag: &Option<PathBuf>) -> Result<PathBuf> {
    if let Some(dir) = flag {
        return Ok(dir.clone());
    }
    if cli.config.exists() {
        return Ok(load_config(cli)?.index_dir);
    }
    Ok(PathBuf::from("index"))
}

fn print_outcome(o: &StageOutcome) {
    let counts: Vec<String> = o.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let verb = match o.outcome {
        Outcome::Ran => format!("done in {:.2}s", o.duration_secs),
        Outcome::Skipped => "skipped (already complete)".to_string(),
    };
    println!("{:<14} {verb}  {}", o.stage.name(), counts.join(" "));
    for f in o.failures.iter().take(5) {
        println!("  failed {}: {}", f.id, f.error);
    }
    if o.failures.len() > 5 {
        println!("  ... {} more in failures/{}.json", o.failures.len() - 5, o.stage.name());
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(stage) = stage_of(&cli.command) {
        let pipeline = Pipeline::new(load_config(&cli)?)?;
        print_outcome(&pipeline.run_stage(stage, cli.force)?);
        return Ok(ExitCode::SUCCESS);
    }
    match &cli.command {
        Command::RunAll => {
            let pipeline = Pipeline::new(load_config(&cli)?)?;
            for stage in Stage::ALL {
                print_outcome(&pipeline.run_stage(stage, cli.force)?);
            }
        }
        Command::Report { format, records, pages, budget } => {
            let mut report = match records {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    let lines = parse_cost_lines(&text).map_err(anyhow::Error::msg)?;
                    cost_report(&lines, pages.unwrap_or(0))?
                }
                None => {
                    let pipeline = Pipeline::new(load_config(&cli)?)?;
                    let lines: Vec<CostLine> = pipeline.stage_records()?.iter().map(CostLine::from).collect();
                    let pages = match pages {
                        Some(p) => *p,
                        None => pipeline.cost_report()?.page_total,
                    };
                    cost_report(&lines, pages)?
                }
            };
            if let Some(b) = budget {
                report.pages_per_dollar = pages_per_dollar(report.page_total, line_cost(1.0, *b)?);
            }
            let out = match format {
                Format::Table => report.to_table(),
                Format::Csv => report.to_csv(),
            };
            io::stdout().write_all(out.as_bytes())?;
        }
        Command::Serve { index_dir: dir, bind } => {
            let mut config = ServiceConfig::from_env().map_err(anyhow::Error::msg)?;
            if dir.is_some() || (std::env::var_os("INDEX_DIR").is_none() && cli.config.exists()) {
                config.index_dir = index_dir(&cli, dir)?;
            }
            if let Some(b) = bind {
                config.bind_addr = b.parse().with_context(|| format!("bad bind address {b:?}"))?;
            }
            tokio::runtime::Runtime::new()?.block_on(serve(config))?;
        }
        Command::Audit { index_dir: dir } => {
            let dir = index_dir(&cli, dir)?;
            let report = audit_index_dir(&dir)?;
            println!("generation {}: {} index keys checked, {} dangling", report.generation, report.checked, report.dangling.len());
            for d in &report.dangling {
                println!("  {} {}", d.index, d.page_key);
            }
            if !report.is_clean() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Stats { index_dir: dir } => {
            let manifest = IndexManifest::read(&index_dir(&cli, dir)?)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::Provider { modality } => {
            let config = if cli.config.exists() {
                load_config(&cli)?
            } else {
                PipelineConfig::with_base(std::path::Path::new("."))
            };
            let embedder: Box<dyn Embedder> = match modality {
                ProviderModality::Text => Box::new(HashTextEmbedder::new(config.text_model)),
                ProviderModality::Image => Box::new(HashImageEmbedder::new(config.image_model)),
            };
            serve_provider(embedder.as_ref(), io::stdin().lock(), io::stdout().lock())?;
        }
        Command::Fixture { dir, documents, seed } => {
            let fx = write_fixture(dir, *documents, *seed)?;
            println!("config: {}", fx.config_path.display());
            for p in &fx.planted {
                println!("planted {:?} {:?} -> {}#{}", p.mode, p.query, p.doc_id, p.page_number);
            }
        }
        _ => bail!("unhandled command"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
