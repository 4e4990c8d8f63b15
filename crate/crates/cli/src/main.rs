//! `hricat` command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hricat_core::eval::{adjusted_scores, fit, load_ratings, Dimension, FitSettings, Hyperparams};
use hricat_core::graph::{compare, find_datasets_by, locate_files};
use hricat_core::retrieval::{answer, AnswerMode, Knowledge};
use hricat_core::service::{audit_dataset, build_manifest, render_script, serve, AppState, ServiceConfig};
use serde::Serialize;

const DEFAULT_STORE: &str = "hricat.graph";

#[derive(Parser)]
#[command(name = "hricat", version, about = "Catalog, query and evaluate human-robot interaction datasets")]
struct Cli {
    /// Service configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Graph store; overrides `store_path` from the configuration.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Harvest one dataset from a Dataverse repository.
    Harvest {
        #[arg(long)]
        repo: String,
        #[arg(long)]
        doi: String,
        /// Data report to ingest with the record.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Attach a data report to an already harvested dataset.
    IngestReport {
        #[arg(long)]
        doi: String,
        #[arg(long)]
        report: PathBuf,
    },
    /// Datasets linked to an entity, given as `Label=name`.
    Query {
        #[arg(long, value_name = "LABEL=NAME")]
        which_datasets: String,
    },
    /// Facet-by-facet comparison of two or more datasets.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dois: Vec<String>,
        #[arg(long, num_args = 1..)]
        facets: Option<Vec<String>>,
    },
    /// Files of a dataset matching every `key=value` filter.
    Locate {
        doi: String,
        #[arg(long = "filter", value_name = "KEY=VALUE")]
        filters: Vec<String>,
    },
    /// Answer a natural-language question from the catalog.
    Ask {
        question: String,
        #[arg(long, value_enum, default_value_t = Mode::Grounded)]
        mode: Mode,
    },
    /// Download manifest for a dataset's files.
    Manifest {
        doi: String,
        #[arg(long = "filter", value_name = "KEY=VALUE")]
        filters: Vec<String>,
        #[arg(long, value_enum, default_value_t = ManifestFormat::Json)]
        format: ManifestFormat,
    },
    /// FAIR checks for one dataset.
    Audit { doi: String },
    /// List harvested datasets.
    Datasets,
    /// Print the data-model schema.
    Schema,
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Fit the rater-effects model to a ratings CSV.
    Eval {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        dimension: Dimension,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 2_000)]
        burnin: usize,
        /// Write the posterior summary as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Also print rater-corrected scores.
        #[arg(long)]
        adjusted: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Grounded,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ManifestFormat {
    Json,
    Sh,
}

fn load_config(cli: &Cli) -> Result<ServiceConfig> {
    let mut cfg: ServiceConfig = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ServiceConfig::default(),
    };
    if let Some(s) = &cli.store {
        cfg.store_path = Some(s.clone());
    } else if cfg.store_path.is_none() {
        cfg.store_path = Some(PathBuf::from(DEFAULT_STORE));
    }
    Ok(cfg)
}

fn pairs(raw: &[String]) -> Result<BTreeMap<String, String>> {
    raw.iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("expected KEY=VALUE, got {kv:?}"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Command::Eval { ratings, dimension, seed, samples, burnin, json, adjusted } = &cli.command {
        return eval(
            ratings,
            *dimension,
            FitSettings { n_samples: *samples, n_burnin: *burnin, seed: *seed },
            json.as_deref(),
            *adjusted,
        );
    }
    let cfg = load_config(&cli)?;
    let state = AppState::from_config(&cfg)?;

    match cli.command {
        Command::Harvest { repo, doi, report } => {
            let report = report.as_deref().map(read).transpose()?;
            let mut c = state.catalog.write();
            let out = c.harvest(&state.fetcher, &repo, &doi, report.as_deref(), state.embedder.as_ref())?;
            c.save()?;
            print_json(&out.summary)?;
        }
        Command::IngestReport { doi, report } => {
            let text = read(&report)?;
            let mut c = state.catalog.write();
            let out = c.ingest_report(&doi, &text, state.embedder.as_ref())?;
            c.save()?;
            print_json(&out.summary)?;
        }
        Command::Query { which_datasets } => {
            let (label, name) =
                which_datasets.split_once('=').ok_or_else(|| anyhow!("expected LABEL=NAME, got {which_datasets:?}"))?;
            let c = state.catalog.read();
            let hits = find_datasets_by(&c.graph, &c.schema, label.trim(), name.trim())?;
            for n in hits {
                println!(
                    "{}\t{}",
                    n.str_property("doi").unwrap_or(&n.key),
                    n.str_property("title").unwrap_or_default()
                );
            }
        }
        Command::Compare { dois, facets } => {
            let c = state.catalog.read();
            print_json(&compare(&c.graph, &c.schema, &dois, facets.as_deref())?)?;
        }
        Command::Locate { doi, filters } => {
            let c = state.catalog.read();
            for f in locate_files(&c.graph, &doi, &pairs(&filters)?)? {
                println!("{}", f.str_property("path").unwrap_or(&f.key));
            }
        }
        Command::Ask { question, mode } => {
            let mode = match mode {
                Mode::Grounded => AnswerMode::Grounded,
                Mode::Llm => AnswerMode::Llm,
            };
            let c = state.catalog.read();
            let k = Knowledge {
                graph: &c.graph,
                schema: &c.schema,
                index: &c.index,
                embedder: state.embedder.as_ref(),
                completer: state.completer.as_deref(),
                top_k: state.top_k,
            };
            let a = answer(&question, &k, mode)?;
            println!("{}", a.text);
            for s in &a.sources {
                println!("  [{}]", s.render(&c.graph));
            }
        }
        Command::Manifest { doi, filters, format } => {
            let c = state.catalog.read();
            let m = build_manifest(&c.graph, &doi, &pairs(&filters)?, chrono::Utc::now())?;
            match format {
                ManifestFormat::Json => print_json(&m)?,
                ManifestFormat::Sh => print!("{}", render_script(&m)),
            }
        }
        Command::Audit { doi } => {
            let c = state.catalog.read();
            let audit = audit_dataset(&c.graph, &c.schema, &doi)?;
            for ch in &audit.checks {
                println!(
                    "{} {:?} {:<26} {}",
                    if ch.passed { "ok  " } else { "FAIL" },
                    ch.principle,
                    ch.name,
                    ch.detail
                );
            }
            if !audit.passed() {
                bail!("{} of {} checks failed", audit.failing().count(), audit.checks.len());
            }
        }
        Command::Datasets => {
            let c = state.catalog.read();
            let mut rows: Vec<(String, String)> = c
                .graph
                .nodes_with_label("Dataset")
                .map(|n| {
                    (
                        n.str_property("doi").unwrap_or(&n.key).to_string(),
                        n.str_property("title").unwrap_or_default().to_string(),
                    )
                })
                .collect();
            rows.sort();
            for (doi, title) in rows {
                println!("{doi}\t{title}");
            }
        }
        Command::Schema => println!("{}", state.catalog.read().schema.to_canonical_json()),
        Command::Serve { port, host } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let addr: SocketAddr = format!("{host}:{}", port.unwrap_or(cfg.port)).parse()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(Arc::new(state), addr))?;
        }
        Command::Eval { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn eval(
    ratings: &Path,
    dimension: Dimension,
    settings: FitSettings,
    json: Option<&Path>,
    adjusted: bool,
) -> Result<()> {
    let file = fs::File::open(ratings).with_context(|| format!("opening {}", ratings.display()))?;
    let table = load_ratings(file)?;
    let summary = fit(&table, dimension, &Hyperparams::default(), &settings)?;
    print!("{}", summary.render_table());
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = json {
        fs::write(p, summary.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    if adjusted {
        let adj = adjusted_scores(&table, &summary, dimension)?;
        println!("\nrater\tprompt\traw\tcorrected");
        for s in &adj.scores {
            println!("{}\t{}\t{:.3}\t{:.3}", s.rater, s.prompt, s.raw, s.corrected);
        }
    }
    Ok(())
}
