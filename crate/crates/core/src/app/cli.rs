//! Command-line entry points, one subcommand per pipeline operation.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backend::{backend_from_spec, ReasoningBackend};
use crate::corpus::{expand_query, parse_query, search_index, CorpusIndex};
use crate::models::Catalog;
use crate::pipeline::{candidate_summary, extract_candidate, run_pipeline, PipelineConfig};
use crate::screening::{confusion, read_decisions, read_truth, screen, write_decisions, MetricsReport};
use crate::skills::{domain_filter, multimodal_parser, ExecutionLog};
use crate::store::{ExportFormat, RecordFilter, StatsConfig, Store};
use crate::validator::{validate_entry, Verdict};

use super::http::{serve, AppState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOCUMENT_FAILURE: i32 = 1;
pub const EXIT_FATAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const CONFIG_ENV: &str = "CREEPDB_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "creepdb", version, about = "Mine creep curves and constitutive models into a validated database")]
struct Cli {
    /// Pipeline config file (TOML); falls back to $CREEPDB_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Manifest file, or a directory holding manifest.jsonl.
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// echo, scripted:<path> or remote:<url>; overrides the config.
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Debug, Args, Default)]
struct FilterArgs {
    #[arg(long)]
    material: Option<String>,
    #[arg(long)]
    category: Option<String>,
    #[arg(long = "t-min-k")]
    t_min_k: Option<f64>,
    #[arg(long = "t-max-k")]
    t_max_k: Option<f64>,
    #[arg(long = "s-min-mpa")]
    s_min_mpa: Option<f64>,
    #[arg(long = "s-max-mpa")]
    s_max_mpa: Option<f64>,
    /// Comma-separated verdicts.
    #[arg(long)]
    verdict: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Data,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a corpus manifest and list its bundles.
    Ingest(CorpusArgs),
    /// Search the corpus with a Boolean query, or expand natural language first.
    Search {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        query: String,
        /// Treat the query as Boolean syntax instead of expanding it.
        #[arg(long)]
        boolean: bool,
    },
    /// Screen every bundle and write the decisions as csv.
    Screen {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Extract candidate entries as line-delimited JSON.
    Extract {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        bundle: Option<String>,
        #[arg(long)]
        strict: bool,
    },
    /// Extract and validate; prints one validation report per line.
    Validate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        bundle: Option<String>,
        #[arg(long)]
        strict: bool,
    },
    /// Run all five stages into a database.
    Run {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        db: PathBuf,
        /// Natural-language collection query.
        #[arg(long)]
        query: Option<String>,
        /// Write validation reports as line-delimited JSON.
        #[arg(long)]
        audit: Option<PathBuf>,
        #[arg(long)]
        max_in_flight: Option<usize>,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        strict: bool,
    },
    /// Score screening decisions against ground truth.
    Eval {
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Export records matching a filter.
    Export {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one curve csv per record into this directory.
        #[arg(long)]
        curves_dir: Option<PathBuf>,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Print distribution statistics as JSON.
    Stats {
        #[arg(long)]
        db: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
    },
}

struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

type CliResult = Result<i32, Fatal>;

/// Accept `x`, `x.jsonl` or a directory containing `default_name`.
fn resolve(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        return path.join(default_name);
    }
    if !path.exists() {
        let with = path.with_extension("jsonl");
        if with.exists() {
            return with;
        }
    }
    path.to_path_buf()
}

fn load_config(cli_path: &Option<PathBuf>) -> Result<PipelineConfig, Fatal> {
    let path = cli_path.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => Ok(PipelineConfig::load(&p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn backend(args: &BackendArgs, cfg: &PipelineConfig) -> Result<Box<dyn ReasoningBackend>, Fatal> {
    match &args.backend {
        Some(spec) => {
            let spec = match spec.strip_prefix("scripted:") {
                Some(p) => format!("scripted:{}", resolve(Path::new(p), "replies.jsonl").display()),
                None => spec.clone(),
            };
            Ok(backend_from_spec(&spec, &cfg.backend.model, Duration::from_secs(cfg.backend.timeout_secs))?)
        }
        None => Ok(cfg.build_backend()?),
    }
}

fn corpus(args: &CorpusArgs) -> Result<CorpusIndex, Fatal> {
    Ok(CorpusIndex::ingest_manifest(&resolve(&args.corpus, "manifest.jsonl"))?)
}

fn bundle_ids(index: &CorpusIndex, only: &Option<String>) -> Result<Vec<String>, Fatal> {
    match only {
        Some(id) if !index.entries.contains_key(id) => Err(Fatal(format!("unknown bundle '{id}'"))),
        Some(id) => Ok(vec![id.clone()]),
        None => Ok(index.ids()),
    }
}

fn filter(args: &FilterArgs) -> Result<RecordFilter, Fatal> {
    let range = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (None, None) => None,
        (a, b) => Some((a.unwrap_or(f64::NEG_INFINITY), b.unwrap_or(f64::INFINITY))),
    };
    let verdicts = match &args.verdict {
        None => None,
        Some(v) => Some(
            v.split(',')
                .map(|s| Verdict::parse(s.trim()).ok_or_else(|| Fatal(format!("unknown verdict '{s}'"))))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    let f = RecordFilter {
        material: args.material.clone(),
        category: args.category.clone(),
        temperature_k: range(args.t_min_k, args.t_max_k),
        stress_mpa: range(args.s_min_mpa, args.s_max_mpa),
        verdicts,
    };
    f.validate()?;
    Ok(f)
}

fn strict_exit(strict: bool, failures: usize) -> i32 {
    if strict && failures > 0 {
        EXIT_DOCUMENT_FAILURE
    } else {
        EXIT_OK
    }
}

fn open_existing(db: &Path) -> Result<Store, Fatal> {
    if !db.is_file() {
        return Err(Fatal(format!("database {} does not exist", db.display())));
    }
    Ok(Store::open(db)?)
}

#[allow(clippy::too_many_arguments)]
fn extract_or_validate(
    cfg: &PipelineConfig,
    c: &CorpusArgs,
    b: &BackendArgs,
    only: &Option<String>,
    strict: bool,
    validate: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult {
    let index = corpus(c)?;
    let be = backend(b, cfg)?;
    let skill = multimodal_parser().with_retries(cfg.retries.multimodal_parser);
    let catalog = Catalog::builtin();
    let log = ExecutionLog::new();
    let mut failures = 0;
    for id in bundle_ids(&index, only)? {
        let result = index
            .load(&id)
            .map_err(|e| e.to_string())
            .and_then(|bundle| extract_candidate(&bundle, be.as_ref(), &skill, &catalog, &log).map_err(|e| e.to_string()));
        match result {
            Ok(ex) if validate => {
                let report = validate_entry(&ex.entry, &cfg.thresholds);
                writeln!(out, "{}", serde_json::to_string(&report)?)?;
            }
            Ok(ex) => writeln!(out, "{}", candidate_summary(&ex.entry))?,
            Err(e) => {
                failures += 1;
                writeln!(err, "{id}: {e}")?;
            }
        }
    }
    Ok(strict_exit(strict, failures))
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Ingest(c) => {
            let index = corpus(&c)?;
            for (id, s) in &index.entries {
                writeln!(out, "{id}\t{}\t{}", s.doi, s.title)?;
            }
            writeln!(out, "{} bundles", index.len())?;
            Ok(EXIT_OK)
        }
        Command::Search {
            corpus: c,
            backend: b,
            query,
            boolean,
        } => {
            let index = corpus(&c)?;
            let q = if boolean {
                parse_query(&query)?
            } else {
                let be = backend(&b, &cfg)?;
                expand_query(&query, be.as_ref(), Some(&index), &ExecutionLog::new(), cfg.lenient_query)?
            };
            writeln!(out, "query: {q}")?;
            for id in search_index(&index, &q)? {
                writeln!(out, "{id}")?;
            }
            Ok(EXIT_OK)
        }
        Command::Screen {
            corpus: c,
            backend: b,
            out: path,
            strict,
        } => {
            let index = corpus(&c)?;
            let be = backend(&b, &cfg)?;
            let skill = domain_filter().with_retries(cfg.retries.domain_filter);
            let log = ExecutionLog::new();
            let mut decisions = Vec::new();
            let mut failures = 0;
            for id in index.ids() {
                match index.load(&id).map_err(|e| e.to_string()).and_then(|bundle| {
                    screen(&bundle, be.as_ref(), &skill, &log).map_err(|e| e.to_string())
                }) {
                    Ok(d) => decisions.push(d),
                    Err(e) => {
                        failures += 1;
                        writeln!(err, "{id}: {e}")?;
                    }
                }
            }
            let csv = write_decisions(&decisions);
            match path {
                Some(p) => fs::write(p, csv)?,
                None => out.write_all(csv.as_bytes())?,
            }
            Ok(strict_exit(strict, failures))
        }
        Command::Extract {
            corpus: c,
            backend: b,
            bundle,
            strict,
        } => extract_or_validate(&cfg, &c, &b, &bundle, strict, false, out, err),
        Command::Validate {
            corpus: c,
            backend: b,
            bundle,
            strict,
        } => extract_or_validate(&cfg, &c, &b, &bundle, strict, true, out, err),
        Command::Run {
            corpus: c,
            backend: b,
            db,
            query,
            audit,
            max_in_flight,
            json,
            strict,
        } => {
            let index = corpus(&c)?;
            let be = backend(&b, &cfg)?;
            let mut cfg = cfg;
            if query.is_some() {
                cfg.collection_query = query;
            }
            if let Some(n) = max_in_flight {
                cfg.max_in_flight = n.max(1);
            }
            let mut store = Store::open(&db)?;
            let log = ExecutionLog::new();
            let report = run_pipeline(&index, &cfg, be.as_ref(), &mut store, &log)?;
            if let Some(p) = audit {
                fs::write(p, report.audit_lines())?;
            }
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{}", report.human())?;
            }
            Ok(strict_exit(strict, report.failures()))
        }
        Command::Eval { decisions, truth, json } => {
            let d = read_decisions(fs::File::open(&decisions)?)?;
            let t = read_truth(fs::File::open(&truth)?)?;
            let report = MetricsReport::from_counts(confusion(&d, &t)?);
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{}", report.human())?;
            }
            Ok(EXIT_OK)
        }
        Command::Serve { db, addr } => {
            let store = Store::open(&db)?;
            let rt = tokio::runtime::Runtime::new()?;
            writeln!(err, "listening on http://{addr}")?;
            rt.block_on(serve(addr, AppState::new(store)))?;
            Ok(EXIT_OK)
        }
        Command::Export {
            db,
            format,
            out: path,
            curves_dir,
            filter: f,
        } => {
            let store = open_existing(&db)?;
            let f = filter(&f)?;
            let fmt = match format {
                Format::Csv => ExportFormat::Csv,
                Format::Data => ExportFormat::Data,
            };
            let bytes = store.export(&f, fmt)?;
            match path {
                Some(p) => fs::write(p, bytes)?,
                None => out.write_all(&bytes)?,
            }
            if let Some(dir) = curves_dir {
                let n = store.export_to_dir(&f, &dir)?;
                writeln!(err, "wrote {n} curve files to {}", dir.display())?;
            }
            Ok(EXIT_OK)
        }
        Command::Stats { db, filter: f } => {
            let store = open_existing(&db)?;
            let s = store.stats(&filter(&f)?, &StatsConfig::default())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&s)?)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(Fatal(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_FATAL
        }
    }
}

pub fn main_exit() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
