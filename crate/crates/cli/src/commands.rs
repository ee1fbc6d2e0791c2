use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::CommandFactory;
use contextjoin::embedding::{EmbeddingProvider, LocalEmbedder, RemoteEmbedder, DEFAULT_DIMS};
use contextjoin::eval::{run_benchmark, AblationMode, GroundTruth};
use contextjoin::search::{Engine, IndexBundle, QuerySpec, SearchOptions, SearchRequest, SyntacticMode};
use contextjoin::{
    build_indexes, ingest, weights_from_config, BuildConfig, ColumnRef, Error, IngestConfig, IntersectionMode,
    WeightConfig,
};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{pick, FileConfig};
use crate::{Cli, Command, EmbedArgs, EvaluateArgs, IndexArgs, RankArgs, SearchArgs};
use crate::{EXIT_ERROR, EXIT_GROUND_TRUTH, EXIT_UNKNOWN_QUERY};

const DEFAULT_TIMEOUT_SECS: u64 = 30;
const MAX_SUGGESTIONS: usize = 5;

pub struct Failure {
    pub error: anyhow::Error,
    pub code: u8,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::QueryNotFound(_) | Error::UnknownColumn { .. }) => EXIT_UNKNOWN_QUERY,
            Some(Error::GroundTruth { .. }) => EXIT_GROUND_TRUTH,
            _ => EXIT_ERROR,
        };
        Self { error, code }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Index(args) => index(args, &file),
        Command::Search(args) => search(args, &file),
        Command::Evaluate(args) => evaluate(args, &file),
    }
}

/// Reports a missing setting the way clap reports a missing flag (exit 2).
fn require<T>(value: Option<T>, flag: &str) -> T {
    value.unwrap_or_else(|| {
        Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                format!("{flag} is required (flag or config file)"),
            )
            .exit()
    })
}

fn timeout(embed: &EmbedArgs, file: &FileConfig) -> Duration {
    Duration::from_secs(pick([embed.embed_timeout_secs, file.embed_timeout_secs], DEFAULT_TIMEOUT_SECS))
}

fn embed_url(embed: &EmbedArgs, file: &FileConfig) -> Option<String> {
    embed.embed_url.clone().or_else(|| file.embed_url.clone()).filter(|u| !u.is_empty())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Outcome {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(anyhow::Error::from(e).into()),
        _ => Ok(()),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn index(args: IndexArgs, file: &FileConfig) -> Outcome {
    let lake = require(args.lake.or_else(|| file.lake.clone()), "--lake");
    let out = require(args.out.or_else(|| file.index.clone()), "--out");
    let defaults = IngestConfig::default();
    let config = IngestConfig {
        sample_cap: pick([args.sample_cap, file.sample_cap], defaults.sample_cap),
        index_row_sample: pick([args.index_row_sample, file.index_row_sample], defaults.index_row_sample),
        seed: pick([args.seed, file.seed], defaults.seed),
    };
    config.validate()?;
    let dims = pick([args.dims, file.dims], DEFAULT_DIMS);
    let fallback = args.local_fallback || file.local_fallback.unwrap_or(false);

    let provider: Box<dyn EmbeddingProvider> = match embed_url(&args.embed, file) {
        Some(url) => match RemoteEmbedder::connect(&url, timeout(&args.embed, file)) {
            Ok(remote) => Box::new(remote),
            Err(e) if fallback => {
                log::warn!("{e}; using the local embedder");
                Box::new(LocalEmbedder::new(dims))
            }
            Err(e) => return Err(Error::Build(format!("{e} (pass --local-fallback to use the local embedder)")).into()),
        },
        None => Box::new(LocalEmbedder::new(dims)),
    };

    log::info!("loading lake {}", lake.display());
    let catalog = ingest::load_lake(&lake, &config).with_context(|| format!("loading {}", lake.display()))?;
    let tables = catalog.tables.len();
    let columns = catalog.columns.len();
    let skipped_rows: u64 = catalog.skipped_rows.values().sum();
    log::info!("building indexes over {tables} tables, {columns} columns");
    let bundle = build_indexes(catalog, provider.as_ref(), &BuildConfig { perm_seed: config.seed })?;
    let written = bundle.save(&out).with_context(|| format!("writing {}", out.display()))?;

    let mut files = Vec::new();
    for path in &written {
        let bytes = fs::read(path).with_context(|| format!("reading back {}", path.display()))?;
        files.push(json!({
            "name": path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "bytes": bytes.len(),
            "sha256": sha256_hex(&bytes),
        }));
    }
    let summary = json!({
        "tables": tables,
        "columns": columns,
        "skipped_rows": skipped_rows,
        "provider": bundle.manifest.provider,
        "dims": bundle.manifest.dims,
        "seed": config.seed,
        "files": files,
    });
    emit(&(serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n"))
}

fn search_options(args: &RankArgs, file: &FileConfig) -> Result<SearchOptions, Failure> {
    let mut weights = file.weights.clone();
    weights.extend(args.weights.iter().copied());
    let weights = weights_from_config(&WeightConfig {
        weights,
        only: args.only,
        drop: args.drop,
    })?;
    let implied = args.minhash.then_some(IntersectionMode::Minhash);
    Ok(SearchOptions {
        k: pick([args.k, file.k], 10),
        budget: pick([args.budget, file.budget], 100),
        weights,
        intersection_mode: pick([args.intersection, implied, file.intersection_mode], IntersectionMode::Exact),
        syntactic: if args.minhash { SyntacticMode::Minhash } else { SyntacticMode::Inverted },
        merge_join_sizes: args.merge_join_sizes || file.merge_join_sizes.unwrap_or(false),
    })
}

fn open_index(args: &RankArgs, file: &FileConfig) -> Result<(IndexBundle, Box<dyn EmbeddingProvider>), Failure> {
    let dir: PathBuf = require(args.idx.clone().or_else(|| file.index.clone()), "--idx");
    let bundle = IndexBundle::load(&dir, !args.minhash).with_context(|| format!("loading index {}", dir.display()))?;
    let manifest = &bundle.manifest;
    let url = embed_url(&args.embed, file);
    let provider: Box<dyn EmbeddingProvider> = if manifest.provider.starts_with("local-") {
        if url.is_some() {
            log::warn!("index was built with the local embedder; ignoring the embedding service URL");
        }
        Box::new(LocalEmbedder::new(manifest.dims))
    } else {
        let url = url.ok_or_else(|| {
            anyhow!(
                "index was built with `{}`; set --embed-url or CONTEXTJOIN_EMBED_URL",
                manifest.provider
            )
        })?;
        Box::new(RemoteEmbedder::connect(&url, timeout(&args.embed, file))?)
    };
    Ok((bundle, provider))
}

fn closest<'a>(target: &str, names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let target = target.to_lowercase();
    let mut scored: Vec<(f64, &str)> = names
        .map(|n| (strsim::normalized_levenshtein(&target, &n.to_lowercase()), n))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(MAX_SUGGESTIONS).map(|(_, n)| n).collect()
}

fn unknown(what: String, suggestions: Vec<&str>) -> Failure {
    let hint = if suggestions.is_empty() {
        String::new()
    } else {
        format!("; did you mean: {}", suggestions.join(", "))
    };
    Failure {
        error: anyhow!("{what}{hint}"),
        code: EXIT_UNKNOWN_QUERY,
    }
}

fn resolve_query(bundle: &IndexBundle, table: &str, column: &str) -> Result<QuerySpec, Failure> {
    let catalog = &bundle.catalog;
    if let Some(meta) = catalog.table(table) {
        if meta.column_names.iter().any(|c| c == column) {
            return Ok(QuerySpec::Lake(ColumnRef::new(table, column)));
        }
        let names = meta.column_names.iter().map(String::as_str);
        return Err(unknown(format!("table `{table}` has no column `{column}`"), closest(column, names)));
    }
    let path = Path::new(table);
    if path.is_file() {
        let (raw, _) = ingest::read_csv(path)?;
        if !raw.header.iter().any(|c| c == column) {
            let names = raw.header.iter().map(String::as_str);
            return Err(unknown(
                format!("{} has no column `{column}`", path.display()),
                closest(column, names),
            ));
        }
        return Ok(QuerySpec::AdHoc {
            path: path.to_path_buf(),
            column: column.to_owned(),
        });
    }
    let ids = catalog.tables.iter().map(|t| t.table_id.as_str());
    Err(unknown(
        format!("`{table}` is neither a lake table nor a CSV file"),
        closest(table, ids),
    ))
}

fn search(args: SearchArgs, file: &FileConfig) -> Outcome {
    let options = search_options(&args.rank, file)?;
    let (bundle, provider) = open_index(&args.rank, file)?;
    let query = resolve_query(&bundle, &args.query_table, &args.query_column)?;
    let engine = Engine::new(&bundle, provider.as_ref())?;
    let outcome = engine.search(&SearchRequest { query, options: options.clone() })?;
    for warning in &outcome.warnings {
        log::warn!("{warning}");
    }
    let mut lines = String::new();
    for result in &outcome.results {
        lines.push_str(&result.to_json(args.explain, options.merge_join_sizes).to_string());
        lines.push('\n');
    }
    emit(&lines)
}

fn evaluate(args: EvaluateArgs, file: &FileConfig) -> Outcome {
    let truth = GroundTruth::load(&args.gt).with_context(|| format!("reading {}", args.gt.display()))?;
    let options = search_options(&args.rank, file)?;
    let (bundle, provider) = open_index(&args.rank, file)?;
    let engine = Engine::new(&bundle, provider.as_ref())?;
    let mode = args.ablate.unwrap_or(AblationMode::Full);
    let mut report = run_benchmark(&engine, &truth, &options, mode, args.k_sweep.map(|r| r.1))?;
    if let Some((lo, _)) = args.k_sweep {
        report.sweep.retain(|p| p.k >= lo);
    }
    for warning in &report.warnings {
        log::info!("{warning}");
    }
    for skipped in &report.skipped {
        log::warn!("skipped query {}: {}", skipped.query, skipped.reason);
    }
    for target in &report.unresolved_targets {
        log::warn!("ground-truth target {target} is not in the index");
    }
    if let Some(path) = &args.csv {
        let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(io::BufWriter::new(f))?;
    }
    let text = if args.json { report.to_json()? + "\n" } else { report.to_table() };
    emit(&text)
}
