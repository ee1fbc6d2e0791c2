//! Lake ingestion: CSV loading, value normalization, sampling and column profiling.
//!
//! Every column of every table becomes a [`ColumnProfile`]. Profiles hold the
//! normalized value histogram of a uniform sample (capped at
//! [`IngestConfig::sample_cap`] values) plus the normalized values of the
//! table's leading rows, which feed the inverted index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of non-empty values that must parse for a numeric or date column.
const TYPE_THRESHOLD: f64 = 0.95;

/// A column inside the lake, identified by its table's file stem and header cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table_id: String,
    pub column_name: String,
}

impl ColumnRef {
    pub fn new(table_id: impl Into<String>, column_name: impl Into<String>) -> Self {
        Self {
            table_id: table_id.into(),
            column_name: column_name.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table_id, self.column_name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeClass {
    String,
    Numeric,
    Date,
    Empty,
}

impl TypeClass {
    /// Whether semantic (embedding based) criteria apply. Dates tokenize
    /// meaningfully, so they count as text.
    pub fn is_textual(self) -> bool {
        matches!(self, TypeClass::String | TypeClass::Date)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TableMetadata {
    pub table_id: String,
    pub table_name: Option<String>,
    pub description: Option<String>,
    pub tags: Vec<String>,
    pub source: Option<String>,
    pub column_names: Vec<String>,
    pub column_descriptions: Option<BTreeMap<String, String>>,
}

impl TableMetadata {
    /// Metadata for a table without a sidecar: only its id and header.
    pub fn synthesized(table_id: &str, column_names: &[String]) -> Self {
        Self {
            table_id: table_id.to_owned(),
            column_names: column_names.to_vec(),
            ..Self::default()
        }
    }

    pub fn column_description(&self, column: &str) -> Option<&str> {
        self.column_descriptions
            .as_ref()
            .and_then(|d| d.get(column))
            .map(String::as_str)
    }
}

/// Contents of an optional `<table_id>.meta.json` sidecar.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct Sidecar {
    pub table_name: Option<String>,
    pub description: Option<String>,
    pub tags: Vec<String>,
    pub source: Option<String>,
    pub column_descriptions: Option<BTreeMap<String, String>>,
}

impl Sidecar {
    pub fn into_metadata(self, table_id: &str, column_names: &[String]) -> TableMetadata {
        TableMetadata {
            table_id: table_id.to_owned(),
            table_name: self.table_name,
            description: self.description,
            tags: self.tags,
            source: self.source,
            column_names: column_names.to_vec(),
            column_descriptions: self.column_descriptions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Maximum number of values kept per column for criteria computation.
    pub sample_cap: usize,
    /// Number of leading table rows fed to the inverted index.
    pub index_row_sample: usize,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            sample_cap: 1_000_000,
            index_row_sample: 10_000,
            seed: 0,
        }
    }
}

impl IngestConfig {
    /// Reads a TOML or JSON config file, chosen by extension (TOML otherwise).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_cap == 0 {
            return Err(Error::Config("sample_cap must be at least 1".into()));
        }
        if self.index_row_sample == 0 {
            return Err(Error::Config("index_row_sample must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub column: ColumnRef,
    pub type_class: TypeClass,
    /// Rows in the table before sampling, empty cells included.
    pub row_count: u64,
    /// Occurrences of each normalized non-empty value within the sample.
    pub value_counts: BTreeMap<String, u64>,
    pub distinct_count: u64,
    /// Normalized values of the table's first `index_row_sample` rows, in file
    /// order; empty cells are kept as `""` so positions line up with rows.
    pub leading_values: Vec<String>,
}

impl ColumnProfile {
    /// Builds a profile from raw cell values in row order.
    pub fn from_raw_values(column: ColumnRef, raw: &[&str], config: &IngestConfig) -> Self {
        let non_empty: Vec<&str> = raw
            .iter()
            .copied()
            .filter(|v| !v.trim().is_empty())
            .collect();
        let sampled = sample_column(&non_empty, config.sample_cap, column_seed(config.seed, &column));
        let type_class = classify_type(&sampled);

        let mut value_counts = BTreeMap::new();
        for raw_value in sampled {
            *value_counts.entry(normalize_value(raw_value)).or_insert(0u64) += 1;
        }
        let leading_values = raw
            .iter()
            .take(config.index_row_sample)
            .map(|v| normalize_value(v))
            .collect();

        Self {
            column,
            type_class,
            row_count: raw.len() as u64,
            distinct_count: value_counts.len() as u64,
            value_counts,
            leading_values,
        }
    }

    /// Size of the sample the histogram was built from.
    pub fn sample_size(&self) -> u64 {
        self.value_counts.values().sum()
    }

    /// The sampled values as a multiset, in value order.
    pub fn sampled_values(&self) -> impl Iterator<Item = &str> + '_ {
        self.value_counts
            .iter()
            .flat_map(|(v, &n)| std::iter::repeat_n(v.as_str(), n as usize))
    }

    pub fn distinct_values(&self) -> impl Iterator<Item = &str> + '_ {
        self.value_counts.keys().map(String::as_str)
    }

    /// Distinct non-empty values among the first `row_sample` rows.
    pub fn leading_distinct(&self, row_sample: usize) -> BTreeSet<&str> {
        self.leading_values
            .iter()
            .take(row_sample)
            .filter(|v| !v.is_empty())
            .map(String::as_str)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.value_counts.is_empty()
    }
}

/// An in-memory table, before profiling.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub table_id: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(table_id: impl Into<String>, header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Self {
            table_id: table_id.into(),
            header,
            rows,
        }
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let malformed = |reason: String| Error::MalformedTable {
            path: path.to_path_buf(),
            reason,
        };
        if self.table_id.is_empty() {
            return Err(malformed("empty table id".into()));
        }
        if self.header.is_empty() {
            return Err(malformed("missing header row".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &self.header {
            if name.trim().is_empty() {
                return Err(malformed("empty column name in header".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(malformed(format!("duplicate column name `{name}`")));
            }
        }
        Ok(())
    }

    pub fn profile(&self, config: &IngestConfig) -> Vec<ColumnProfile> {
        self.header
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let raw: Vec<&str> = self
                    .rows
                    .iter()
                    .map(|row| row.get(i).map_or("", String::as_str))
                    .collect();
                ColumnProfile::from_raw_values(ColumnRef::new(&self.table_id, name), &raw, config)
            })
            .collect()
    }
}

/// Every profiled column of a lake plus table metadata. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LakeCatalog {
    pub config: IngestConfig,
    /// Sorted by table id.
    pub tables: Vec<TableMetadata>,
    /// Sorted by column ref.
    pub columns: Vec<ColumnProfile>,
    /// Unreadable rows skipped per table.
    pub skipped_rows: BTreeMap<String, u64>,
}

impl LakeCatalog {
    /// Profiles in-memory tables. Tables without metadata get synthesized metadata.
    pub fn from_tables(
        tables: Vec<(RawTable, Option<TableMetadata>)>,
        config: &IngestConfig,
    ) -> Result<Self> {
        config.validate()?;
        let loaded = tables
            .into_par_iter()
            .map(|(raw, meta)| {
                raw.validate(Path::new(&raw.table_id))?;
                let meta = meta.unwrap_or_else(|| TableMetadata::synthesized(&raw.table_id, &raw.header));
                Ok(LoadedTable {
                    profiles: raw.profile(config),
                    meta,
                    skipped: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(loaded, config)
    }

    fn assemble(mut loaded: Vec<LoadedTable>, config: &IngestConfig) -> Result<Self> {
        loaded.sort_by(|a, b| a.meta.table_id.cmp(&b.meta.table_id));
        for pair in loaded.windows(2) {
            if pair[0].meta.table_id == pair[1].meta.table_id {
                return Err(Error::DuplicateTable(pair[0].meta.table_id.clone()));
            }
        }
        let mut tables = Vec::with_capacity(loaded.len());
        let mut columns = Vec::new();
        let mut skipped_rows = BTreeMap::new();
        for table in loaded {
            if table.skipped > 0 {
                skipped_rows.insert(table.meta.table_id.clone(), table.skipped);
            }
            columns.extend(table.profiles);
            tables.push(table.meta);
        }
        columns.sort_by(|a, b| a.column.cmp(&b.column));
        Ok(Self {
            config: config.clone(),
            tables,
            columns,
            skipped_rows,
        })
    }

    pub fn profile(&self, column: &ColumnRef) -> Option<&ColumnProfile> {
        self.columns
            .binary_search_by(|p| p.column.cmp(column))
            .ok()
            .map(|i| &self.columns[i])
    }

    pub fn table(&self, table_id: &str) -> Option<&TableMetadata> {
        self.tables
            .binary_search_by(|t| t.table_id.as_str().cmp(table_id))
            .ok()
            .map(|i| &self.tables[i])
    }

    pub fn column_refs(&self) -> impl Iterator<Item = &ColumnRef> + '_ {
        self.columns.iter().map(|p| &p.column)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct LoadedTable {
    meta: TableMetadata,
    profiles: Vec<ColumnProfile>,
    skipped: u64,
}

/// Loads every `*.csv` file directly under `dir` (plus optional sidecars).
pub fn load_lake(dir: &Path, config: &IngestConfig) -> Result<LakeCatalog> {
    config.validate()?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_csv(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::NoTables(dir.to_path_buf()));
    }

    let loaded = paths
        .par_iter()
        .map(|path| load_table(path, config))
        .collect::<Result<Vec<_>>>()?;
    LakeCatalog::assemble(loaded, config)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// The table id of a CSV path: its file stem.
pub fn table_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a CSV file into memory, skipping unreadable rows.
/// Returns the table and the number of skipped rows.
pub fn read_csv(path: &Path) -> Result<(RawTable, u64)> {
    let malformed = |reason: String| Error::MalformedTable {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(malformed("missing header row".into()));
    }

    let mut rows = Vec::new();
    let mut skipped = 0;
    for record in reader.records() {
        match record {
            Ok(record) => rows.push(record.iter().map(str::to_owned).collect()),
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
            Err(_) => skipped += 1,
        }
    }
    let table = RawTable::new(table_id_of(path), header, rows);
    table.validate(path)?;
    Ok((table, skipped))
}

/// Reads `<table_id>.meta.json` next to `csv_path`, if present.
pub fn read_sidecar(csv_path: &Path) -> Result<Option<Sidecar>> {
    let sidecar = csv_path.with_file_name(format!("{}.meta.json", table_id_of(csv_path)));
    if !sidecar.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&sidecar)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::MalformedTable {
            path: sidecar,
            reason: e.to_string(),
        })
}

/// Reads and profiles a single table with its metadata.
pub fn profile_csv(path: &Path, config: &IngestConfig) -> Result<(Vec<ColumnProfile>, TableMetadata)> {
    let loaded = load_table(path, config)?;
    Ok((loaded.profiles, loaded.meta))
}

fn load_table(path: &Path, config: &IngestConfig) -> Result<LoadedTable> {
    let (raw, skipped) = read_csv(path)?;
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} unreadable rows", path.display());
    }
    let meta = match read_sidecar(path)? {
        Some(sidecar) => sidecar.into_metadata(&raw.table_id, &raw.header),
        None => TableMetadata::synthesized(&raw.table_id, &raw.header),
    };
    Ok(LoadedTable {
        profiles: raw.profile(config),
        meta,
        skipped,
    })
}

/// Trims, collapses internal whitespace runs to a single space and lowercases.
pub fn normalize_value(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for (i, word) in raw.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(word);
    }
    out.to_lowercase()
}

pub fn classify_type<S: AsRef<str>>(values: &[S]) -> TypeClass {
    let non_empty: Vec<&str> = values
        .iter()
        .map(|v| v.as_ref().trim())
        .filter(|v| !v.is_empty())
        .collect();
    if non_empty.is_empty() {
        return TypeClass::Empty;
    }
    let total = non_empty.len() as f64;
    let numeric = non_empty.iter().filter(|v| is_numeric(v)).count() as f64;
    if numeric / total >= TYPE_THRESHOLD {
        return TypeClass::Numeric;
    }
    let dates = non_empty.iter().filter(|v| is_date(v)).count() as f64;
    if dates / total >= TYPE_THRESHOLD {
        return TypeClass::Date;
    }
    TypeClass::String
}

fn is_numeric(value: &str) -> bool {
    value.parse::<i64>().is_ok() || value.parse::<f64>().is_ok_and(f64::is_finite)
}

fn is_date(value: &str) -> bool {
    NaiveDate::parse_from_str(value, "%Y-%m-%d").is_ok()
        || NaiveDate::parse_from_str(value, "%m/%d/%Y").is_ok()
        || NaiveDateTime::parse_from_str(value, "%Y-%m-%dT%H:%M:%S").is_ok()
        || NaiveDateTime::parse_from_str(value, "%Y-%m-%d %H:%M:%S").is_ok()
        || DateTime::parse_from_rfc3339(value).is_ok()
}

/// Uniform sample without replacement of exactly `cap` values (or all of them
/// when there are at most `cap`). Retained values keep their input order.
pub fn sample_column<T: Clone>(values: &[T], cap: usize, seed: u64) -> Vec<T> {
    assert!(cap >= 1, "sample cap must be at least 1");
    if values.len() <= cap {
        return values.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, values.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| values[i].clone()).collect()
}

/// Per-column sampling seed so sibling columns draw independent samples.
fn column_seed(seed: u64, column: &ColumnRef) -> u64 {
    let mut key = Vec::with_capacity(column.table_id.len() + column.column_name.len() + 1);
    key.extend_from_slice(column.table_id.as_bytes());
    key.push(0);
    key.extend_from_slice(column.column_name.as_bytes());
    xxhash_rust::xxh3::xxh3_64_with_seed(&key, seed)
}
