//! Query orchestration: candidate generation from three strategies, criteria
//! scoring, and TOPSIS ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::criteria::{self, CandidateInput, CriteriaVector, Criterion, IntersectionMode, QueryContext};
use crate::embedding::{
    self, metadata_sentence, value_sentence, EmbeddingProvider, EmbeddingTable, EmbeddingVector,
};
use crate::error::{Error, Result};
use crate::ingest::{self, ColumnProfile, ColumnRef, LakeCatalog, TableMetadata};
use crate::inverted::InvertedIndex;
use crate::minhash::{self, MinHashIndex, MinHashSignature};
use crate::topsis::{DecisionMatrix, Weights};

pub const CATALOG_FILE: &str = "catalog.json";
pub const INVERTED_FILE: &str = "inverted.cjii";
pub const MINHASH_FILE: &str = "minhash.cjmh";
pub const METADATA_FILE: &str = "metadata.cjem";
pub const VALUES_FILE: &str = "values.cjem";

const EMBED_CHUNK: usize = 256;

/// Which strategy proposed a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Syntactic,
    Metadata,
    ValueSemantics,
}

/// How syntactic candidates are found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntacticMode {
    /// Posting-list overlap search.
    #[default]
    Inverted,
    /// Hamming KNN over MinHash signatures (no inverted index needed).
    Minhash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub perm_seed: u64,
}

/// Build parameters recorded with an index bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provider: String,
    pub dims: usize,
    pub perm_seed: u64,
}

/// The persisted search structures over one catalog.
#[derive(Debug, Clone)]
pub struct IndexBundle {
    pub manifest: Manifest,
    pub catalog: LakeCatalog,
    /// Absent when loaded for MinHash-only search.
    pub inverted: Option<InvertedIndex>,
    pub minhash: MinHashIndex,
    pub metadata: EmbeddingTable,
    pub values: EmbeddingTable,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    manifest: Manifest,
    catalog: LakeCatalog,
}

/// Embeds texts in parallel chunks, keeping input order.
fn embed_all(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
    let chunks = texts
        .par_chunks(EMBED_CHUNK)
        .map(|chunk| embedding::embed(provider, chunk))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Builds all four indexes over `catalog`.
pub fn build_indexes(
    catalog: LakeCatalog,
    provider: &dyn EmbeddingProvider,
    config: &BuildConfig,
) -> Result<IndexBundle> {
    if catalog.columns.is_empty() {
        return Err(Error::Build("catalog has no columns".into()));
    }
    let inverted = InvertedIndex::build(&catalog, catalog.config.index_row_sample);
    let minhash = MinHashIndex::build(&catalog, config.perm_seed);

    let mut meta_rows = Vec::with_capacity(catalog.columns.len());
    for profile in &catalog.columns {
        let table = catalog
            .table(&profile.column.table_id)
            .ok_or_else(|| Error::Build(format!("no metadata for {}", profile.column.table_id)))?;
        meta_rows.push(metadata_sentence(table, &profile.column.column_name)?);
    }
    let value_rows: Vec<_> = catalog
        .columns
        .iter()
        .filter(|p| !p.is_empty())
        .map(value_sentence)
        .collect::<Result<_>>()?;

    let to_build_error = |e: Error| Error::Build(format!("embedding failed: {e}"));
    let meta_texts: Vec<String> = meta_rows.iter().map(|s| s.text.clone()).collect();
    let meta_vectors = embed_all(provider, &meta_texts).map_err(to_build_error)?;
    let value_texts: Vec<String> = value_rows.iter().map(|s| s.text.clone()).collect();
    let value_vectors = embed_all(provider, &value_texts).map_err(to_build_error)?;

    let dims = provider.dims();
    let metadata = EmbeddingTable::new(
        dims,
        meta_rows.into_iter().map(|s| s.column).zip(meta_vectors).collect(),
    )?;
    let values = EmbeddingTable::new(
        dims,
        value_rows.into_iter().map(|s| s.column).zip(value_vectors).collect(),
    )?;

    Ok(IndexBundle {
        manifest: Manifest {
            provider: provider.id(),
            dims,
            perm_seed: config.perm_seed,
        },
        catalog,
        inverted: Some(inverted),
        minhash,
        metadata,
        values,
    })
}

/// Sizes in bytes of the serialized structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexSizes {
    pub inverted: u64,
    pub minhash: u64,
    pub metadata: u64,
    pub values: u64,
}

impl IndexBundle {
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let catalog = CatalogFile {
            manifest: self.manifest.clone(),
            catalog: self.catalog.clone(),
        };
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            written.push(path);
            Ok(())
        };
        put(CATALOG_FILE, serde_json::to_vec(&catalog)?)?;
        if let Some(inverted) = &self.inverted {
            put(INVERTED_FILE, inverted.to_bytes())?;
        }
        put(MINHASH_FILE, self.minhash.to_bytes())?;
        put(METADATA_FILE, self.metadata.to_bytes())?;
        put(VALUES_FILE, self.values.to_bytes())?;
        Ok(written)
    }

    /// Loads a bundle; the inverted index is skipped unless `with_inverted`.
    pub fn load(dir: &Path, with_inverted: bool) -> Result<Self> {
        let text = fs::read_to_string(dir.join(CATALOG_FILE))?;
        let CatalogFile { manifest, catalog } = serde_json::from_str(&text)?;
        let inverted = if with_inverted {
            Some(InvertedIndex::load(&dir.join(INVERTED_FILE))?)
        } else {
            None
        };
        let minhash = MinHashIndex::load(&dir.join(MINHASH_FILE))?;
        let metadata = EmbeddingTable::load(&dir.join(METADATA_FILE))?;
        let values = EmbeddingTable::load(&dir.join(VALUES_FILE))?;
        if minhash.perm_seed() != manifest.perm_seed {
            return Err(Error::CorruptIndex {
                path: dir.join(MINHASH_FILE),
                reason: "permutation seed differs from catalog manifest".into(),
            });
        }
        Ok(Self {
            manifest,
            catalog,
            inverted,
            minhash,
            metadata,
            values,
        })
    }

    pub fn sizes(&self) -> IndexSizes {
        IndexSizes {
            inverted: self.inverted.as_ref().map_or(0, |i| i.to_bytes().len() as u64),
            minhash: self.minhash.to_bytes().len() as u64,
            metadata: self.metadata.to_bytes().len() as u64,
            values: self.values.to_bytes().len() as u64,
        }
    }

    fn check_provider(&self, provider: &dyn EmbeddingProvider) -> Result<()> {
        if provider.dims() != self.manifest.dims {
            return Err(Error::Dimension {
                expected: self.manifest.dims,
                actual: provider.dims(),
            });
        }
        if provider.id() != self.manifest.provider {
            return Err(Error::Config(format!(
                "index was built with embedding provider `{}` but `{}` was supplied",
                self.manifest.provider,
                provider.id()
            )));
        }
        Ok(())
    }
}

/// The column to search with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuerySpec {
    /// A column already in the lake.
    Lake(ColumnRef),
    /// A column of a CSV outside the lake, profiled on the fly.
    AdHoc { path: PathBuf, column: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub k: usize,
    /// Candidates taken from each strategy.
    pub budget: usize,
    pub weights: Weights,
    pub intersection_mode: IntersectionMode,
    pub syntactic: SyntacticMode,
    /// Rank with six criteria, join and reverse join size combined.
    pub merge_join_sizes: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            k: 10,
            budget: 100,
            weights: Weights::default(),
            intersection_mode: IntersectionMode::Exact,
            syntactic: SyntacticMode::Inverted,
            merge_join_sizes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRequest {
    pub query: QuerySpec,
    pub options: SearchOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedResult {
    pub candidate: ColumnRef,
    pub closeness: f64,
    pub rank: usize,
    pub criteria: CriteriaVector,
    pub sources: BTreeSet<Source>,
    /// Weighted normalized criterion values, in matrix column order.
    pub contributions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchOutcome {
    pub results: Vec<RankedResult>,
    pub warnings: Vec<String>,
}

/// Candidates of one query with their criteria, ready to rank under any weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredQuery {
    pub rows: Vec<CriteriaVector>,
    pub sources: Vec<BTreeSet<Source>>,
    pub warnings: Vec<String>,
}

struct ResolvedQuery<'a> {
    profile: std::borrow::Cow<'a, ColumnProfile>,
    metadata: std::borrow::Cow<'a, TableMetadata>,
    in_lake: bool,
}

/// Search over a loaded bundle with a matching embedding provider.
pub struct Engine<'a> {
    pub bundle: &'a IndexBundle,
    pub provider: &'a dyn EmbeddingProvider,
}

impl<'a> Engine<'a> {
    pub fn new(bundle: &'a IndexBundle, provider: &'a dyn EmbeddingProvider) -> Result<Self> {
        bundle.check_provider(provider)?;
        Ok(Self { bundle, provider })
    }

    fn resolve(&self, query: &QuerySpec) -> Result<ResolvedQuery<'a>> {
        let catalog = &self.bundle.catalog;
        match query {
            QuerySpec::Lake(column) => {
                let profile = catalog
                    .profile(column)
                    .ok_or_else(|| Error::QueryNotFound(column.to_string()))?;
                let metadata = catalog
                    .table(&column.table_id)
                    .ok_or_else(|| Error::QueryNotFound(column.to_string()))?;
                Ok(ResolvedQuery {
                    profile: std::borrow::Cow::Borrowed(profile),
                    metadata: std::borrow::Cow::Borrowed(metadata),
                    in_lake: true,
                })
            }
            QuerySpec::AdHoc { path, column } => {
                let (profiles, metadata) = ingest::profile_csv(path, &catalog.config)?;
                let profile = profiles
                    .into_iter()
                    .find(|p| &p.column.column_name == column)
                    .ok_or_else(|| Error::UnknownColumn {
                        table: metadata.table_id.clone(),
                        column: column.clone(),
                    })?;
                Ok(ResolvedQuery {
                    profile: std::borrow::Cow::Owned(profile),
                    metadata: std::borrow::Cow::Owned(metadata),
                    in_lake: false,
                })
            }
        }
    }

    /// Runs the three candidate strategies and scores the merged set.
    pub fn score(&self, query: &QuerySpec, options: &SearchOptions) -> Result<ScoredQuery> {
        let q = self.resolve(query)?;
        let profile: &ColumnProfile = &q.profile;
        let query_ref = &profile.column;
        let mut warnings = Vec::new();
        if options.k == 0 || options.budget == 0 {
            return Err(Error::InvalidK);
        }
        if options.budget < options.k {
            warnings.push(format!(
                "candidate budget {} is smaller than k {}",
                options.budget, options.k
            ));
        }

        let perm_seed = self.bundle.manifest.perm_seed;
        let stored_signature = q.in_lake.then(|| self.bundle.minhash.get(query_ref)).flatten();
        let computed_signature: Option<MinHashSignature> = match stored_signature {
            Some(_) => None,
            None => minhash::signature(query_ref.clone(), profile.distinct_values(), perm_seed).ok(),
        };
        let query_signature = stored_signature.or(computed_signature.as_ref());

        let query_meta = metadata_sentence(&q.metadata, &query_ref.column_name)?;
        let (meta_vec, value_vec) = self.query_embeddings(&q, &query_meta, &mut warnings);

        let mut merged: BTreeMap<ColumnRef, BTreeSet<Source>> = BTreeMap::new();
        let mut propose = |refs: Vec<ColumnRef>, source: Source| {
            for r in refs {
                merged.entry(r).or_default().insert(source);
            }
        };

        match self.syntactic_candidates(profile, query_signature, options) {
            Ok(refs) => propose(refs, Source::Syntactic),
            Err(e) => warnings.push(format!("syntactic strategy failed: {e}")),
        }
        if let Some(v) = &meta_vec {
            match self.bundle.metadata.knn_cosine(v, Some(query_ref), options.budget) {
                Ok(hits) => propose(hits.into_iter().map(|h| h.0).collect(), Source::Metadata),
                Err(e) => warnings.push(format!("metadata strategy failed: {e}")),
            }
        }
        if let Some(v) = &value_vec {
            match self.bundle.values.knn_cosine(v, Some(query_ref), options.budget) {
                Ok(hits) => propose(hits.into_iter().map(|h| h.0).collect(), Source::ValueSemantics),
                Err(e) => warnings.push(format!("value semantics strategy failed: {e}")),
            }
        }

        let catalog = &self.bundle.catalog;
        let mut inputs = Vec::with_capacity(merged.len());
        let mut sources = Vec::with_capacity(merged.len());
        for (column, from) in merged {
            let Some(candidate) = catalog.profile(&column) else {
                warnings.push(format!("candidate {column} missing from catalog"));
                continue;
            };
            let table = catalog
                .table(&column.table_id)
                .ok_or_else(|| Error::QueryNotFound(column.to_string()))?;
            inputs.push(CandidateInput {
                profile: candidate,
                metadata: metadata_sentence(table, &column.column_name)?,
                metadata_embedding: self.bundle.metadata.get(&column),
                signature: self.bundle.minhash.get(&column),
            });
            sources.push(from);
        }

        let ctx = QueryContext {
            profile,
            metadata: &query_meta,
            provider: self.provider,
            intersection_mode: options.intersection_mode,
            signature: query_signature,
            perm_seed,
        };
        let rows = criteria::score_candidates(&ctx, &inputs);
        if rows.iter().any(|r| r.degraded) {
            warnings.push("embedding provider failed; semantic criteria are neutral".into());
        }
        Ok(ScoredQuery {
            rows,
            sources,
            warnings,
        })
    }

    fn query_embeddings(
        &self,
        q: &ResolvedQuery<'_>,
        meta: &embedding::MetadataSentence,
        warnings: &mut Vec<String>,
    ) -> (Option<EmbeddingVector>, Option<EmbeddingVector>) {
        let column = &q.profile.column;
        let stored_meta = q.in_lake.then(|| self.bundle.metadata.get(column)).flatten();
        let stored_value = q.in_lake.then(|| self.bundle.values.get(column)).flatten();

        let mut texts = Vec::new();
        if stored_meta.is_none() {
            texts.push(meta.text.clone());
        }
        let value_text = match (&stored_value, value_sentence(&q.profile)) {
            (Some(_), _) => None,
            (None, Ok(s)) => Some(s.text),
            (None, Err(e)) => {
                warnings.push(format!("value semantics strategy skipped: {e}"));
                None
            }
        };
        if let Some(t) = &value_text {
            texts.push(t.clone());
        }
        if texts.is_empty() {
            return (stored_meta, stored_value);
        }
        match embedding::embed(self.provider, &texts) {
            Ok(mut vectors) => {
                let value = if value_text.is_some() { vectors.pop() } else { stored_value };
                let meta = if stored_meta.is_none() { vectors.pop() } else { stored_meta };
                (meta, value)
            }
            Err(e) => {
                warnings.push(format!("query embedding failed: {e}"));
                (stored_meta, stored_value)
            }
        }
    }

    fn syntactic_candidates(
        &self,
        profile: &ColumnProfile,
        signature: Option<&MinHashSignature>,
        options: &SearchOptions,
    ) -> Result<Vec<ColumnRef>> {
        match options.syntactic {
            SyntacticMode::Inverted => {
                let index = self
                    .bundle
                    .inverted
                    .as_ref()
                    .ok_or_else(|| Error::Config("inverted index not loaded".into()))?;
                Ok(index
                    .search_overlap(profile, options.budget)?
                    .into_iter()
                    .map(|h| h.candidate)
                    .collect())
            }
            SyntacticMode::Minhash => {
                let signature = signature.ok_or(Error::EmptyQuery)?;
                Ok(self
                    .bundle
                    .minhash
                    .knn_hamming(signature, options.budget)?
                    .into_iter()
                    .map(|h| h.0)
                    .collect())
            }
        }
    }

    pub fn search(&self, request: &SearchRequest) -> Result<SearchOutcome> {
        let scored = self.score(&request.query, &request.options)?;
        let results = rank_scored(&scored, &request.options)?;
        Ok(SearchOutcome {
            results,
            warnings: scored.warnings,
        })
    }
}

/// Ranks scored candidates with TOPSIS and keeps the top `k`.
pub fn rank_scored(scored: &ScoredQuery, options: &SearchOptions) -> Result<Vec<RankedResult>> {
    if scored.rows.is_empty() {
        return Ok(Vec::new());
    }
    let matrix = DecisionMatrix::from_criteria(&scored.rows, &options.weights, options.merge_join_sizes);
    let mut ranked = matrix.rank()?;
    ranked.truncate(options.k);
    Ok(ranked
        .into_iter()
        .map(|r| RankedResult {
            candidate: r.candidate,
            closeness: r.closeness,
            rank: r.rank,
            criteria: scored.rows[r.index].clone(),
            sources: scored.sources[r.index].clone(),
            contributions: r.weighted,
        })
        .collect())
}

/// Convenience wrapper over [`Engine`].
pub fn search(request: &SearchRequest, bundle: &IndexBundle, provider: &dyn EmbeddingProvider) -> Result<SearchOutcome> {
    Engine::new(bundle, provider)?.search(request)
}

/// Criterion names in matrix column order.
pub fn matrix_columns(merge_join_sizes: bool) -> Vec<Criterion> {
    Criterion::ALL
        .into_iter()
        .filter(|c| !(merge_join_sizes && *c == Criterion::ReverseJoinSize))
        .collect()
}

impl RankedResult {
    /// One JSON-lines record. `explain` adds the per-criterion contributions.
    pub fn to_json(&self, explain: bool, merge_join_sizes: bool) -> Value {
        let c = &self.criteria;
        let mut record = json!({
            "rank": self.rank,
            "table": self.candidate.table_id,
            "column": self.candidate.column_name,
            "closeness": self.closeness,
            "criteria": {
                "unique_values": c.unique_values,
                "intersection": c.intersection,
                "join_size": c.join_size,
                "reverse_join_size": c.reverse_join_size,
                "value_semantics": c.value_semantics,
                "disjoint_value_semantics": c.disjoint_value_semantics,
                "metadata_semantics": c.metadata_semantics,
            },
            "sources": self.sources,
        });
        if explain {
            let contributions: Map<String, Value> = matrix_columns(merge_join_sizes)
                .into_iter()
                .zip(&self.contributions)
                .map(|(c, v)| (c.name().to_owned(), json!(v)))
                .collect();
            let inapplicable: Vec<&str> = Criterion::ALL
                .into_iter()
                .filter(|&k| !c.is_applicable(k))
                .map(Criterion::name)
                .collect();
            record["contributions"] = Value::Object(contributions);
            record["inapplicable"] = json!(inapplicable);
        }
        record
    }
}
