//! The seven joinability criteria scored for each (query, candidate) pair.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{self, render_values, EmbeddingProvider, EmbeddingVector, MetadataSentence, FREQUENT_VALUES};
use crate::error::{Error, Result};
use crate::ingest::{ColumnProfile, ColumnRef};
use crate::minhash::{self, MinHashSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    UniqueValues,
    Intersection,
    JoinSize,
    ReverseJoinSize,
    ValueSemantics,
    DisjointValueSemantics,
    MetadataSemantics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Larger is better.
    Benefit,
    /// Smaller is better.
    Cost,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::UniqueValues,
        Criterion::Intersection,
        Criterion::JoinSize,
        Criterion::ReverseJoinSize,
        Criterion::ValueSemantics,
        Criterion::DisjointValueSemantics,
        Criterion::MetadataSemantics,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn direction(self) -> Direction {
        match self {
            Criterion::JoinSize | Criterion::ReverseJoinSize => Direction::Cost,
            _ => Direction::Benefit,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::UniqueValues => "unique_values",
            Criterion::Intersection => "intersection",
            Criterion::JoinSize => "join_size",
            Criterion::ReverseJoinSize => "reverse_join_size",
            Criterion::ValueSemantics => "value_semantics",
            Criterion::DisjointValueSemantics => "disjoint_value_semantics",
            Criterion::MetadataSemantics => "metadata_semantics",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Criterion::ALL.iter().map(|c| c.name()).collect();
                Error::Config(format!("unknown criterion `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// How the intersection criterion is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntersectionMode {
    /// Containment of the query's distinct values in the candidate.
    #[default]
    Exact,
    /// Jaccard estimated from MinHash signatures.
    Minhash,
}

impl FromStr for IntersectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "minhash" => Ok(Self::Minhash),
            other => Err(Error::Config(format!("unknown intersection mode `{other}`"))),
        }
    }
}

/// One row of the decision matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaVector {
    pub candidate: ColumnRef,
    pub unique_values: f64,
    pub intersection: f64,
    pub join_size: u64,
    pub reverse_join_size: u64,
    pub value_semantics: f64,
    pub disjoint_value_semantics: f64,
    pub metadata_semantics: f64,
    /// Per criterion, in [`Criterion::ALL`] order. Inapplicable entries hold 0.
    pub applicable: [bool; 7],
    /// Set when the embedding provider failed and semantic scores are neutral.
    pub degraded: bool,
}

impl CriteriaVector {
    pub fn value(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::UniqueValues => self.unique_values,
            Criterion::Intersection => self.intersection,
            Criterion::JoinSize => self.join_size as f64,
            Criterion::ReverseJoinSize => self.reverse_join_size as f64,
            Criterion::ValueSemantics => self.value_semantics,
            Criterion::DisjointValueSemantics => self.disjoint_value_semantics,
            Criterion::MetadataSemantics => self.metadata_semantics,
        }
    }

    pub fn values(&self) -> [f64; 7] {
        Criterion::ALL.map(|c| self.value(c))
    }

    pub fn is_applicable(&self, criterion: Criterion) -> bool {
        self.applicable[criterion.index()]
    }
}

/// Distinct values over sampled rows; `None` for an empty column.
pub fn unique_values_score(candidate: &ColumnProfile) -> Option<f64> {
    let rows = candidate.sample_size();
    (rows > 0).then(|| candidate.distinct_count as f64 / rows as f64)
}

/// Fraction of the query's distinct values present in the candidate.
pub fn containment(query: &ColumnProfile, candidate: &ColumnProfile) -> Option<f64> {
    if query.is_empty() || candidate.is_empty() {
        return None;
    }
    let shared = query
        .distinct_values()
        .filter(|v| candidate.value_counts.contains_key(*v))
        .count();
    Some(shared as f64 / query.distinct_count as f64)
}

/// Intersection criterion; minhash mode signs both columns with `perm_seed`.
pub fn intersection_score(
    query: &ColumnProfile,
    candidate: &ColumnProfile,
    mode: IntersectionMode,
    perm_seed: u64,
) -> Option<f64> {
    match mode {
        IntersectionMode::Exact => containment(query, candidate),
        IntersectionMode::Minhash => {
            let q = minhash::signature(query.column.clone(), query.distinct_values(), perm_seed).ok()?;
            let c = minhash::signature(candidate.column.clone(), candidate.distinct_values(), perm_seed).ok()?;
            minhash::estimate_jaccard(&q, &c).ok()
        }
    }
}

/// Row counts of the left (query-preserving) and right (candidate-preserving)
/// joins on the sampled histograms. Unmatched rows survive once.
pub fn join_sizes(query: &ColumnProfile, candidate: &ColumnProfile) -> (u64, u64) {
    (
        left_join_size(query, candidate),
        left_join_size(candidate, query),
    )
}

fn left_join_size(left: &ColumnProfile, right: &ColumnProfile) -> u64 {
    left.value_counts
        .iter()
        .map(|(v, &n)| n * right.value_counts.get(v).copied().unwrap_or(1).max(1))
        .sum()
}

fn semantics_apply(query: &ColumnProfile, candidate: &ColumnProfile) -> bool {
    query.type_class.is_textual() && candidate.type_class.is_textual() && !query.is_empty() && !candidate.is_empty()
}

fn frequent_text(profile: &ColumnProfile) -> String {
    render_values(
        profile.value_counts.iter().map(|(v, &n)| (v.as_str(), n)),
        Some(FREQUENT_VALUES),
    )
}

/// Sentences for the values only in the query and only in the candidate,
/// or `None` when either side is empty.
pub fn disjoint_sentences(query: &ColumnProfile, candidate: &ColumnProfile) -> Option<(String, String)> {
    let only = |a: &ColumnProfile, b: &ColumnProfile| {
        render_values(
            a.value_counts
                .iter()
                .filter(|(v, _)| !b.value_counts.contains_key(*v))
                .map(|(v, &n)| (v.as_str(), n)),
            Some(FREQUENT_VALUES),
        )
    };
    let q = only(query, candidate);
    let c = only(candidate, query);
    (!q.is_empty() && !c.is_empty()).then_some((q, c))
}

fn embed_pair(provider: &dyn EmbeddingProvider, a: String, b: String) -> Result<f64> {
    let v = embedding::embed(provider, &[a, b])?;
    Ok(v[0].cosine(&v[1]))
}

/// Cosine of the two columns' frequent-value sentences; `None` unless both
/// columns are textual.
pub fn value_semantics_score(
    query: &ColumnProfile,
    candidate: &ColumnProfile,
    provider: &dyn EmbeddingProvider,
) -> Result<Option<f64>> {
    if !semantics_apply(query, candidate) {
        return Ok(None);
    }
    embed_pair(provider, frequent_text(query), frequent_text(candidate)).map(Some)
}

/// Cosine between the values unique to each side; `None` unless both columns
/// are textual and both difference sets are non-empty.
pub fn disjoint_semantics_score(
    query: &ColumnProfile,
    candidate: &ColumnProfile,
    provider: &dyn EmbeddingProvider,
) -> Result<Option<f64>> {
    if !semantics_apply(query, candidate) {
        return Ok(None);
    }
    match disjoint_sentences(query, candidate) {
        Some((q, c)) => embed_pair(provider, q, c).map(Some),
        None => Ok(None),
    }
}

pub fn metadata_semantics_score(
    query: &MetadataSentence,
    candidate: &MetadataSentence,
    provider: &dyn EmbeddingProvider,
) -> Result<f64> {
    embed_pair(provider, query.text.clone(), candidate.text.clone())
}

/// Per-query inputs shared by every candidate.
pub struct QueryContext<'a> {
    pub profile: &'a ColumnProfile,
    pub metadata: &'a MetadataSentence,
    pub provider: &'a dyn EmbeddingProvider,
    pub intersection_mode: IntersectionMode,
    /// Needed in minhash intersection mode.
    pub signature: Option<&'a MinHashSignature>,
    pub perm_seed: u64,
}

/// Per-candidate inputs. Precomputed index entries are reused when present.
pub struct CandidateInput<'a> {
    pub profile: &'a ColumnProfile,
    pub metadata: MetadataSentence,
    pub metadata_embedding: Option<EmbeddingVector>,
    pub signature: Option<&'a MinHashSignature>,
}

/// Scores one candidate.
pub fn score_candidate(ctx: &QueryContext<'_>, candidate: &CandidateInput<'_>) -> CriteriaVector {
    score_candidates(ctx, std::slice::from_ref(candidate)).remove(0)
}

/// Scores candidates, batching every embedding request into one provider call.
/// A provider failure leaves the semantic criteria neutral and flags the rows
/// as degraded rather than failing the search.
pub fn score_candidates(ctx: &QueryContext<'_>, candidates: &[CandidateInput<'_>]) -> Vec<CriteriaVector> {
    let mut rows: Vec<CriteriaVector> = candidates
        .par_iter()
        .map(|c| structural_scores(ctx, c))
        .collect();

    let mut texts = TextBatch::default();
    let query_meta = texts.add(&ctx.metadata.text);
    let query_frequent = (ctx.profile.type_class.is_textual() && !ctx.profile.is_empty())
        .then(|| texts.add(&frequent_text(ctx.profile)));
    let plans: Vec<SemanticPlan> = candidates
        .par_iter()
        .map(|c| SemanticPlan {
            metadata: c
                .metadata_embedding
                .is_none()
                .then(|| c.metadata.text.clone()),
            frequent: semantics_apply(ctx.profile, c.profile).then(|| frequent_text(c.profile)),
            disjoint: semantics_apply(ctx.profile, c.profile)
                .then(|| disjoint_sentences(ctx.profile, c.profile))
                .flatten(),
        })
        .collect();
    let slots: Vec<PlanSlots> = plans
        .into_iter()
        .map(|p| PlanSlots {
            metadata: p.metadata.map(|t| texts.add(&t)),
            frequent: p.frequent.map(|t| texts.add(&t)),
            disjoint: p.disjoint.map(|(q, c)| (texts.add(&q), texts.add(&c))),
        })
        .collect();

    let vectors = match embedding::embed(ctx.provider, &texts.texts) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("semantic criteria unavailable: {e}");
            for row in &mut rows {
                row.degraded = true;
            }
            return rows;
        }
    };

    for ((row, slot), candidate) in rows.iter_mut().zip(&slots).zip(candidates) {
        let meta = match (&candidate.metadata_embedding, slot.metadata) {
            (Some(v), _) => v.cosine(&vectors[query_meta]),
            (None, Some(i)) => vectors[i].cosine(&vectors[query_meta]),
            (None, None) => unreachable!("metadata text is always planned"),
        };
        row.metadata_semantics = meta;
        row.applicable[Criterion::MetadataSemantics.index()] = true;

        if let (Some(q), Some(c)) = (query_frequent, slot.frequent) {
            row.value_semantics = vectors[q].cosine(&vectors[c]);
            row.applicable[Criterion::ValueSemantics.index()] = true;
        }
        if let Some((q, c)) = slot.disjoint {
            row.disjoint_value_semantics = vectors[q].cosine(&vectors[c]);
            row.applicable[Criterion::DisjointValueSemantics.index()] = true;
        }
    }
    rows
}

struct SemanticPlan {
    metadata: Option<String>,
    frequent: Option<String>,
    disjoint: Option<(String, String)>,
}

struct PlanSlots {
    metadata: Option<usize>,
    frequent: Option<usize>,
    disjoint: Option<(usize, usize)>,
}

/// Deduplicated texts for one embedding call.
#[derive(Default)]
struct TextBatch {
    texts: Vec<String>,
    positions: BTreeMap<String, usize>,
}

impl TextBatch {
    fn add(&mut self, text: &str) -> usize {
        if let Some(&i) = self.positions.get(text) {
            return i;
        }
        let i = self.texts.len();
        self.texts.push(text.to_owned());
        self.positions.insert(text.to_owned(), i);
        i
    }
}

fn structural_scores(ctx: &QueryContext<'_>, candidate: &CandidateInput<'_>) -> CriteriaVector {
    let mut applicable = [false; 7];
    let unique = unique_values_score(candidate.profile);
    applicable[Criterion::UniqueValues.index()] = unique.is_some();

    let intersection = match ctx.intersection_mode {
        IntersectionMode::Exact => containment(ctx.profile, candidate.profile),
        IntersectionMode::Minhash => match (ctx.signature, candidate.signature) {
            (Some(q), Some(c)) => minhash::estimate_jaccard(q, c).ok(),
            _ => intersection_score(ctx.profile, candidate.profile, IntersectionMode::Minhash, ctx.perm_seed),
        },
    };
    applicable[Criterion::Intersection.index()] = intersection.is_some();

    let both = !ctx.profile.is_empty() && !candidate.profile.is_empty();
    let (join, reverse) = if both { join_sizes(ctx.profile, candidate.profile) } else { (0, 0) };
    applicable[Criterion::JoinSize.index()] = both;
    applicable[Criterion::ReverseJoinSize.index()] = both;

    CriteriaVector {
        candidate: candidate.profile.column.clone(),
        unique_values: unique.unwrap_or(0.0),
        intersection: intersection.unwrap_or(0.0),
        join_size: join,
        reverse_join_size: reverse,
        value_semantics: 0.0,
        disjoint_value_semantics: 0.0,
        metadata_semantics: 0.0,
        applicable,
        degraded: false,
    }
}
