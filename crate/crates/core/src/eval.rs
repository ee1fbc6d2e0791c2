//! Ground-truth benchmarks: MRR, MAP and Recall@K, with ablation arms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::ingest::{ColumnRef, LakeCatalog};
use crate::search::{rank_scored, Engine, QuerySpec, ScoredQuery, SearchOptions};
use crate::topsis::Weights;

const HEADER: [&str; 4] = ["query_table", "query_column", "target_table", "target_column"];

/// Relevant columns per query column.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub entries: BTreeMap<ColumnRef, BTreeSet<ColumnRef>>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Parses the four-column CSV. Line numbers in errors are 1-based and count the header.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
        let mut entries: BTreeMap<ColumnRef, BTreeSet<ColumnRef>> = BTreeMap::new();
        let mut saw_header = false;
        for (i, record) in csv.records().enumerate() {
            let line = i + 1;
            let record = record.map_err(|e| Error::GroundTruth {
                line,
                reason: e.to_string(),
            })?;
            let fields: Vec<&str> = record.iter().map(str::trim).collect();
            if !saw_header {
                if fields != HEADER {
                    return Err(Error::GroundTruth {
                        line,
                        reason: format!("expected header `{}`", HEADER.join(",")),
                    });
                }
                saw_header = true;
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::GroundTruth {
                    line,
                    reason: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
                return Err(Error::GroundTruth {
                    line,
                    reason: format!("empty `{}`", HEADER[pos]),
                });
            }
            entries
                .entry(ColumnRef::new(fields[0], fields[1]))
                .or_default()
                .insert(ColumnRef::new(fields[2], fields[3]));
        }
        if !saw_header {
            return Err(Error::GroundTruth {
                line: 1,
                reason: "file is empty".into(),
            });
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// 1/position of the first relevant item, 0 if none.
pub fn reciprocal_rank(ranked: &[ColumnRef], relevant: &BTreeSet<ColumnRef>) -> f64 {
    ranked
        .iter()
        .position(|r| relevant.contains(r))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

/// Mean of precision at each relevant hit within the first `k`, over min(|relevant|, k).
pub fn average_precision(ranked: &[ColumnRef], relevant: &BTreeSet<ColumnRef>, k: usize) -> f64 {
    let denom = relevant.len().min(k);
    if denom == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, r) in ranked.iter().take(k).enumerate() {
        if relevant.contains(r) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / denom as f64
}

/// Fraction of relevant items found in the first `k`.
pub fn recall_at_k(ranked: &[ColumnRef], relevant: &BTreeSet<ColumnRef>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let found = ranked.iter().take(k).filter(|r| relevant.contains(r)).count();
    found as f64 / relevant.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMetrics {
    pub query: ColumnRef,
    pub reciprocal_rank: f64,
    pub average_precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedQuery {
    pub query: ColumnRef,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub arm: String,
    pub k: usize,
    pub mrr: f64,
    pub map: f64,
    pub recall_at_k: f64,
    pub per_query: Vec<QueryMetrics>,
}

impl MetricsReport {
    /// Aggregates per-query rows into arithmetic means.
    pub fn from_queries(arm: impl Into<String>, k: usize, per_query: Vec<QueryMetrics>) -> Self {
        let n = per_query.len();
        let mean = |f: fn(&QueryMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_query.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            arm: arm.into(),
            k,
            mrr: mean(|q| q.reciprocal_rank),
            map: mean(|q| q.average_precision),
            recall_at_k: mean(|q| q.recall),
            per_query,
        }
    }
}

/// Evaluates `ranked` lists against `relevant`, all cut at `k`.
pub fn evaluate_rankings(
    arm: &str,
    k: usize,
    rankings: &[(ColumnRef, Vec<ColumnRef>, &BTreeSet<ColumnRef>)],
) -> MetricsReport {
    let per_query = rankings
        .iter()
        .map(|(query, ranked, relevant)| {
            let top = &ranked[..ranked.len().min(k)];
            QueryMetrics {
                query: query.clone(),
                reciprocal_rank: reciprocal_rank(top, relevant),
                average_precision: average_precision(top, relevant, k),
                recall: recall_at_k(top, relevant, k),
            }
        })
        .collect();
    MetricsReport::from_queries(arm, k, per_query)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AblationMode {
    #[default]
    Full,
    /// One arm per criterion, ranked by that criterion alone.
    Single,
    /// One arm per criterion, ranked without it.
    LeaveOneOut,
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "single" => Ok(Self::Single),
            "loo" | "leave-one-out" => Ok(Self::LeaveOneOut),
            other => Err(Error::Config(format!("unknown ablation mode `{other}`"))),
        }
    }
}

/// Named weight vectors for each arm of `mode`.
pub fn ablation_arms(mode: AblationMode, base: &Weights) -> Vec<(String, Weights)> {
    match mode {
        AblationMode::Full => vec![("all".to_owned(), *base)],
        AblationMode::Single => Criterion::ALL
            .into_iter()
            .map(|c| (format!("only:{}", c.name()), Weights::only(c)))
            .collect(),
        AblationMode::LeaveOneOut => Criterion::ALL
            .into_iter()
            .map(|c| (format!("without:{}", c.name()), base.without(c)))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub k: usize,
    pub mrr: f64,
    pub map: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub reports: Vec<MetricsReport>,
    pub skipped: Vec<SkippedQuery>,
    /// Ground-truth targets that are not columns of the catalog.
    pub unresolved_targets: Vec<ColumnRef>,
    /// Metric curve under the configured weights, when requested.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepPoint>,
    pub warnings: Vec<String>,
}

/// Drops targets absent from `catalog`; queries left with no targets are skipped.
type Resolved = (Vec<(ColumnRef, BTreeSet<ColumnRef>)>, Vec<SkippedQuery>, Vec<ColumnRef>);

fn resolve_truth(gt: &GroundTruth, catalog: &LakeCatalog) -> Resolved {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    let mut unresolved = BTreeSet::new();
    for (query, targets) in &gt.entries {
        if catalog.profile(query).is_none() {
            skipped.push(SkippedQuery {
                query: query.clone(),
                reason: "query column not in catalog".into(),
            });
            continue;
        }
        let (found, missing): (BTreeSet<_>, BTreeSet<_>) =
            targets.iter().cloned().partition(|t| catalog.profile(t).is_some());
        unresolved.extend(missing);
        if found.is_empty() {
            skipped.push(SkippedQuery {
                query: query.clone(),
                reason: "no relevant column resolves in catalog".into(),
            });
        } else {
            kept.push((query.clone(), found));
        }
    }
    (kept, skipped, unresolved.into_iter().collect())
}

/// Runs every ground-truth query once, then ranks the scored candidates under
/// each arm's weights. `sweep_to` adds a 1..=n curve under `options.weights`.
pub fn run_benchmark(
    engine: &Engine<'_>,
    gt: &GroundTruth,
    options: &SearchOptions,
    mode: AblationMode,
    sweep_to: Option<usize>,
) -> Result<BenchmarkReport> {
    if gt.is_empty() {
        return Err(Error::GroundTruth {
            line: 1,
            reason: "ground truth has no rows".into(),
        });
    }
    let (queries, mut skipped, unresolved_targets) = resolve_truth(gt, &engine.bundle.catalog);
    let depth = options.k.max(sweep_to.unwrap_or(0));
    let scoring = SearchOptions {
        k: depth,
        budget: options.budget.max(depth),
        ..options.clone()
    };

    let scored: Vec<Result<ScoredQuery>> = queries
        .par_iter()
        .map(|(q, _)| engine.score(&QuerySpec::Lake(q.clone()), &scoring))
        .collect();

    let mut live = Vec::new();
    let mut warnings = Vec::new();
    for ((query, relevant), result) in queries.iter().zip(scored) {
        match result {
            Ok(s) => {
                warnings.extend(s.warnings.iter().map(|w| format!("{query}: {w}")));
                live.push((query, relevant, s));
            }
            Err(e) => skipped.push(SkippedQuery {
                query: query.clone(),
                reason: e.to_string(),
            }),
        }
    }
    skipped.sort_by(|a, b| a.query.cmp(&b.query));

    let rank_all = |weights: &Weights| {
        let arm_options = SearchOptions {
            k: depth,
            weights: *weights,
            ..options.clone()
        };
        live.par_iter()
            .map(|(query, relevant, s)| {
                let ranked = rank_scored(s, &arm_options)?.into_iter().map(|r| r.candidate).collect();
                Ok(((*query).clone(), ranked, *relevant))
            })
            .collect::<Result<Vec<_>>>()
    };

    let mut reports = Vec::new();
    for (name, weights) in ablation_arms(mode, &options.weights) {
        reports.push(evaluate_rankings(&name, options.k, &rank_all(&weights)?));
    }
    let mut sweep = Vec::new();
    if let Some(n) = sweep_to {
        let rankings = rank_all(&options.weights)?;
        sweep = (1..=n)
            .map(|k| {
                let r = evaluate_rankings("all", k, &rankings);
                SweepPoint {
                    k,
                    mrr: r.mrr,
                    map: r.map,
                    recall: r.recall_at_k,
                }
            })
            .collect();
    }
    Ok(BenchmarkReport {
        reports,
        skipped,
        unresolved_targets,
        sweep,
        warnings,
    })
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned text table: one row per arm, then the sweep if present.
    pub fn to_table(&self) -> String {
        let width = self.reports.iter().map(|r| r.arm.len()).max().unwrap_or(3).max(3);
        let mut out = String::new();
        let k = self.reports.first().map_or(0, |r| r.k);
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>10}", "arm", "MRR", "MAP", format!("Recall@{k}"));
        for r in &self.reports {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.4}  {:>8.4}  {:>10.4}",
                r.arm, r.mrr, r.map, r.recall_at_k
            );
        }
        if !self.sweep.is_empty() {
            let _ = writeln!(out, "\n{:>4}  {:>8}  {:>8}  {:>8}", "K", "MRR", "MAP", "Recall");
            for p in &self.sweep {
                let _ = writeln!(out, "{:>4}  {:>8.4}  {:>8.4}  {:>8.4}", p.k, p.mrr, p.map, p.recall);
            }
        }
        let queries = self.reports.first().map_or(0, |r| r.per_query.len());
        let _ = writeln!(out, "\nqueries: {queries}, skipped: {}", self.skipped.len());
        for s in &self.skipped {
            let _ = writeln!(out, "  skipped {}: {}", s.query, s.reason);
        }
        for t in &self.unresolved_targets {
            let _ = writeln!(out, "  unresolved target {t}");
        }
        out
    }

    /// Per-query rows for every arm.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "arm",
            "k",
            "query_table",
            "query_column",
            "reciprocal_rank",
            "average_precision",
            "recall",
        ])?;
        for r in &self.reports {
            for q in &r.per_query {
                csv.write_record([
                    r.arm.clone(),
                    r.k.to_string(),
                    q.query.table_id.clone(),
                    q.query.column_name.clone(),
                    q.reciprocal_rank.to_string(),
                    q.average_precision.to_string(),
                    q.recall.to_string(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn refs(names: &[&str]) -> Vec<ColumnRef> {
        names.iter().map(|n| ColumnRef::new(*n, "c")).collect()
    }

    fn set(names: &[&str]) -> BTreeSet<ColumnRef> {
        refs(names).into_iter().collect()
    }

    #[test]
    fn reciprocal_rank_cases() {
        assert_eq!(reciprocal_rank(&refs(&["a", "b"]), &set(&["a"])), 1.0);
        assert_eq!(reciprocal_rank(&refs(&["x", "y", "z", "a"]), &set(&["a"])), 0.25);
        assert_eq!(reciprocal_rank(&refs(&["x"]), &set(&["a"])), 0.0);
    }

    #[test]
    fn average_precision_cases() {
        let ap = average_precision(&refs(&["a", "x", "b"]), &set(&["a", "b"]), 10);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(average_precision(&refs(&["a", "b", "x"]), &set(&["a", "b"]), 10), 1.0);
        assert_eq!(average_precision(&refs(&["x"]), &set(&["a"]), 10), 0.0);
    }

    #[test]
    fn recall_cases() {
        assert_eq!(recall_at_k(&refs(&["a", "b"]), &set(&["a", "b"]), 10), 1.0);
        assert_eq!(recall_at_k(&refs(&["a", "b"]), &set(&["a", "b"]), 1), 0.5);
        assert_eq!(recall_at_k(&refs(&["x"]), &set(&["a"]), 10), 0.0);
    }

    #[test]
    fn mrr_is_mean_of_reciprocal_ranks() {
        let r1 = set(&["a"]);
        let r2 = set(&["b"]);
        let report = evaluate_rankings(
            "all",
            10,
            &[
                (ColumnRef::new("q1", "c"), refs(&["a", "x"]), &r1),
                (ColumnRef::new("q2", "c"), refs(&["w", "x", "y", "b"]), &r2),
            ],
        );
        assert!((report.mrr - 0.625).abs() < 1e-12);
    }

    /// Independent formulation: AP as the mean over relevant items of
    /// precision at their rank, counting misses as 0, then rescaled.
    fn ap_oracle(ranked: &[ColumnRef], relevant: &BTreeSet<ColumnRef>, k: usize) -> f64 {
        let top: Vec<&ColumnRef> = ranked.iter().take(k).collect();
        let mut total = 0.0;
        for target in relevant {
            if let Some(pos) = top.iter().position(|r| *r == target) {
                let relevant_above = top[..=pos].iter().filter(|r| relevant.contains(**r)).count();
                total += relevant_above as f64 / (pos + 1) as f64;
            }
        }
        let denom = relevant.len().min(k);
        if denom == 0 {
            0.0
        } else {
            total / denom as f64
        }
    }

    #[test]
    fn average_precision_matches_second_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let universe: Vec<ColumnRef> = (0..40).map(|i| ColumnRef::new(format!("t{i}"), "c")).collect();
        for _ in 0..100 {
            let mut ranked = universe.clone();
            ranked.shuffle(&mut rng);
            ranked.truncate(rng.gen_range(0..30));
            let n = rng.gen_range(1..12);
            let relevant: BTreeSet<ColumnRef> = universe.choose_multiple(&mut rng, n).cloned().collect();
            let k = rng.gen_range(1..25);
            let a = average_precision(&ranked, &relevant, k);
            let b = ap_oracle(&ranked, &relevant, k);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn ground_truth_parsing() {
        let text = "query_table,query_column,target_table,target_column\na,x,b,x\na,x,c,x\nd,y,e,y\n";
        let gt = GroundTruth::from_reader(text.as_bytes()).unwrap();
        assert_eq!(gt.len(), 2);
        assert_eq!(gt.entries[&ColumnRef::new("a", "x")].len(), 2);

        let bad = "query_table,query_column,target_table,target_column\na,x,b,x\na,x,b\n";
        match GroundTruth::from_reader(bad.as_bytes()) {
            Err(Error::GroundTruth { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let wrong_header = "q,c,t,c\n";
        assert!(matches!(
            GroundTruth::from_reader(wrong_header.as_bytes()),
            Err(Error::GroundTruth { line: 1, .. })
        ));
        let empty_field = "query_table,query_column,target_table,target_column\na,,b,x\n";
        assert!(matches!(
            GroundTruth::from_reader(empty_field.as_bytes()),
            Err(Error::GroundTruth { line: 2, .. })
        ));
    }

    #[test]
    fn arms_enumerate_seven_vectors() {
        let base = Weights::default();
        assert_eq!(ablation_arms(AblationMode::Full, &base).len(), 1);
        let single = ablation_arms(AblationMode::Single, &base);
        assert_eq!(single.len(), 7);
        for (i, (_, w)) in single.iter().enumerate() {
            let a = w.as_array();
            assert_eq!(a.iter().sum::<f64>(), 1.0);
            assert_eq!(a[i], 1.0);
        }
        let loo = ablation_arms(AblationMode::LeaveOneOut, &base);
        assert_eq!(loo.len(), 7);
        for (i, (_, w)) in loo.iter().enumerate() {
            assert_eq!(w.as_array()[i], 0.0);
        }
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_recall_monotone(
            order in Just((0..30usize).collect::<Vec<_>>()).prop_shuffle(),
            len in 0usize..30,
            rel in proptest::collection::btree_set(0usize..30, 1..10),
        ) {
            let ranked: Vec<ColumnRef> = order[..len].iter().map(|i| ColumnRef::new(format!("t{i}"), "c")).collect();
            let relevant: BTreeSet<ColumnRef> = rel.iter().map(|i| ColumnRef::new(format!("t{i}"), "c")).collect();
            let mut last = 0.0;
            for k in 1..=20 {
                let r = recall_at_k(&ranked, &relevant, k);
                let ap = average_precision(&ranked, &relevant, k);
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
                prop_assert!(r >= last);
                last = r;
            }
            let rr = reciprocal_rank(&ranked, &relevant);
            prop_assert!((0.0..=1.0).contains(&rr));
        }
    }
}
