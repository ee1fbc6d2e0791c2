//! Posting-list index over normalized cell values.
//!
//! Backs the syntactic candidate strategy and, with an unbounded `k`, the
//! exact set-intersection baseline.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::codec::{self, Reader};
use crate::error::{Error, Result};
use crate::ingest::{ColumnProfile, ColumnRef, LakeCatalog};

const MAGIC: &[u8] = b"CJII1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingList {
    pub value: String,
    pub postings: Vec<ColumnRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapResult {
    pub candidate: ColumnRef,
    /// Shared distinct normalized values.
    pub overlap: u64,
    /// `overlap / query distinct count`.
    pub containment: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InvertedIndex {
    /// Sorted; posting ids index into this.
    columns: Vec<ColumnRef>,
    /// Each id list is ascending, so postings are sorted by `ColumnRef` too.
    postings: BTreeMap<String, Vec<u32>>,
}

impl InvertedIndex {
    /// Indexes the distinct values of each column's first `row_sample` rows.
    pub fn build(catalog: &LakeCatalog, row_sample: usize) -> Self {
        let columns: Vec<ColumnRef> = catalog.column_refs().cloned().collect();
        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (id, profile) in catalog.columns.iter().enumerate() {
            let id = codec::len_u32(id);
            for value in profile.leading_distinct(row_sample) {
                match postings.get_mut(value) {
                    Some(list) => list.push(id),
                    None => {
                        postings.insert(value.to_owned(), vec![id]);
                    }
                }
            }
        }
        Self { columns, postings }
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn value_count(&self) -> usize {
        self.postings.len()
    }

    pub fn posting(&self, value: &str) -> Option<PostingList> {
        self.postings.get(value).map(|ids| PostingList {
            value: value.to_owned(),
            postings: ids.iter().map(|&i| self.columns[i as usize].clone()).collect(),
        })
    }

    pub fn postings(&self) -> impl Iterator<Item = PostingList> + '_ {
        self.postings.keys().filter_map(|v| self.posting(v))
    }

    /// Top-`k` columns by number of distinct values shared with `query`,
    /// ties broken by ascending column ref. The query's own column is excluded.
    pub fn search_overlap(&self, query: &ColumnProfile, k: usize) -> Result<Vec<OverlapResult>> {
        if k == 0 {
            return Err(Error::InvalidK);
        }
        if query.distinct_count == 0 {
            return Err(Error::EmptyQuery);
        }
        let mut counts = vec![0u64; self.columns.len()];
        for value in query.distinct_values() {
            if let Some(ids) = self.postings.get(value) {
                for &id in ids {
                    counts[id as usize] += 1;
                }
            }
        }
        let query_distinct = query.distinct_count as f64;
        let mut hits: Vec<(usize, u64)> = counts
            .into_iter()
            .enumerate()
            .filter(|&(id, n)| n > 0 && self.columns[id] != query.column)
            .collect();
        // Ids follow ref order, so an id tie-break is the lexicographic one.
        hits.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        Ok(hits
            .into_iter()
            .map(|(id, overlap)| OverlapResult {
                candidate: self.columns[id].clone(),
                overlap,
                containment: overlap as f64 / query_distinct,
            })
            .collect())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        codec::write_u32(w, codec::len_u32(self.columns.len()))?;
        for column in &self.columns {
            codec::write_ref(w, column)?;
        }
        codec::write_u32(w, codec::len_u32(self.postings.len()))?;
        for (value, ids) in &self.postings {
            codec::write_str(w, value)?;
            codec::write_u32(w, codec::len_u32(ids.len()))?;
            for &id in ids {
                codec::write_u32(w, id)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = codec::read_file(path)?;
        Self::from_bytes(&buf, path)
    }

    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(buf, path);
        r.expect_magic(MAGIC)?;
        let n_columns = r.u32()?;
        let columns = (0..n_columns)
            .map(|_| r.column_ref())
            .collect::<Result<Vec<_>>>()?;
        let n_values = r.u32()?;
        let mut postings = BTreeMap::new();
        for _ in 0..n_values {
            let value = r.string()?;
            let n = r.u32()?;
            let ids = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            if ids.iter().any(|&id| id >= n_columns) {
                return Err(r.corrupt("posting id out of range"));
            }
            postings.insert(value, ids);
        }
        r.finish()?;
        Ok(Self { columns, postings })
    }
}

/// Exact set-intersection baseline: every overlapping column, ranked.
pub fn exact_set_intersection(index: &InvertedIndex, query: &ColumnProfile) -> Result<Vec<OverlapResult>> {
    index.search_overlap(query, usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{IngestConfig, RawTable};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn lake(tables: &[(&str, &[&str])]) -> LakeCatalog {
        let raw = tables
            .iter()
            .map(|(id, values)| {
                let rows = values.iter().map(|v| vec![v.to_string()]).collect();
                (RawTable::new(*id, vec!["c".into()], rows), None)
            })
            .collect();
        LakeCatalog::from_tables(raw, &IngestConfig::default()).unwrap()
    }

    fn query(values: &[&str]) -> ColumnProfile {
        ColumnProfile::from_raw_values(ColumnRef::new("query", "q"), values, &IngestConfig::default())
    }

    #[test]
    fn shared_value_lists_both_columns() {
        let catalog = lake(&[("a", &["Texas", "Ohio"]), ("b", &["texas"])]);
        let index = InvertedIndex::build(&catalog, 10_000);
        let list = index.posting("texas").unwrap();
        assert_eq!(list.postings, vec![ColumnRef::new("a", "c"), ColumnRef::new("b", "c")]);
    }

    #[test]
    fn repeated_values_posted_once() {
        let catalog = lake(&[("a", &["a", "a", "b"])]);
        let index = InvertedIndex::build(&catalog, 10_000);
        assert_eq!(index.posting("a").unwrap().postings.len(), 1);
        assert_eq!(index.value_count(), 2);
    }

    #[test]
    fn distinct_lake_has_singleton_postings() {
        let tables: Vec<(String, Vec<String>)> = (0..30)
            .map(|t| (format!("t{t:02}"), (0..20).map(|v| format!("{t}-{v}")).collect()))
            .collect();
        let borrowed: Vec<(&str, Vec<&str>)> = tables
            .iter()
            .map(|(id, vs)| (id.as_str(), vs.iter().map(String::as_str).collect()))
            .collect();
        let spec: Vec<(&str, &[&str])> = borrowed.iter().map(|(id, vs)| (*id, vs.as_slice())).collect();
        let index = InvertedIndex::build(&lake(&spec), 10_000);
        assert_eq!(index.value_count(), 600);
        assert!(index.postings().all(|p| p.postings.len() == 1));
    }

    #[test]
    fn row_sample_limits_indexed_rows() {
        let catalog = lake(&[("a", &["x", "y", "z"])]);
        let index = InvertedIndex::build(&catalog, 2);
        assert!(index.posting("z").is_none());
        assert!(index.posting("y").is_some());
    }

    #[test]
    fn containment_is_relative_to_query() {
        let catalog = lake(&[("a", &["b", "c", "x"])]);
        let index = InvertedIndex::build(&catalog, 10_000);
        let hits = index.search_overlap(&query(&["a", "b", "c", "d"]), 10).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].overlap, 2);
        assert_eq!(hits[0].containment, 0.5);
    }

    #[test]
    fn disjoint_query_finds_nothing() {
        let catalog = lake(&[("a", &["b", "c"])]);
        let index = InvertedIndex::build(&catalog, 10_000);
        assert!(index.search_overlap(&query(&["zzz"]), 10).unwrap().is_empty());
    }

    #[test]
    fn excludes_query_and_breaks_ties_by_ref() {
        let catalog = lake(&[("c", &["x"]), ("a", &["x"]), ("b", &["x", "y"])]);
        let index = InvertedIndex::build(&catalog, 10_000);
        let own = catalog.profile(&ColumnRef::new("b", "c")).unwrap();
        let hits = index.search_overlap(own, 10).unwrap();
        let refs: Vec<_> = hits.iter().map(|h| h.candidate.table_id.as_str()).collect();
        assert_eq!(refs, vec!["a", "c"]);
        assert_eq!(index.search_overlap(own, 1).unwrap().len(), 1);
    }

    #[test]
    fn empty_query_and_zero_k_are_errors() {
        let index = InvertedIndex::build(&lake(&[("a", &["x"])]), 10);
        assert!(matches!(index.search_overlap(&query(&[""]), 3), Err(Error::EmptyQuery)));
        assert!(matches!(index.search_overlap(&query(&["x"]), 0), Err(Error::InvalidK)));
    }

    #[test]
    fn binary_round_trip() {
        let catalog = lake(&[("a", &["x", "y"]), ("b", &["y", "ünï"])]);
        let index = InvertedIndex::build(&catalog, 10_000);
        let bytes = index.to_bytes();
        assert!(bytes.starts_with(b"CJII1"));
        let back = InvertedIndex::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, index);
        assert!(InvertedIndex::from_bytes(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
    }

    proptest! {
        #[test]
        fn adding_values_never_lowers_overlap(
            base in prop::collection::btree_set("[a-h]", 1..6),
            extra in prop::collection::btree_set("[a-h]", 0..6),
            q in prop::collection::btree_set("[a-h]", 1..6),
        ) {
            let base_v: Vec<&str> = base.iter().map(String::as_str).collect();
            let grown: BTreeSet<&str> = base.iter().chain(extra.iter()).map(String::as_str).collect();
            let grown_v: Vec<&str> = grown.into_iter().collect();
            let qv: Vec<&str> = q.iter().map(String::as_str).collect();
            let overlap = |values: &[&str]| {
                let index = InvertedIndex::build(&lake(&[("a", values)]), 10_000);
                index.search_overlap(&query(&qv), 10).unwrap().first().map_or(0, |h| h.overlap)
            };
            prop_assert!(overlap(&grown_v) >= overlap(&base_v));
        }
    }
}
