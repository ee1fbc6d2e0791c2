use std::io::Write;
use std::path::Path;

use super::{cosine, EmbeddingVector};
use crate::codec::{self, Reader};
use crate::error::{Error, Result};
use crate::ingest::ColumnRef;

const MAGIC: &[u8] = b"CJEM1";

/// Column embeddings searched by exact (linear scan) cosine KNN.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dims: usize,
    /// Sorted.
    refs: Vec<ColumnRef>,
    /// Row-major, `dims` components per ref.
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dims: usize, mut rows: Vec<(ColumnRef, EmbeddingVector)>) -> Result<Self> {
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut refs = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dims);
        for (column, vector) in rows {
            if vector.dims() != dims {
                return Err(Error::Dimension {
                    expected: dims,
                    actual: vector.dims(),
                });
            }
            refs.push(column);
            data.extend_from_slice(vector.components());
        }
        Ok(Self { dims, refs, data })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn get(&self, column: &ColumnRef) -> Option<EmbeddingVector> {
        self.refs
            .binary_search(column)
            .ok()
            .map(|i| EmbeddingVector::from_unit(self.row(i).to_vec()))
    }

    /// The `k` most cosine-similar columns, ties by ascending ref. `exclude`
    /// (the query's own column) is skipped when present.
    pub fn knn_cosine(
        &self,
        query: &EmbeddingVector,
        exclude: Option<&ColumnRef>,
        k: usize,
    ) -> Result<Vec<(ColumnRef, f64)>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Err(Error::InvalidK);
        }
        if query.dims() != self.dims {
            return Err(Error::Dimension {
                expected: self.dims,
                actual: query.dims(),
            });
        }
        let mut hits: Vec<(usize, f64)> = (0..self.refs.len())
            .filter(|&i| Some(&self.refs[i]) != exclude)
            .map(|i| (i, cosine(self.row(i), query.components())))
            .collect();
        hits.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        Ok(hits
            .into_iter()
            .map(|(i, sim)| (self.refs[i].clone(), sim))
            .collect())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        codec::write_u32(w, codec::len_u32(self.dims))?;
        codec::write_u32(w, codec::len_u32(self.refs.len()))?;
        for (i, column) in self.refs.iter().enumerate() {
            codec::write_ref(w, column)?;
            for &c in self.row(i) {
                w.write_all(&c.to_le_bytes())?;
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
        Self::from_bytes(&codec::read_file(path)?, path)
    }

    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(buf, path);
        r.expect_magic(MAGIC)?;
        let dims = r.u32()? as usize;
        let n = r.u32()? as usize;
        let mut refs = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dims);
        for _ in 0..n {
            refs.push(r.column_ref()?);
            for _ in 0..dims {
                data.push(r.f32()?);
            }
        }
        r.finish()?;
        if refs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(r.corrupt("refs not sorted"));
        }
        Ok(Self { dims, refs, data })
    }
}
