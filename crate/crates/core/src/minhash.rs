//! MinHash signatures with exact Hamming-distance nearest-neighbour search.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::codec::{self, Reader};
use crate::error::{Error, Result};
use crate::ingest::{ColumnRef, LakeCatalog};

pub const NUM_PERM: usize = 100;

const MAGIC: &[u8] = b"CJMH1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub column: ColumnRef,
    pub sig: [u64; NUM_PERM],
    pub perm_seed: u64,
}

/// The 100 hash functions: one 64-bit base hash of the value, remixed with a
/// per-function seed.
#[derive(Debug, Clone)]
pub struct PermutationFamily {
    perm_seed: u64,
    seeds: [u64; NUM_PERM],
}

impl PermutationFamily {
    pub fn new(perm_seed: u64) -> Self {
        let mut state = perm_seed;
        let seeds = std::array::from_fn(|_| splitmix64(&mut state));
        Self { perm_seed, seeds }
    }

    pub fn signature<'a, I>(&self, column: ColumnRef, values: I) -> Result<MinHashSignature>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut sig = [u64::MAX; NUM_PERM];
        let mut any = false;
        for value in values {
            any = true;
            let base = xxh3_64_with_seed(value.as_bytes(), self.perm_seed);
            for (slot, seed) in sig.iter_mut().zip(&self.seeds) {
                let h = fmix64(base ^ seed);
                if h < *slot {
                    *slot = h;
                }
            }
        }
        if !any {
            return Err(Error::EmptySet);
        }
        Ok(MinHashSignature {
            column,
            sig,
            perm_seed: self.perm_seed,
        })
    }
}

/// Signature over a set of distinct normalized values.
pub fn signature<'a, I>(column: ColumnRef, values: I, perm_seed: u64) -> Result<MinHashSignature>
where
    I: IntoIterator<Item = &'a str>,
{
    PermutationFamily::new(perm_seed).signature(column, values)
}

impl MinHashSignature {
    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.perm_seed != other.perm_seed {
            return Err(Error::IncompatibleSignature(format!(
                "permutation seeds {} and {} differ",
                self.perm_seed, other.perm_seed
            )));
        }
        Ok(())
    }

    pub fn hamming(&self, other: &Self) -> Result<u32> {
        self.check_compatible(other)?;
        Ok(self.hamming_unchecked(other))
    }

    fn hamming_unchecked(&self, other: &Self) -> u32 {
        self.sig
            .iter()
            .zip(&other.sig)
            .filter(|(a, b)| a != b)
            .count() as u32
    }
}

/// Fraction of agreeing signature positions.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    let distance = a.hamming(b)?;
    Ok((NUM_PERM as u32 - distance) as f64 / NUM_PERM as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashIndex {
    perm_seed: u64,
    /// Sorted by column ref.
    signatures: Vec<MinHashSignature>,
}

impl MinHashIndex {
    /// Signs the sampled distinct values of every non-empty column.
    pub fn build(catalog: &LakeCatalog, perm_seed: u64) -> Self {
        let family = PermutationFamily::new(perm_seed);
        let signatures = catalog
            .columns
            .par_iter()
            .filter(|p| !p.is_empty())
            .map(|p| {
                family
                    .signature(p.column.clone(), p.distinct_values())
                    .expect("non-empty column")
            })
            .collect();
        Self {
            perm_seed,
            signatures,
        }
    }

    pub fn from_signatures(perm_seed: u64, mut signatures: Vec<MinHashSignature>) -> Result<Self> {
        if let Some(bad) = signatures.iter().find(|s| s.perm_seed != perm_seed) {
            return Err(Error::IncompatibleSignature(format!(
                "{} was signed with seed {}",
                bad.column, bad.perm_seed
            )));
        }
        signatures.sort_by(|a, b| a.column.cmp(&b.column));
        Ok(Self {
            perm_seed,
            signatures,
        })
    }

    pub fn perm_seed(&self) -> u64 {
        self.perm_seed
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn get(&self, column: &ColumnRef) -> Option<&MinHashSignature> {
        self.signatures
            .binary_search_by(|s| s.column.cmp(column))
            .ok()
            .map(|i| &self.signatures[i])
    }

    /// Exact `k` nearest columns by Hamming distance (linear scan), ties by
    /// ascending ref, the query's own column excluded.
    pub fn knn_hamming(&self, query: &MinHashSignature, k: usize) -> Result<Vec<(ColumnRef, u32)>> {
        if k == 0 {
            return Err(Error::InvalidK);
        }
        if query.perm_seed != self.perm_seed {
            return Err(Error::IncompatibleSignature(format!(
                "index seed {} vs query seed {}",
                self.perm_seed, query.perm_seed
            )));
        }
        let mut hits: Vec<(usize, u32)> = self
            .signatures
            .iter()
            .enumerate()
            .filter(|(_, s)| s.column != query.column)
            .map(|(i, s)| (i, s.hamming_unchecked(query)))
            .collect();
        hits.sort_unstable_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        Ok(hits
            .into_iter()
            .map(|(i, d)| (self.signatures[i].column.clone(), d))
            .collect())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        codec::write_u64(w, self.perm_seed)?;
        codec::write_u32(w, codec::len_u32(self.signatures.len()))?;
        for s in &self.signatures {
            codec::write_ref(w, &s.column)?;
            for &h in &s.sig {
                codec::write_u64(w, h)?;
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
        let perm_seed = r.u64()?;
        let n = r.u32()?;
        let mut signatures = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let column = r.column_ref()?;
            let mut sig = [0u64; NUM_PERM];
            for slot in sig.iter_mut() {
                *slot = r.u64()?;
            }
            signatures.push(MinHashSignature {
                column,
                sig,
                perm_seed,
            });
        }
        r.finish()?;
        Ok(Self {
            perm_seed,
            signatures,
        })
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    fmix64(*state)
}

/// Stafford's variant 13 finalizer; a bijection on u64.
fn fmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
