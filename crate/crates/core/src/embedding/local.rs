use xxhash_rust::xxh3::xxh3_64;

use super::{EmbeddingProvider, EmbeddingVector, DEFAULT_DIMS};
use crate::error::Result;

/// Deterministic feature-hashing embedder: each token lands in one of `dims`
/// buckets with a hash-derived sign, and the bucket sums are L2-normalized.
///
/// Tokens are lowercase alphanumeric runs, so the vector depends only on the
/// token multiset of the text.
#[derive(Debug, Clone)]
pub struct LocalEmbedder {
    dims: usize,
}

impl LocalEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding dims must be positive");
        Self { dims }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dims];
        let mut bag: Vec<String> = tokens(text).collect();
        for token in &bag {
            self.add(&mut acc, token);
        }
        if acc.iter().all(|&x| x == 0.0) {
            // No tokens, or signed collisions cancelled out: fall back to a
            // single feature for the whole (order-free) bag.
            bag.sort_unstable();
            let key = if bag.is_empty() { text.trim().to_owned() } else { bag.join(" ") };
            self.add(&mut acc, &key);
        }
        EmbeddingVector::normalized(&acc)
    }

    fn add(&self, acc: &mut [f64], token: &str) {
        let h = xxh3_64(token.as_bytes());
        let bucket = (h % self.dims as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

impl Default for LocalEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMS)
    }
}

pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl EmbeddingProvider for LocalEmbedder {
    fn id(&self) -> String {
        format!("local-hash-{}", self.dims)
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
