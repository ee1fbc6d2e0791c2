//! Column embeddings: providers, sentence construction and cosine KNN tables.

mod local;
mod remote;
mod sentence;
mod table;

pub use local::LocalEmbedder;
pub use remote::{RemoteEmbedder, EMBED_URL_ENV};
pub use sentence::{
    frequent_values_sentence, metadata_sentence, render_values, value_sentence, MetadataSentence,
    ValueSentence, FREQUENT_VALUES, MAX_SENTENCE_CHARS,
};
pub use table::EmbeddingTable;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIMS: usize = 384;

/// A unit-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// L2-normalizes `components`. A zero vector stays zero.
    pub fn normalized(components: &[f64]) -> Self {
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self(vec![0.0; components.len()]);
        }
        Self(components.iter().map(|c| (c / norm) as f32).collect())
    }

    pub fn from_unit(components: Vec<f32>) -> Self {
        Self(components)
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        cosine(&self.0, &other.0)
    }
}

/// Cosine similarity of two equal-length vectors; 0 when either is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Turns text into unit vectors. Implementations must tolerate concurrent calls.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded alongside built indexes.
    fn id(&self) -> String;

    fn dims(&self) -> usize;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// Embeds `texts`, rejecting empty inputs and checking the provider's output shape.
pub fn embed(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(Error::EmptyText(i));
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::ProviderUnavailable(format!(
            "provider returned {} embeddings for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    if let Some(v) = vectors.iter().find(|v| v.dims() != provider.dims()) {
        return Err(Error::Dimension {
            expected: provider.dims(),
            actual: v.dims(),
        });
    }
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_bounds_and_symmetry() {
        let a = EmbeddingVector::normalized(&[1.0, 2.0, 3.0]);
        let b = EmbeddingVector::normalized(&[-3.0, 0.5, 1.0]);
        assert!((a.cosine(&a) - 1.0).abs() < 1e-6);
        assert_eq!(a.cosine(&b), b.cosine(&a));
        assert!(a.cosine(&b).abs() <= 1.0 + 1e-9);
        assert!((a.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_vector_has_zero_cosine() {
        let z = EmbeddingVector::normalized(&[0.0, 0.0]);
        let a = EmbeddingVector::normalized(&[1.0, 0.0]);
        assert_eq!(z.cosine(&a), 0.0);
    }

    #[test]
    fn embed_rejects_empty_text() {
        let local = LocalEmbedder::new(16);
        let texts = vec!["ok".to_string(), "  ".to_string()];
        assert!(matches!(embed(&local, &texts), Err(Error::EmptyText(1))));
    }
}
