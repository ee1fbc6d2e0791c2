//! Context-aware joinable column search over CSV data lakes.
//!
//! Given a query column, candidates are gathered from three indexes (value
//! overlap, metadata embeddings and value embeddings), scored on seven
//! joinability criteria, and ranked with TOPSIS. The [`eval`] module runs
//! ground-truth benchmarks with MRR, MAP and Recall@K.

mod codec;
pub mod criteria;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod inverted;
pub mod minhash;
pub mod search;
pub mod topsis;

pub use criteria::{CriteriaVector, Criterion, Direction, IntersectionMode};
pub use embedding::{EmbeddingProvider, LocalEmbedder, RemoteEmbedder};
pub use error::{Error, Result};
pub use ingest::{load_lake, ColumnProfile, ColumnRef, IngestConfig, LakeCatalog, TableMetadata};
pub use search::{
    build_indexes, BuildConfig, Engine, IndexBundle, QuerySpec, RankedResult, SearchOptions, SearchRequest,
    Source, SyntacticMode,
};
pub use topsis::{weights_from_config, DecisionMatrix, WeightConfig, Weights};
