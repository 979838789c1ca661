//! Cross-document sentence linking: corpora, synthetic pair generation,
//! retrieval, LLM refinement, evaluation and annotation analytics.

pub mod annotate;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod exact;
pub mod llm;
pub mod pool;
pub mod predictions;
pub mod refine;
pub mod retrieval;
pub mod synthgen;
pub mod text;

pub use annotate::{CandidateBundle, Decision, Provenance};
pub use corpus::{Document, DocumentPair, Domain, LinkSet, LinkedPair, LinkingDataset, Role, Sentence};
pub use error::{Error, Result};
pub use evaluate::{EvalReport, MetricsAtK};
pub use exact::Exact;
pub use predictions::{PredictionKind, PredictionRecord, Predictions};
pub use retrieval::ScoredRanking;
