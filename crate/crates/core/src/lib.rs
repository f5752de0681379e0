//! Binary collaborative codes for LLM-based recommendation.
//!
//! The pipeline: ingest and split interaction logs ([`dataset`]), train a
//! matrix-factorization model whose embeddings are binarized with a
//! straight-through estimator ([`collab`]), render the codes as text
//! ([`codec`]), build instruction-tuning prompts around them ([`promptgen`])
//! and score recommendation quality ([`eval`]).

pub mod codec;
pub mod collab;
pub mod dataset;
pub mod eval;
pub mod promptgen;

pub use codec::{BinaryCode, CodeBook, CodeFormat, CodeText, EntityKind};
pub use collab::{BinarizationHead, CollabModel, TrainConfig};
pub use dataset::{Interaction, LabeledInteraction, SegmentTag, SplitSet};
pub use eval::{MetricsReport, ScoredExample};
pub use promptgen::{CorpusMode, PromptRecord, PromptTemplate};
