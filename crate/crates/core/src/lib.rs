//! Interpretable out-of-context image-caption misinformation detection.
//!
//! A caption's POS/NE-annotated AMR graph is decomposed into elementary fact
//! queries ([`extraction`]), each query is answered against the image by a
//! vision-language backend ([`oracle`]), a trained ranker scores how likely
//! each answer is to agree with the pair's credibility ([`ranker`]), and the
//! top-ranked answers are counted into a verdict with its evidence
//! ([`verdict`]). [`metrics`] scores verdicts and evidence; [`pipeline`]
//! wires the stages together over JSON Lines files.

pub mod extraction;
pub mod graph;
mod hashing;
pub mod label;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod ranker;
pub mod verdict;

pub use extraction::{
    extract_queries, extract_statements, extract_with_log, render_query, ElementaryStatement, Query,
    StatementKind,
};
pub use graph::{parse_graph, serialize_graph, AmrEdge, AmrGraph, AmrNode, GraphDocument, GraphError, NeType, NodeId, PosTag};
pub use label::PairLabel;
pub use metrics::{EvidenceAnnotation, LabeledPrediction, MetricsReport};
pub use oracle::{Answer, AnswerCache, ImageRef, OracleBackend, QueryAnswer};
pub use pipeline::{PipelineConfig, PipelineError, Sample, Split};
pub use ranker::{EmbeddingTriple, Encoder, RankerModel, TrainSample};
pub use verdict::{EvidenceReport, ScoredQuery, Verdict};
