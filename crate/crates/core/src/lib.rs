//! Fact-guided reranking of radiology summary candidates.
//!
//! Candidates produced by a first-stage summarizer are reordered by how well
//! their extracted clinical facts match a target fact set, either the facts
//! of the source findings or facts predicted by a generator.

pub mod cli;
pub mod corpus;
pub mod factmodel;
pub mod genclient;
pub mod linearizer;
pub mod metrics;
pub mod reranker;

pub use corpus::{load_corpus, ExampleRecord};
pub use factmodel::{normalize_entity, reduce_graph, EntityLabel, FactGraph, RelationFlag, Triplet, TripletSet};
pub use genclient::{build_provider, ProviderKind, TargetProvider};
pub use linearizer::{linearize, parse, ParseMode, ParseReport};
pub use metrics::{radgraph_score, radmrr, Score};
pub use reranker::{evaluate_strategy, rank, Candidate, Strategy};
