//! Community-preserving sampling of information-retrieval corpora.
//!
//! The pipeline builds an entity-affinity graph from relevance judgments
//! ([`graph_builder`]), finds communities with weighted label propagation and
//! samples whole communities ([`graph_sampler`]), then joins the selection
//! back into a sub-corpus with the input schema ([`corpus_reconstructor`]).
//! [`powerlaw`] fits Yule–Simon degree distributions and [`eval_metrics`]
//! compares samples. Every stage runs on the deterministic local dataflow in
//! [`engine`].
//!
//! Record types are generic over a [`Scalar`] score type; the aliases below fix
//! it to `f64`.

pub mod corpus_io;
pub mod corpus_reconstructor;
pub mod engine;
pub mod error;
pub mod eval_metrics;
pub mod graph_builder;
pub mod graph_sampler;
pub mod powerlaw;
pub mod scalar;
pub mod seed;
pub mod synthetic;

pub use engine::{Engine, EngineConfig};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub use corpus_io::{EntityRecord, QrelsFormat, QueryRecord};
pub use graph_sampler::{ClusterAssignment, LabelState};

pub type QRel = corpus_io::QRelRecord<f64>;
pub type RunRow = corpus_io::RunRecord<f64>;
pub type Sample = corpus_io::CorpusSample<f64>;
pub type Edge = graph_builder::AffinityEdge<f64>;
pub type Plan = graph_sampler::SamplePlan<f64>;
pub type Fit = powerlaw::PowerLawFit<f64>;
pub type Precision = eval_metrics::PrecisionReport<f64>;
