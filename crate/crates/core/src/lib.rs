//! Bayesian structure learning for linear-Gaussian DAGs with candidate parent sets.
//!
//! The sampler runs Metropolis-coupled partition MCMC over root-partitions, draws
//! DAGs for the stored partitions, and turns each DAG into a posterior draw of the
//! causal-effect matrix. Exhaustive oracles for small graphs live in [`exact`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beeps;
pub mod candidates;
pub mod dagsample;
pub mod dataio;
pub mod error;
pub mod exact;
pub mod graph;
pub mod lattice;
pub mod mcmc;
pub mod pipeline;
pub mod scores;
pub mod synth;
pub mod tau;

pub use candidates::CandidateAssignment;
pub use dataio::{load_csv, standardize, BgeHyper, DataMatrix, PosteriorStats};
pub use error::{Error, Result};
pub use graph::{root_partition_of, Dag, RootPartition};
pub use mcmc::McmcConfig;
pub use scores::{LocalScoreTable, LocalScorer};
pub use tau::TauTable;
