//! Interest-clustered candidate retrieval.
//!
//! The pipeline clusters the item co-engagement graph into interests with
//! Louvain, derives per-user interest profiles from Personalized PageRank,
//! fuses those profiles into a two-tower embedding model, and serves top-K
//! recommendations by exact search restricted to a user's selected interest
//! clusters.
//!
//! Modules follow the pipeline order:
//!
//! - [`ingest`]: interaction logs to an indexed, filtered [`ingest::Dataset`] and splits.
//! - [`graph`]: bipartite graph, co-engagement projection, modularity and Louvain.
//! - [`interest`]: Personalized PageRank and interest profiles.
//! - [`model`]: two-tower model, BCE, AdamW and the training loop.
//! - [`retrieval`]: full-scan, cluster-restricted and KMeans-restricted top-K.
//! - [`eval`]: ranking metrics, baselines, cohort reports and ARI.
//! - [`cli`]: config parsing and pipeline commands.

pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod interest;
pub mod model;
pub mod retrieval;

pub use error::{Error, Result};
