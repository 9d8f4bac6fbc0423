//! Engagement graphs and interest clustering.
//!
//! [`BipartiteGraph`] holds user-item engagements, [`project_co_engagement`]
//! turns it into the unweighted item-item co-engagement graph, and
//! [`louvain`] partitions that graph into interest clusters.

mod bipartite;
mod clustering;
mod louvain;

pub use bipartite::{build_bipartite, project_co_engagement, BipartiteGraph, ItemGraph};
pub use clustering::{read_clustering, write_clustering, Clustering};
pub use louvain::{louvain, louvain_target_clusters, modularity, Louvain, LouvainRun};
