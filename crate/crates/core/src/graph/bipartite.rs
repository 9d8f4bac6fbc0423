use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{Interaction, UserItems};

/// Undirected user-item engagement graph stored as two adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    user_adj: UserItems,
    item_adj: UserItems,
}

impl BipartiteGraph {
    pub fn num_users(&self) -> usize {
        self.user_adj.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.item_adj.num_users()
    }

    pub fn num_edges(&self) -> usize {
        self.user_adj.total()
    }

    /// Items engaged by `user`, ascending.
    pub fn user_items(&self, user: usize) -> &[u32] {
        self.user_adj.items(user)
    }

    /// Users who engaged `item`, ascending.
    pub fn item_users(&self, item: usize) -> &[u32] {
        self.item_adj.items(item)
    }

    pub fn user_degree(&self, user: usize) -> usize {
        self.user_adj.degree(user)
    }

    pub fn item_degree(&self, item: usize) -> usize {
        self.item_adj.degree(item)
    }

    pub fn user_index(&self) -> &UserItems {
        &self.user_adj
    }
}

/// One undirected edge per distinct `(user, item)` pair.
pub fn build_bipartite(
    num_users: usize,
    num_items: usize,
    interactions: &[Interaction],
) -> Result<BipartiteGraph> {
    if interactions.is_empty() {
        return Err(Error::EmptyDataset("bipartite graph needs at least one interaction".into()));
    }
    if let Some(x) = interactions
        .iter()
        .find(|x| x.user as usize >= num_users || x.item as usize >= num_items)
    {
        return Err(Error::invalid(format!("interaction {x:?} out of range")));
    }
    let user_adj = UserItems::new(num_users, interactions);
    let transposed: Vec<Interaction> = interactions
        .iter()
        .map(|x| Interaction {
            user: x.item,
            item: x.user,
            timestamp: x.timestamp,
        })
        .collect();
    let item_adj = UserItems::new(num_items, &transposed);
    Ok(BipartiteGraph { user_adj, item_adj })
}

/// Unweighted, symmetric, loop-free item graph in CSR form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl ItemGraph {
    /// Builds from an undirected edge list; duplicates and self-loops are dropped.
    pub fn from_edges(num_items: usize, edges: &[(u32, u32)]) -> Self {
        let mut adj = vec![Vec::new(); num_items];
        for &(a, b) in edges {
            if a != b {
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self::from_sorted_lists(adj)
    }

    fn from_sorted_lists(adj: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(adj.iter().map(Vec::len).sum());
        for list in adj {
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Self { offsets, neighbors }
    }

    pub fn num_items(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, item: usize) -> &[u32] {
        &self.neighbors[self.offsets[item]..self.offsets[item + 1]]
    }

    pub fn degree(&self, item: usize) -> usize {
        self.offsets[item + 1] - self.offsets[item]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// Subgraph induced by `nodes` (sorted, unique), relabelled `0..nodes.len()`.
    pub fn induced(&self, nodes: &[u32]) -> ItemGraph {
        let adj = nodes
            .iter()
            .map(|&v| {
                self.neighbors(v as usize)
                    .iter()
                    .filter_map(|w| nodes.binary_search(w).ok().map(|p| p as u32))
                    .collect()
            })
            .collect();
        Self::from_sorted_lists(adj)
    }
}

/// Item-item graph with an edge between two items iff some user engaged both.
///
/// Each item's neighborhood is collected by walking its users' item lists with
/// a per-item marker, so the `|I|^2` co-occurrence matrix is never built.
pub fn project_co_engagement(bg: &BipartiteGraph) -> ItemGraph {
    let n = bg.num_items();
    let adj: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![u32::MAX; n],
            |mark, item| {
                let mut out = Vec::new();
                for &u in bg.item_users(item) {
                    for &j in bg.user_items(u as usize) {
                        if j as usize != item && mark[j as usize] != item as u32 {
                            mark[j as usize] = item as u32;
                            out.push(j);
                        }
                    }
                }
                out.sort_unstable();
                out
            },
        )
        .collect();
    ItemGraph::from_sorted_lists(adj)
}
