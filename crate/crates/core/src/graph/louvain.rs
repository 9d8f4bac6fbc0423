//! Louvain modularity optimization with a resolution parameter.
//!
//! Two phases per pass: greedy local moving of nodes between neighbouring
//! communities in a seeded random order, then aggregation of communities into
//! super-nodes. Passes repeat until the modularity gain drops below
//! `min_gain` or `max_passes` is reached. An optional size cap re-partitions
//! oversized clusters afterwards.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Clustering, ItemGraph};
use crate::error::{Error, Result};

const TIE_EPS: f64 = 1e-10;
const MAX_SWEEPS: usize = 1000;
const MAX_SPLIT_DEPTH: usize = 32;

/// Q = (1/2m) Σ_ij [A_ij − γ k_i k_j / 2m] δ(c_i, c_j); 0 when the graph has no edges.
pub fn modularity(g: &ItemGraph, c: &Clustering, resolution: f64) -> f64 {
    let m = g.num_edges() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = c.num_clusters();
    let mut internal = vec![0.0f64; k];
    let mut degree = vec![0.0f64; k];
    for v in 0..g.num_items() {
        let cv = c.cluster_of(v);
        degree[cv as usize] += g.degree(v) as f64;
        for &w in g.neighbors(v) {
            if c.cluster_of(w as usize) == cv {
                internal[cv as usize] += 1.0;
            }
        }
    }
    // `internal` counts each intra-cluster edge twice.
    internal
        .iter()
        .zip(&degree)
        .map(|(l, d)| l / (2.0 * m) - resolution * (d / (2.0 * m)).powi(2))
        .sum()
}

#[derive(Debug, Clone)]
pub struct Louvain {
    pub resolution: f64,
    pub seed: u64,
    pub max_cluster_size: Option<usize>,
    pub min_gain: f64,
    pub max_passes: usize,
}

impl Default for Louvain {
    fn default() -> Self {
        Self {
            resolution: 1.0,
            seed: 0,
            max_cluster_size: None,
            min_gain: 1e-7,
            max_passes: 50,
        }
    }
}

/// Clustering plus the modularity after each pass (index 0 is the
/// all-singletons partition).
#[derive(Debug, Clone)]
pub struct LouvainRun {
    pub clustering: Clustering,
    pub pass_modularity: Vec<f64>,
}

pub fn louvain(
    g: &ItemGraph,
    resolution: f64,
    seed: u64,
    max_cluster_size: Option<usize>,
) -> Result<Clustering> {
    Louvain {
        resolution,
        seed,
        max_cluster_size,
        ..Default::default()
    }
    .run(g)
    .map(|r| r.clustering)
}

impl Louvain {
    pub fn run(&self, g: &ItemGraph) -> Result<LouvainRun> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::invalid(format!("resolution must be > 0, got {}", self.resolution)));
        }
        if self.max_cluster_size == Some(0) {
            return Err(Error::invalid("max_cluster_size must be >= 1"));
        }
        let (mut labels, pass_modularity) = self.optimize(g, self.resolution);
        if let Some(cap) = self.max_cluster_size {
            labels = self.enforce_cap(g, labels, cap);
        }
        Ok(LouvainRun {
            clustering: Clustering::from_labels(&labels, self.resolution, self.seed),
            pass_modularity,
        })
    }

    fn optimize(&self, g: &ItemGraph, resolution: f64) -> (Vec<usize>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut level = WeightedGraph::from_item_graph(g);
        // labels[item] = node of the current level containing it
        let mut labels: Vec<usize> = (0..g.num_items()).collect();
        let mut history = vec![level.modularity(&(0..level.len()).collect::<Vec<_>>(), resolution)];
        if level.total == 0.0 {
            return (labels, history);
        }

        for _ in 0..self.max_passes {
            let (community, moved) = level.local_moving(resolution, &mut rng);
            let q = level.modularity(&community, resolution);
            let prev = *history.last().unwrap();
            debug_assert!(q >= prev - 1e-9, "modularity decreased: {prev} -> {q}");
            if !moved || q - prev < self.min_gain {
                if q > prev {
                    // accept the final small improvement without aggregating further
                    let (dense, _) = densify(&community);
                    for l in labels.iter_mut() {
                        *l = dense[*l];
                    }
                    history.push(q);
                }
                break;
            }
            history.push(q);
            let (dense, count) = densify(&community);
            for l in labels.iter_mut() {
                *l = dense[*l];
            }
            level = level.aggregate(&dense, count);
        }
        (labels, history)
    }

    fn enforce_cap(&self, g: &ItemGraph, labels: Vec<usize>, cap: usize) -> Vec<usize> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); k];
        for (item, &l) in labels.iter().enumerate() {
            groups[l].push(item as u32);
        }
        let mut out = Vec::new();
        for group in groups {
            self.split_group(g, group, self.resolution * 2.0, cap, 0, &mut out);
        }
        let mut result = vec![0usize; g.num_items()];
        for (cluster, members) in out.iter().enumerate() {
            for &item in members {
                result[item as usize] = cluster;
            }
        }
        result
    }

    fn split_group(
        &self,
        g: &ItemGraph,
        group: Vec<u32>,
        resolution: f64,
        cap: usize,
        depth: usize,
        out: &mut Vec<Vec<u32>>,
    ) {
        if group.len() <= cap {
            out.push(group);
            return;
        }
        let parts = if depth < MAX_SPLIT_DEPTH {
            let sub = g.induced(&group);
            let (labels, _) = self.optimize(&sub, resolution);
            let k = labels.iter().max().map_or(0, |m| m + 1);
            let mut parts = vec![Vec::new(); k];
            for (local, &l) in labels.iter().enumerate() {
                parts[l].push(group[local]);
            }
            parts
        } else {
            Vec::new()
        };
        if parts.len() <= 1 {
            for block in group.chunks(cap) {
                out.push(block.to_vec());
            }
            return;
        }
        for part in parts {
            self.split_group(g, part, resolution * 2.0, cap, depth + 1, out);
        }
    }
}

/// Searches the resolution (bisection on `ln γ`) for a clustering with about
/// `target` clusters and returns the closest one found, ties to the lower γ.
pub fn louvain_target_clusters(
    g: &ItemGraph,
    target: usize,
    seed: u64,
    max_cluster_size: Option<usize>,
    steps: usize,
) -> Result<Clustering> {
    if target == 0 || target > g.num_items() {
        return Err(Error::invalid(format!("target cluster count {target} outside 1..={}", g.num_items())));
    }
    let (mut lo, mut hi) = ((1e-3f64).ln(), (1e4f64).ln());
    let mut best: Option<Clustering> = None;
    let dist = |c: &Clustering| c.num_clusters().abs_diff(target);
    for _ in 0..steps.max(1) {
        let mid = 0.5 * (lo + hi);
        let c = louvain(g, mid.exp(), seed, max_cluster_size)?;
        log::debug!("resolution {:.4}: {} clusters", mid.exp(), c.num_clusters());
        let k = c.num_clusters();
        let better = match &best {
            None => true,
            Some(b) => dist(&c) < dist(b) || (dist(&c) == dist(b) && c.resolution < b.resolution),
        };
        if better {
            best = Some(c);
        }
        match k.cmp(&target) {
            std::cmp::Ordering::Less => lo = mid,
            std::cmp::Ordering::Greater => hi = mid,
            std::cmp::Ordering::Equal => break,
        }
    }
    Ok(best.unwrap())
}

/// Maps arbitrary community labels to `0..count` in order of first node.
fn densify(community: &[usize]) -> (Vec<usize>, usize) {
    let mut map = vec![usize::MAX; community.len()];
    let mut next = 0;
    let dense = community
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect();
    // dense[node] is the new id of node's community; callers index by node.
    (dense, next)
}

/// Weighted graph used between aggregation levels.
///
/// `inner[v]` is the weight of edges inside super-node `v`, counted in both
/// directions, so `degree[v] = inner[v] + Σ_w adj(v, w)`.
struct WeightedGraph {
    adj: Vec<Vec<(u32, f64)>>,
    inner: Vec<f64>,
    degree: Vec<f64>,
    /// 2m
    total: f64,
}

impl WeightedGraph {
    fn from_item_graph(g: &ItemGraph) -> Self {
        let adj: Vec<Vec<(u32, f64)>> = (0..g.num_items())
            .map(|v| g.neighbors(v).iter().map(|&w| (w, 1.0)).collect())
            .collect();
        let degree: Vec<f64> = (0..g.num_items()).map(|v| g.degree(v) as f64).collect();
        let total = degree.iter().sum();
        Self {
            adj,
            inner: vec![0.0; g.num_items()],
            degree,
            total,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, community: &[usize], resolution: f64) -> f64 {
        if self.total == 0.0 {
            return 0.0;
        }
        let n = self.len();
        let mut internal = vec![0.0; n];
        let mut tot = vec![0.0; n];
        for v in 0..n {
            let c = community[v];
            internal[c] += self.inner[v];
            tot[c] += self.degree[v];
            for &(w, wt) in &self.adj[v] {
                if community[w as usize] == c {
                    internal[c] += wt;
                }
            }
        }
        let m2 = self.total;
        internal
            .iter()
            .zip(&tot)
            .map(|(l, d)| l / m2 - resolution * (d / m2) * (d / m2))
            .sum()
    }

    /// Returns the community of each node and whether any node moved.
    fn local_moving(&self, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut community: Vec<usize> = (0..n).collect();
        let mut tot = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut link = vec![0.0f64; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any_moved = false;
        for _ in 0..MAX_SWEEPS {
            let mut moved = false;
            for &v in &order {
                let kv = self.degree[v];
                let own = community[v];
                for &(w, wt) in &self.adj[v] {
                    let c = community[w as usize];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += wt;
                }
                tot[own] -= kv;
                // gain of joining c, up to a positive factor
                let gain = |c: usize, l: f64| l - resolution * tot[c] * kv / self.total;
                let mut best = own;
                let mut best_gain = gain(own, link[own]);
                for &c in &touched {
                    let gc = gain(c, link[c]);
                    if gc > best_gain + TIE_EPS || ((gc - best_gain).abs() <= TIE_EPS && c < best) {
                        best = c;
                        best_gain = gc;
                    }
                }
                tot[best] += kv;
                if best != own {
                    community[v] = best;
                    moved = true;
                    any_moved = true;
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
        }
        (community, any_moved)
    }

    fn aggregate(&self, dense: &[usize], count: usize) -> WeightedGraph {
        let mut inner = vec![0.0; count];
        let mut degree = vec![0.0; count];
        let mut edges: Vec<Vec<(u32, f64)>> = vec![Vec::new(); count];
        for v in 0..self.len() {
            let cv = dense[v];
            inner[cv] += self.inner[v];
            degree[cv] += self.degree[v];
            for &(w, wt) in &self.adj[v] {
                let cw = dense[w as usize];
                if cw == cv {
                    inner[cv] += wt;
                } else {
                    edges[cv].push((cw as u32, wt));
                }
            }
        }
        let adj = edges
            .into_iter()
            .map(|mut list| {
                list.sort_unstable_by_key(|e| e.0);
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(list.len());
                for (w, wt) in list {
                    match merged.last_mut() {
                        Some(last) if last.0 == w => last.1 += wt,
                        _ => merged.push((w, wt)),
                    }
                }
                merged
            })
            .collect();
        WeightedGraph {
            adj,
            inner,
            degree,
            total: self.total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> ItemGraph {
        ItemGraph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    }

    #[test]
    fn modularity_single_cluster_is_zero() {
        let g = two_triangles();
        let c = Clustering::from_labels(&[0; 6], 1.0, 0);
        assert!(modularity(&g, &c, 1.0).abs() < 1e-15);
    }

    #[test]
    fn modularity_two_triangles() {
        let g = two_triangles();
        let c = Clustering::from_labels(&[0, 0, 0, 1, 1, 1], 1.0, 0);
        assert!((modularity(&g, &c, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn modularity_empty_graph() {
        let g = ItemGraph::from_edges(4, &[]);
        let c = Clustering::from_labels(&[0, 1, 0, 1], 1.0, 0);
        assert_eq!(modularity(&g, &c, 1.0), 0.0);
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let g = ItemGraph::from_edges(5, &[]);
        let c = louvain(&g, 1.0, 3, None).unwrap();
        assert_eq!(c.num_clusters(), 5);
    }

    #[test]
    fn rejects_nonpositive_resolution() {
        let g = two_triangles();
        assert!(louvain(&g, 0.0, 0, None).is_err());
        assert!(louvain(&g, -1.0, 0, None).is_err());
    }

    #[test]
    fn finds_two_triangles() {
        let g = two_triangles();
        let c = louvain(&g, 1.0, 0, None).unwrap();
        assert_eq!(c.assignment(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn weighted_modularity_matches_item_graph() {
        let g = two_triangles();
        let wg = WeightedGraph::from_item_graph(&g);
        let labels = [0, 0, 1, 1, 2, 2];
        let c = Clustering::from_labels(&labels, 1.0, 0);
        for gamma in [0.5, 1.0, 1.7] {
            assert!((wg.modularity(&labels, gamma) - modularity(&g, &c, gamma)).abs() < 1e-12);
        }
        // aggregation preserves modularity of the induced partition
        let (dense, count) = densify(&[0, 0, 0, 3, 3, 3]);
        let agg = wg.aggregate(&dense, count);
        assert!((agg.modularity(&[0, 1], 1.0) - 0.5).abs() < 1e-12);
        assert!((agg.modularity(&[0, 0], 1.0)).abs() < 1e-12);
    }

    #[test]
    fn cap_splits_large_cluster() {
        // a 10-clique is one community at γ = 1; cap 4 forces splits
        let mut edges = Vec::new();
        for a in 0..10u32 {
            for b in (a + 1)..10 {
                edges.push((a, b));
            }
        }
        let g = ItemGraph::from_edges(10, &edges);
        let c = louvain(&g, 1.0, 0, Some(4)).unwrap();
        assert!(c.sizes().iter().all(|&s| s <= 4), "{:?}", c.sizes());
        assert_eq!(c.sizes().iter().sum::<usize>(), 10);
    }

    #[test]
    fn target_cluster_count_on_cliques() {
        // four 5-cliques in a ring of single bridges
        let mut edges = Vec::new();
        for q in 0..4u32 {
            for a in 0..5 {
                for b in (a + 1)..5 {
                    edges.push((5 * q + a, 5 * q + b));
                }
            }
            edges.push((5 * q + 4, (5 * q + 5) % 20));
        }
        let g = ItemGraph::from_edges(20, &edges);
        let c = louvain_target_clusters(&g, 4, 0, None, 40).unwrap();
        assert_eq!(c.num_clusters(), 4);
        let many = louvain_target_clusters(&g, 20, 0, None, 40).unwrap();
        assert_eq!(many.num_clusters(), 20);
    }
}
