//! Top-K retrieval over precomputed embeddings.
//!
//! Three candidate strategies share one exact scorer: a full scan over every
//! item, a pool restricted to the user's selected interest clusters, and a
//! pool restricted to the items of the nearest KMeans centroids.

mod bench;
mod kmeans;
mod select;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, NdFloat};

pub use bench::{benchmark_inference, TimingReport};
pub use kmeans::{kmeans, KmeansModel};
pub use select::{select_clusters, user_seed, SelectionMode};

use crate::error::{Error, Result};
use crate::graph::Clustering;
use crate::interest::InterestProfile;
use crate::model::{softmax, FusionMode, TwoTowerModel};

/// Top-K items for one user, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<u32>,
    pub scores: Vec<f32>,
    /// Items scored to produce this list.
    pub candidates_scored: usize,
}

impl RankedList {
    pub fn empty(user: usize) -> Self {
        Self {
            user,
            items: Vec::new(),
            scores: Vec::new(),
            candidates_scored: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Per-user/per-item `f32` embeddings plus the attention terms when the
/// model scales scores by `α_{u,c}`.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    users: Array2<f32>,
    items: Array2<f32>,
    attention: Option<(Array2<f32>, Vec<u32>)>,
}

impl EmbeddingIndex {
    pub fn new(users: Array2<f32>, items: Array2<f32>) -> Result<Self> {
        if users.ncols() != items.ncols() {
            return Err(Error::invalid(format!(
                "user dim {} != item dim {}",
                users.ncols(),
                items.ncols()
            )));
        }
        Ok(Self {
            users: users.as_standard_layout().into_owned(),
            items: items.as_standard_layout().into_owned(),
            attention: None,
        })
    }

    /// Scores become `α_{u,c(i)} · ⟨e_u, e_i⟩`.
    pub fn with_attention(mut self, cluster_embedding: Array2<f32>, item_cluster: Vec<u32>) -> Result<Self> {
        if cluster_embedding.ncols() != self.items.ncols() || item_cluster.len() != self.items.nrows() {
            return Err(Error::invalid("attention terms do not match the embedding index"));
        }
        if item_cluster.iter().any(|&c| c as usize >= cluster_embedding.nrows()) {
            return Err(Error::invalid("item cluster id outside the cluster embedding table"));
        }
        self.attention = Some((cluster_embedding, item_cluster));
        Ok(self)
    }

    pub fn from_model<F: NdFloat>(
        model: &TwoTowerModel<F>,
        profiles: Option<&[InterestProfile]>,
        clustering: Option<&Clustering>,
    ) -> Result<Self> {
        let (users, items) = model.embed_all(profiles)?;
        let index = Self::new(users, items)?;
        if model.fusion() == FusionMode::Attention {
            let c = clustering.ok_or_else(|| Error::invalid("attention model needs the clustering"))?;
            let z = model.cluster_embedding.as_ref().unwrap().mapv(|v| v.to_f32().unwrap());
            return index.with_attention(z, c.assignment().to_vec());
        }
        Ok(index)
    }

    pub fn num_users(&self) -> usize {
        self.users.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.items.nrows()
    }

    pub fn user_embeddings(&self) -> &Array2<f32> {
        &self.users
    }

    pub fn item_embeddings(&self) -> &Array2<f32> {
        &self.items
    }

    pub(crate) fn scorer(&self, user: usize) -> Scorer<'_> {
        let e_u = self.users.row(user);
        let alpha = self
            .attention
            .as_ref()
            .map(|(z, clusters)| (softmax(z.dot(&e_u)).to_vec(), clusters.as_slice()));
        Scorer {
            e_u: e_u.to_slice().expect("standard layout"),
            items: &self.items,
            alpha,
        }
    }

    pub fn score(&self, user: usize, item: usize) -> f32 {
        self.scorer(user).score(item)
    }
}

pub(crate) struct Scorer<'a> {
    e_u: &'a [f32],
    items: &'a Array2<f32>,
    alpha: Option<(Vec<f32>, &'a [u32])>,
}

impl Scorer<'_> {
    #[inline]
    pub(crate) fn score(&self, item: usize) -> f32 {
        let s = dot(self.e_u, self.items.row(item).to_slice().expect("standard layout"));
        match &self.alpha {
            Some((alpha, clusters)) => alpha[clusters[item] as usize] * s,
            None => s,
        }
    }

    pub(crate) fn e_u(&self) -> ArrayView1<'_, f32> {
        ArrayView1::from(self.e_u)
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 8..a.len() {
        tail += a[k] * b[k];
    }
    acc.iter().sum::<f32>() + tail
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    item: u32,
    score: f32,
}

impl Eq for Entry {}

// "Greater" means worse: lower score, then higher item id. The heap top is
// the weakest kept entry.
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then(self.item.cmp(&other.item))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact top-`k` by score, ties to the lower item id.
pub fn top_k(scored: impl IntoIterator<Item = (u32, f32)>, k: usize) -> Vec<(u32, f32)> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Entry> = BinaryHeap::with_capacity(k + 1);
    for (item, score) in scored {
        let e = Entry { item, score };
        if heap.len() < k {
            heap.push(e);
        } else if e < *heap.peek().unwrap() {
            heap.pop();
            heap.push(e);
        }
    }
    heap.into_sorted_vec().into_iter().map(|e| (e.item, e.score)).collect()
}

/// Ranks `candidates` (minus the sorted `exclude` list) for `user`.
pub fn rank_candidates(
    index: &EmbeddingIndex,
    user: usize,
    candidates: impl IntoIterator<Item = u32>,
    exclude: &[u32],
    k: usize,
) -> RankedList {
    let scorer = index.scorer(user);
    let mut scored = 0usize;
    let top = top_k(
        candidates
            .into_iter()
            .filter(|i| exclude.binary_search(i).is_err())
            .map(|i| {
                scored += 1;
                (i, scorer.score(i as usize))
            }),
        k,
    );
    let (items, scores) = top.into_iter().unzip();
    RankedList {
        user,
        items,
        scores,
        candidates_scored: scored,
    }
}

/// Exact top-`k` over every item the user has not engaged.
pub fn full_scan_topk(index: &EmbeddingIndex, user: usize, exclude: &[u32], k: usize) -> RankedList {
    rank_candidates(index, user, 0..index.num_items() as u32, exclude, k)
}

/// Cluster-restricted retrieval parameters.
#[derive(Debug, Clone, Copy)]
pub struct ClusterQuery {
    pub n_clusters: usize,
    pub k: usize,
    pub mode: SelectionMode,
    pub seed: u64,
}

/// Exact top-`k` inside the union of the user's selected interest clusters.
pub fn cluster_topk(
    index: &EmbeddingIndex,
    user: usize,
    profile: &InterestProfile,
    clustering: &Clustering,
    query: &ClusterQuery,
    exclude: &[u32],
) -> Result<RankedList> {
    let seed = select::user_seed(query.seed, user);
    let chosen = select_clusters(profile, query.n_clusters, query.mode, seed)?;
    if chosen.iter().any(|&c| c as usize >= clustering.num_clusters()) {
        return Err(Error::invalid("profile refers to a cluster outside the clustering"));
    }
    let pool = chosen.iter().flat_map(|&c| clustering.members(c as usize).iter().copied());
    let list = rank_candidates(index, user, pool, exclude, query.k);
    if list.candidates_scored == 0 {
        log::debug!("user {user}: empty candidate pool");
    }
    Ok(list)
}

/// Exact top-`k` inside the items of the `n_centroids` centroids with the
/// highest dot product against `e_u`.
pub fn kmeans_topk(index: &EmbeddingIndex, user: usize, km: &KmeansModel, n_centroids: usize, exclude: &[u32], k: usize) -> RankedList {
    let scorer = index.scorer(user);
    let e_u = scorer.e_u();
    let centroid_scores = km.centroids.dot(&e_u);
    let ranked = top_k(
        centroid_scores.iter().enumerate().map(|(c, &s)| (c as u32, s)),
        n_centroids,
    );
    let pool = ranked.iter().flat_map(|&(c, _)| km.members(c as usize).iter().copied());
    rank_candidates(index, user, pool, exclude, k)
}

/// `user<TAB>item:score,...` lines with 4-decimal scores.
pub fn write_recommendations(path: &Path, preamble: &[String], lists: &[RankedList]) -> Result<()> {
    let ctx = || format!("write {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        for l in lists {
            let row: Vec<String> = l
                .items
                .iter()
                .zip(&l.scores)
                .map(|(i, s)| format!("{i}:{s:.4}"))
                .collect();
            writeln!(w, "{}\t{}", l.user, row.join(","))?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(ctx(), e))
}

pub fn read_recommendations(path: &Path) -> Result<Vec<RankedList>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let bad = || Error::parse(n + 1, "expected user<TAB>item:score,...");
        let (user, rest) = line.split_once('\t').ok_or_else(bad)?;
        let mut list = RankedList::empty(user.parse().map_err(|_| bad())?);
        for pair in rest.split(',').filter(|s| !s.is_empty()) {
            let (i, s) = pair.split_once(':').ok_or_else(bad)?;
            list.items.push(i.parse().map_err(|_| bad())?);
            list.scores.push(s.parse().map_err(|_| bad())?);
        }
        out.push(list);
    }
    Ok(out)
}
