//! Shared fixtures and brute-force oracles for the integration suites.
#![allow(dead_code)]

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use interest_retrieval::cli::{Pipeline, PipelineConfig, RawConfig, Strategy};
use interest_retrieval::eval::{engagement_decile_report, DecileRow, EvalReport};
use interest_retrieval::graph::BipartiteGraph;
use interest_retrieval::retrieval::TimingReport;
use interest_retrieval::Result;

/// Writes a MovieLens-style `user::item::rating::timestamp` file in which
/// users draw most items from one or two item groups, plus some globally
/// popular items.
pub fn synthetic_ratings(path: &Path, users: usize, items: usize, groups: usize, per_user: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group_size = items / groups;
    let mut out = String::new();
    for u in 0..users {
        let home: Vec<usize> = (0..1 + rng.random_range(0..2)).map(|_| rng.random_range(0..groups)).collect();
        let mut seen = HashSet::new();
        while seen.len() < per_user {
            let item = if rng.random_bool(0.8) {
                let g = home[rng.random_range(0..home.len())];
                // skewed towards the front of the group
                let r: f64 = rng.random();
                g * group_size + ((r * r) * group_size as f64) as usize
            } else {
                let r: f64 = rng.random();
                ((r * r * r) * items as f64) as usize
            };
            seen.insert(item.min(items - 1));
        }
        let mut seen: Vec<usize> = seen.into_iter().collect();
        seen.sort_unstable();
        for item in seen {
            let ts = 978_300_000 + rng.random_range(0..1_000_000);
            let rating = rng.random_range(1..=5);
            writeln!(out, "{}::{}::{}::{}", u + 1, item + 1, rating, ts).unwrap();
        }
    }
    std::fs::write(path, out).unwrap();
}

/// Precision, recall and NDCG at `k` by direct set and loop evaluation.
pub fn metric_oracle(recommended: &[u32], relevant: &[u32], k: usize) -> (f64, Option<f64>, f64) {
    let rel: HashSet<u32> = relevant.iter().copied().collect();
    let top: Vec<u32> = recommended.iter().copied().take(k).collect();
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (pos, item) in top.iter().enumerate() {
        if rel.contains(item) {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let precision = if top.is_empty() { 0.0 } else { hits as f64 / top.len() as f64 };
    let recall = (!rel.is_empty()).then(|| hits as f64 / rel.len() as f64);
    let mut idcg = 0.0;
    for pos in 0..k.min(rel.len()) {
        idcg += 1.0 / ((pos + 2) as f64).log2();
    }
    let ndcg = if idcg == 0.0 { 0.0 } else { dcg / idcg };
    (precision, recall, ndcg)
}

/// Item-side random-walk-with-restart mass from a dense linear solve of
/// `(I − α Pᵀ) π = (1 − α) e_user` over all user and item nodes,
/// renormalized over items.
pub fn dense_ppr(bg: &BipartiteGraph, user: usize, damping: f64) -> Vec<f64> {
    let (nu, ni) = (bg.num_users(), bg.num_items());
    let n = nu + ni;
    let mut p = DMatrix::<f64>::zeros(n, n);
    for u in 0..nu {
        for &i in bg.user_items(u) {
            let i = nu + i as usize;
            p[(u, i)] = 1.0 / bg.user_degree(u) as f64;
            p[(i, u)] = 1.0 / bg.item_degree(i - nu) as f64;
        }
    }
    let a = DMatrix::<f64>::identity(n, n) - p.transpose() * damping;
    let mut b = DVector::<f64>::zeros(n);
    b[user] = 1.0 - damping;
    let x = a.lu().solve(&b).expect("singular PPR system");
    let items: Vec<f64> = (0..ni).map(|i| x[nu + i]).collect();
    let total: f64 = items.iter().sum();
    items.iter().map(|v| v / total).collect()
}

/// Every set partition of `0..n` as a restricted growth string.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            prefix.push(l);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, &mut out);
    out
}

/// `Q = 1/2m Σ_ij [A_ij − γ k_i k_j / 2m] δ(c_i, c_j)` over a dense adjacency.
pub fn modularity_oracle(adj: &[Vec<bool>], labels: &[usize], resolution: f64) -> f64 {
    let n = adj.len();
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().filter(|&&e| e).count() as f64).collect();
    let two_m: f64 = deg.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                let a = if adj[i][j] { 1.0 } else { 0.0 };
                q += a - resolution * deg[i] * deg[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Canonical relabelling: clusters numbered by first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Results of the end-to-end reproduction on a MovieLens-format file.
#[derive(Debug)]
pub struct Reproduction {
    pub workdir: PathBuf,
    pub num_items: usize,
    pub num_clusters: usize,
    pub n_clusters: usize,
    pub popular: EvalReport,
    /// Per seed: fusion none, full scan.
    pub vanilla: Vec<EvalReport>,
    /// Per seed: concat fusion, cluster-restricted retrieval.
    pub uic: Vec<EvalReport>,
    /// First seed, concat model: full scan vs cluster-restricted timing.
    pub timing_full: TimingReport,
    pub timing_cluster: TimingReport,
    /// First seed: NDCG@50 with 50 and 300 selected clusters.
    pub ablation: (f64, f64),
    pub ari: Vec<f64>,
    pub deciles: Vec<DecileRow>,
    pub deciles_csv: PathBuf,
}

fn config(text: &str, overrides: &[String]) -> Result<PipelineConfig> {
    let mut raw = RawConfig::parse(text, Path::new("."))?;
    for o in overrides {
        raw.set(o)?;
    }
    PipelineConfig::from_raw(raw)
}

/// Runs ingest → cluster → interest → stability, the popularity baseline,
/// and for each seed a vanilla (fusion none, full scan) and a UIC (concat
/// fusion, cluster-restricted) model over one shared split and clustering.
pub fn reproduce(ratings: &Path, workdir: &Path, seeds: &[u64], overrides: &[&str]) -> Result<Reproduction> {
    let base = format!(
        "seed = {}\nworkdir = {}\ndata.path = {}\ndata.format = movielens\nlouvain.cluster_ratio = 0.10\nretrieval.n_clusters = 250\nretrieval.mode = top\n",
        seeds[0],
        workdir.display(),
        ratings.display()
    );
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let with = |extra: &[String]| -> Result<Pipeline> {
        let mut all = overrides.clone();
        all.extend_from_slice(extra);
        Pipeline::new(config(&base, &all)?)
    };

    let setup = with(&["model.fusion=none".into()])?;
    setup.ingest()?;
    let clusters = setup.cluster()?;
    setup.interest()?;
    let ari = setup.stability()?;
    setup.retrieve(Strategy::Popular)?;
    let popular = setup.evaluate(Strategy::Popular, None, false)?;

    let mut vanilla = Vec::new();
    let mut uic = Vec::new();
    let mut first = None;
    for (n, &seed) in seeds.iter().enumerate() {
        let seeded = |fusion: &str, extra: &[&str]| {
            let mut e = vec![format!("model.fusion={fusion}"), format!("model.seed={seed}"), format!("retrieval.seed={seed}")];
            e.extend(extra.iter().map(|s| s.to_string()));
            with(&e)
        };
        let none = seeded("none", &[])?;
        none.train()?;
        none.retrieve(Strategy::Full)?;
        vanilla.push(none.evaluate(Strategy::Full, None, false)?);

        let concat = seeded("concat", &[])?;
        concat.train()?;
        let mut extra = None;
        if n == 0 {
            let mut ndcg = Vec::new();
            for sel in ["50", "300"] {
                let p = seeded("concat", &[&format!("retrieval.n_clusters={sel}")])?;
                p.retrieve(Strategy::Cluster)?;
                ndcg.push(p.evaluate(Strategy::Cluster, None, false)?.mean("ndcg@50"));
            }
            let (_, timing_full) = concat.retrieve(Strategy::Full)?;
            extra = Some((timing_full, (ndcg[0], ndcg[1])));
        }
        let (_, timing_cluster) = concat.retrieve(Strategy::Cluster)?;
        let deciles_ref = (n == 0).then_some("full-none");
        uic.push(concat.evaluate(Strategy::Cluster, deciles_ref, n == 0)?);
        if let Some((timing_full, ablation)) = extra {
            let deciles_csv = concat.ws.deciles("cluster-concat", "full-none");
            let deciles = engagement_decile_report(&uic[0], &vanilla[0], "ndcg@50")?;
            first = Some((timing_full, timing_cluster, ablation, deciles, deciles_csv));
        }
    }
    let (timing_full, timing_cluster, ablation, deciles, deciles_csv) = first.unwrap();
    Ok(Reproduction {
        workdir: workdir.to_path_buf(),
        num_items: clusters.items,
        num_clusters: clusters.clusters,
        n_clusters: 250,
        popular,
        vanilla,
        uic,
        timing_full,
        timing_cluster,
        ablation,
        ari,
        deciles,
        deciles_csv,
    })
}
