//! Personalized PageRank on the user-item bipartite graph and per-user
//! interest profiles over clusters.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, Clustering};
use crate::ingest::{parse_kv_line, UserItems};

#[derive(Debug, Clone, Copy)]
pub struct PprParams {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for PprParams {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tolerance: 1e-8,
            max_iters: 200,
        }
    }
}

/// Item-side PPR mass for one seed user, renormalized to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PprScores {
    pub user: usize,
    /// `(item, mass)` for every item with positive mass, ascending by item.
    pub scores: Vec<(u32, f64)>,
    pub damping: f64,
    /// L1 change of the final iteration.
    pub residual: f64,
    pub iterations: usize,
}

/// Random walk with restart at `user` over the undirected bipartite graph.
///
/// Iterates `π ← (1−α)e_user + α Pᵀπ` where `P` moves uniformly to a
/// neighbour, until the L1 change drops below `tolerance`.
pub fn ppr(bg: &BipartiteGraph, user: usize, params: &PprParams) -> Result<PprScores> {
    let PprParams {
        damping,
        tolerance,
        max_iters,
    } = *params;
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::invalid(format!("damping {damping} outside (0,1)")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be > 0"));
    }
    if user >= bg.num_users() {
        return Err(Error::invalid(format!("user {user} out of range")));
    }
    if bg.user_degree(user) == 0 {
        return Err(Error::invalid(format!("user {user} has no engagement, PPR undefined")));
    }

    let (nu, ni) = (bg.num_users(), bg.num_items());
    let mut pu = vec![0.0f64; nu];
    let mut pi = vec![0.0f64; ni];
    pu[user] = 1.0;
    let mut next_u = vec![0.0f64; nu];
    let mut next_i = vec![0.0f64; ni];
    // mass divided by degree, the share sent along each edge
    let mut share_u = vec![0.0f64; nu];
    let mut share_i = vec![0.0f64; ni];
    let inv_du: Vec<f64> = (0..nu).map(|u| 1.0 / bg.user_degree(u).max(1) as f64).collect();
    let inv_di: Vec<f64> = (0..ni).map(|i| 1.0 / bg.item_degree(i).max(1) as f64).collect();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        for ((s, p), d) in share_u.iter_mut().zip(&pu).zip(&inv_du) {
            *s = p * d;
        }
        for ((s, p), d) in share_i.iter_mut().zip(&pi).zip(&inv_di) {
            *s = p * d;
        }
        for (u, out) in next_u.iter_mut().enumerate() {
            let s: f64 = bg.user_items(u).iter().map(|&i| share_i[i as usize]).sum();
            *out = damping * s;
        }
        next_u[user] += 1.0 - damping;
        for (i, out) in next_i.iter_mut().enumerate() {
            let s: f64 = bg.item_users(i).iter().map(|&u| share_u[u as usize]).sum();
            *out = damping * s;
        }
        residual = l1(&pu, &next_u) + l1(&pi, &next_i);
        std::mem::swap(&mut pu, &mut next_u);
        std::mem::swap(&mut pi, &mut next_i);
        if residual < tolerance {
            break;
        }
    }

    let total: f64 = pi.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical(format!("user {user}: no PPR mass reached any item")));
    }
    let scores = pi
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| (i as u32, m / total))
        .collect();
    Ok(PprScores {
        user,
        scores,
        damping,
        residual,
        iterations,
    })
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// A user's normalized preference over interest clusters (η_u).
#[derive(Debug, Clone, PartialEq)]
pub struct InterestProfile {
    pub user: usize,
    /// `(cluster, weight)` with positive weights, ascending by cluster.
    pub weights: Vec<(u32, f64)>,
    pub num_clusters: usize,
}

impl InterestProfile {
    /// Sums per-cluster mass and normalizes; zero-mass clusters are dropped.
    pub fn from_cluster_mass(user: usize, mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid(format!("user {user}: interest mass is zero")));
        }
        let num_clusters = mass.len();
        let weights = mass
            .into_iter()
            .enumerate()
            .filter(|(_, m)| *m > 0.0)
            .map(|(c, m)| (c as u32, m / total))
            .collect();
        Ok(Self {
            user,
            weights,
            num_clusters,
        })
    }

    pub fn weight(&self, cluster: u32) -> f64 {
        self.weights
            .binary_search_by_key(&cluster, |w| w.0)
            .map_or(0.0, |p| self.weights[p].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_clusters];
        for &(c, w) in &self.weights {
            out[c as usize] = w;
        }
        out
    }
}

pub fn interest_from_ppr(scores: &PprScores, clustering: &Clustering) -> Result<InterestProfile> {
    let mut mass = vec![0.0; clustering.num_clusters()];
    for &(item, m) in &scores.scores {
        if item as usize >= clustering.num_items() {
            return Err(Error::invalid(format!("item {item} not covered by clustering")));
        }
        mass[clustering.cluster_of(item as usize) as usize] += m;
    }
    InterestProfile::from_cluster_mass(scores.user, mass)
}

/// Histogram of the user's train interactions over clusters.
pub fn interest_from_counts(train: &UserItems, user: usize, clustering: &Clustering) -> Result<InterestProfile> {
    let items = train.items(user);
    if items.is_empty() {
        return Err(Error::invalid(format!("user {user} has no train interactions")));
    }
    let mut mass = vec![0.0; clustering.num_clusters()];
    for &item in items {
        mass[clustering.cluster_of(item as usize) as usize] += 1.0;
    }
    InterestProfile::from_cluster_mass(user, mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMethod {
    Ppr,
    Counts,
}

impl std::str::FromStr for ProfileMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppr" => Ok(Self::Ppr),
            "counts" => Ok(Self::Counts),
            other => Err(Error::Config(format!("unknown interest method {other:?}"))),
        }
    }
}

/// One profile per user, in user order. Users are processed in parallel.
pub fn build_all_profiles(
    bg: &BipartiteGraph,
    clustering: &Clustering,
    method: ProfileMethod,
    params: &PprParams,
) -> Result<Vec<InterestProfile>> {
    (0..bg.num_users())
        .into_par_iter()
        .map(|u| {
            let profile = match method {
                ProfileMethod::Ppr => ppr(bg, u, params).and_then(|s| interest_from_ppr(&s, clustering)),
                ProfileMethod::Counts => interest_from_counts(bg.user_index(), u, clustering),
            };
            profile.map_err(|e| Error::User {
                user: u,
                source: Box::new(e),
            })
        })
        .collect()
}

/// `user<TAB>cluster:weight,...` lines with 6-decimal weights.
pub fn write_profiles(path: &Path, preamble: &[String], profiles: &[InterestProfile]) -> Result<()> {
    let ctx = || format!("write {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    let k = profiles.first().map_or(0, |p| p.num_clusters);
    let mut body = || -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# K={k} users={}", profiles.len())?;
        for p in profiles {
            let row: Vec<String> = p.weights.iter().map(|(c, x)| format!("{c}:{x:.6}")).collect();
            writeln!(w, "{}\t{}", p.user, row.join(","))?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(ctx(), e))
}

/// Reads a profile file; weights are renormalized after decimal rounding.
pub fn read_profiles(path: &Path) -> Result<Vec<InterestProfile>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut k = None;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if let Some(c) = line.strip_prefix('#') {
            if let Some(v) = parse_kv_line(c).get("K") {
                k = v.parse::<usize>().ok();
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let k = k.ok_or_else(|| Error::parse(n + 1, "missing `# K=` header"))?;
        let bad = || Error::parse(n + 1, "expected user<TAB>cluster:weight,...");
        let (user, rest) = line.split_once('\t').ok_or_else(bad)?;
        let user: usize = user.parse().map_err(|_| bad())?;
        let mut mass = vec![0.0; k];
        for pair in rest.split(',').filter(|s| !s.is_empty()) {
            let (c, w) = pair.split_once(':').ok_or_else(bad)?;
            let c: usize = c.parse().map_err(|_| bad())?;
            if c >= k {
                return Err(Error::parse(n + 1, format!("cluster {c} >= K={k}")));
            }
            mass[c] = w.parse().map_err(|_| bad())?;
        }
        out.push(InterestProfile::from_cluster_mass(user, mass)?);
    }
    Ok(out)
}
