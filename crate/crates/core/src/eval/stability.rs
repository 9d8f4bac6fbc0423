use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::{build_bipartite, louvain, project_co_engagement, Clustering};
use crate::ingest::{temporal_prefix, Dataset};

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand Index from the pair-counting contingency table.
///
/// When the chance-corrected denominator vanishes (both partitions trivial)
/// the result is 1 for identical partitions and 0 otherwise.
pub fn ari(a: &[u32], b: &[u32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("assignments cover {} and {} items", a.len(), b.len())));
    }
    let n = a.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let mut table: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        let same = table.len() == rows.len() && table.len() == cols.len();
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Clusters the co-engagement graph of a dataset snapshot.
pub fn cluster_dataset(dataset: &Dataset, resolution: f64, seed: u64, max_cluster_size: Option<usize>) -> Result<Clustering> {
    let bg = build_bipartite(dataset.num_users, dataset.num_items, &dataset.interactions)?;
    let g = project_co_engagement(&bg);
    louvain(&g, resolution, seed, max_cluster_size)
}

/// ARI between clusterings of consecutive temporal prefixes, compared on
/// the raw item ids present in both snapshots.
pub fn stability_study(
    dataset: &Dataset,
    fractions: &[f64],
    resolution: f64,
    seed: u64,
    max_cluster_size: Option<usize>,
) -> Result<Vec<f64>> {
    if fractions.len() < 2 {
        return Err(Error::invalid("stability needs at least two prefix fractions"));
    }
    let mut snapshots = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let snap = temporal_prefix(dataset, f)?;
        let c = cluster_dataset(&snap, resolution, seed, max_cluster_size)?;
        log::info!("prefix {f}: {} items, {} clusters", snap.num_items, c.num_clusters());
        snapshots.push((snap, c));
    }
    snapshots
        .windows(2)
        .map(|w| {
            let (da, ca) = &w[0];
            let (db, cb) = &w[1];
            let mut la = Vec::new();
            let mut lb = Vec::new();
            for (i, raw) in da.item_ids.raw_ids().iter().enumerate() {
                if let Some(j) = db.item_ids.index(raw) {
                    la.push(ca.cluster_of(i));
                    lb.push(cb.cluster_of(j as usize));
                }
            }
            if la.is_empty() {
                return Err(Error::EmptyDataset("consecutive snapshots share no items".into()));
            }
            ari(&la, &lb)
        })
        .collect()
}
