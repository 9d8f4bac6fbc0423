use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::baseline::item_counts;
use super::report::{metric_names, EvalReport, UserRow};
use crate::error::{Error, Result};
use crate::ingest::UserItems;
use crate::retrieval::RankedList;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecileRow {
    pub decile: usize,
    pub users: usize,
    pub min_degree: usize,
    pub max_degree: usize,
    pub mean: f64,
    pub reference_mean: f64,
    pub relative_gain: f64,
}

/// Splits users sorted by `(train degree, user index)` into ten contiguous
/// buckets; bucket `b` holds positions `b·n/10 .. (b+1)·n/10`.
pub fn decile_buckets(rows: &[UserRow]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&r| (rows[r].train_degree, rows[r].user));
    let n = order.len();
    (0..10).map(|b| order[b * n / 10..(b + 1) * n / 10].to_vec()).collect()
}

fn relative_gain(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if value == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (value - reference) / reference
    }
}

/// Per-decile mean of `metric` for `report` and `reference`, bucketed by
/// the rows of `report`. Both reports must cover the same users.
pub fn engagement_decile_report(report: &EvalReport, reference: &EvalReport, metric: &str) -> Result<Vec<DecileRow>> {
    let col = |r: &EvalReport| {
        metric_names(&r.k_values)
            .iter()
            .position(|m| m == metric)
            .ok_or_else(|| Error::invalid(format!("metric {metric} not in report {}", r.strategy)))
    };
    let (a, b) = (col(report)?, col(reference)?);
    let ref_rows: HashMap<usize, &UserRow> = reference.rows.iter().map(|r| (r.user, r)).collect();
    let mut out = Vec::with_capacity(10);
    for (d, bucket) in decile_buckets(&report.rows).into_iter().enumerate() {
        let n = bucket.len().max(1) as f64;
        let mut mean = 0.0;
        let mut ref_mean = 0.0;
        for &r in &bucket {
            let row = &report.rows[r];
            let other = ref_rows
                .get(&row.user)
                .ok_or_else(|| Error::invalid(format!("user {} missing from reference report", row.user)))?;
            mean += row.values[a];
            ref_mean += other.values[b];
        }
        mean /= n;
        ref_mean /= n;
        out.push(DecileRow {
            decile: d,
            users: bucket.len(),
            min_degree: bucket.iter().map(|&r| report.rows[r].train_degree).min().unwrap_or(0),
            max_degree: bucket.iter().map(|&r| report.rows[r].train_degree).max().unwrap_or(0),
            mean,
            reference_mean: ref_mean,
            relative_gain: relative_gain(mean, ref_mean),
        });
    }
    Ok(out)
}

pub fn write_deciles_csv(path: &Path, preamble: &[String], rows: &[DecileRow]) -> Result<()> {
    let mut s = String::new();
    for line in preamble {
        let _ = writeln!(s, "# {line}");
    }
    s.push_str("decile,users,min_degree,max_degree,mean,reference_mean,relative_gain\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            r.decile, r.users, r.min_degree, r.max_degree, r.mean, r.reference_mean, r.relative_gain
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(format!("write {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularityReport {
    /// Items by descending train count, ties to the lower id.
    pub items_by_popularity: Vec<u32>,
    pub counts: Vec<usize>,
    /// Cumulative interaction share of the top `r+1` items.
    pub cumulative_share: Vec<f64>,
    /// Mean 1-based popularity rank over all recommended slots.
    pub mean_rank_recommended: f64,
    /// Mean 1-based popularity rank over all held-out interactions.
    pub mean_rank_heldout: f64,
}

impl PopularityReport {
    pub fn top_share(&self, n: usize) -> f64 {
        match n.min(self.cumulative_share.len()) {
            0 => 0.0,
            m => self.cumulative_share[m - 1],
        }
    }
}

pub fn popularity_report(train: &UserItems, num_items: usize, recommendations: &[RankedList], heldout: &UserItems) -> Result<PopularityReport> {
    if num_items == 0 {
        return Err(Error::invalid("no items"));
    }
    let counts = item_counts(train, num_items);
    let mut order: Vec<u32> = (0..num_items as u32).collect();
    order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    let mut rank = vec![0usize; num_items];
    for (r, &i) in order.iter().enumerate() {
        rank[i as usize] = r + 1;
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    let mut acc = 0usize;
    let cumulative_share = order
        .iter()
        .map(|&i| {
            acc += counts[i as usize];
            acc as f64 / total
        })
        .collect();

    let mean_rank = |items: &mut dyn Iterator<Item = u32>| -> Result<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for i in items {
            let r = *rank
                .get(i as usize)
                .ok_or_else(|| Error::invalid(format!("item {i} outside the catalogue")))?;
            sum += r as f64;
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { sum / n as f64 })
    };
    let mean_rank_recommended = mean_rank(&mut recommendations.iter().flat_map(|l| l.items.iter().copied()))?;
    let mean_rank_heldout = mean_rank(&mut (0..heldout.num_users()).flat_map(|u| heldout.items(u).iter().copied()))?;

    Ok(PopularityReport {
        items_by_popularity: order,
        counts,
        cumulative_share,
        mean_rank_recommended,
        mean_rank_heldout,
    })
}

/// `rank,item,count,cumulative_share` rows followed by the two mean ranks
/// as comment lines.
pub fn write_popularity_csv(path: &Path, preamble: &[String], p: &PopularityReport) -> Result<()> {
    let mut s = String::new();
    for line in preamble {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "# mean_rank_recommended={:.4}", p.mean_rank_recommended);
    let _ = writeln!(s, "# mean_rank_heldout={:.4}", p.mean_rank_heldout);
    s.push_str("rank,item,count,cumulative_share\n");
    for (r, &i) in p.items_by_popularity.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{:.6}", r + 1, i, p.counts[i as usize], p.cumulative_share[r]);
    }
    std::fs::write(path, s).map_err(|e| Error::io(format!("write {}", path.display()), e))
}
