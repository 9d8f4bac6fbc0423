use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{ndcg_at_k, precision_at_k, recall_at_k};
use crate::error::{Error, Result};
use crate::ingest::UserItems;
use crate::retrieval::{RankedList, TimingReport};

/// Metrics for one evaluated user, in `metric_names` order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRow {
    pub user: usize,
    pub train_degree: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: String,
    pub k_values: Vec<usize>,
    pub users: usize,
    pub means: BTreeMap<String, f64>,
    /// Population standard deviation across runs; zero for a single run.
    pub std: BTreeMap<String, f64>,
    pub excluded_users: usize,
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_user_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingReport>,
    #[serde(skip)]
    pub rows: Vec<UserRow>,
}

pub fn metric_names(k_values: &[usize]) -> Vec<String> {
    let mut names = Vec::new();
    for &k in k_values {
        names.push(format!("precision@{k}"));
        names.push(format!("recall@{k}"));
        names.push(format!("ndcg@{k}"));
    }
    names
}

/// Ranks for every user with held-out items and averages the metrics.
///
/// `recommend` must already exclude the user's train items and return at
/// least `max(k_values)` items when that many candidates exist.
pub fn evaluate<F>(strategy: &str, train: &UserItems, test: &UserItems, k_values: &[usize], mut recommend: F) -> Result<EvalReport>
where
    F: FnMut(usize) -> Result<RankedList>,
{
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(Error::invalid("k values must be non-empty and positive"));
    }
    let mut rows = Vec::new();
    let mut excluded = 0;
    for user in 0..test.num_users() {
        let relevant = test.items(user);
        if relevant.is_empty() {
            excluded += 1;
            continue;
        }
        let list = recommend(user)?;
        rows.push(score_user(user, train.degree(user), &list.items, relevant, k_values));
    }
    Ok(report_from_rows(strategy, k_values, rows, excluded))
}

pub fn score_user(user: usize, train_degree: usize, recommended: &[u32], relevant: &[u32], k_values: &[usize]) -> UserRow {
    let mut values = Vec::with_capacity(3 * k_values.len());
    for &k in k_values {
        values.push(precision_at_k(recommended, relevant, k));
        values.push(recall_at_k(recommended, relevant, k).unwrap_or(0.0));
        values.push(ndcg_at_k(recommended, relevant, k));
    }
    UserRow {
        user,
        train_degree,
        values,
    }
}

pub fn report_from_rows(strategy: &str, k_values: &[usize], rows: Vec<UserRow>, excluded: usize) -> EvalReport {
    let names = metric_names(k_values);
    let n = rows.len().max(1) as f64;
    let means = names
        .iter()
        .enumerate()
        .map(|(m, name)| (name.clone(), rows.iter().map(|r| r.values[m]).sum::<f64>() / n))
        .collect();
    let std = names.iter().map(|name| (name.clone(), 0.0)).collect();
    EvalReport {
        strategy: strategy.to_string(),
        k_values: k_values.to_vec(),
        users: rows.len(),
        means,
        std,
        excluded_users: excluded,
        runs: 1,
        per_user_path: None,
        timing: None,
        rows,
    }
}

impl EvalReport {
    pub fn mean(&self, metric: &str) -> f64 {
        self.means.get(metric).copied().unwrap_or(f64::NAN)
    }

    /// Mean and population standard deviation of each metric across runs
    /// (e.g. seeds). Per-user rows are taken from the first run.
    pub fn combine(runs: &[EvalReport]) -> Result<EvalReport> {
        let first = runs.first().ok_or_else(|| Error::invalid("no runs to combine"))?;
        if runs.iter().any(|r| r.k_values != first.k_values) {
            return Err(Error::invalid("runs were evaluated at different K values"));
        }
        let n = runs.len() as f64;
        let mut means = BTreeMap::new();
        let mut std = BTreeMap::new();
        for name in first.means.keys() {
            let vals: Vec<f64> = runs.iter().map(|r| r.mean(name)).collect();
            let mu = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            means.insert(name.clone(), mu);
            std.insert(name.clone(), var.sqrt());
        }
        Ok(EvalReport {
            strategy: first.strategy.clone(),
            k_values: first.k_values.clone(),
            users: first.users,
            means,
            std,
            excluded_users: first.excluded_users,
            runs: runs.len(),
            per_user_path: first.per_user_path.clone(),
            timing: first.timing.clone(),
            rows: first.rows.clone(),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    /// Tab-separated per-user rows with a header line after `# ` preamble lines.
    pub fn write_rows(&self, path: &Path, preamble: &[String]) -> Result<()> {
        let ctx = || format!("write {}", path.display());
        let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut w = BufWriter::new(file);
        let names = metric_names(&self.k_values);
        let mut body = || -> std::io::Result<()> {
            for line in preamble {
                writeln!(w, "# {line}")?;
            }
            writeln!(w, "user\ttrain_degree\t{}", names.join("\t"))?;
            for r in &self.rows {
                let vals: Vec<String> = r.values.iter().map(|v| format!("{v:.6}")).collect();
                writeln!(w, "{}\t{}\t{}", r.user, r.train_degree, vals.join("\t"))?;
            }
            w.flush()
        };
        body().map_err(|e| Error::io(ctx(), e))
    }
}
