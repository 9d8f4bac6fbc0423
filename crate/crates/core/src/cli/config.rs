//! Flat `key = value` pipeline configuration.
//!
//! Keys use dotted section prefixes (`model.lr`, `louvain.resolution`).
//! `#` starts a comment. Unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{CsvColumns, SplitSpec};
use crate::interest::{PprParams, ProfileMethod};
use crate::model::{FusionMode, TrainConfig};
use crate::retrieval::SelectionMode;

/// Keys with their defaults. Empty means unset. Per-stage seeds fall back to
/// the mandatory top-level `seed`.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", ""),
    ("workdir", "work"),
    ("threads", "0"),
    ("data.path", ""),
    ("data.format", "movielens"),
    ("data.csv.user", "user_id"),
    ("data.csv.item", "item_id"),
    ("data.csv.value", ""),
    ("data.csv.timestamp", ""),
    ("filter.min_user_degree", "20"),
    ("filter.min_item_degree", ""),
    ("split.train", "0.8"),
    ("split.val", "0.1"),
    ("split.test", "0.1"),
    ("split.seed", ""),
    ("louvain.resolution", "1.1"),
    ("louvain.cluster_ratio", "0"),
    ("louvain.search_steps", "30"),
    ("louvain.seed", ""),
    ("louvain.max_cluster_size", "0"),
    ("interest.method", "ppr"),
    ("interest.damping", "0.85"),
    ("interest.tolerance", "1e-8"),
    ("interest.max_iters", "200"),
    ("model.fusion", "concat"),
    ("model.d_in", "64"),
    ("model.d_int", "32"),
    ("model.tower", "128,64"),
    ("model.lr", "0.001"),
    ("model.weight_decay", "0.0005"),
    ("model.dropout", "0.1"),
    ("model.batch_size", "4096"),
    ("model.negatives", "4"),
    ("model.max_epochs", "100"),
    ("model.eval_every", "5"),
    ("model.patience", "5"),
    ("model.seed", ""),
    ("retrieval.strategy", "cluster"),
    ("retrieval.n_clusters", "250"),
    ("retrieval.mode", "top"),
    ("retrieval.k", "50"),
    ("retrieval.seed", ""),
    ("retrieval.kmeans_ratio", "0.1"),
    ("retrieval.kmeans_iters", "100"),
    ("retrieval.repetitions", "3"),
    ("eval.k_values", "10,20,50"),
    ("stability.fractions", "0.99,0.98,0.97,0.96,0.95"),
    ("stability.resolution", "1.1"),
    ("grid.lr", "0.0005,0.001,0.005"),
    ("grid.dropout", "0.1,0.3,0.5"),
];

/// Raw resolved key/value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

fn parse_line(line: &str, n: usize) -> Result<Option<(String, String)>> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("line {n}: expected key = value")))?;
    Ok(Some((k.trim().to_string(), v.trim().to_string())))
}

impl RawConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut values: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (n, line) in text.lines().enumerate() {
            if let Some((k, v)) = parse_line(line, n + 1)? {
                if !values.contains_key(&k) {
                    return Err(Error::Config(format!("line {}: unknown key {k:?}", n + 1)));
                }
                values.insert(k, v);
            }
        }
        Ok(Self {
            values,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = parse_line(assignment, 0)?.ok_or_else(|| Error::Config("empty --set".into()))?;
        if !self.values.contains_key(&k) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        self.values.insert(k, v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// First 16 hex digits of the SHA-256 of the resolved `key=value` lines.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::Config(format!("{key} = {v:?} is not a valid value")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: bad element {s:?}"))))
            .collect()
    }

    fn seed(&self, key: &str) -> Result<u64> {
        if self.get(key).is_empty() {
            if self.get("seed").is_empty() {
                return Err(Error::Config("`seed` is mandatory".into()));
            }
            return self.typed("seed");
        }
        self.typed(key)
    }

    fn path(&self, key: &str) -> PathBuf {
        let p = PathBuf::from(self.get(key));
        if p.is_absolute() { p } else { self.base_dir.join(p) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    MovieLens,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Popular,
    Full,
    Cluster,
    Kmeans,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "popular" => Ok(Self::Popular),
            "full" => Ok(Self::Full),
            "cluster" => Ok(Self::Cluster),
            "kmeans" => Ok(Self::Kmeans),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Popular => "popular",
            Self::Full => "full",
            Self::Cluster => "cluster",
            Self::Kmeans => "kmeans",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub raw: RawConfig,
    pub seed: u64,
    pub workdir: PathBuf,
    pub threads: usize,
    pub data_path: PathBuf,
    pub data_format: DataFormat,
    pub csv: CsvColumns,
    pub min_user_degree: usize,
    pub min_item_degree: usize,
    pub split: SplitSpec,
    pub resolution: f64,
    pub cluster_ratio: f64,
    pub search_steps: usize,
    pub louvain_seed: u64,
    pub max_cluster_size: Option<usize>,
    pub interest_method: ProfileMethod,
    pub ppr: PprParams,
    pub fusion: FusionMode,
    pub d_in: usize,
    pub d_int: usize,
    pub tower: Vec<usize>,
    pub train: TrainConfig,
    pub model_seed: u64,
    pub strategy: Strategy,
    pub n_clusters: usize,
    pub selection: SelectionMode,
    pub k_rec: usize,
    pub retrieval_seed: u64,
    pub kmeans_ratio: f64,
    pub kmeans_iters: usize,
    pub repetitions: usize,
    pub k_values: Vec<usize>,
    pub stability_fractions: Vec<f64>,
    pub stability_resolution: f64,
    pub grid_lr: Vec<f64>,
    pub grid_dropout: Vec<f64>,
}

fn opt_str(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

impl PipelineConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let data_format = match raw.get("data.format") {
            "movielens" => DataFormat::MovieLens,
            "csv" => DataFormat::Csv,
            other => return Err(Error::Config(format!("data.format {other:?} must be movielens or csv"))),
        };
        let min_item_degree = if raw.get("filter.min_item_degree").is_empty() {
            match data_format {
                DataFormat::MovieLens => 1,
                DataFormat::Csv => 10,
            }
        } else {
            raw.typed("filter.min_item_degree")?
        };
        let split = SplitSpec {
            train: raw.typed("split.train")?,
            val: raw.typed("split.val")?,
            test: raw.typed("split.test")?,
            seed: raw.seed("split.seed")?,
        };
        split.validate().map_err(|e| Error::Config(e.to_string()))?;
        let cap: usize = raw.typed("louvain.max_cluster_size")?;
        let model_seed = raw.seed("model.seed")?;
        let train = TrainConfig {
            learning_rate: raw.typed("model.lr")?,
            weight_decay: raw.typed("model.weight_decay")?,
            dropout: raw.typed("model.dropout")?,
            batch_size: raw.typed("model.batch_size")?,
            negatives: raw.typed("model.negatives")?,
            max_epochs: raw.typed("model.max_epochs")?,
            eval_every: raw.typed("model.eval_every")?,
            patience: raw.typed("model.patience")?,
            seed: model_seed,
            eval_k: 50,
        };
        train.validate()?;
        let cfg = Self {
            seed: raw.seed("seed")?,
            workdir: raw.path("workdir"),
            threads: raw.typed("threads")?,
            data_path: raw.path("data.path"),
            data_format,
            csv: CsvColumns {
                user: raw.get("data.csv.user").to_string(),
                item: raw.get("data.csv.item").to_string(),
                value: opt_str(raw.get("data.csv.value")),
                timestamp: opt_str(raw.get("data.csv.timestamp")),
            },
            min_user_degree: raw.typed("filter.min_user_degree")?,
            min_item_degree,
            split,
            resolution: raw.typed("louvain.resolution")?,
            cluster_ratio: raw.typed("louvain.cluster_ratio")?,
            search_steps: raw.typed("louvain.search_steps")?,
            louvain_seed: raw.seed("louvain.seed")?,
            max_cluster_size: (cap > 0).then_some(cap),
            interest_method: raw.get("interest.method").parse()?,
            ppr: PprParams {
                damping: raw.typed("interest.damping")?,
                tolerance: raw.typed("interest.tolerance")?,
                max_iters: raw.typed("interest.max_iters")?,
            },
            fusion: raw.get("model.fusion").parse()?,
            d_in: raw.typed("model.d_in")?,
            d_int: raw.typed("model.d_int")?,
            tower: raw.list("model.tower")?,
            train,
            model_seed,
            strategy: raw.get("retrieval.strategy").parse()?,
            n_clusters: raw.typed("retrieval.n_clusters")?,
            selection: raw.get("retrieval.mode").parse()?,
            k_rec: raw.typed("retrieval.k")?,
            retrieval_seed: raw.seed("retrieval.seed")?,
            kmeans_ratio: raw.typed("retrieval.kmeans_ratio")?,
            kmeans_iters: raw.typed("retrieval.kmeans_iters")?,
            repetitions: raw.typed("retrieval.repetitions")?,
            k_values: raw.list("eval.k_values")?,
            stability_fractions: raw.list("stability.fractions")?,
            stability_resolution: raw.typed("stability.resolution")?,
            grid_lr: raw.list("grid.lr")?,
            grid_dropout: raw.list("grid.dropout")?,
            raw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.resolution > 0.0) || !(self.stability_resolution > 0.0) {
            return bad("resolutions must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.cluster_ratio) {
            return bad(format!("louvain.cluster_ratio {} outside [0,1]", self.cluster_ratio));
        }
        if !(0.0 < self.ppr.damping && self.ppr.damping < 1.0) || !(self.ppr.tolerance > 0.0) {
            return bad("interest.damping must be in (0,1) and tolerance > 0".into());
        }
        if self.d_in == 0 || self.tower.is_empty() || self.tower.contains(&0) {
            return bad("model dimensions must be positive".into());
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("eval.k_values must be positive".into());
        }
        if self.k_rec < *self.k_values.iter().max().unwrap() {
            return bad(format!("retrieval.k = {} is below the largest eval K", self.k_rec));
        }
        if self.n_clusters == 0 {
            return bad("retrieval.n_clusters must be >= 1".into());
        }
        if !(self.kmeans_ratio > 0.0 && self.kmeans_ratio <= 1.0) {
            return bad("retrieval.kmeans_ratio must be in (0,1]".into());
        }
        if self.stability_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("stability.fractions must lie in (0,1]".into());
        }
        if self.grid_lr.iter().any(|v| !(*v > 0.0)) || self.grid_dropout.iter().any(|v| !(0.0..1.0).contains(v)) {
            return bad("grid values out of range".into());
        }
        Ok(())
    }
}
