//! Pipeline subcommands over a working directory of artifacts.
//!
//! Each command reads only the artifacts of the commands before it:
//!
//! | command     | reads                                   | writes                                   |
//! |-------------|-----------------------------------------|------------------------------------------|
//! | `ingest`    | raw data file                           | `dataset.tsv` (+ id maps), `train/val/test.tsv` |
//! | `cluster`   | `train.tsv`                             | `clustering.tsv`                         |
//! | `interest`  | `train.tsv`, `clustering.tsv`           | `profiles.tsv`                           |
//! | `train`     | splits, profiles/clustering by fusion   | `model.<fusion>.bin`, `trainlog.<fusion>.json`, embeddings |
//! | `retrieve`  | splits, model, profiles, clustering     | `recs.<label>.tsv`, `timing.<label>.json` |
//! | `evaluate`  | splits, `recs.<label>.tsv`              | `eval.<label>.json`, per-user rows, optional CSVs |
//! | `stability` | `dataset.tsv`                           | `stability.json`                         |
//! | `grid`      | splits, profiles/clustering             | `grid.<fusion>.tsv`                      |
//!
//! `<label>` is `popular` or `<strategy>-<fusion>`, e.g. `cluster-concat`.

pub mod config;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use serde::Serialize;
use serde_json::{json, Value};

pub use config::{DataFormat, PipelineConfig, RawConfig, Strategy};

use crate::error::{Error, Result};
use crate::eval::{
    engagement_decile_report, evaluate, popularity_report, stability_study, write_deciles_csv, write_popularity_csv,
    EvalReport, MostPopular,
};
use crate::graph::{
    build_bipartite, louvain, louvain_target_clusters, modularity, project_co_engagement, read_clustering,
    write_clustering, Clustering,
};
use crate::ingest::{
    build_dataset, parse_csv, parse_movielens, read_dataset, read_interactions, split, write_dataset,
    write_interactions, InteractionFile, UserItems,
};
use crate::interest::{build_all_profiles, read_profiles, write_profiles, InterestProfile};
use crate::model::{
    export_embeddings, load_model, save_model, train, FusionMode, ModelConfig, TrainData, TrainOutcome, TwoTowerModel,
};
use crate::retrieval::{
    benchmark_inference, cluster_topk, full_scan_topk, kmeans, kmeans_topk, read_recommendations,
    write_recommendations, ClusterQuery, EmbeddingIndex, KmeansModel, RankedList, TimingReport,
};

/// Provenance recorded at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Modification time of the raw input data, in Unix seconds.
    pub timestamp: i64,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!(
            "command={} config_hash={} seed={} timestamp={}",
            self.command, self.config_hash, self.seed, self.timestamp
        )
    }
}

/// Artifact locations inside the working directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }

    fn file(&self, name: String) -> PathBuf {
        self.dir.join(name)
    }

    pub fn dataset(&self) -> PathBuf {
        self.dir.join("dataset.tsv")
    }

    pub fn split(&self, part: &str) -> PathBuf {
        self.file(format!("{part}.tsv"))
    }

    pub fn clustering(&self) -> PathBuf {
        self.dir.join("clustering.tsv")
    }

    pub fn profiles(&self) -> PathBuf {
        self.dir.join("profiles.tsv")
    }

    pub fn model(&self, fusion: FusionMode) -> PathBuf {
        self.file(format!("model.{fusion}.bin"))
    }

    pub fn train_log(&self, fusion: FusionMode) -> PathBuf {
        self.file(format!("trainlog.{fusion}.json"))
    }

    pub fn embeddings(&self, fusion: FusionMode, side: &str) -> PathBuf {
        self.file(format!("{side}_embeddings.{fusion}.bin"))
    }

    pub fn recs(&self, label: &str) -> PathBuf {
        self.file(format!("recs.{label}.tsv"))
    }

    pub fn timing(&self, label: &str) -> PathBuf {
        self.file(format!("timing.{label}.json"))
    }

    pub fn eval(&self, label: &str) -> PathBuf {
        self.file(format!("eval.{label}.json"))
    }

    pub fn eval_rows(&self, label: &str) -> PathBuf {
        self.file(format!("eval.{label}.users.tsv"))
    }

    pub fn deciles(&self, label: &str, reference: &str) -> PathBuf {
        self.file(format!("deciles.{label}.vs.{reference}.csv"))
    }

    pub fn popularity(&self, label: &str) -> PathBuf {
        self.file(format!("popularity.{label}.csv"))
    }

    pub fn stability(&self) -> PathBuf {
        self.dir.join("stability.json")
    }

    pub fn grid(&self, fusion: FusionMode) -> PathBuf {
        self.file(format!("grid.{fusion}.tsv"))
    }
}

pub fn label(strategy: Strategy, fusion: FusionMode) -> String {
    match strategy {
        Strategy::Popular => "popular".to_string(),
        s => format!("{}-{fusion}", s.as_str()),
    }
}

fn require(path: &Path, command: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            command,
        })
    }
}

/// Writes `body` as a JSON object whose first key is `provenance`.
fn write_json(path: &Path, provenance: &Provenance, body: impl Serialize) -> Result<()> {
    let value = serde_json::to_value(body).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = serde_json::Map::new();
    out.insert("provenance".into(), json!(provenance));
    match value {
        Value::Object(map) => out.extend(map),
        other => {
            out.insert("value".into(), other);
        }
    }
    let text = serde_json::to_string_pretty(&Value::Object(out)).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(format!("write {}", path.display()), e))
}

/// Shared state for the commands of one invocation.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub ws: Workspace,
}

struct Splits {
    num_items: usize,
    train: UserItems,
    val: UserItems,
    test: UserItems,
}

fn user_items(file: &InteractionFile) -> UserItems {
    UserItems::new(file.num_users, &file.interactions)
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let ws = Workspace::new(&config.workdir);
        std::fs::create_dir_all(&ws.dir).map_err(|e| Error::io(format!("create {}", ws.dir.display()), e))?;
        Ok(Self { config, ws })
    }

    fn provenance(&self, command: &str, timestamp: i64) -> Provenance {
        Provenance {
            command: command.to_string(),
            config_hash: self.config.raw.hash(),
            seed: self.config.seed,
            timestamp,
        }
    }

    /// Provenance whose timestamp is inherited from the ingested dataset.
    fn derived_provenance(&self, command: &str) -> Result<Provenance> {
        let path = self.ws.dataset();
        require(&path, "ingest")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let timestamp = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .filter_map(|l| crate::ingest::parse_kv_line(&l[1..]).get("timestamp").and_then(|v| v.parse().ok()))
            .next()
            .unwrap_or(0);
        Ok(self.provenance(command, timestamp))
    }

    fn splits(&self) -> Result<Splits> {
        let read = |part: &str| -> Result<InteractionFile> {
            let p = self.ws.split(part);
            require(&p, "ingest")?;
            read_interactions(&p)
        };
        let (train, val, test) = (read("train")?, read("val")?, read("test")?);
        Ok(Splits {
            num_items: train.num_items,
            train: user_items(&train),
            val: user_items(&val),
            test: user_items(&test),
        })
    }

    fn clustering(&self) -> Result<Clustering> {
        require(&self.ws.clustering(), "cluster")?;
        read_clustering(&self.ws.clustering())
    }

    fn profiles(&self) -> Result<Vec<InterestProfile>> {
        require(&self.ws.profiles(), "interest")?;
        read_profiles(&self.ws.profiles())
    }

    pub fn ingest(&self) -> Result<IngestSummary> {
        let c = &self.config;
        let path = &c.data_path;
        if !path.is_file() {
            return Err(Error::Config(format!("data.path {} does not exist", path.display())));
        }
        let records = match c.data_format {
            DataFormat::MovieLens => parse_movielens(path)?,
            DataFormat::Csv => parse_csv(path, &c.csv)?,
        };
        let dataset = build_dataset(&records, c.min_user_degree, c.min_item_degree)?;
        let sp = split(&dataset, &c.split)?;
        let mtime = std::fs::metadata(path)
            .and_then(|m| m.modified())
            .ok()
            .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
            .map_or(0, |d| d.as_secs() as i64);
        let prov = vec![self.provenance("ingest", mtime).line()];
        write_dataset(&self.ws.dataset(), &prov, &dataset)?;
        for (part, xs) in [("train", &sp.train), ("val", &sp.val), ("test", &sp.test)] {
            write_interactions(&self.ws.split(part), &prov, dataset.num_users, dataset.num_items, xs)?;
        }
        let summary = IngestSummary {
            records: records.len(),
            users: dataset.num_users,
            items: dataset.num_items,
            interactions: dataset.interactions.len(),
            train: sp.train.len(),
            val: sp.val.len(),
            test: sp.test.len(),
        };
        log::info!("ingest: {summary:?}");
        Ok(summary)
    }

    pub fn cluster(&self) -> Result<ClusterSummary> {
        let c = &self.config;
        let prov = self.derived_provenance("cluster")?;
        let p = self.ws.split("train");
        require(&p, "ingest")?;
        let train = read_interactions(&p)?;
        let bg = build_bipartite(train.num_users, train.num_items, &train.interactions)?;
        let g = project_co_engagement(&bg);
        let clustering = if c.cluster_ratio > 0.0 {
            let target = ((c.cluster_ratio * g.num_items() as f64).round() as usize).clamp(1, g.num_items());
            louvain_target_clusters(&g, target, c.louvain_seed, c.max_cluster_size, c.search_steps)?
        } else {
            louvain(&g, c.resolution, c.louvain_seed, c.max_cluster_size)?
        };
        let q = modularity(&g, &clustering, clustering.resolution);
        let summary = ClusterSummary {
            items: g.num_items(),
            edges: g.num_edges(),
            clusters: clustering.num_clusters(),
            resolution: clustering.resolution,
            modularity: q,
            largest: clustering.sizes().into_iter().max().unwrap_or(0),
        };
        let lines = vec![
            prov.line(),
            format!("items={} edges={} modularity={:.6} largest={}", summary.items, summary.edges, q, summary.largest),
        ];
        write_clustering(&self.ws.clustering(), &lines, &clustering)?;
        log::info!("cluster: {summary:?}");
        Ok(summary)
    }

    pub fn interest(&self) -> Result<Vec<InterestProfile>> {
        let c = &self.config;
        let prov = self.derived_provenance("interest")?;
        let p = self.ws.split("train");
        require(&p, "ingest")?;
        let train = read_interactions(&p)?;
        let clustering = self.clustering()?;
        if clustering.num_items() != train.num_items {
            return Err(Error::invalid("clustering does not cover the dataset's items; rerun `cluster`"));
        }
        let bg = build_bipartite(train.num_users, train.num_items, &train.interactions)?;
        let profiles = build_all_profiles(&bg, &clustering, c.interest_method, &c.ppr)?;
        let method = format!("method={:?} damping={} tolerance={}", c.interest_method, c.ppr.damping, c.ppr.tolerance);
        write_profiles(&self.ws.profiles(), &[prov.line(), method.to_lowercase()], &profiles)?;
        log::info!("interest: {} profiles over K={}", profiles.len(), clustering.num_clusters());
        Ok(profiles)
    }

    fn model_config(&self, num_users: usize, num_items: usize, k: usize) -> ModelConfig {
        let c = &self.config;
        ModelConfig {
            num_users,
            num_items,
            num_clusters: k,
            d_in: c.d_in,
            d_int: c.d_int,
            tower: c.tower.clone(),
            fusion: c.fusion,
            seed: c.model_seed,
        }
    }

    /// Profiles and item clusters the configured fusion mode needs.
    fn fusion_inputs(&self) -> Result<(Option<Vec<InterestProfile>>, Option<Clustering>)> {
        Ok(match self.config.fusion {
            FusionMode::None => (None, None),
            FusionMode::Concat => {
                let clustering = self.clustering()?;
                (Some(self.profiles()?), Some(clustering))
            }
            FusionMode::Attention => (None, Some(self.clustering()?)),
        })
    }

    fn fit(&self, splits: &Splits, train_config: &crate::model::TrainConfig) -> Result<TrainOutcome<f32>> {
        let (profiles, clustering) = self.fusion_inputs()?;
        let k = clustering.as_ref().map_or(0, Clustering::num_clusters);
        let model = TwoTowerModel::<f32>::new(self.model_config(splits.train.num_users(), splits.num_items, k))?;
        let data = TrainData {
            train: &splits.train,
            val: &splits.val,
            num_items: splits.num_items,
            profiles: profiles.as_deref(),
            item_clusters: clustering.as_ref().map(Clustering::assignment),
        };
        train(model, &data, train_config)
    }

    pub fn train(&self) -> Result<TrainOutcome<f32>> {
        let c = &self.config;
        let prov = self.derived_provenance("train")?;
        let splits = self.splits()?;
        let outcome = self.fit(&splits, &c.train)?;
        save_model(&self.ws.model(c.fusion), &[prov.line()], &outcome.model)?;
        let (profiles, _) = self.fusion_inputs()?;
        let (users, items) = outcome.model.embed_all(profiles.as_deref())?;
        export_embeddings(&self.ws.embeddings(c.fusion, "user"), &users)?;
        export_embeddings(&self.ws.embeddings(c.fusion, "item"), &items)?;
        let body = json!({
            "fusion": c.fusion.as_str(),
            "best_epoch": outcome.best_epoch,
            "stop_epoch": outcome.stop_epoch,
            "best_val_recall": outcome.best_val_recall,
            "train_seconds": outcome.log.iter().map(|e| e.seconds).sum::<f64>(),
            "epochs": outcome.log,
        });
        write_json(&self.ws.train_log(c.fusion), &prov, body)?;
        Ok(outcome)
    }

    /// Retrieves for every user with held-out test items and times it.
    pub fn retrieve(&self, strategy: Strategy) -> Result<(Vec<RankedList>, TimingReport)> {
        let c = &self.config;
        let prov = self.derived_provenance("retrieve")?;
        let splits = self.splits()?;
        let users: Vec<usize> = (0..splits.test.num_users()).filter(|&u| !splits.test.items(u).is_empty()).collect();
        let train = &splits.train;
        let k = c.k_rec;
        let tag = label(strategy, c.fusion);

        let mut extra = json!({ "label": tag, "num_items": splits.num_items, "k": k });
        let (lists, timing) = if strategy == Strategy::Popular {
            let mp = MostPopular::fit(train, splits.num_items);
            let run = |u: usize| mp.recommend(u, train.items(u), k);
            let lists: Vec<RankedList> = users.iter().map(|&u| run(u)).collect();
            (lists, benchmark_inference(&tag, &users, c.repetitions, run))
        } else {
            let model_path = self.ws.model(c.fusion);
            require(&model_path, "train")?;
            let model = load_model(&model_path)?;
            let (profiles, clustering) = match (strategy, c.fusion) {
                (Strategy::Cluster, _) | (_, FusionMode::Concat) => {
                    let clustering = self.clustering()?;
                    (Some(self.profiles()?), Some(clustering))
                }
                (_, FusionMode::Attention) => (None, Some(self.clustering()?)),
                _ => (None, None),
            };
            let index = EmbeddingIndex::from_model(&model, profiles.as_deref(), clustering.as_ref())?;
            match strategy {
                Strategy::Full => {
                    let run = |u: usize| full_scan_topk(&index, u, train.items(u), k);
                    let lists: Vec<RankedList> = users.iter().map(|&u| run(u)).collect();
                    (lists, benchmark_inference(&tag, &users, c.repetitions, run))
                }
                Strategy::Cluster => {
                    let profiles = profiles.unwrap();
                    let clustering = clustering.unwrap();
                    let query = ClusterQuery {
                        n_clusters: c.n_clusters,
                        k,
                        mode: c.selection,
                        seed: c.retrieval_seed,
                    };
                    extra["num_clusters"] = json!(clustering.num_clusters());
                    extra["n_clusters"] = json!(c.n_clusters);
                    let run = |u: usize| cluster_topk(&index, u, &profiles[u], &clustering, &query, train.items(u));
                    let lists = users.iter().map(|&u| run(u)).collect::<Result<Vec<_>>>()?;
                    let timing = benchmark_inference(&tag, &users, c.repetitions, |u| run(u).unwrap_or_else(|_| RankedList::empty(u)));
                    (lists, timing)
                }
                Strategy::Kmeans => {
                    let km = self.kmeans(&index)?;
                    extra["num_clusters"] = json!(km.k());
                    extra["n_clusters"] = json!(c.n_clusters.min(km.k()));
                    let run = |u: usize| kmeans_topk(&index, u, &km, c.n_clusters, train.items(u), k);
                    let lists: Vec<RankedList> = users.iter().map(|&u| run(u)).collect();
                    (lists, benchmark_inference(&tag, &users, c.repetitions, run))
                }
                Strategy::Popular => unreachable!(),
            }
        };
        write_recommendations(&self.ws.recs(&tag), &[prov.line()], &lists)?;
        extra["timing"] = json!(timing);
        extra["mean_candidates_per_user"] = json!(timing.mean_candidates_per_user());
        write_json(&self.ws.timing(&tag), &prov, extra)?;
        log::info!(
            "retrieve {tag}: {} users, median {:.4}s, {:.1} candidates/user",
            users.len(),
            timing.median_seconds,
            timing.mean_candidates_per_user()
        );
        Ok((lists, timing))
    }

    fn kmeans(&self, index: &EmbeddingIndex) -> Result<KmeansModel> {
        let c = &self.config;
        let n = index.num_items();
        let k = ((c.kmeans_ratio * n as f64).round() as usize).clamp(1, n);
        kmeans(index.item_embeddings(), k, c.retrieval_seed, c.kmeans_iters, 1e-6)
    }

    fn evaluate_label(&self, splits: &Splits, tag: &str) -> Result<EvalReport> {
        let path = self.ws.recs(tag);
        require(&path, "retrieve")?;
        let lists: HashMap<usize, RankedList> = read_recommendations(&path)?.into_iter().map(|l| (l.user, l)).collect();
        evaluate(tag, &splits.train, &splits.test, &self.config.k_values, |u| {
            lists
                .get(&u)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("{} has no list for user {u}", path.display())))
        })
    }

    /// Scores `recs.<label>.tsv` against the test split. `deciles` names a
    /// reference label for the engagement-decile table.
    pub fn evaluate(&self, strategy: Strategy, deciles: Option<&str>, popularity: bool) -> Result<EvalReport> {
        let c = &self.config;
        let prov = self.derived_provenance("evaluate")?;
        let splits = self.splits()?;
        let tag = label(strategy, c.fusion);
        let mut report = self.evaluate_label(&splits, &tag)?;
        let rows_path = self.ws.eval_rows(&tag);
        report.write_rows(&rows_path, &[prov.line()])?;
        report.per_user_path = rows_path.file_name().map(|f| f.to_string_lossy().into_owned());
        write_json(&self.ws.eval(&tag), &prov, &report)?;

        if let Some(reference) = deciles {
            let ref_report = self.evaluate_label(&splits, reference)?;
            let metric = format!("ndcg@{}", decile_k(&c.k_values));
            let rows = engagement_decile_report(&report, &ref_report, &metric)?;
            let lines = vec![prov.line(), format!("metric={metric} reference={reference}")];
            write_deciles_csv(&self.ws.deciles(&tag, reference), &lines, &rows)?;
        }
        if popularity {
            let lists = read_recommendations(&self.ws.recs(&tag))?;
            let p = popularity_report(&splits.train, splits.num_items, &lists, &splits.test)?;
            write_popularity_csv(&self.ws.popularity(&tag), &[prov.line()], &p)?;
        }
        for (m, v) in &report.means {
            log::info!("evaluate {tag}: {m} = {v:.4}");
        }
        Ok(report)
    }

    pub fn stability(&self) -> Result<Vec<f64>> {
        let c = &self.config;
        let prov = self.derived_provenance("stability")?;
        let dataset = read_dataset(&self.ws.dataset())?;
        let aris = stability_study(
            &dataset,
            &c.stability_fractions,
            c.stability_resolution,
            c.louvain_seed,
            c.max_cluster_size,
        )?;
        let body = json!({
            "fractions": c.stability_fractions,
            "resolution": c.stability_resolution,
            "ari": aris,
        });
        write_json(&self.ws.stability(), &prov, body)?;
        log::info!("stability: {aris:?}");
        Ok(aris)
    }

    /// Trains every (lr, dropout) pair and ranks them by validation Recall@50.
    pub fn grid(&self) -> Result<Vec<GridRow>> {
        let c = &self.config;
        let prov = self.derived_provenance("grid")?;
        let splits = self.splits()?;
        let mut rows = Vec::new();
        for &lr in &c.grid_lr {
            for &dropout in &c.grid_dropout {
                let tc = crate::model::TrainConfig {
                    learning_rate: lr,
                    dropout,
                    ..c.train.clone()
                };
                let out = self.fit(&splits, &tc)?;
                log::info!("grid lr={lr} dropout={dropout}: val recall {:?}", out.best_val_recall);
                rows.push(GridRow {
                    learning_rate: lr,
                    dropout,
                    val_recall: out.best_val_recall.unwrap_or(0.0),
                    best_epoch: out.best_epoch,
                    train_seconds: out.log.iter().map(|e| e.seconds).sum(),
                });
            }
        }
        let best = rows
            .iter()
            .max_by(|a, b| a.val_recall.total_cmp(&b.val_recall).then(b.learning_rate.total_cmp(&a.learning_rate)))
            .cloned();
        let mut text = format!("# {}\n", prov.line());
        if let Some(b) = &best {
            text += &format!("# best learning_rate={} dropout={}\n", b.learning_rate, b.dropout);
        }
        text += "learning_rate\tdropout\tval_recall@50\tbest_epoch\n";
        for r in &rows {
            text += &format!("{}\t{}\t{:.6}\t{}\n", r.learning_rate, r.dropout, r.val_recall, r.best_epoch);
        }
        let path = self.ws.grid(c.fusion);
        std::fs::write(&path, text).map_err(|e| Error::io(format!("write {}", path.display()), e))?;
        Ok(rows)
    }
}

fn decile_k(k_values: &[usize]) -> usize {
    if k_values.contains(&50) {
        50
    } else {
        *k_values.iter().max().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub records: usize,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub items: usize,
    pub edges: usize,
    pub clusters: usize,
    pub resolution: f64,
    pub modularity: f64,
    pub largest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub learning_rate: f64,
    pub dropout: f64,
    pub val_recall: f64,
    pub best_epoch: usize,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Ingest,
    Cluster,
    Interest,
    Train,
    Retrieve { strategy: Option<Strategy> },
    Evaluate { strategy: Option<Strategy>, deciles: Option<String>, popularity: bool },
    Stability,
    Grid,
}

/// Loads the config, applies `--set` overrides and runs one command.
pub fn run(command: &Command, config_path: &Path, overrides: &[String]) -> Result<()> {
    let mut raw = RawConfig::load(config_path)?;
    for o in overrides {
        raw.set(o)?;
    }
    let config = PipelineConfig::from_raw(raw)?;
    if config.threads > 0 {
        // only the first pool request in a process takes effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    let p = Pipeline::new(config)?;
    let default = p.config.strategy;
    match command {
        Command::Ingest => print_json(&p.ingest()?),
        Command::Cluster => print_json(&p.cluster()?),
        Command::Interest => {
            let n = p.interest()?.len();
            print_json(&json!({ "profiles": n }))
        }
        Command::Train => {
            let out = p.train()?;
            print_json(&json!({
                "best_epoch": out.best_epoch,
                "stop_epoch": out.stop_epoch,
                "best_val_recall": out.best_val_recall,
            }))
        }
        Command::Retrieve { strategy } => {
            let (_, timing) = p.retrieve(strategy.unwrap_or(default))?;
            print_json(&timing)
        }
        Command::Evaluate { strategy, deciles, popularity } => {
            let r = p.evaluate(strategy.unwrap_or(default), deciles.as_deref(), *popularity)?;
            print_json(&r)
        }
        Command::Stability => print_json(&json!({ "ari": p.stability()? })),
        Command::Grid => print_json(&p.grid()?),
    }
}

fn print_json(v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::invalid(e.to_string()))?;
    println!("{text}");
    Ok(())
}
