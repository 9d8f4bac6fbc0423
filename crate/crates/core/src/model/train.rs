use std::time::Instant;

use ndarray::NdFloat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{sample_negatives, AdamW, FusionMode, TwoTowerModel};
use crate::error::{Error, Result};
use crate::eval::recall_at_k;
use crate::ingest::UserItems;
use crate::interest::InterestProfile;
use crate::retrieval::{full_scan_topk, EmbeddingIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Positives per mini-batch; each brings `negatives` sampled negatives.
    pub batch_size: usize,
    pub negatives: usize,
    pub max_epochs: usize,
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            weight_decay: 0.0005,
            dropout: 0.1,
            batch_size: 4096,
            negatives: 4,
            max_epochs: 100,
            eval_every: 5,
            patience: 5,
            seed: 0,
            eval_k: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.patience == 0 || self.eval_k == 0 {
            return Err(Error::Config("batch_size, eval_every, patience and eval_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inputs to [`train`]. `val` may be empty, which disables early stopping.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a UserItems,
    pub val: &'a UserItems,
    pub num_items: usize,
    pub profiles: Option<&'a [InterestProfile]>,
    pub item_clusters: Option<&'a [u32]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
    pub val_recall: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters at the best validation evaluation.
    pub model: TwoTowerModel<F>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_recall: Option<f64>,
    pub stop_epoch: usize,
}

/// Mean validation Recall@k over users with validation items, ranking all
/// items the user has not engaged in `train`.
pub fn validation_recall<F: NdFloat>(model: &TwoTowerModel<F>, data: &TrainData<'_>, k: usize) -> Result<Option<f64>> {
    let (users, items) = model.embed_all(data.profiles)?;
    let mut index = EmbeddingIndex::new(users, items)?;
    if model.fusion() == FusionMode::Attention {
        let clusters = data
            .item_clusters
            .ok_or_else(|| Error::invalid("attention mode requires item clusters"))?;
        let z = model.cluster_embedding.as_ref().unwrap().mapv(|v| v.to_f32().unwrap());
        index = index.with_attention(z, clusters.to_vec())?;
    }
    let recalls: Vec<f64> = (0..data.val.num_users())
        .into_par_iter()
        .filter_map(|u| {
            let relevant = data.val.items(u);
            if relevant.is_empty() {
                return None;
            }
            let list = full_scan_topk(&index, u, data.train.items(u), k);
            recall_at_k(&list.items, relevant, k)
        })
        .collect();
    if recalls.is_empty() {
        return Ok(None);
    }
    Ok(Some(recalls.iter().sum::<f64>() / recalls.len() as f64))
}

/// Mini-batch BCE training with uniform negatives, AdamW and early stopping
/// on validation Recall@`eval_k`.
pub fn train<F: NdFloat>(mut model: TwoTowerModel<F>, data: &TrainData<'_>, config: &TrainConfig) -> Result<TrainOutcome<F>> {
    config.validate()?;
    if data.train.num_users() != model.config.num_users || data.num_items != model.config.num_items {
        return Err(Error::invalid("training data does not match the model dimensions"));
    }
    let mut positives: Vec<(u32, u32)> = (0..data.train.num_users())
        .flat_map(|u| data.train.items(u).iter().map(move |&i| (u as u32, i)))
        .collect();
    if positives.is_empty() {
        return Err(Error::EmptyDataset("no training interactions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::<F>::new(config.learning_rate, config.weight_decay);
    let mut grads = model.zeros_like();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, TwoTowerModel<F>)> = None;
    let mut stale = 0;
    let mut stop_epoch = 0;
    let per_pos = 1 + config.negatives;
    let mut pairs = Vec::with_capacity(config.batch_size * per_pos);
    let mut labels = Vec::with_capacity(config.batch_size * per_pos);

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        positives.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in positives.chunks(config.batch_size) {
            pairs.clear();
            labels.clear();
            for &(u, i) in chunk {
                pairs.push((u, i));
                labels.push(F::one());
                for j in sample_negatives(data.train, data.num_items, u as usize, config.negatives, &mut rng)? {
                    pairs.push((u, j));
                    labels.push(F::zero());
                }
            }
            for mut g in grads.blocks_mut() {
                g.fill(F::zero());
            }
            let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut rng));
            let loss = model.loss_and_gradients(&pairs, &labels, data.profiles, data.item_clusters, dropout, &mut grads)?;
            let loss = loss.to_f64().unwrap();
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss {loss} at epoch {epoch}, batch {batches}")));
            }
            let g: Vec<_> = grads.blocks().into_iter().map(|(_, b)| b).collect();
            opt.step(model.blocks_mut(), g)?;
            total += loss;
            batches += 1;
        }
        if !model.is_finite() {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }

        let val_recall = if epoch % config.eval_every == 0 {
            validation_recall(&model, data, config.eval_k)?
        } else {
            None
        };
        let entry = EpochLog {
            epoch,
            loss: total / batches as f64,
            seconds: start.elapsed().as_secs_f64(),
            val_recall,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} ({:.2}s){}",
            entry.loss,
            entry.seconds,
            val_recall.map(|r| format!(" val recall@{} {r:.4}", config.eval_k)).unwrap_or_default()
        );
        log.push(entry);
        stop_epoch = epoch;

        if let Some(r) = val_recall {
            if best.as_ref().is_none_or(|b| r > b.0) {
                best = Some((r, epoch, model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }

    Ok(match best {
        Some((r, epoch, m)) => TrainOutcome {
            model: m,
            log,
            best_epoch: epoch,
            best_val_recall: Some(r),
            stop_epoch,
        },
        None => TrainOutcome {
            model,
            log,
            best_epoch: stop_epoch,
            best_val_recall: None,
            stop_epoch,
        },
    })
}
