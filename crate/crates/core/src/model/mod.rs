//! Two-tower embedding model with interest fusion.
//!
//! The user tower sees `W2 · (W1·η_u ⊕ x_u)` in concat mode and `x_u` alone
//! otherwise; the item tower sees `x_i`. Scores are dot products of the
//! tower outputs, optionally scaled by an interest-level attention weight
//! `α_{u,c} = softmax_j ⟨e_u, z_j⟩ |_{j=c}` over cluster embeddings `z_j`.

mod io;
mod loss;
mod nn;
mod optim;
mod sampling;
mod train;

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD, Axis, NdFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use io::{export_embeddings, load_model, read_embeddings, save_model};
pub use loss::{bce_loss, sigmoid};
pub use nn::{Linear, Mlp, MlpCache};
pub use optim::AdamW;
pub use sampling::sample_negatives;
pub use train::{train, EpochLog, TrainConfig, TrainData, TrainOutcome};

use crate::error::{Error, Result};
use crate::interest::InterestProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Vanilla two-tower: `e_u = h_user(x_u)`.
    None,
    /// `e_u = h_user(W2 · (W1·η_u ⊕ x_u))`.
    Concat,
    /// Vanilla towers with the logit scaled by `α_{u,c}`.
    Attention,
}

impl FusionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::Concat => "concat",
            FusionMode::Attention => "attention",
        }
    }

    pub fn uses_profiles(&self) -> bool {
        matches!(self, FusionMode::Concat)
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "concat" => Ok(Self::Concat),
            "attention" => Ok(Self::Attention),
            other => Err(Error::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_clusters: usize,
    pub d_in: usize,
    pub d_int: usize,
    /// Tower layer widths; the last is the embedding dimension.
    pub tower: Vec<usize>,
    pub fusion: FusionMode,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(num_users: usize, num_items: usize, num_clusters: usize, fusion: FusionMode, seed: u64) -> Self {
        Self {
            num_users,
            num_items,
            num_clusters,
            d_in: 64,
            d_int: 32,
            tower: vec![128, 64],
            fusion,
            seed,
        }
    }

    pub fn d_out(&self) -> usize {
        *self.tower.last().unwrap_or(&self.d_in)
    }

    fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 || self.d_in == 0 || self.tower.is_empty() {
            return Err(Error::invalid("model dimensions must be positive and the tower non-empty"));
        }
        if self.tower.contains(&0) {
            return Err(Error::invalid("tower layer widths must be positive"));
        }
        if self.fusion != FusionMode::None && self.num_clusters == 0 {
            return Err(Error::invalid(format!("fusion {} needs K >= 1 clusters", self.fusion)));
        }
        if self.fusion == FusionMode::Concat && self.d_int == 0 {
            return Err(Error::invalid("concat fusion needs d_int >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTowerModel<F> {
    pub config: ModelConfig,
    pub user_embedding: Array2<F>,
    pub item_embedding: Array2<F>,
    /// W1, `K × d_int` (concat only).
    pub interest_proj: Option<Array2<F>>,
    /// W2, `(d_int + d_in) × d_in` (concat only).
    pub fusion_proj: Option<Array2<F>>,
    pub user_tower: Mlp<F>,
    pub item_tower: Mlp<F>,
    /// `K × d_out` (attention only).
    pub cluster_embedding: Option<Array2<F>>,
}

// Per-block RNG streams keep shared blocks identical across fusion modes.
const STREAM_USER_EMB: u64 = 0;
const STREAM_ITEM_EMB: u64 = 1;
const STREAM_W1: u64 = 2;
const STREAM_W2: u64 = 3;
const STREAM_USER_TOWER: u64 = 4;
const STREAM_ITEM_TOWER: u64 = 5;
const STREAM_CLUSTER_EMB: u64 = 6;

const EMBEDDING_STD: f64 = 0.01;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<F: NdFloat> TwoTowerModel<F> {
    /// Gaussian initialization: N(0, 0.01²) embeddings, fan-in scaled
    /// normal projection and tower weights, zero biases.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let (d_in, d_int, k) = (config.d_in, config.d_int, config.num_clusters);
        let user_embedding = nn::normal_matrix(config.num_users, d_in, EMBEDDING_STD, &mut stream(seed, STREAM_USER_EMB));
        let item_embedding = nn::normal_matrix(config.num_items, d_in, EMBEDDING_STD, &mut stream(seed, STREAM_ITEM_EMB));
        let (interest_proj, fusion_proj) = if config.fusion == FusionMode::Concat {
            (
                Some(nn::normal_matrix(k, d_int, (2.0 / k as f64).sqrt(), &mut stream(seed, STREAM_W1))),
                Some(nn::normal_matrix(
                    d_int + d_in,
                    d_in,
                    (2.0 / (d_int + d_in) as f64).sqrt(),
                    &mut stream(seed, STREAM_W2),
                )),
            )
        } else {
            (None, None)
        };
        let user_tower = Mlp::new(d_in, &config.tower, &mut stream(seed, STREAM_USER_TOWER));
        let item_tower = Mlp::new(d_in, &config.tower, &mut stream(seed, STREAM_ITEM_TOWER));
        let cluster_embedding = (config.fusion == FusionMode::Attention)
            .then(|| nn::normal_matrix(k, config.d_out(), EMBEDDING_STD, &mut stream(seed, STREAM_CLUSTER_EMB)));
        Ok(Self {
            config,
            user_embedding,
            item_embedding,
            interest_proj,
            fusion_proj,
            user_tower,
            item_tower,
            cluster_embedding,
        })
    }

    /// Same structure with every parameter zero; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let z = |a: &Array2<F>| Array2::zeros(a.raw_dim());
        Self {
            config: self.config.clone(),
            user_embedding: z(&self.user_embedding),
            item_embedding: z(&self.item_embedding),
            interest_proj: self.interest_proj.as_ref().map(z),
            fusion_proj: self.fusion_proj.as_ref().map(z),
            user_tower: self.user_tower.zeros_like(),
            item_tower: self.item_tower.zeros_like(),
            cluster_embedding: self.cluster_embedding.as_ref().map(z),
        }
    }

    pub fn fusion(&self) -> FusionMode {
        self.config.fusion
    }

    /// Named parameter blocks in serialization order.
    pub fn blocks(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut out = vec![
            ("user_embedding".to_string(), self.user_embedding.view().into_dyn()),
            ("item_embedding".to_string(), self.item_embedding.view().into_dyn()),
        ];
        if let Some(w) = &self.interest_proj {
            out.push(("interest_proj".into(), w.view().into_dyn()));
        }
        if let Some(w) = &self.fusion_proj {
            out.push(("fusion_proj".into(), w.view().into_dyn()));
        }
        for (tower, mlp) in [("user_tower", &self.user_tower), ("item_tower", &self.item_tower)] {
            for (l, layer) in mlp.layers.iter().enumerate() {
                out.push((format!("{tower}.{l}.weight"), layer.weight.view().into_dyn()));
                out.push((format!("{tower}.{l}.bias"), layer.bias.view().into_dyn()));
            }
        }
        if let Some(w) = &self.cluster_embedding {
            out.push(("cluster_embedding".into(), w.view().into_dyn()));
        }
        out
    }

    /// Mutable views in the same order as [`blocks`](Self::blocks).
    pub fn blocks_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let mut out = vec![
            self.user_embedding.view_mut().into_dyn(),
            self.item_embedding.view_mut().into_dyn(),
        ];
        if let Some(w) = &mut self.interest_proj {
            out.push(w.view_mut().into_dyn());
        }
        if let Some(w) = &mut self.fusion_proj {
            out.push(w.view_mut().into_dyn());
        }
        for mlp in [&mut self.user_tower, &mut self.item_tower] {
            for layer in &mut mlp.layers {
                out.push(layer.weight.view_mut().into_dyn());
                out.push(layer.bias.view_mut().into_dyn());
            }
        }
        if let Some(w) = &mut self.cluster_embedding {
            out.push(w.view_mut().into_dyn());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    /// Dense `B × K` interest matrix for the given users.
    pub fn interest_matrix(&self, users: &[u32], profiles: Option<&[InterestProfile]>) -> Result<Array2<F>> {
        let k = self.config.num_clusters;
        let profiles = profiles.ok_or_else(|| Error::invalid("concat fusion requires interest profiles"))?;
        let mut eta = Array2::zeros((users.len(), k));
        for (row, &u) in users.iter().enumerate() {
            let p = profiles
                .get(u as usize)
                .ok_or_else(|| Error::invalid(format!("no interest profile for user {u}")))?;
            if p.num_clusters != k {
                return Err(Error::invalid(format!(
                    "profile for user {u} has K={}, model has K={k}",
                    p.num_clusters
                )));
            }
            for &(c, w) in &p.weights {
                eta[[row, c as usize]] = F::from(w).unwrap();
            }
        }
        Ok(eta)
    }

    /// Batched user tower. `eta` is the dense interest matrix (concat mode).
    pub fn user_forward_batch<R: Rng>(
        &self,
        users: &[u32],
        eta: Option<Array2<F>>,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<(Array2<F>, UserCache<F>)> {
        let x = self.user_embedding.select(Axis(0), &to_usize(users));
        let (input, fused) = match (&self.interest_proj, &self.fusion_proj) {
            (Some(w1), Some(w2)) => {
                let eta = eta.ok_or_else(|| Error::invalid("concat fusion requires an interest vector"))?;
                if eta.dim() != (users.len(), self.config.num_clusters) {
                    return Err(Error::invalid(format!(
                        "interest matrix is {:?}, expected ({}, {})",
                        eta.dim(),
                        users.len(),
                        self.config.num_clusters
                    )));
                }
                let h = eta.dot(w1);
                let concat = ndarray::concatenate(Axis(1), &[h.view(), x.view()]).expect("row counts agree");
                let z = concat.dot(w2);
                (z, Some((eta, concat)))
            }
            _ => (x, None),
        };
        let (out, tower) = self.user_tower.forward(input, dropout);
        Ok((
            out,
            UserCache {
                users: users.to_vec(),
                fused,
                tower,
            },
        ))
    }

    pub fn item_forward_batch<R: Rng>(&self, items: &[u32], dropout: Option<(f64, &mut R)>) -> (Array2<F>, ItemCache<F>) {
        let x = self.item_embedding.select(Axis(0), &to_usize(items));
        let (out, tower) = self.item_tower.forward(x, dropout);
        (
            out,
            ItemCache {
                items: items.to_vec(),
                tower,
            },
        )
    }

    /// Eval-mode `e_u` for one user.
    pub fn user_forward(&self, user: usize, eta: Option<&InterestProfile>) -> Result<Array1<F>> {
        let eta = match self.fusion() {
            FusionMode::Concat => {
                let p = eta.ok_or_else(|| Error::invalid("concat fusion requires an interest vector"))?;
                let users = [user as u32];
                let mut m = Array2::zeros((1, self.config.num_clusters));
                if p.num_clusters != self.config.num_clusters {
                    return Err(Error::invalid("interest profile K does not match the model"));
                }
                for &(c, w) in &p.weights {
                    m[[0, c as usize]] = F::from(w).unwrap();
                }
                let (e, _) = self.user_forward_batch::<ChaCha8Rng>(&users, Some(m), None)?;
                return Ok(e.row(0).to_owned());
            }
            _ => None,
        };
        let (e, _) = self.user_forward_batch::<ChaCha8Rng>(&[user as u32], eta, None)?;
        Ok(e.row(0).to_owned())
    }

    /// Eval-mode `e_i` for one item.
    pub fn item_forward(&self, item: usize) -> Array1<F> {
        let (e, _) = self.item_forward_batch::<ChaCha8Rng>(&[item as u32], None);
        e.row(0).to_owned()
    }

    pub fn user_backward(&self, cache: &UserCache<F>, grad_out: Array2<F>, grads: &mut Self) {
        let g_in = self.user_tower.backward(&cache.tower, grad_out, &mut grads.user_tower);
        let g_x = match (&cache.fused, &self.fusion_proj, &self.interest_proj) {
            (Some((eta, concat)), Some(w2), Some(_)) => {
                *grads.fusion_proj.as_mut().unwrap() += &concat.t().dot(&g_in);
                let g_concat = g_in.dot(&w2.t());
                let d_int = self.config.d_int;
                let g_h = g_concat.slice(s![.., ..d_int]);
                *grads.interest_proj.as_mut().unwrap() += &eta.t().dot(&g_h);
                g_concat.slice(s![.., d_int..]).to_owned()
            }
            _ => g_in,
        };
        scatter_rows(&mut grads.user_embedding, &cache.users, &g_x);
    }

    pub fn item_backward(&self, cache: &ItemCache<F>, grad_out: Array2<F>, grads: &mut Self) {
        let g_x = self.item_tower.backward(&cache.tower, grad_out, &mut grads.item_tower);
        scatter_rows(&mut grads.item_embedding, &cache.items, &g_x);
    }

    /// Softmax over clusters of `⟨e_u, z_j⟩` (attention mode).
    pub fn attention_weights(&self, e_u: ArrayView1<'_, F>) -> Result<Array1<F>> {
        let z = self
            .cluster_embedding
            .as_ref()
            .ok_or_else(|| Error::invalid("attention weights require fusion mode attention"))?;
        Ok(softmax(z.dot(&e_u)))
    }

    /// `α_{u,c} · ⟨e_u, e_i⟩` where `c` is the item's cluster.
    pub fn score_attention(&self, e_u: ArrayView1<'_, F>, e_i: ArrayView1<'_, F>, item_cluster: usize) -> Result<F> {
        let alpha = self.attention_weights(e_u)?;
        let a = alpha
            .get(item_cluster)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown cluster {item_cluster}")))?;
        Ok(a * score(e_u, e_i))
    }

    /// Mean BCE over `pairs` and its gradient, accumulated into `grads`.
    ///
    /// User and item towers run once per distinct id in the batch.
    pub fn loss_and_gradients<R: Rng>(
        &self,
        pairs: &[(u32, u32)],
        labels: &[F],
        profiles: Option<&[InterestProfile]>,
        item_clusters: Option<&[u32]>,
        mut dropout: Option<(f64, &mut R)>,
        grads: &mut Self,
    ) -> Result<F> {
        if pairs.len() != labels.len() {
            return Err(Error::invalid("pairs and labels differ in length"));
        }
        let (users, user_row) = unique(pairs.iter().map(|p| p.0));
        let (items, item_row) = unique(pairs.iter().map(|p| p.1));
        let eta = match self.fusion() {
            FusionMode::Concat => Some(self.interest_matrix(&users, profiles)?),
            _ => None,
        };
        let (e_u, ucache) = self.user_forward_batch(&users, eta, dropout.as_mut().map(|(p, r)| (*p, &mut **r)))?;
        let (e_i, icache) = self.item_forward_batch(&items, dropout.as_mut().map(|(p, r)| (*p, &mut **r)));

        let attention = match self.fusion() {
            FusionMode::Attention => {
                let z = self.cluster_embedding.as_ref().unwrap();
                let clusters = item_clusters.ok_or_else(|| Error::invalid("attention mode requires item clusters"))?;
                let logits = e_u.dot(&z.t());
                let alpha = Array2::from_shape_vec(
                    logits.raw_dim(),
                    logits.rows().into_iter().flat_map(|r| softmax(r.to_owned()).to_vec()).collect(),
                )
                .expect("shape preserved");
                Some((z, clusters, alpha))
            }
            _ => None,
        };

        let n = F::from(pairs.len()).unwrap();
        let mut loss = F::zero();
        let mut g_u = Array2::<F>::zeros(e_u.raw_dim());
        let mut g_i = Array2::<F>::zeros(e_i.raw_dim());
        let mut g_z = attention.as_ref().map(|(z, _, _)| Array2::<F>::zeros(z.raw_dim()));
        for (p, (&(_, i), &y)) in pairs.iter().zip(labels).enumerate() {
            let (ur, ir) = (user_row[p], item_row[p]);
            let eu = e_u.row(ur);
            let ei = e_i.row(ir);
            let dot = score(eu, ei);
            match &attention {
                None => {
                    loss += loss::bce_term(dot, y);
                    let d = (sigmoid(dot) - y) / n;
                    g_u.row_mut(ur).scaled_add(d, &ei);
                    g_i.row_mut(ir).scaled_add(d, &eu);
                }
                Some((z, clusters, alpha)) => {
                    let c = *clusters
                        .get(i as usize)
                        .ok_or_else(|| Error::invalid(format!("item {i} has no cluster")))? as usize;
                    let a_row = alpha.row(ur);
                    let a = a_row[c];
                    let logit = a * dot;
                    loss += loss::bce_term(logit, y);
                    let d = (sigmoid(logit) - y) / n;
                    // through the dot product
                    g_u.row_mut(ur).scaled_add(d * a, &ei);
                    g_i.row_mut(ir).scaled_add(d * a, &eu);
                    // through α: ∂α_c/∂t_j = α_c (δ_cj − α_j), t_j = ⟨e_u, z_j⟩
                    let da = d * dot;
                    let gz = g_z.as_mut().unwrap();
                    for j in 0..z.nrows() {
                        let delta = if j == c { F::one() } else { F::zero() };
                        let dt = da * a * (delta - a_row[j]);
                        if dt != F::zero() {
                            g_u.row_mut(ur).scaled_add(dt, &z.row(j));
                            gz.row_mut(j).scaled_add(dt, &eu);
                        }
                    }
                }
            }
        }
        if let (Some(gz), Some(acc)) = (g_z, grads.cluster_embedding.as_mut()) {
            *acc += &gz;
        }
        self.user_backward(&ucache, g_u, grads);
        self.item_backward(&icache, g_i, grads);
        Ok(loss / n)
    }

    /// Converts every parameter to `f32`.
    pub fn to_f32(&self) -> TwoTowerModel<f32> {
        let c = |a: &Array2<F>| a.mapv(|v| v.to_f32().unwrap());
        let mlp = |m: &Mlp<F>| Mlp {
            layers: m
                .layers
                .iter()
                .map(|l| Linear {
                    weight: c(&l.weight),
                    bias: l.bias.mapv(|v| v.to_f32().unwrap()),
                })
                .collect(),
        };
        TwoTowerModel {
            config: self.config.clone(),
            user_embedding: c(&self.user_embedding),
            item_embedding: c(&self.item_embedding),
            interest_proj: self.interest_proj.as_ref().map(c),
            fusion_proj: self.fusion_proj.as_ref().map(c),
            user_tower: mlp(&self.user_tower),
            item_tower: mlp(&self.item_tower),
            cluster_embedding: self.cluster_embedding.as_ref().map(c),
        }
    }

    /// Eval-mode embeddings for every user and item, as `f32` matrices.
    pub fn embed_all(&self, profiles: Option<&[InterestProfile]>) -> Result<(Array2<f32>, Array2<f32>)> {
        const CHUNK: usize = 4096;
        let d = self.config.d_out();
        let mut users = Array2::zeros((self.config.num_users, d));
        let ids: Vec<u32> = (0..self.config.num_users as u32).collect();
        for chunk in ids.chunks(CHUNK) {
            let eta = match self.fusion() {
                FusionMode::Concat => Some(self.interest_matrix(chunk, profiles)?),
                _ => None,
            };
            let (e, _) = self.user_forward_batch::<ChaCha8Rng>(chunk, eta, None)?;
            let start = chunk[0] as usize;
            users
                .slice_mut(s![start..start + chunk.len(), ..])
                .assign(&e.mapv(|v| v.to_f32().unwrap()));
        }
        let mut items = Array2::zeros((self.config.num_items, d));
        let ids: Vec<u32> = (0..self.config.num_items as u32).collect();
        for chunk in ids.chunks(CHUNK) {
            let (e, _) = self.item_forward_batch::<ChaCha8Rng>(chunk, None);
            let start = chunk[0] as usize;
            items
                .slice_mut(s![start..start + chunk.len(), ..])
                .assign(&e.mapv(|v| v.to_f32().unwrap()));
        }
        Ok((users, items))
    }
}

/// Cached activations of a batched user-tower pass.
#[derive(Debug, Clone)]
pub struct UserCache<F> {
    users: Vec<u32>,
    /// `(η, W1·η ⊕ x_u)` in concat mode.
    fused: Option<(Array2<F>, Array2<F>)>,
    tower: MlpCache<F>,
}

#[derive(Debug, Clone)]
pub struct ItemCache<F> {
    items: Vec<u32>,
    tower: MlpCache<F>,
}

/// Dot-product logit `⟨e_u, e_i⟩`.
pub fn score<F: NdFloat>(e_u: ArrayView1<'_, F>, e_i: ArrayView1<'_, F>) -> F {
    assert_eq!(e_u.len(), e_i.len(), "embedding dimensions differ");
    e_u.dot(&e_i)
}

pub fn softmax<F: NdFloat>(mut t: Array1<F>) -> Array1<F> {
    let max = t.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    t.mapv_inplace(|v| (v - max).exp());
    let sum = t.sum();
    t.mapv_inplace(|v| v / sum);
    t
}

fn to_usize(ids: &[u32]) -> Vec<usize> {
    ids.iter().map(|&i| i as usize).collect()
}

/// Distinct ids in first-seen order and the row of each input position.
fn unique(ids: impl Iterator<Item = u32>) -> (Vec<u32>, Vec<usize>) {
    let mut seen: HashMap<u32, usize> = HashMap::new();
    let mut order = Vec::new();
    let rows = ids
        .map(|id| {
            *seen.entry(id).or_insert_with(|| {
                order.push(id);
                order.len() - 1
            })
        })
        .collect();
    (order, rows)
}

fn scatter_rows<F: NdFloat>(table: &mut Array2<F>, ids: &[u32], rows: &Array2<F>) {
    for (r, &id) in ids.iter().enumerate() {
        let mut dst = table.row_mut(id as usize);
        dst += &rows.row(r);
    }
}

#[cfg(test)]
mod tests;
