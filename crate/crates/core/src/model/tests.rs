use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ingest::{Interaction, UserItems};

fn toy_config(fusion: FusionMode, seed: u64) -> ModelConfig {
    ModelConfig {
        num_users: 5,
        num_items: 5,
        num_clusters: 3,
        d_in: 5,
        d_int: 3,
        tower: vec![6, 4],
        fusion,
        seed,
    }
}

fn random_profiles(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<InterestProfile> {
    (0..n)
        .map(|u| {
            let mass: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            InterestProfile::from_cluster_mass(u, mass).unwrap()
        })
        .collect()
}

/// Model with O(1) embeddings so finite differences are well conditioned.
fn toy_model(fusion: FusionMode, seed: u64) -> TwoTowerModel<f64> {
    let mut m = TwoTowerModel::<f64>::new(toy_config(fusion, seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for t in [&mut m.user_embedding, &mut m.item_embedding] {
        t.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    for mlp in [&mut m.user_tower, &mut m.item_tower] {
        for l in &mut mlp.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
    }
    if let Some(z) = &mut m.cluster_embedding {
        z.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    m
}

fn gradient_check(fusion: FusionMode) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..3 {
        let mut model = toy_model(fusion, trial);
        let profiles = random_profiles(5, 3, &mut rng);
        let clusters = [0u32, 2, 1, 2, 0];
        let pairs: Vec<(u32, u32)> = (0..12).map(|_| (rng.random_range(0..5), rng.random_range(0..5))).collect();
        let labels: Vec<f64> = (0..12).map(|p| (p % 3 == 0) as u8 as f64).collect();
        let loss_of = |m: &TwoTowerModel<f64>| {
            let mut g = m.zeros_like();
            m.loss_and_gradients::<ChaCha8Rng>(&pairs, &labels, Some(&profiles), Some(&clusters), None, &mut g)
                .unwrap()
        };
        let mut grads = model.zeros_like();
        model
            .loss_and_gradients::<ChaCha8Rng>(&pairs, &labels, Some(&profiles), Some(&clusters), None, &mut grads)
            .unwrap();
        let analytic: Vec<(String, Vec<f64>)> = grads
            .blocks()
            .into_iter()
            .map(|(n, b)| (n, b.iter().copied().collect()))
            .collect();
        let h = 1e-6;
        for (b, (name, ga)) in analytic.iter().enumerate() {
            for e in 0..ga.len() {
                let bump = |m: &mut TwoTowerModel<f64>, d: f64| {
                    let mut blocks = m.blocks_mut();
                    let v = blocks[b].iter_mut().nth(e).unwrap();
                    *v += d;
                };
                bump(&mut model, h);
                let up = loss_of(&model);
                bump(&mut model, -2.0 * h);
                let down = loss_of(&model);
                bump(&mut model, h);
                let numeric = (up - down) / (2.0 * h);
                let err = (ga[e] - numeric).abs() / (ga[e].abs() + numeric.abs()).max(1e-6);
                assert!(err <= 1e-4, "{fusion} {name}[{e}]: analytic {} numeric {numeric}", ga[e]);
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences_none() {
    gradient_check(FusionMode::None);
}

#[test]
fn gradients_match_finite_differences_concat() {
    gradient_check(FusionMode::Concat);
}

#[test]
fn gradients_match_finite_differences_attention() {
    gradient_check(FusionMode::Attention);
}

#[test]
fn output_shapes() {
    for fusion in [FusionMode::None, FusionMode::Concat, FusionMode::Attention] {
        let m = TwoTowerModel::<f64>::new(toy_config(fusion, 0)).unwrap();
        let p = InterestProfile::from_cluster_mass(0, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.user_forward(1, Some(&p)).unwrap().len(), 4);
        assert_eq!(m.item_forward(3).len(), 4);
    }
}

#[test]
fn concat_without_profile_is_an_error() {
    let m = TwoTowerModel::<f64>::new(toy_config(FusionMode::Concat, 0)).unwrap();
    assert!(m.user_forward(0, None).is_err());
}

#[test]
fn eval_mode_is_deterministic() {
    let m = TwoTowerModel::<f64>::new(toy_config(FusionMode::None, 1)).unwrap();
    assert_eq!(m.item_forward(2), m.item_forward(2));
    assert_eq!(m.user_forward(4, None).unwrap(), m.user_forward(4, None).unwrap());
}

#[test]
fn zero_interest_passes_embedding_through_identity_fusion() {
    let mut cfg = toy_config(FusionMode::Concat, 2);
    cfg.tower = vec![cfg.d_in];
    let mut m = TwoTowerModel::<f64>::new(cfg.clone()).unwrap();
    let (d_in, d_int) = (cfg.d_in, cfg.d_int);
    let mut w2 = Array2::<f64>::zeros((d_int + d_in, d_in));
    for r in 0..d_in {
        w2[[d_int + r, r]] = 1.0;
    }
    m.fusion_proj = Some(w2);
    m.user_tower.layers[0].weight = Array2::eye(d_in);
    let zero = InterestProfile { user: 0, weights: vec![], num_clusters: 3 };
    for u in 0..5 {
        assert_eq!(m.user_forward(u, Some(&zero)).unwrap(), m.user_embedding.row(u));
    }
}

#[test]
fn attention_single_cluster_is_plain_dot() {
    let mut cfg = toy_config(FusionMode::Attention, 3);
    cfg.num_clusters = 1;
    let m = TwoTowerModel::<f64>::new(cfg).unwrap();
    let eu = m.user_forward(0, None).unwrap();
    let ei = m.item_forward(1);
    assert_eq!(m.attention_weights(eu.view()).unwrap(), array![1.0]);
    assert_eq!(m.score_attention(eu.view(), ei.view(), 0).unwrap(), score(eu.view(), ei.view()));
}

#[test]
fn identical_cluster_embeddings_give_uniform_attention() {
    let mut m = TwoTowerModel::<f64>::new(toy_config(FusionMode::Attention, 4)).unwrap();
    let z = m.cluster_embedding.as_mut().unwrap();
    let first = z.row(0).to_owned();
    for mut r in z.rows_mut() {
        r.assign(&first);
    }
    let eu = m.user_forward(2, None).unwrap();
    for a in m.attention_weights(eu.view()).unwrap() {
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn attention_matches_hand_softmax() {
    let mut cfg = toy_config(FusionMode::Attention, 5);
    cfg.tower = vec![2];
    let mut m = TwoTowerModel::<f64>::new(cfg).unwrap();
    m.cluster_embedding = Some(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
    let eu = array![0.5, -1.0];
    // logits 0.5, -1, -0.5
    let e = [0.5f64.exp(), (-1.0f64).exp(), (-0.5f64).exp()];
    let s: f64 = e.iter().sum();
    let alpha = m.attention_weights(eu.view()).unwrap();
    for c in 0..3 {
        assert!((alpha[c] - e[c] / s).abs() < 1e-9);
    }
    assert!((alpha.sum() - 1.0).abs() < 1e-9);
    let ei = array![2.0, 0.5];
    let got = m.score_attention(eu.view(), ei.view(), 2).unwrap();
    assert!((got - e[2] / s * 0.5).abs() < 1e-12);
    assert!(m.score_attention(eu.view(), ei.view(), 3).is_err());
}

#[test]
fn attention_weights_sum_to_one_for_every_user() {
    let m = toy_model(FusionMode::Attention, 6);
    for u in 0..5 {
        let eu = m.user_forward(u, None).unwrap();
        assert!((m.attention_weights(eu.view()).unwrap().sum() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn vanilla_blocks_equal_shared_blocks_of_fused_models() {
    let none = TwoTowerModel::<f32>::new(ModelConfig::new(30, 20, 4, FusionMode::None, 9)).unwrap();
    for fusion in [FusionMode::Concat, FusionMode::Attention] {
        let other = TwoTowerModel::<f32>::new(ModelConfig::new(30, 20, 4, fusion, 9)).unwrap();
        let theirs = other.blocks();
        for (name, block) in none.blocks() {
            let (_, b) = theirs.iter().find(|(n, _)| *n == name).unwrap();
            assert_eq!(&block, b, "{name}");
        }
    }
}

#[test]
fn score_basics() {
    let a = array![1.0, 2.0];
    let b = array![3.0, 4.0];
    assert_eq!(score(a.view(), b.view()), 11.0);
    assert_eq!(score(a.view(), b.view()), score(b.view(), a.view()));
    assert_eq!(score(a.view(), Array1::zeros(2).view()), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: Array1<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Array1<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
    let naive: f64 = (0..128).map(|k| x[k] * y[k]).sum();
    assert!((score(x.view(), y.view()) - naive).abs() < 1e-12);
}

fn toy_train_set(users: usize, items: usize, seed: u64) -> (UserItems, UserItems) {
    // each user prefers items in its own residue class
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for u in 0..users as u32 {
        let mut liked: Vec<u32> = (0..items as u32).filter(|i| i % 4 == u % 4).collect();
        for k in (1..liked.len()).rev() {
            liked.swap(k, rng.random_range(0..=k));
        }
        for (n, &i) in liked.iter().take(8).enumerate() {
            let x = Interaction { user: u, item: i, timestamp: 0 };
            if n == 0 { val.push(x) } else { train.push(x) }
        }
    }
    (UserItems::new(users, &train), UserItems::new(users, &val))
}

fn small_config(seed: u64) -> ModelConfig {
    ModelConfig {
        d_in: 16,
        d_int: 8,
        tower: vec![32, 16],
        ..ModelConfig::new(40, 60, 4, FusionMode::None, seed)
    }
}

#[test]
fn loss_decreases_over_first_epochs() {
    let (train_set, val) = toy_train_set(40, 60, 1);
    let model = TwoTowerModel::<f32>::new(small_config(1)).unwrap();
    let data = TrainData { train: &train_set, val: &val, num_items: 60, profiles: None, item_clusters: None };
    let cfg = TrainConfig { batch_size: 32, max_epochs: 5, eval_every: 100, dropout: 0.0, ..Default::default() };
    let out = train(model, &data, &cfg).unwrap();
    let losses: Vec<f64> = out.log.iter().map(|e| e.loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn training_is_deterministic() {
    let (train_set, val) = toy_train_set(40, 60, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let profiles = random_profiles(40, 4, &mut rng);
    let data = TrainData { train: &train_set, val: &val, num_items: 60, profiles: Some(&profiles), item_clusters: None };
    let cfg = TrainConfig { batch_size: 50, max_epochs: 3, eval_every: 1, ..Default::default() };
    let run = || {
        let mut c = small_config(3);
        c.fusion = FusionMode::Concat;
        train(TwoTowerModel::<f32>::new(c).unwrap(), &data, &cfg).unwrap().model
    };
    assert_eq!(run(), run());
}

#[test]
fn stop_epoch_is_best_plus_patience_window() {
    let (train_set, val) = toy_train_set(40, 60, 3);
    let data = TrainData { train: &train_set, val: &val, num_items: 60, profiles: None, item_clusters: None };
    // a tiny learning rate plateaus quickly, exhausting patience
    let cfg = TrainConfig {
        learning_rate: 1e-7,
        batch_size: 64,
        max_epochs: 200,
        eval_every: 2,
        patience: 3,
        ..Default::default()
    };
    let out = train(TwoTowerModel::<f32>::new(small_config(4)).unwrap(), &data, &cfg).unwrap();
    assert!(out.stop_epoch < cfg.max_epochs, "patience never ran out");
    assert_eq!(out.stop_epoch, out.best_epoch + cfg.patience * cfg.eval_every);
    let best = out.log.iter().find(|e| e.epoch == out.best_epoch).unwrap();
    assert_eq!(best.val_recall, out.best_val_recall);
}

#[test]
fn parameters_stay_finite_at_largest_learning_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = toy_model(FusionMode::Attention, 5);
    let profiles = random_profiles(5, 3, &mut rng);
    let clusters = [0u32, 1, 2, 0, 1];
    let mut opt = AdamW::<f64>::new(0.005, 0.0005);
    let mut grads = model.zeros_like();
    let mut drop_rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let pairs: Vec<(u32, u32)> = (0..8).map(|_| (rng.random_range(0..5), rng.random_range(0..5))).collect();
        let labels: Vec<f64> = (0..8).map(|p| (p % 2) as f64).collect();
        for mut g in grads.blocks_mut() {
            g.fill(0.0);
        }
        let loss = model
            .loss_and_gradients(&pairs, &labels, Some(&profiles), Some(&clusters), Some((0.1, &mut drop_rng)), &mut grads)
            .unwrap();
        assert!(loss.is_finite());
        let g: Vec<_> = grads.blocks().into_iter().map(|(_, b)| b).collect();
        opt.step(model.blocks_mut(), g).unwrap();
        assert!(model.is_finite());
    }
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for fusion in [FusionMode::None, FusionMode::Concat, FusionMode::Attention] {
        let m = TwoTowerModel::<f32>::new(ModelConfig::new(7, 9, 3, fusion, 11)).unwrap();
        let path = dir.path().join(format!("{fusion}.bin"));
        save_model(&path, &["made in a test".into()], &m).unwrap();
        let back = load_model(&path).unwrap();
        for ((n, a), (_, b)) in m.blocks().iter().zip(back.blocks().iter()) {
            let same = a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same, "{n}");
        }
        assert_eq!(back.config, m.config);
    }
}

#[test]
fn embedding_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.bin");
    let m = array![[1.0f32, -2.5], [0.25, 3.0], [7.0, 8.0]];
    export_embeddings(&path, &m).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..12], &[3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
    assert_eq!(read_embeddings(&path).unwrap(), m);
}
