//! Train the twin-encoder similarity model on one user population and score
//! pairs of users it has never seen — the identity-inconsistency setting.
//!
//! Six synthetic users train the model; two held-out users provide the test
//! pairs. Prints per-epoch progress and the final AUC / FAR / FRR on the
//! unseen users. Takes a minute or two.
//!
//! Run with: `cargo run --example train_identity_model`

use std::collections::BTreeMap;

use mousetrace::eval::{far_frr, roc_auc, Role, ScoredSet};
use mousetrace::ingest::synth::{session_seed, VIRTUAL_HEIGHT, VIRTUAL_WIDTH};
use mousetrace::ingest::{normalize, synth_user, SynthParams};
use mousetrace::model::{train, ModelConfig, PairScorer};
use mousetrace::pairs::build_instances;
use mousetrace::preprocess::{preprocess_session, PreprocessConfig, PreprocessStats};
use mousetrace::store::SampleStore;

/// Build a store of `n` synthetic users, two 90-second sessions each.
fn demo_store(n: usize, dataset_seed: u64) -> SampleStore {
    let cfg = PreprocessConfig::default();
    let mut stats = PreprocessStats::default();
    let mut samples = Vec::new();
    for (i, params) in SynthParams::separated_grid(n).iter().enumerate() {
        let user_id = format!("user{i}");
        for session in 0..2 {
            let events = synth_user(params, session_seed(dataset_seed, &user_id, session), 90.0);
            let norm = normalize(&events, VIRTUAL_WIDTH, VIRTUAL_HEIGHT).unwrap();
            samples
                .extend(preprocess_session(&norm, &user_id, session as u32, &cfg, &mut stats).unwrap());
        }
    }
    SampleStore::from_samples(samples, "example", cfg.max_rows)
}

fn counts(store: &SampleStore, users: &[&str]) -> BTreeMap<String, usize> {
    users
        .iter()
        .map(|u| (u.to_string(), store.user_indices(u).unwrap().len()))
        .collect()
}

fn main() {
    let store = demo_store(8, 7);
    let all: Vec<&str> = store.user_ids();
    let (train_users, test_users) = all.split_at(6);
    println!("training on {train_users:?}, testing on {test_users:?}");

    // Interleaved positive/negative pairs, one negative per positive.
    let train_inst = build_instances(&counts(&store, train_users), 100).unwrap();
    let test_inst = build_instances(&counts(&store, test_users), 200).unwrap();
    let (tr, val) = train_inst.split_at(train_inst.len() * 9 / 10);
    println!(
        "{} train / {} val / {} test instances",
        tr.len(),
        val.len(),
        test_inst.len()
    );

    let config = ModelConfig {
        conv_channels: vec![16, 32, 32],
        recurrent_hidden: 32,
        head_widths: vec![128, 32],
        learning_rate: 1e-4,
        epochs: 20,
        seed: 1,
        ..ModelConfig::default()
    };
    let (model, history) = train::<f32>(&config, tr, val, &store).unwrap();
    for (e, stats) in history.epochs.iter().enumerate().step_by(5) {
        println!(
            "epoch {e:>3}: train loss {:.4}, val loss {:.4}, val auc {:.3}",
            stats.train_loss, stats.val_loss, stats.val_auc
        );
    }

    // Score the unseen users' pairs.
    let mut set = ScoredSet::default();
    for inst in &test_inst {
        let a = store.user_sample(&inst.a.user_id, inst.a.j).unwrap();
        let b = store.user_sample(&inst.b.user_id, inst.b.j).unwrap();
        let score = model.score_pair(a, b).unwrap();
        set.push(score, inst.is_same(), &inst.a.user_id, &inst.b.user_id);
    }
    let auc = roc_auc(&set).unwrap();
    let (far, frr) = far_frr(&set, 0.5).unwrap();
    println!();
    println!("unseen users: auc {auc:.3}, far {far:.3}, frr {frr:.3} at threshold 0.5");
    for (user, user_auc) in mousetrace::eval::per_user_auc(&set, Role::AsTarget) {
        println!("  {user}: auc {user_auc:.3}");
    }
}
