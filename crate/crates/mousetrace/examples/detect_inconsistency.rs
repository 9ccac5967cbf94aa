//! Decide whether two recordings come from the same person — the account
//! hand-off check. Trains a scorer on a background population, then compares
//! (a) two sessions of one held-out user and (b) sessions of two different
//! held-out users.
//!
//! Run with: `cargo run --example detect_inconsistency`

use std::collections::BTreeMap;

use mousetrace::authn::detect_inconsistency;
use mousetrace::ingest::synth::{session_seed, VIRTUAL_HEIGHT, VIRTUAL_WIDTH};
use mousetrace::ingest::{normalize, synth_user, NormEvent, SourceTag, SynthParams, UserRecord};
use mousetrace::model::{train, ModelConfig};
use mousetrace::pairs::build_instances;
use mousetrace::preprocess::{preprocess_session, PreprocessConfig, PreprocessStats};
use mousetrace::store::SampleStore;

fn session(params: &SynthParams, user_id: &str, idx: usize, dataset_seed: u64) -> Vec<NormEvent> {
    let events = synth_user(params, session_seed(dataset_seed, user_id, idx), 90.0);
    normalize(&events, VIRTUAL_WIDTH, VIRTUAL_HEIGHT).unwrap()
}

fn main() {
    // Users 0..6 are the training population; 6 and 7 stay unseen.
    let grid = SynthParams::separated_grid(8);
    let cfg = PreprocessConfig::default();
    let mut stats = PreprocessStats::default();
    let mut samples = Vec::new();
    for (i, params) in grid.iter().take(6).enumerate() {
        let user_id = format!("user{i}");
        for s in 0..2 {
            let norm = session(params, &user_id, s, 3);
            samples
                .extend(preprocess_session(&norm, &user_id, s as u32, &cfg, &mut stats).unwrap());
        }
    }
    let store = SampleStore::from_samples(samples, "example", cfg.max_rows);

    let counts: BTreeMap<String, usize> = store
        .user_ids()
        .iter()
        .map(|u| (u.to_string(), store.user_indices(u).unwrap().len()))
        .collect();
    let instances = build_instances(&counts, 100).unwrap();
    let (tr, val) = instances.split_at(instances.len() * 9 / 10);
    let config = ModelConfig {
        conv_channels: vec![16, 32, 32],
        recurrent_hidden: 32,
        head_widths: vec![128, 32],
        learning_rate: 1e-4,
        epochs: 20,
        seed: 1,
        ..ModelConfig::default()
    };
    println!("training on {} instances...", tr.len());
    let (model, history) = train::<f32>(&config, tr, val, &store).unwrap();
    println!(
        "final val auc {:.3}",
        history.epochs.last().unwrap().val_auc
    );
    println!();

    let record = |params: &SynthParams, name: &str, idx: usize| UserRecord {
        user_id: name.to_string(),
        sessions: vec![session(params, name, idx, 3)],
        source_tag: SourceTag::Synthetic,
    };
    let check = |label: &str, a: &UserRecord, b: &UserRecord| {
        let verdict = detect_inconsistency(&model, &cfg, a, b, 0.5, 8, 99).unwrap();
        println!(
            "{label}: mean score {:.3} over {} cross pairs -> {}",
            verdict.score,
            verdict.samples_used,
            if verdict.accepted {
                "consistent"
            } else {
                "INCONSISTENT"
            }
        );
    };

    // Same unseen person, different sessions: should read consistent.
    check(
        "user6 session 0 vs user6 session 1",
        &record(&grid[6], "user6", 0),
        &record(&grid[6], "user6", 1),
    );
    // Two different unseen people: should flag the hand-off.
    check(
        "user6 session 0 vs user7 session 0",
        &record(&grid[6], "user6", 0),
        &record(&grid[7], "user7", 0),
    );
}
