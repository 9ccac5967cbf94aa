//! Full authentication flow: train a scorer, rank each user's base samples
//! by validation loss, then decide genuine and impostor login attempts.
//!
//! Run with: `cargo run --example authenticate_user`

use std::collections::BTreeMap;

use mousetrace::authn::{authenticate, select_base_samples, AuthRequest};
use mousetrace::ingest::synth::{session_seed, VIRTUAL_HEIGHT, VIRTUAL_WIDTH};
use mousetrace::ingest::{normalize, synth_user, SynthParams};
use mousetrace::model::{train, ModelConfig};
use mousetrace::pairs::build_instances;
use mousetrace::preprocess::{preprocess_session, PreprocessConfig, PreprocessStats, Sample};
use mousetrace::store::SampleStore;

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

/// Per-user temporal thirds: enrollment (base candidates), selection
/// validation, and the query tail used for login attempts.
type Slices = (
    BTreeMap<String, Vec<Sample>>,
    BTreeMap<String, Vec<Sample>>,
    BTreeMap<String, Vec<Sample>>,
);

fn slices(store: &SampleStore) -> Slices {
    let (mut enroll, mut val, mut query) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for user in store.user_ids() {
        let samples: Vec<Sample> = store.user_samples(user).unwrap().into_iter().cloned().collect();
        let n = samples.len();
        enroll.insert(user.to_string(), samples[..n * 3 / 5].to_vec());
        val.insert(user.to_string(), samples[n * 3 / 5..n * 4 / 5].to_vec());
        query.insert(user.to_string(), samples[n * 4 / 5..].to_vec());
    }
    (enroll, val, query)
}

fn main() {
    let store = demo_store(6, 3);
    let users: Vec<String> = store.user_ids().iter().map(|s| s.to_string()).collect();
    let instance_counts: BTreeMap<String, usize> = users
        .iter()
        .map(|u| (u.clone(), store.user_indices(u).unwrap().len()))
        .collect();

    let instances = build_instances(&instance_counts, 100).unwrap();
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

    // Rank each user's enrollment samples by how well they separate that
    // user's validation samples from other users' (20 seeded draws each).
    let (enroll, selection_val, query) = slices(&store);
    let bases = select_base_samples(&model, &enroll, &selection_val, 7).unwrap();
    for user in &users {
        let (j, loss) = bases.top(user).unwrap();
        println!("{user}: base sample {j} (selection loss {loss:.3})");
    }

    // A login attempt scores the query tail against the claimed user's base
    // sample; the expansion operator turns one start sample into samp_n
    // progressively longer views.
    println!();
    let attempt = |claimed: &str, actual: &str| {
        let mut request = AuthRequest::new(claimed, query[actual].clone());
        request.samp_n = 5;
        request.threshold = 0.5;
        let verdict = authenticate(&model, &bases, &enroll, &request).unwrap();
        println!(
            "claimed {claimed}, actually {actual}: score {:.3} over {} samples -> {}",
            verdict.score,
            verdict.samples_used,
            if verdict.accepted { "ACCEPT" } else { "REJECT" }
        );
    };
    attempt("user0", "user0");
    attempt("user1", "user1");
    attempt("user0", "user3");
    attempt("user4", "user2");
}
