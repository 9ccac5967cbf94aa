//! How many samples should one authentication decision average? The
//! expansion operator turns a query start into up to `samp_n` progressively
//! offset samples; this sweeps `samp_n` and prints the genuine/impostor
//! score gap, which widens and stabilizes as more movement is consumed.
//!
//! Run with: `cargo run --example samp_n_sweep`

use std::collections::BTreeMap;

use mousetrace::authn::{authenticate, expand_indices, select_base_samples, AuthRequest};
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
        for session in 0..3 {
            let events = synth_user(params, session_seed(dataset_seed, &user_id, session), 90.0);
            let norm = normalize(&events, VIRTUAL_WIDTH, VIRTUAL_HEIGHT).unwrap();
            samples
                .extend(preprocess_session(&norm, &user_id, session as u32, &cfg, &mut stats).unwrap());
        }
    }
    SampleStore::from_samples(samples, "example", cfg.max_rows)
}

fn main() {
    let store = demo_store(5, 9);

    // The operator itself, on indices: start at j, step floor(e/2) with a
    // minimum of 1, stop at the end of the query region.
    let fake: Vec<Sample> = store.user_samples("user0").unwrap().into_iter().cloned().collect();
    for samp_n in [1, 3, 5] {
        let picked = expand_indices(&fake, 0, samp_n).unwrap();
        println!("expand(j=0, samp_n={samp_n}) -> indices {picked:?}");
    }
    println!();

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

    // First 60% of each user's samples enroll, next 20% tune the base
    // choice, last 20% are the query region.
    let (mut enroll, mut selection, mut query) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for user in store.user_ids() {
        let samples: Vec<Sample> = store.user_samples(user).unwrap().into_iter().cloned().collect();
        let n = samples.len();
        enroll.insert(user.to_string(), samples[..n * 3 / 5].to_vec());
        selection.insert(user.to_string(), samples[n * 3 / 5..n * 4 / 5].to_vec());
        query.insert(user.to_string(), samples[n * 4 / 5..].to_vec());
    }
    let bases = select_base_samples(&model, &enroll, &selection, 7).unwrap();

    println!("samp_n   genuine   impostor   gap");
    for samp_n in [1, 2, 3, 5, 7] {
        let score = |claimed: &str, actual: &str| {
            let mut request = AuthRequest::new(claimed, query[actual].clone());
            request.samp_n = samp_n;
            authenticate(&model, &bases, &enroll, &request).unwrap().score
        };
        let mut genuine = 0.0;
        let mut impostor = 0.0;
        let users: Vec<String> = store.user_ids().iter().map(|s| s.to_string()).collect();
        for (i, user) in users.iter().enumerate() {
            genuine += score(user, user);
            impostor += score(user, &users[(i + 1) % users.len()]);
        }
        let (g, i) = (genuine / users.len() as f64, impostor / users.len() as f64);
        println!("{samp_n:>6}   {g:.4}    {i:.4}     {:+.4}", g - i);
    }
}
