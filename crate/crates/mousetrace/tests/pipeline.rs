//! Library-level integration: the stages wired together in-process, plus the
//! bit-determinism contract that the CLI and experiments rely on.

use std::collections::BTreeMap;

use mousetrace::authn::{authenticate, detect_inconsistency, select_base_samples, AuthRequest};
use mousetrace::eval::{far_frr, roc_auc, ScoredSet};
use mousetrace::ingest::synth::{session_seed, VIRTUAL_HEIGHT, VIRTUAL_WIDTH};
use mousetrace::ingest::{normalize, synth_user, SourceTag, SynthParams, UserRecord};
use mousetrace::model::{serial, train, ModelConfig, PairScorer};
use mousetrace::pairs::build_instances;
use mousetrace::preprocess::{preprocess_session, PreprocessConfig, PreprocessStats, Sample};
use mousetrace::store::SampleStore;

fn demo_store(users: usize, sessions: usize, duration: f64, dataset_seed: u64) -> SampleStore {
    let cfg = PreprocessConfig::default();
    let mut stats = PreprocessStats::default();
    let mut samples = Vec::new();
    for (i, params) in SynthParams::separated_grid(users).iter().enumerate() {
        let user_id = format!("user{i}");
        for s in 0..sessions {
            let events = synth_user(params, session_seed(dataset_seed, &user_id, s), duration);
            let norm = normalize(&events, VIRTUAL_WIDTH, VIRTUAL_HEIGHT).unwrap();
            samples.extend(preprocess_session(&norm, &user_id, s as u32, &cfg, &mut stats).unwrap());
        }
    }
    SampleStore::from_samples(samples, "pipeline-test", cfg.max_rows)
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        conv_channels: vec![8, 16, 16],
        conv_kernel: 3,
        recurrent_hidden: 16,
        head_widths: vec![32, 16],
        learning_rate: 1e-4,
        epochs: 2,
        batch_size: 32,
        seed: 77,
        ..ModelConfig::default()
    }
}

fn counts(store: &SampleStore) -> BTreeMap<String, usize> {
    store
        .user_ids()
        .iter()
        .map(|u| (u.to_string(), store.user_indices(u).unwrap().len()))
        .collect()
}

#[test]
fn stages_compose_end_to_end() {
    let store = demo_store(5, 2, 60.0, 21);
    let instances = build_instances(&counts(&store), 500).unwrap();
    assert!(instances.len() >= 40, "got {} instances", instances.len());

    let cut = instances.len() * 9 / 10;
    let (tr, val) = instances.split_at(cut);
    let (model, history) = train::<f32>(&tiny_model(), tr, val, &store).unwrap();
    assert_eq!(history.epochs.len(), 2);
    assert!(history.epochs.iter().all(|e| e.train_loss.is_finite()));

    // Scores are probabilities and the set is rankable.
    let mut set = ScoredSet::default();
    for inst in val {
        let a = store.user_sample(&inst.a.user_id, inst.a.j).unwrap();
        let b = store.user_sample(&inst.b.user_id, inst.b.j).unwrap();
        let score = model.score_pair(a, b).unwrap();
        assert!((0.0..=1.0).contains(&score), "score {score} out of range");
        set.push(score, inst.is_same(), &inst.a.user_id, &inst.b.user_id);
    }
    let auc = roc_auc(&set).unwrap();
    assert!((0.0..=1.0).contains(&auc));
    let (far, frr) = far_frr(&set, 0.5).unwrap();
    assert!((0.0..=1.0).contains(&far) && (0.0..=1.0).contains(&frr));

    // Authentication on per-user slices of the same store.
    let mut enroll = BTreeMap::new();
    let mut selection = BTreeMap::new();
    let mut query = BTreeMap::new();
    for user in store.user_ids() {
        let samples: Vec<Sample> =
            store.user_samples(user).unwrap().into_iter().cloned().collect();
        let n = samples.len();
        enroll.insert(user.to_string(), samples[..n * 3 / 5].to_vec());
        selection.insert(user.to_string(), samples[n * 3 / 5..n * 4 / 5].to_vec());
        query.insert(user.to_string(), samples[n * 4 / 5..].to_vec());
    }
    let bases = select_base_samples(&model, &enroll, &selection, 9).unwrap();
    let mut request = AuthRequest::new("user0", query["user0"].clone());
    request.samp_n = 3;
    let verdict = authenticate(&model, &bases, &enroll, &request).unwrap();
    assert_eq!(verdict.accepted, verdict.score >= request.threshold);
    assert!(verdict.samples_used >= 1 && verdict.samples_used <= 3);
    assert_eq!(verdict.per_sample_scores.len(), verdict.samples_used);

    // Consistency check between two raw records, no store involved.
    let grid = SynthParams::separated_grid(5);
    let record = |p: &SynthParams, name: &str, idx: usize| UserRecord {
        user_id: name.into(),
        sessions: vec![normalize(
            &synth_user(p, session_seed(21, name, idx), 60.0),
            VIRTUAL_WIDTH,
            VIRTUAL_HEIGHT,
        )
        .unwrap()],
        source_tag: SourceTag::Synthetic,
    };
    let verdict = detect_inconsistency(
        &model,
        &PreprocessConfig::default(),
        &record(&grid[0], "user0", 0),
        &record(&grid[0], "user0", 1),
        0.5,
        8,
        13,
    )
    .unwrap();
    assert!(verdict.samples_used <= 8);
    assert_eq!(verdict.accepted, verdict.score >= 0.5);
}

#[test]
fn training_is_bit_deterministic() {
    let store = demo_store(3, 2, 45.0, 4);
    let instances = build_instances(&counts(&store), 11).unwrap();
    let cut = instances.len() * 4 / 5;
    let (tr, val) = instances.split_at(cut);

    let (mut m1, h1) = train::<f32>(&tiny_model(), tr, val, &store).unwrap();
    let (mut m2, h2) = train::<f32>(&tiny_model(), tr, val, &store).unwrap();
    assert_eq!(
        serde_json::to_string(&h1.epochs.last().unwrap().train_loss).unwrap(),
        serde_json::to_string(&h2.epochs.last().unwrap().train_loss).unwrap(),
        "loss trajectories diverged"
    );

    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("m1.bin"), dir.path().join("m2.bin"));
    serial::save(&mut m1, &p1).unwrap();
    serial::save(&mut m2, &p2).unwrap();
    assert_eq!(
        std::fs::read(&p1).unwrap(),
        std::fs::read(&p2).unwrap(),
        "same seed must produce bit-identical weights"
    );

    // A different seed must not.
    let mut other = tiny_model();
    other.seed = 78;
    let (mut m3, _) = train::<f32>(&other, tr, val, &store).unwrap();
    let p3 = dir.path().join("m3.bin");
    serial::save(&mut m3, &p3).unwrap();
    assert_ne!(std::fs::read(&p1).unwrap(), std::fs::read(&p3).unwrap());
}

#[test]
fn saved_model_scores_match_the_live_model() {
    let store = demo_store(3, 2, 45.0, 8);
    let instances = build_instances(&counts(&store), 3).unwrap();
    let cut = instances.len() * 4 / 5;
    let (tr, val) = instances.split_at(cut);
    let (mut model, _) = train::<f32>(&tiny_model(), tr, val, &store).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    serial::save(&mut model, &path).unwrap();
    let loaded = serial::load(&path).unwrap();

    let a = store.user_sample("user0", 0).unwrap();
    let b = store.user_sample("user1", 0).unwrap();
    assert_eq!(
        model.score_pair(a, b).unwrap(),
        loaded.score_pair(a, b).unwrap(),
        "round-tripped weights must score identically"
    );
}
