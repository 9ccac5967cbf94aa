//! End-to-end protocol drivers behind the `experiment` subcommand.
//!
//! Both protocols share the shape: derive every stage seed from the root by
//! label, train, score, and hand one [`EvalReport`] per fold or condition
//! back to the command layer, which writes files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::authn::{authenticate, expand_sample, select_base_samples, AuthRequest, BaseSampleSet};
use crate::eval::{aggregate_mean, export_report, write_curve_svg, EvalReport, ReportFormat, Role, ScoredSet};
use crate::model::{train, EmbeddingModel, PairScorer};
use crate::pairs::{
    apply_temporal_split, auth_temporal_split, build_instances, group_by_anchor,
    identity_kfold_split, Instance, SplitPlan,
};
use crate::preprocess::Sample;
use crate::seed;
use crate::store::SampleStore;

use super::config::RunConfig;
use super::CliError;

/// What a protocol run leaves behind for the command layer.
pub(crate) struct ProtocolOutcome {
    pub artifacts: Vec<PathBuf>,
    pub wall_times_s: BTreeMap<String, f64>,
    /// The aggregate report, for the one-line summary on stdout.
    pub mean: EvalReport,
}

fn counts_for(store: &SampleStore, users: &[String]) -> BTreeMap<String, usize> {
    users
        .iter()
        .map(|u| {
            let n = store.user_indices(u).map(<[usize]>::len).unwrap_or(0);
            (u.clone(), n)
        })
        .collect()
}

/// Seeded-shuffle split for validation: roughly `train_frac` of the
/// instances train, the rest validate, both non-empty whenever possible.
pub(crate) fn shuffle_split(
    instances: &[Instance],
    train_frac: f64,
    rng_seed: u64,
) -> (Vec<Instance>, Vec<Instance>) {
    let n = instances.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let cut = ((train_frac * n as f64).round() as usize).clamp(1.min(n), n.saturating_sub(1).max(1));
    let pick = |idx: &[usize]| idx.iter().map(|&i| instances[i].clone()).collect();
    (pick(&order[..cut]), pick(&order[cut..]))
}

/// Temporal validation split: per anchor user, the last quarter of their
/// (ordered) training instances validate — no shuffling.
pub(crate) fn temporal_val_split(train_all: &[Instance]) -> (Vec<Instance>, Vec<Instance>) {
    let mut train = Vec::with_capacity(train_all.len());
    let mut val = Vec::new();
    for (_, block) in group_by_anchor(train_all) {
        let n = block.len();
        let cut = ((0.75 * n as f64).ceil() as usize).clamp(1.min(n), n);
        for (i, inst) in block.into_iter().enumerate() {
            if i < cut {
                train.push(inst);
            } else {
                val.push(inst);
            }
        }
    }
    (train, val)
}

/// Resolve instances against the store and score them, tallying the mean
/// effective movement per decision (both records of a pair are consumed).
fn score_instances(
    model: &EmbeddingModel,
    store: &SampleStore,
    instances: &[Instance],
) -> Result<(ScoredSet, f64), CliError> {
    let mut pairs: Vec<(&Sample, &Sample)> = Vec::with_capacity(instances.len());
    for inst in instances {
        let a = store.user_sample(&inst.a.user_id, inst.a.j)?;
        let b = store.user_sample(&inst.b.user_id, inst.b.j)?;
        pairs.push((a, b));
    }
    let scores = model.score_batch(&pairs)?;
    let mut set = ScoredSet::default();
    let mut movement = 0.0;
    for ((inst, (a, b)), score) in instances.iter().zip(&pairs).zip(scores) {
        set.push(score, inst.is_same(), &inst.a.user_id, &inst.b.user_id);
        movement += a.effective_duration + b.effective_duration;
    }
    Ok((set, movement / instances.len().max(1) as f64))
}

/// Write one report as JSON + CSV + SVG, returning the paths.
fn write_report_files(
    report: &EvalReport,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, CliError> {
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    let svg = dir.join(format!("{stem}.svg"));
    export_report(report, &json, ReportFormat::Json)?;
    export_report(report, &csv, ReportFormat::Csv)?;
    write_curve_svg(report, &svg)?;
    Ok(vec![json, csv, svg])
}

fn write_split_plan(plan: &SplitPlan, dir: &Path) -> Result<PathBuf, CliError> {
    let path = dir.join("splits.json");
    let mut json = serde_json::to_string_pretty(plan).expect("plan serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// User-disjoint k-fold identity experiment.
///
/// Instances are built per fold over that fold's user subset, so negatives
/// never cross the train/test user boundary and each side keeps the exact
/// 1:1 label balance. Fold seeds derive from the root seed by label.
pub(crate) fn run_identity(
    cfg: &RunConfig,
    store: &SampleStore,
    hash: &str,
    out_dir: &Path,
) -> Result<ProtocolOutcome, CliError> {
    let threshold = cfg.experiment.effective_threshold()?;
    let users: Vec<String> = store.user_ids().iter().map(|s| s.to_string()).collect();
    let k = cfg.experiment.k;
    if k < 2 {
        return Err(CliError::Usage(format!(
            "identity protocol needs k >= 2 folds, got {k}"
        )));
    }
    let plan = identity_kfold_split(&users, k, seed::derive(cfg.seed, &["kfold"]))?;
    let mut artifacts = vec![write_split_plan(&plan, out_dir)?];
    let mut wall = BTreeMap::new();
    let SplitPlan::IdentityKfold { folds, .. } = &plan else {
        unreachable!("identity_kfold_split returns an identity plan");
    };

    let mut reports = Vec::with_capacity(k);
    for (f, (train_users, test_users)) in folds.iter().enumerate() {
        let fl = f.to_string();
        let train_inst = build_instances(
            &counts_for(store, train_users),
            seed::derive(cfg.seed, &["fold", &fl, "train-pairs"]),
        )?;
        let test_inst = build_instances(
            &counts_for(store, test_users),
            seed::derive(cfg.seed, &["fold", &fl, "test-pairs"]),
        )?;
        let (tr, val) = shuffle_split(
            &train_inst,
            0.9,
            seed::derive(cfg.seed, &["fold", &fl, "val-split"]),
        );
        let mut mcfg = cfg.model.clone();
        mcfg.seed = seed::derive(cfg.seed, &["fold", &fl, "model"]);
        let started = Instant::now();
        let (model, history) = train::<f32>(&mcfg, &tr, &val, store)?;
        wall.insert(format!("fold{f}.train"), started.elapsed().as_secs_f64());
        if let Some(last) = history.epochs.last() {
            eprintln!(
                "fold {f}: {} train / {} test instances, final val auc {:.3}",
                tr.len(),
                test_inst.len(),
                last.val_auc
            );
        }

        let (set, movement) = score_instances(&model, store, &test_inst)?;
        let mut report = EvalReport::from_scores(&set, threshold, Role::AsTarget, hash)?;
        report.condition = Some(format!("fold{f}"));
        report.auth_time_s = Some(movement);
        artifacts.extend(write_report_files(&report, out_dir, &format!("report_fold{f}"))?);
        reports.push(report);
    }

    let mean = aggregate_mean(&reports)?;
    artifacts.extend(write_report_files(&mean, out_dir, "report_mean")?);
    Ok(ProtocolOutcome {
        artifacts,
        wall_times_s: wall,
        mean,
    })
}

/// Per-user temporal sample slices: the first 60% are base candidates, the
/// next 20% selection-validation, the last 20% query starts. Prefix slicing
/// keeps candidate indices valid against the full store list.
pub(crate) type SampleSlices = (
    BTreeMap<String, Vec<Sample>>,
    BTreeMap<String, Vec<Sample>>,
    BTreeMap<String, Vec<Sample>>,
);

pub(crate) fn sample_slices(store: &SampleStore) -> Result<SampleSlices, CliError> {
    let mut candidates = BTreeMap::new();
    let mut validation = BTreeMap::new();
    let mut queries = BTreeMap::new();
    for user in store.user_ids() {
        let samples: Vec<Sample> = store.user_samples(user)?.into_iter().cloned().collect();
        let n = samples.len();
        let cut1 = ((0.6 * n as f64).ceil() as usize).min(n);
        let cut2 = ((0.8 * n as f64).ceil() as usize).min(n);
        candidates.insert(user.to_string(), samples[..cut1].to_vec());
        validation.insert(user.to_string(), samples[cut1..cut2].to_vec());
        queries.insert(user.to_string(), samples[cut2..].to_vec());
    }
    Ok((candidates, validation, queries))
}

/// Score one samp_n condition of the authentication protocol.
///
/// Genuine attempts: every query start whose expansion yields exactly
/// `samp_n` samples. Impostor attempts: per target, an equal count of
/// seeded draws (without replacement) from other users' valid starts.
/// Users without a valid start are skipped as targets for this condition
/// but still attack. Movement time is the expanded samples' total.
fn auth_condition(
    model: &EmbeddingModel,
    bases: &BaseSampleSet,
    candidates: &BTreeMap<String, Vec<Sample>>,
    queries: &BTreeMap<String, Vec<Sample>>,
    samp_n: usize,
    threshold: f64,
    root_seed: u64,
    hash: &str,
) -> Result<EvalReport, CliError> {
    let mut valid: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (user, qs) in queries {
        let starts = (0..qs.len())
            .filter(|&j| expand_sample(&qs[j..], 0, samp_n).is_ok_and(|e| e.len() == samp_n))
            .collect();
        valid.insert(user, starts);
    }

    let mut set = ScoredSet::default();
    let mut movement = 0.0;
    let mut attempts = 0usize;
    let mut attempt = |claimed: &str, owner: &str, j: usize| -> Result<(), CliError> {
        let qs = &queries[owner];
        let expanded = expand_sample(&qs[j..], 0, samp_n)?;
        movement += expanded.iter().map(|s| s.effective_duration).sum::<f64>();
        let mut request = AuthRequest::new(claimed, qs[j..].to_vec());
        request.samp_n = samp_n;
        request.threshold = threshold;
        let verdict = authenticate(model, bases, candidates, &request)?;
        set.push(verdict.score, claimed == owner, claimed, owner);
        attempts += 1;
        Ok(())
    };

    for (target, starts) in &valid {
        if starts.is_empty() || bases.top(target).is_none() {
            continue;
        }
        for &j in starts {
            attempt(target, target, j)?;
        }
        let pool: Vec<(&str, usize)> = valid
            .iter()
            .filter(|(u, _)| *u != target)
            .flat_map(|(u, js)| js.iter().map(move |&j| (*u, j)))
            .collect();
        let draws = starts.len().min(pool.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
            root_seed,
            &["auth", "impostor", &samp_n.to_string(), target],
        ));
        for pick in rand::seq::index::sample(&mut rng, pool.len(), draws) {
            let (attacker, j) = pool[pick];
            attempt(target, attacker, j)?;
        }
    }
    if attempts == 0 {
        return Err(CliError::Usage(format!(
            "no valid authentication attempts at samp_n={samp_n}; query regions are too short"
        )));
    }

    let mut report = EvalReport::from_scores(&set, threshold, Role::AsTarget, hash)?;
    report.condition = Some(format!("samp_n={samp_n}"));
    report.auth_time_s = Some(movement / attempts as f64);
    Ok(report)
}

/// Temporal-split authentication experiment with a samp_n sweep.
pub(crate) fn run_auth(
    cfg: &RunConfig,
    store: &SampleStore,
    hash: &str,
    out_dir: &Path,
) -> Result<ProtocolOutcome, CliError> {
    let threshold = cfg.experiment.effective_threshold()?;
    let users: Vec<String> = store.user_ids().iter().map(|s| s.to_string()).collect();
    let instances = build_instances(
        &counts_for(store, &users),
        seed::derive(cfg.seed, &["auth", "pairs"]),
    )?;
    let per_user = group_by_anchor(&instances);
    let plan = auth_temporal_split(&per_user, cfg.experiment.train_fraction)?;
    let mut artifacts = vec![write_split_plan(&plan, out_dir)?];
    let mut wall = BTreeMap::new();

    let (train_all, _held_out) = apply_temporal_split(&per_user, &plan);
    let (tr, val) = temporal_val_split(&train_all);
    let mut mcfg = cfg.model.clone();
    mcfg.seed = seed::derive(cfg.seed, &["auth", "model"]);
    let started = Instant::now();
    let (model, history) = train::<f32>(&mcfg, &tr, &val, store)?;
    wall.insert("train".to_string(), started.elapsed().as_secs_f64());
    if let Some(last) = history.epochs.last() {
        eprintln!(
            "auth: trained on {} instances, final val auc {:.3}",
            tr.len(),
            last.val_auc
        );
    }

    let (candidates, validation, queries) = sample_slices(store)?;
    let started = Instant::now();
    let bases = select_base_samples(
        &model,
        &candidates,
        &validation,
        seed::derive(cfg.seed, &["auth", "bases"]),
    )?;
    wall.insert("select_bases".to_string(), started.elapsed().as_secs_f64());

    let mut reports = Vec::new();
    for samp_n in cfg.experiment.sweep() {
        let started = Instant::now();
        let report = auth_condition(
            &model,
            &bases,
            &candidates,
            &queries,
            samp_n,
            threshold,
            cfg.seed,
            hash,
        )?;
        wall.insert(
            format!("condition.samp_n={samp_n}"),
            started.elapsed().as_secs_f64(),
        );
        eprintln!("auth: samp_n={samp_n} auc {:.3}", report.auc);
        artifacts.extend(write_report_files(
            &report,
            out_dir,
            &format!("report_samp{samp_n}"),
        )?);
        reports.push(report);
    }

    let mean = aggregate_mean(&reports)?;
    artifacts.extend(write_report_files(&mean, out_dir, "report_mean")?);
    Ok(ProtocolOutcome {
        artifacts,
        wall_times_s: wall,
        mean,
    })
}
