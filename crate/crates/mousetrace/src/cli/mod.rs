//! Command-line orchestration of the pipeline: batch subcommands over the
//! library stages, a TOML run configuration with flag overrides, and run
//! manifests for reproducibility audits.
//!
//! The binary is a thin wrapper over [`run`]; everything here is a library
//! function so integration tests and the examples can drive commands
//! in-process. Progress goes to stderr, machine-readable output (stats,
//! verdicts, summaries) to stdout.
//!
//! Exit codes: `detect` and `authenticate` reserve 0 for accept/consistent,
//! 2 for reject/inconsistent, and 3 for "not enough movement data"; every
//! command uses 1 for errors.

mod config;
mod experiment;

pub use config::{
    config_hash, dataset_digest, file_digest, load_config, preset_threshold, store_digest,
    ExperimentConfig, Paths, Protocol, RunConfig, RunManifest, THRESHOLD_PRESETS,
};

use std::collections::BTreeMap;
use std::fs;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::authn::{
    authenticate, detect_inconsistency, select_base_samples, AuthRequest, AuthnError,
    BaseSampleSet,
};
use crate::eval::{export_report, read_report, write_curve_svg, EvalError, ReportFormat};
use crate::ingest::{
    load_dataset, parse_event_log, synth, Action, Button, DatasetManifest, IngestError,
    ManifestUser, RawEvent, SchemaId, SourceTag, SynthParams, UserRecord,
};
use crate::model::{serial, train, ModelError};
use crate::pairs::{
    auth_temporal_split, build_instances, group_by_anchor, identity_kfold_split, write_instances,
    PairError,
};
use crate::preprocess::{preprocess_session, PreprocessError, PreprocessStats, Sample};
use crate::seed;
use crate::store::{SampleStore, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("preprocess: {0}")]
    Preprocess(#[from] PreprocessError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("pairs: {0}")]
    Pairs(#[from] PairError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("authn: {0}")]
    Authn(#[from] AuthnError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "mousetrace",
    version,
    about = "Mouse-trajectory similarity: authentication and identity-inconsistency detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a deterministic synthetic dataset (canonical CSVs + manifest)
    Synth(SynthArgs),
    /// Load a dataset manifest and print ingest statistics
    Ingest(IngestArgs),
    /// Build the preprocessed sample store from a dataset
    Preprocess(PreprocessArgs),
    /// Build labeled pair instances and a split plan from a store
    Pairs(PairsArgs),
    /// Train the pair scorer on an instance file
    Train(TrainArgs),
    /// Rank each user's samples by validation loss and store the bases
    SelectBases(SelectBasesArgs),
    /// Run a full protocol end-to-end and write evaluation reports
    Experiment(ExperimentArgs),
    /// Authenticate a query event log against a claimed user
    Authenticate(AuthenticateArgs),
    /// Decide whether two event logs come from the same person
    Detect(DetectArgs),
    /// Summarize or re-export a written report
    Report(ReportArgs),
}

/// Config plumbing shared by most subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file mirroring the run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key by dotted path, e.g. --set model.epochs=50
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Root seed; every random choice in the run derives from it
    #[arg(long)]
    pub seed: Option<u64>,
    /// Short schedule: 50 epochs at learning rate 1e-4
    #[arg(long)]
    pub fast: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = load_config(self.config.as_deref(), &self.sets)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.fast {
            cfg.model.epochs = 50;
            cfg.model.learning_rate = 1e-4;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
    /// Synthetic user count
    #[arg(long, default_value_t = 10)]
    pub users: usize,
    /// Sessions per user
    #[arg(long, default_value_t = 2)]
    pub sessions: usize,
    /// Seconds of movement per session
    #[arg(long, default_value_t = 90.0)]
    pub duration: f64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset manifest to load
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also write the stats JSON here
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Dataset manifest (defaults to paths.dataset)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output store directory (defaults to paths.store)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flip the 5% movement filter to drop large movements instead
    #[arg(long)]
    pub literal_filter: bool,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Sample store directory (defaults to paths.store)
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Output instance file (defaults to paths.instances)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// identity_kfold or auth_temporal (defaults to experiment.protocol)
    #[arg(long)]
    pub protocol: Option<String>,
    /// Fold count for the identity protocol
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Sample store directory (defaults to paths.store)
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Instance file (defaults to paths.instances)
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Output model file (defaults to paths.model)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectBasesArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Sample store directory (defaults to paths.store)
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Trained model file (defaults to paths.model)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output base-sample file (defaults to paths.bases)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML config file mirroring the run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key by dotted path
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Root seed (required: experiments must be reproducible by construction)
    #[arg(long)]
    pub seed: u64,
    /// Short schedule: 50 epochs at learning rate 1e-4
    #[arg(long)]
    pub fast: bool,
    /// Sample store directory (defaults to paths.store)
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Report output directory (defaults to paths.report_dir)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// identity_kfold or auth_temporal
    #[arg(long)]
    pub protocol: Option<String>,
    /// Fold count for the identity protocol
    #[arg(long)]
    pub k: Option<usize>,
    /// Conditions for the authentication sweep, e.g. 1,3,5,7
    #[arg(long, value_delimiter = ',')]
    pub samp_n_sweep: Option<Vec<usize>>,
    /// Decision threshold (wins over the preset)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Threshold preset name
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct AuthenticateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Sample store the bases were selected from (defaults to paths.store)
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Trained model file (defaults to paths.model)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Base-sample file (defaults to paths.bases)
    #[arg(long)]
    pub bases: Option<PathBuf>,
    /// Claimed user id
    #[arg(long)]
    pub user: String,
    /// Query event log
    #[arg(long)]
    pub query: PathBuf,
    /// Event log schema: canonical, sapimouse, or balabit
    #[arg(long, default_value = "canonical")]
    pub schema: String,
    /// Screen width in pixels for coordinate normalization
    #[arg(long, default_value_t = synth::VIRTUAL_WIDTH)]
    pub screen_w: f64,
    /// Screen height in pixels for coordinate normalization
    #[arg(long, default_value_t = synth::VIRTUAL_HEIGHT)]
    pub screen_h: f64,
    /// Expanded samples to score (defaults to experiment.samp_n)
    #[arg(long)]
    pub samp_n: Option<usize>,
    /// Decision threshold (wins over the preset)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Threshold preset name
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Trained model file (defaults to paths.model)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// First event log
    #[arg(long)]
    pub a: PathBuf,
    /// Second event log
    #[arg(long)]
    pub b: PathBuf,
    /// Event log schema: canonical, sapimouse, or balabit
    #[arg(long, default_value = "canonical")]
    pub schema: String,
    /// Screen width in pixels for coordinate normalization
    #[arg(long, default_value_t = synth::VIRTUAL_WIDTH)]
    pub screen_w: f64,
    /// Screen height in pixels for coordinate normalization
    #[arg(long, default_value_t = synth::VIRTUAL_HEIGHT)]
    pub screen_h: f64,
    /// Cross pairs to score (defaults to experiment.k_pairs)
    #[arg(long)]
    pub k_pairs: Option<usize>,
    /// Decision threshold (wins over the preset)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Threshold preset name
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON to read
    #[arg(long)]
    pub report: PathBuf,
    /// Re-export as CSV here
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Render the FRR-FAR curve SVG here
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// Parse-free entry point: dispatch and map errors to exit code 1.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Run one command, returning its exit code.
pub fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Ingest(args) => cmd_ingest(&args),
        Command::Preprocess(args) => cmd_preprocess(&args),
        Command::Pairs(args) => cmd_pairs(&args),
        Command::Train(args) => cmd_train(&args),
        Command::SelectBases(args) => cmd_select_bases(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::Authenticate(args) => cmd_authenticate(&args),
        Command::Detect(args) => cmd_detect(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn button_name(b: Button) -> &'static str {
    match b {
        Button::None => "none",
        Button::Left => "left",
        Button::Right => "right",
        Button::Middle => "middle",
    }
}

fn action_name(a: Action) -> &'static str {
    match a {
        Action::Move => "move",
        Action::Press => "press",
        Action::Release => "release",
        Action::Drag => "drag",
    }
}

/// Write events as canonical CSV (`t,x,y,button,action`). Floats use Rust's
/// shortest round-trip form, so rerunning the generator reproduces the file
/// byte for byte.
fn write_canonical_csv(path: &Path, events: &[RawEvent]) -> Result<(), CliError> {
    let mut out = String::with_capacity(events.len() * 32 + 24);
    out.push_str("t,x,y,button,action\n");
    for ev in events {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            ev.t,
            ev.x,
            ev.y,
            button_name(ev.button),
            action_name(ev.action)
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<i32, CliError> {
    if args.users == 0 {
        return Err(CliError::Usage("--users must be at least 1".into()));
    }
    if args.sessions == 0 {
        return Err(CliError::Usage("--sessions must be at least 1".into()));
    }
    if !(args.duration > 0.0) {
        return Err(CliError::Usage("--duration must be positive".into()));
    }
    let cfg = args.config.resolve()?;
    let width = args.users.to_string().len().max(2);
    let grid = SynthParams::separated_grid(args.users);
    create_dir(&args.out)?;

    let mut users = Vec::with_capacity(args.users);
    for (i, params) in grid.iter().enumerate() {
        let user_id = format!("user{i:0width$}");
        let user_dir = args.out.join("users").join(&user_id);
        create_dir(&user_dir)?;
        let mut sessions = Vec::with_capacity(args.sessions);
        for s in 0..args.sessions {
            let rel = format!("users/{user_id}/session_{s:02}.csv");
            let events = crate::ingest::synth_user(
                params,
                synth::session_seed(cfg.seed, &user_id, s),
                args.duration,
            );
            write_canonical_csv(&args.out.join(&rel), &events)?;
            sessions.push(rel);
        }
        users.push(ManifestUser {
            user_id,
            resolution: Some([synth::VIRTUAL_WIDTH, synth::VIRTUAL_HEIGHT]),
            schema: Some("canonical".into()),
            sessions,
            environment: Some(SourceTag::Synthetic),
            synth: None,
            duration_s: None,
            session_count: None,
        });
    }
    let manifest = DatasetManifest {
        seed: cfg.seed,
        users,
    };
    let manifest_path = args.out.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;

    // No inputs and no wall times: rerunning must reproduce the tree exactly.
    let hash = config_hash(&cfg, &BTreeMap::new());
    let mut run = RunManifest::new("synth", &cfg, &hash, BTreeMap::new());
    run.push_artifact(&manifest_path);
    run.write(&args.out.join("run_manifest.json"))?;
    println!(
        "wrote {} users x {} sessions to {}",
        args.users,
        args.sessions,
        args.out.display()
    );
    Ok(0)
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<i32, CliError> {
    let manifest = DatasetManifest::from_path(&args.manifest)?;
    let root = args.manifest.parent().unwrap_or(Path::new("."));
    let (_, stats) = load_dataset(root, &manifest)?;
    let mut json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    json.push('\n');
    if let Some(out) = &args.stats_out {
        fs::write(out, &json).map_err(io_err(out))?;
    }
    print!("{json}");
    Ok(0)
}

pub fn cmd_preprocess(args: &PreprocessArgs) -> Result<i32, CliError> {
    let mut cfg = args.config.resolve()?;
    if args.literal_filter {
        cfg.preprocess.literal_filter = true;
    }
    let manifest_path = args.manifest.as_ref().unwrap_or(&cfg.paths.dataset);
    let out = args.out.as_ref().unwrap_or(&cfg.paths.store);
    let started = Instant::now();

    let manifest = DatasetManifest::from_path(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let (records, _) = load_dataset(root, &manifest)?;
    let mut inputs = BTreeMap::new();
    inputs.insert(
        "dataset".to_string(),
        dataset_digest(manifest_path, &manifest)?,
    );
    let hash = config_hash(&cfg, &inputs);

    let mut stats = PreprocessStats::default();
    let mut samples = Vec::new();
    let mut per_user: BTreeMap<String, usize> = BTreeMap::new();
    for record in &records {
        for (sid, events) in record.sessions.iter().enumerate() {
            let got = preprocess_session(events, &record.user_id, sid as u32, &cfg.preprocess, &mut stats)?;
            if got.is_empty() {
                eprintln!(
                    "warning: session {sid} of user {} yields no samples",
                    record.user_id
                );
            }
            *per_user.entry(record.user_id.clone()).or_default() += got.len();
            samples.extend(got);
        }
    }
    stats.finalize(&samples);

    create_dir(out)?;
    let store = SampleStore::from_samples(samples, &hash, cfg.preprocess.max_rows);
    store.save(out)?;

    #[derive(serde::Serialize)]
    struct Summary<'a> {
        config_hash: &'a str,
        literal_filter: bool,
        stats: &'a PreprocessStats,
        samples_per_user: &'a BTreeMap<String, usize>,
    }
    let summary = Summary {
        config_hash: &hash,
        literal_filter: cfg.preprocess.literal_filter,
        stats: &stats,
        samples_per_user: &per_user,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    let stats_path = out.join("stats.json");
    fs::write(&stats_path, &json).map_err(io_err(&stats_path))?;

    let mut run = RunManifest::new("preprocess", &cfg, &hash, inputs);
    run.push_artifact(&out.join(crate::store::MANIFEST_FILE));
    run.push_artifact(&out.join(crate::store::BIN_FILE));
    run.push_artifact(&stats_path);
    run.wall_times_s
        .insert("total".into(), started.elapsed().as_secs_f64());
    run.write(&out.join("run_manifest.json"))?;
    print!("{json}");
    Ok(0)
}

pub fn cmd_pairs(args: &PairsArgs) -> Result<i32, CliError> {
    let mut cfg = args.config.resolve()?;
    if let Some(p) = &args.protocol {
        cfg.experiment.protocol = Protocol::parse_name(p)?;
    }
    if let Some(k) = args.k {
        cfg.experiment.k = k;
    }
    let store_dir = args.store.as_ref().unwrap_or(&cfg.paths.store);
    let out = args.out.as_ref().unwrap_or(&cfg.paths.instances);
    let store = SampleStore::load(store_dir)?;

    let counts: BTreeMap<String, usize> = store
        .user_ids()
        .iter()
        .map(|u| (u.to_string(), store.user_indices(u).unwrap().len()))
        .collect();
    let instances = build_instances(&counts, seed::derive(cfg.seed, &["pairs"]))?;
    let plan = match cfg.experiment.protocol {
        Protocol::IdentityKfold => {
            let users: Vec<String> = counts.keys().cloned().collect();
            identity_kfold_split(&users, cfg.experiment.k, seed::derive(cfg.seed, &["kfold"]))?
        }
        Protocol::AuthTemporal => {
            auth_temporal_split(&group_by_anchor(&instances), cfg.experiment.train_fraction)?
        }
    };

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_instances(out, &instances)?;
    let splits_path = out.with_extension("splits.json");
    let mut json = serde_json::to_string_pretty(&plan).expect("plan serializes");
    json.push('\n');
    fs::write(&splits_path, json).map_err(io_err(&splits_path))?;

    let mut inputs = BTreeMap::new();
    inputs.insert("store".to_string(), store_digest(store_dir)?);
    let hash = config_hash(&cfg, &inputs);
    let mut run = RunManifest::new("pairs", &cfg, &hash, inputs);
    run.push_artifact(out);
    run.push_artifact(&splits_path);
    run.write(&out.with_extension("run.json"))?;
    println!(
        "wrote {} instances over {} users to {}",
        instances.len(),
        counts.len(),
        out.display()
    );
    Ok(0)
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32, CliError> {
    let cfg = args.config.resolve()?;
    let store_dir = args.store.as_ref().unwrap_or(&cfg.paths.store);
    let instances_path = args.instances.as_ref().unwrap_or(&cfg.paths.instances);
    let out = args.out.as_ref().unwrap_or(&cfg.paths.model);

    let store = SampleStore::load(store_dir)?;
    let instances = crate::pairs::read_instances(instances_path)?;
    let (tr, val) = experiment::shuffle_split(
        &instances,
        0.9,
        seed::derive(cfg.seed, &["train", "val-split"]),
    );
    let mut mcfg = cfg.model.clone();
    mcfg.seed = seed::derive(cfg.seed, &["train", "model"]);
    let started = Instant::now();
    let (mut model, history) = train::<f32>(&mcfg, &tr, &val, &store)?;
    let train_time = started.elapsed().as_secs_f64();

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    serial::save(&mut model, out)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("store".to_string(), store_digest(store_dir)?);
    inputs.insert("instances".to_string(), file_digest(instances_path)?);
    let hash = config_hash(&cfg, &inputs);
    let mut run = RunManifest::new("train", &cfg, &hash, inputs);
    run.push_artifact(out);
    run.wall_times_s.insert("train".into(), train_time);
    run.write(&out.with_extension("run.json"))?;

    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs on {} instances: train loss {:.4}, val loss {:.4}, val auc {:.3} -> {}",
        history.epochs.len(),
        tr.len(),
        last.train_loss,
        last.val_loss,
        last.val_auc,
        out.display()
    );
    Ok(0)
}

pub fn cmd_select_bases(args: &SelectBasesArgs) -> Result<i32, CliError> {
    let cfg = args.config.resolve()?;
    let store_dir = args.store.as_ref().unwrap_or(&cfg.paths.store);
    let model_path = args.model.as_ref().unwrap_or(&cfg.paths.model);
    let out = args.out.as_ref().unwrap_or(&cfg.paths.bases);

    let store = SampleStore::load(store_dir)?;
    let model = serial::load(model_path)?;
    let (candidates, validation, _) = experiment::sample_slices(&store)?;
    let bases = select_base_samples(
        &model,
        &candidates,
        &validation,
        seed::derive(cfg.seed, &["auth", "bases"]),
    )?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    bases.save(out)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("store".to_string(), store_digest(store_dir)?);
    inputs.insert("model".to_string(), file_digest(model_path)?);
    let hash = config_hash(&cfg, &inputs);
    let mut run = RunManifest::new("select-bases", &cfg, &hash, inputs);
    run.push_artifact(out);
    run.write(&out.with_extension("run.json"))?;
    println!("ranked base samples for {} users -> {}", bases.ranked.len(), out.display());
    Ok(0)
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<i32, CliError> {
    let mut cfg = load_config(args.config.as_deref(), &args.sets)?;
    cfg.seed = args.seed;
    if args.fast {
        cfg.model.epochs = 50;
        cfg.model.learning_rate = 1e-4;
    }
    if let Some(p) = &args.protocol {
        cfg.experiment.protocol = Protocol::parse_name(p)?;
    }
    if let Some(k) = args.k {
        cfg.experiment.k = k;
    }
    if let Some(sweep) = &args.samp_n_sweep {
        cfg.experiment.samp_n_sweep = sweep.clone();
    }
    if let Some(t) = args.threshold {
        cfg.experiment.threshold = Some(t);
    }
    if let Some(p) = &args.preset {
        cfg.experiment.threshold_preset = p.clone();
        cfg.experiment.threshold = None;
    }
    cfg.validate()?;
    let store_dir = args.store.clone().unwrap_or_else(|| cfg.paths.store.clone());
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.paths.report_dir.clone());

    let started = Instant::now();
    let store = SampleStore::load(&store_dir)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("store".to_string(), store_digest(&store_dir)?);
    let hash = config_hash(&cfg, &inputs);
    create_dir(&out_dir)?;

    let outcome = match cfg.experiment.protocol {
        Protocol::IdentityKfold => experiment::run_identity(&cfg, &store, &hash, &out_dir)?,
        Protocol::AuthTemporal => experiment::run_auth(&cfg, &store, &hash, &out_dir)?,
    };

    let mut run = RunManifest::new("experiment", &cfg, &hash, inputs);
    for artifact in &outcome.artifacts {
        run.push_artifact(artifact);
    }
    run.wall_times_s = outcome.wall_times_s;
    run.wall_times_s
        .insert("total".into(), started.elapsed().as_secs_f64());
    run.write(&out_dir.join("run_manifest.json"))?;
    println!(
        "experiment done: mean auc {:.4}, far {:.4}, frr {:.4} at threshold {} -> {}",
        outcome.mean.auc,
        outcome.mean.far,
        outcome.mean.frr,
        outcome.mean.threshold,
        out_dir.display()
    );
    Ok(0)
}

/// Parse and normalize one event-log file into a session.
fn load_session(path: &Path, schema: SchemaId, w: f64, h: f64) -> Result<Vec<crate::ingest::NormEvent>, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let parsed = parse_event_log(file, schema)?;
    Ok(crate::ingest::normalize(&parsed.events, w, h)?)
}

pub fn cmd_authenticate(args: &AuthenticateArgs) -> Result<i32, CliError> {
    let cfg = args.config.resolve()?;
    let store_dir = args.store.as_ref().unwrap_or(&cfg.paths.store);
    let model_path = args.model.as_ref().unwrap_or(&cfg.paths.model);
    let bases_path = args.bases.as_ref().unwrap_or(&cfg.paths.bases);
    let schema = SchemaId::parse_name(&args.schema)?;

    let store = SampleStore::load(store_dir)?;
    let model = serial::load(model_path)?;
    let bases = BaseSampleSet::load(bases_path)?;

    let events = load_session(&args.query, schema, args.screen_w, args.screen_h)?;
    let mut stats = PreprocessStats::default();
    let query_samples: Vec<Sample> =
        preprocess_session(&events, &args.user, 0, &cfg.preprocess, &mut stats)?;
    if query_samples.is_empty() {
        eprintln!("insufficient data: the query log yields no usable movement samples");
        return Ok(3);
    }

    let mut base_samples = BTreeMap::new();
    base_samples.insert(
        args.user.clone(),
        store
            .user_samples(&args.user)?
            .into_iter()
            .cloned()
            .collect::<Vec<Sample>>(),
    );
    let mut request = AuthRequest::new(args.user.clone(), query_samples);
    request.samp_n = args.samp_n.unwrap_or(cfg.experiment.samp_n);
    request.threshold = match (args.threshold, &args.preset) {
        (Some(t), _) => t,
        (None, Some(p)) => preset_threshold(p)
            .ok_or_else(|| CliError::Usage(format!("unknown threshold preset `{p}`")))?,
        (None, None) => cfg.experiment.effective_threshold()?,
    };
    let verdict = authenticate(&model, &bases, &base_samples, &request)?;
    let mut json = serde_json::to_string_pretty(&verdict).expect("verdict serializes");
    json.push('\n');
    print!("{json}");
    Ok(if verdict.accepted { 0 } else { 2 })
}

pub fn cmd_detect(args: &DetectArgs) -> Result<i32, CliError> {
    let cfg = args.config.resolve()?;
    let model_path = args.model.as_ref().unwrap_or(&cfg.paths.model);
    let schema = SchemaId::parse_name(&args.schema)?;
    let model = serial::load(model_path)?;

    let record = |path: &Path, name: &str| -> Result<UserRecord, CliError> {
        Ok(UserRecord {
            user_id: name.to_string(),
            sessions: vec![load_session(path, schema, args.screen_w, args.screen_h)?],
            source_tag: SourceTag::Unguided,
        })
    };
    let a = record(&args.a, "a")?;
    let b = record(&args.b, "b")?;
    let threshold = match (args.threshold, &args.preset) {
        (Some(t), _) => t,
        (None, Some(p)) => preset_threshold(p)
            .ok_or_else(|| CliError::Usage(format!("unknown threshold preset `{p}`")))?,
        (None, None) => cfg.experiment.effective_threshold()?,
    };
    let k_pairs = args.k_pairs.unwrap_or(cfg.experiment.k_pairs);
    match detect_inconsistency(&model, &cfg.preprocess, &a, &b, threshold, k_pairs, cfg.seed) {
        Ok(verdict) => {
            let mut json = serde_json::to_string_pretty(&verdict).expect("verdict serializes");
            json.push('\n');
            print!("{json}");
            Ok(if verdict.accepted { 0 } else { 2 })
        }
        Err(AuthnError::InsufficientData(side)) => {
            eprintln!("insufficient data: record {side} yields no usable movement samples");
            Ok(3)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_report(args: &ReportArgs) -> Result<i32, CliError> {
    let report = read_report(&args.report)?;
    if let Some(csv) = &args.csv {
        export_report(&report, csv, ReportFormat::Csv)?;
    }
    if let Some(svg) = &args.svg {
        write_curve_svg(&report, svg)?;
    }
    let mut line = format!(
        "auc {:.4}  far {:.4}  frr {:.4}  threshold {}",
        report.auc, report.far, report.frr, report.threshold
    );
    if let Some(cond) = &report.condition {
        line.push_str(&format!("  [{cond}]"));
    }
    if let Some(t) = report.auth_time_s {
        line.push_str(&format!("  auth_time {t:.2}s"));
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{line}").ok();
    Ok(0)
}
