//! Run configuration: the TOML file mirrored by every command, dotted-path
//! overrides, threshold presets, content hashing, and the run manifest.
//!
//! A run's identity is `config_hash`: a digest over the semantic parts of
//! [`RunConfig`] (seed, preprocessing, model, experiment) plus the content
//! digests of the inputs the command consumed. Output paths are excluded on
//! purpose — relocating a workspace must not change what gets computed — so
//! two artifacts carrying the same hash are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::DatasetManifest;
use crate::model::ModelConfig;
use crate::preprocess::PreprocessConfig;
use crate::store;

use super::CliError;

/// Named decision thresholds: `default` plus the tuned operating points per
/// protocol and dataset (secure trades FRR for FAR, balanced sits near the
/// curve crossing).
pub const THRESHOLD_PRESETS: &[(&str, f64)] = &[
    ("default", 0.5),
    ("identity-balanced", 0.55),
    ("identity-secure", 0.75),
    ("auth-all", 0.65),
    ("auth-sapimouse", 0.6),
    ("auth-balabit", 0.7),
];

pub fn preset_threshold(name: &str) -> Option<f64> {
    THRESHOLD_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(_, t)| t)
}

/// Where a run reads and writes. Relative paths resolve against the working
/// directory. Never part of the config hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub store: PathBuf,
    pub model: PathBuf,
    pub instances: PathBuf,
    pub bases: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "data/manifest.json".into(),
            store: "work/store".into(),
            model: "work/model.bin".into(),
            instances: "work/instances.jsonl".into(),
            bases: "work/bases.json".into(),
            report_dir: "work/reports".into(),
        }
    }
}

/// Which evaluation protocol an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// User-disjoint k-fold: train on some users, test on unseen ones.
    IdentityKfold,
    /// Per-user temporal 80/20 split plus base-sample authentication.
    AuthTemporal,
}

impl Protocol {
    pub fn parse_name(name: &str) -> Result<Self, CliError> {
        match name.replace('-', "_").as_str() {
            "identity_kfold" => Ok(Protocol::IdentityKfold),
            "auth_temporal" => Ok(Protocol::AuthTemporal),
            other => Err(CliError::Usage(format!(
                "unknown protocol `{other}` (expected identity_kfold or auth_temporal)"
            ))),
        }
    }
}

/// Protocol parameters for `experiment` and the decision commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// Identity-protocol fold count.
    pub k: usize,
    /// Authentication-protocol temporal boundary.
    pub train_fraction: f64,
    /// Expanded samples per authentication attempt.
    pub samp_n: usize,
    /// Conditions to sweep; empty means just `samp_n`.
    pub samp_n_sweep: Vec<usize>,
    /// One of [`THRESHOLD_PRESETS`] by name.
    pub threshold_preset: String,
    /// Numeric threshold; wins over the preset when set.
    pub threshold: Option<f64>,
    /// Cross pairs scored by the consistency check.
    pub k_pairs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::IdentityKfold,
            k: 5,
            train_fraction: 0.8,
            samp_n: 7,
            samp_n_sweep: Vec::new(),
            threshold_preset: "default".into(),
            threshold: None,
            k_pairs: 8,
        }
    }
}

impl ExperimentConfig {
    pub fn effective_threshold(&self) -> Result<f64, CliError> {
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Usage(format!("threshold {t} outside [0, 1]")));
            }
            return Ok(t);
        }
        preset_threshold(&self.threshold_preset).ok_or_else(|| {
            let names: Vec<&str> = THRESHOLD_PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Usage(format!(
                "unknown threshold preset `{}` (expected one of {})",
                self.threshold_preset,
                names.join(", ")
            ))
        })
    }

    /// The samp_n conditions an auth experiment evaluates.
    pub fn sweep(&self) -> Vec<usize> {
        if self.samp_n_sweep.is_empty() {
            vec![self.samp_n]
        } else {
            self.samp_n_sweep.clone()
        }
    }
}

/// Everything a run needs, loadable from one TOML file. Any key can be
/// overridden on the command line with `--set dotted.path=value`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Root seed. Every random choice in a run — pairing, fold shuffles,
    /// weight init, dropout, negative draws — derives from it by labeled
    /// hashing, so commands may run stages in any order.
    pub seed: u64,
    pub paths: Paths,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.preprocess.validate()?;
        self.model.validate()?;
        let e = &self.experiment;
        if !(e.train_fraction > 0.0 && e.train_fraction < 1.0) {
            return Err(CliError::Usage(format!(
                "train_fraction must be in (0, 1), got {}",
                e.train_fraction
            )));
        }
        if e.samp_n == 0 || e.samp_n_sweep.contains(&0) {
            return Err(CliError::Usage("samp_n must be at least 1".into()));
        }
        if e.k_pairs == 0 {
            return Err(CliError::Usage("k_pairs must be at least 1".into()));
        }
        e.effective_threshold()?;
        Ok(())
    }
}

/// Load the config file (defaults when absent) and apply `--set` overrides.
pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => String::new(),
    };
    let mut value: toml::Value = text
        .parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("bad config file: {e}")))?
        .into();
    for spec in sets {
        apply_set(&mut value, spec)?;
    }
    value
        .try_into()
        .map_err(|e| CliError::Config(format!("bad config: {e}")))
}

/// Assign one dotted-path key. The value parses as TOML (so `50`, `true`,
/// `[1, 3]`, `"auth_temporal"` all work); anything unparseable is taken as a
/// bare string, sparing the quoting dance for enum names.
fn apply_set(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| {
        CliError::Usage(format!("--set expects KEY=VALUE, got `{spec}`"))
    })?;
    let parsed = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for seg in &segments[..segments.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("--set path `{key}` crosses a non-table")))?;
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| CliError::Usage(format!("--set path `{key}` crosses a non-table")))?;
    table.insert(segments[segments.len() - 1].to_string(), parsed);
    Ok(())
}

/// Digest of the run's semantic configuration plus its input contents.
pub fn config_hash(cfg: &RunConfig, inputs: &BTreeMap<String, String>) -> String {
    #[derive(Serialize)]
    struct Semantic<'a> {
        seed: u64,
        preprocess: &'a PreprocessConfig,
        model: &'a ModelConfig,
        experiment: &'a ExperimentConfig,
        inputs: &'a BTreeMap<String, String>,
    }
    let json = serde_json::to_vec(&Semantic {
        seed: cfg.seed,
        preprocess: &cfg.preprocess,
        model: &cfg.model,
        experiment: &cfg.experiment,
        inputs,
    })
    .expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Content digest of a dataset: the manifest bytes plus every referenced
/// session file, in manifest order. Inline synthetic users contribute only
/// through the manifest (their content is a pure function of it).
pub fn dataset_digest(manifest_path: &Path, manifest: &DatasetManifest) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    let manifest_bytes = fs::read(manifest_path).map_err(|source| CliError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    hasher.update(&manifest_bytes);
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    for user in &manifest.users {
        for rel in &user.sessions {
            let path = root.join(rel);
            let bytes = fs::read(&path).map_err(|source| CliError::Io { path, source })?;
            hasher.update(&bytes);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Content digest of a sample store directory (manifest + binary).
pub fn store_digest(dir: &Path) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    for name in [store::MANIFEST_FILE, store::BIN_FILE] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|source| CliError::Io { path, source })?;
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Audit record written next to a command's outputs: the effective config,
/// its hash, input digests, produced artifacts, and wall times. Wall times
/// make this the one artifact exempt from byte-identical reruns; commands
/// whose outputs must compare equal across reruns (synth) leave them empty.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub root_seed: u64,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<PathBuf>,
    pub wall_times_s: BTreeMap<String, f64>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(
        command: &str,
        cfg: &RunConfig,
        hash: &str,
        inputs: BTreeMap<String, String>,
    ) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            root_seed: cfg.seed,
            config_hash: hash.to_string(),
            inputs,
            artifacts: Vec::new(),
            wall_times_s: BTreeMap::new(),
            config: cfg.clone(),
        }
    }

    /// Record an artifact path (in write order).
    pub fn push_artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    /// Write the manifest. Artifacts under the manifest's own directory are
    /// recorded relative to it, so relocated reruns produce identical bytes.
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut portable = self.clone();
        for artifact in &mut portable.artifacts {
            if let Ok(rel) = artifact.strip_prefix(base) {
                *artifact = rel.to_path_buf();
            }
        }
        let mut json = serde_json::to_string_pretty(&portable).expect("manifest serializes");
        json.push('\n');
        fs::write(path, json).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_the_tuned_operating_points() {
        assert_eq!(preset_threshold("default"), Some(0.5));
        assert_eq!(preset_threshold("identity-secure"), Some(0.75));
        assert_eq!(preset_threshold("identity-balanced"), Some(0.55));
        assert_eq!(preset_threshold("auth-all"), Some(0.65));
        assert_eq!(preset_threshold("auth-sapimouse"), Some(0.6));
        assert_eq!(preset_threshold("auth-balabit"), Some(0.7));
        assert_eq!(preset_threshold("nope"), None);
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.model.epochs, 200);
        assert_eq!(cfg.experiment.k, 5);
        assert_eq!(cfg.experiment.protocol, Protocol::IdentityKfold);
        cfg.validate().unwrap();
    }

    #[test]
    fn set_overrides_reach_nested_keys() {
        let sets = vec![
            "model.epochs=50".to_string(),
            "model.learning_rate=1e-4".to_string(),
            "preprocess.literal_filter=true".to_string(),
            "experiment.protocol=auth_temporal".to_string(),
            "experiment.samp_n_sweep=[1, 3]".to_string(),
            "experiment.threshold_preset=auth-all".to_string(),
            "paths.store=/tmp/elsewhere".to_string(),
        ];
        let cfg = load_config(None, &sets).unwrap();
        assert_eq!(cfg.model.epochs, 50);
        assert_eq!(cfg.model.learning_rate, 1e-4);
        assert!(cfg.preprocess.literal_filter);
        assert_eq!(cfg.experiment.protocol, Protocol::AuthTemporal);
        assert_eq!(cfg.experiment.samp_n_sweep, vec![1, 3]);
        assert_eq!(cfg.experiment.effective_threshold().unwrap(), 0.65);
        assert_eq!(cfg.paths.store, PathBuf::from("/tmp/elsewhere"));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, &text).unwrap();
        let loaded = load_config(Some(&path), &[]).unwrap();
        assert_eq!(
            serde_json::to_string(&cfg).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
    }

    #[test]
    fn bad_set_specs_are_usage_errors() {
        assert!(matches!(
            load_config(None, &["model.epochs".to_string()]),
            Err(CliError::Usage(_))
        ));
        // `seed` resolves to an integer, so a deeper path crosses a non-table.
        assert!(matches!(
            load_config(None, &["seed=1".to_string(), "seed.deep=2".to_string()]),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn hash_ignores_paths_but_tracks_semantics_and_inputs() {
        let mut a = RunConfig::default();
        let mut b = RunConfig::default();
        b.paths.report_dir = "/completely/elsewhere".into();
        let none = BTreeMap::new();
        assert_eq!(config_hash(&a, &none), config_hash(&b, &none));

        a.seed = 1;
        assert_ne!(config_hash(&a, &none), config_hash(&b, &none));
        a.seed = 0;
        a.model.epochs = 7;
        assert_ne!(config_hash(&a, &none), config_hash(&b, &none));

        let mut inputs = BTreeMap::new();
        inputs.insert("store".to_string(), "abc123".to_string());
        assert_ne!(config_hash(&b, &inputs), config_hash(&b, &none));
    }

    #[test]
    fn threshold_override_wins_and_is_range_checked() {
        let mut e = ExperimentConfig::default();
        e.threshold_preset = "identity-secure".into();
        assert_eq!(e.effective_threshold().unwrap(), 0.75);
        e.threshold = Some(0.61);
        assert_eq!(e.effective_threshold().unwrap(), 0.61);
        e.threshold = Some(1.5);
        assert!(e.effective_threshold().is_err());
    }

    #[test]
    fn sweep_defaults_to_the_single_condition() {
        let mut e = ExperimentConfig::default();
        assert_eq!(e.sweep(), vec![7]);
        e.samp_n_sweep = vec![1, 3];
        assert_eq!(e.sweep(), vec![1, 3]);
    }
}
