//! Labelled sample pairs and experiment splits.
//!
//! Positive instances pair each of a user's samples with the one half the
//! list away, so the two windows never overlap; negatives reuse the first
//! element and draw the partner from another user (user first, then sample,
//! both uniform). Identity experiments split by user (k disjoint folds);
//! authentication splits each user's instance list temporally, no shuffle.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum PairError {
    #[error("need at least 2 samples to build positive instances, got {0}")]
    TooFewSamples(usize),
    #[error("negative sampling needs at least one other user with samples")]
    NoOtherUsers,
    #[error("k-fold split needs at least {k} users, got {n}")]
    TooFewUsers { n: usize, k: usize },
    #[error("temporal split needs at least 5 instances per user; {user} has {n}")]
    TooFewInstances { user: String, n: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad instance line {line}: {msg}")]
    BadLine { line: usize, msg: String },
}

/// Reference to sample `j` in `user_id`'s ordered sample list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, usize)", into = "(String, usize)")]
pub struct SampleRef {
    pub user_id: String,
    pub j: usize,
}

impl From<(String, usize)> for SampleRef {
    fn from((user_id, j): (String, usize)) -> Self {
        Self { user_id, j }
    }
}

impl From<SampleRef> for (String, usize) {
    fn from(r: SampleRef) -> Self {
        (r.user_id, r.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Same,
    Different,
}

/// One labelled sample pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub a: SampleRef,
    pub b: SampleRef,
    pub label: Label,
}

impl Instance {
    pub fn is_same(&self) -> bool {
        self.label == Label::Same
    }
}

/// Positive instances for one user with `n_s` samples: exactly
/// `floor(n_s/2)` pairs `(S_j, S_{j+ceil(n_s/2)})`. Odd lists drop the
/// unpairable middle sample.
pub fn positive_instances(user_id: &str, n_s: usize) -> Result<Vec<Instance>, PairError> {
    if n_s < 2 {
        return Err(PairError::TooFewSamples(n_s));
    }
    let offset = n_s.div_ceil(2);
    Ok((0..n_s / 2)
        .map(|j| Instance {
            a: SampleRef {
                user_id: user_id.into(),
                j,
            },
            b: SampleRef {
                user_id: user_id.into(),
                j: j + offset,
            },
            label: Label::Same,
        })
        .collect())
}

/// One negative per positive: keep the positive's first element, partner
/// drawn from `pool` (sample counts per user) excluding the positive's own
/// user — uniform over users, then uniform over that user's samples.
pub fn negative_instances(
    positives: &[Instance],
    pool: &BTreeMap<String, usize>,
    rng_seed: u64,
) -> Result<Vec<Instance>, PairError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut negatives = Vec::with_capacity(positives.len());
    for pos in positives {
        let others: Vec<(&String, usize)> = pool
            .iter()
            .filter(|(u, &n)| **u != pos.a.user_id && n > 0)
            .map(|(u, &n)| (u, n))
            .collect();
        if others.is_empty() {
            return Err(PairError::NoOtherUsers);
        }
        let (user, n) = others[rng.gen_range(0..others.len())];
        let j = rng.gen_range(0..n);
        negatives.push(Instance {
            a: pos.a.clone(),
            b: SampleRef {
                user_id: user.clone(),
                j,
            },
            label: Label::Different,
        });
    }
    Ok(negatives)
}

/// Balanced instance set over the users in `counts` (sample counts per
/// user). Users contribute in key order; each user's block interleaves
/// positives and negatives (`pos_0, neg_0, pos_1, neg_1, …`) so a temporal
/// prefix of the block keeps both labels. Users with < 2 samples are
/// skipped. Pure function of `(counts, root_seed)`.
pub fn build_instances(
    counts: &BTreeMap<String, usize>,
    root_seed: u64,
) -> Result<Vec<Instance>, PairError> {
    let mut all = Vec::new();
    for (user, &n_s) in counts {
        if n_s < 2 {
            continue;
        }
        let positives = positive_instances(user, n_s)?;
        let negatives =
            negative_instances(&positives, counts, seed::derive(root_seed, &["neg", user]))?;
        for (p, n) in positives.into_iter().zip(negatives) {
            all.push(p);
            all.push(n);
        }
    }
    Ok(all)
}

/// How an experiment divides data between training and testing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPlan {
    /// User-disjoint folds: `(train_users, test_users)` per fold.
    IdentityKfold {
        seed: u64,
        folds: Vec<(Vec<String>, Vec<String>)>,
    },
    /// Per-user boundary: the first `train_len` instances (generation
    /// order) train, the rest test.
    AuthTemporal {
        train_fraction: f64,
        train_len: BTreeMap<String, usize>,
    },
}

/// Shuffle users by `rng_seed` and partition into `k` near-equal test
/// groups; fold `f` trains on every user outside group `f`.
pub fn identity_kfold_split(
    user_ids: &[String],
    k: usize,
    rng_seed: u64,
) -> Result<SplitPlan, PairError> {
    if user_ids.len() < k || k == 0 {
        return Err(PairError::TooFewUsers {
            n: user_ids.len(),
            k,
        });
    }
    let mut users = user_ids.to_vec();
    users.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    users.shuffle(&mut rng);
    let n = users.len();
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0usize;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test: Vec<String> = users[start..start + size].to_vec();
        let train: Vec<String> = users[..start]
            .iter()
            .chain(&users[start + size..])
            .cloned()
            .collect();
        folds.push((train, test));
        start += size;
    }
    Ok(SplitPlan::IdentityKfold {
        seed: rng_seed,
        folds,
    })
}

/// Per user, the first `ceil(train_fraction * n)` instances train and the
/// rest test, in generation order — no shuffling.
pub fn auth_temporal_split(
    per_user: &BTreeMap<String, Vec<Instance>>,
    train_fraction: f64,
) -> Result<SplitPlan, PairError> {
    let mut train_len = BTreeMap::new();
    for (user, instances) in per_user {
        let n = instances.len();
        if n < 5 {
            return Err(PairError::TooFewInstances {
                user: user.clone(),
                n,
            });
        }
        train_len.insert(user.clone(), (train_fraction * n as f64).ceil() as usize);
    }
    Ok(SplitPlan::AuthTemporal {
        train_fraction,
        train_len,
    })
}

/// Group a flat instance list by the user of the anchoring first element.
pub fn group_by_anchor(instances: &[Instance]) -> BTreeMap<String, Vec<Instance>> {
    let mut per_user: BTreeMap<String, Vec<Instance>> = BTreeMap::new();
    for inst in instances {
        per_user
            .entry(inst.a.user_id.clone())
            .or_default()
            .push(inst.clone());
    }
    per_user
}

/// Apply an [`SplitPlan::AuthTemporal`] boundary to grouped instances.
pub fn apply_temporal_split(
    per_user: &BTreeMap<String, Vec<Instance>>,
    plan: &SplitPlan,
) -> (Vec<Instance>, Vec<Instance>) {
    let SplitPlan::AuthTemporal { train_len, .. } = plan else {
        panic!("apply_temporal_split expects an auth_temporal plan");
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (user, instances) in per_user {
        let boundary = train_len.get(user).copied().unwrap_or(instances.len());
        let boundary = boundary.min(instances.len());
        train.extend_from_slice(&instances[..boundary]);
        test.extend_from_slice(&instances[boundary..]);
    }
    (train, test)
}

/// Write one instance per line: `{"a": [user, j], "b": [user, j], "label": …}`.
pub fn write_instances(path: &Path, instances: &[Instance]) -> Result<(), PairError> {
    let io = |e: std::io::Error| PairError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    for inst in instances {
        let line = serde_json::to_string(inst).expect("instance serializes");
        writeln!(f, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn read_instances(path: &Path) -> Result<Vec<Instance>, PairError> {
    let f = fs::File::open(path).map_err(|e| PairError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| PairError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| PairError::BadLine {
            line: k + 1,
            msg: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}
