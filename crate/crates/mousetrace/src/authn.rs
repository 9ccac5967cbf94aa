//! Decision procedures on top of a trained pair scorer.
//!
//! Four stages live here: ranking each user's training samples by how well
//! the scorer recognizes them (base-sample selection), growing a query sample
//! into a small set by repeatedly jumping half a sample's segment count ahead
//! (the expansion operator), the authentication decision itself, and the
//! two-record consistency check used to flag accounts whose mouse behavior
//! changed hands. Everything is read-only over the scorer and deterministic
//! given the seed, so the batch jobs can be parallelized per user.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::UserRecord;
use crate::model::{ModelError, PairScorer};
use crate::preprocess::{preprocess_session, PreprocessConfig, PreprocessError, PreprocessStats, Sample};
use crate::seed;

/// Validation pairs drawn per user when ranking base candidates: this many
/// same-user draws plus this many other-user draws.
pub const SELECTION_DRAWS: usize = 20;

/// Cross pairs sampled by [`detect_inconsistency`] unless overridden.
pub const DEFAULT_K_PAIRS: usize = 8;

/// Scores are clamped into `[EPS, 1 - EPS]` before taking logs so a stub or
/// saturated scorer cannot produce an infinite selection loss.
const EPS: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum AuthnError {
    #[error("user {0:?} has no validation samples to rank candidates against")]
    NoValidationData(String),
    #[error("base-sample selection needs validation data from at least two users")]
    NoOtherUsers,
    #[error("sample index {index} out of range for a list of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no base sample recorded for user {0:?}")]
    UnknownUser(String),
    #[error("authentication request carries no query samples")]
    NoQuerySamples,
    #[error("record {0} yields no usable movement samples; collect more data")]
    InsufficientData(&'static str),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Scorer(#[from] ModelError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed base-sample file {path}: {source}")]
    BadFile {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Per-user ranking of training samples by validation loss, best first.
///
/// Serializes as `{ user_id: [[j, loss], ...] }`: `j` indexes the user's
/// ordered training-sample list and stays valid only alongside that list.
/// The full ranking is kept (not just the winner) so a top-k voting scheme
/// can be layered on without re-running selection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaseSampleSet {
    pub ranked: BTreeMap<String, Vec<(usize, f64)>>,
}

impl BaseSampleSet {
    /// Index and loss of the user's most representative sample.
    pub fn top(&self, user_id: &str) -> Option<(usize, f64)> {
        self.ranked.get(user_id).and_then(|r| r.first().copied())
    }

    pub fn save(&self, path: &Path) -> Result<(), AuthnError> {
        let mut json = serde_json::to_string_pretty(self).expect("base set serializes");
        json.push('\n');
        fs::write(path, json).map_err(|source| AuthnError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, AuthnError> {
        let json = fs::read_to_string(path).map_err(|source| AuthnError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&json).map_err(|source| AuthnError::BadFile {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// One authentication attempt against a claimed identity.
#[derive(Debug, Clone)]
pub struct AuthRequest {
    pub claimed_user: String,
    /// Ordered samples from the live session; expansion starts at the first.
    pub query_samples: Vec<Sample>,
    /// Upper bound on how many expanded samples to score (default 7).
    pub samp_n: usize,
    /// Accept when the mean score is at least this (default 0.5).
    pub threshold: f64,
}

impl AuthRequest {
    pub fn new(claimed_user: impl Into<String>, query_samples: Vec<Sample>) -> Self {
        AuthRequest {
            claimed_user: claimed_user.into(),
            query_samples,
            samp_n: 7,
            threshold: 0.5,
        }
    }

    fn validate(&self) -> Result<(), AuthnError> {
        if self.samp_n == 0 {
            return Err(AuthnError::BadRequest("samp_n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(AuthnError::BadRequest(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Outcome of an authentication or consistency decision, audit-log ready.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    /// Mean of `per_sample_scores`.
    pub score: f64,
    /// `score >= threshold`.
    pub accepted: bool,
    pub samples_used: usize,
    pub per_sample_scores: Vec<f64>,
}

/// Fold a score list into a verdict; acceptance is `mean >= threshold`.
fn decide(per_sample_scores: Vec<f64>, threshold: f64) -> Verdict {
    let n = per_sample_scores.len();
    let score = per_sample_scores.iter().sum::<f64>() / n as f64;
    Verdict {
        score,
        accepted: score >= threshold,
        samples_used: n,
        per_sample_scores,
    }
}

/// Rank each user's training samples by how representative the scorer finds
/// them, measured on held-out validation data.
///
/// Per user the routine draws up to [`SELECTION_DRAWS`] of the user's own
/// validation samples (shuffled, without replacement) and the same number of
/// other-user validation samples (a uniformly random other user per draw,
/// then a uniformly random sample of theirs). Every candidate `S_j` in the
/// user's training list is scored against the same draws, and its loss is
/// the mean binary cross entropy over the `2k` pairs:
///
/// ```text
/// loss(j) = (1 / 2k) * sum_n -[ ln f(S_j, own_n) + ln(1 - f(S_j, other_n)) ]
/// ```
///
/// Users with fewer than [`SELECTION_DRAWS`] validation samples use all they
/// have; ties rank the lower index first. Draws derive from `seed` per user,
/// so adding a user never reshuffles another user's ranking.
pub fn select_base_samples<S: PairScorer + ?Sized>(
    scorer: &S,
    train: &BTreeMap<String, Vec<Sample>>,
    val: &BTreeMap<String, Vec<Sample>>,
    root_seed: u64,
) -> Result<BaseSampleSet, AuthnError> {
    let mut set = BaseSampleSet::default();
    for (user, candidates) in train {
        if candidates.is_empty() {
            set.ranked.insert(user.clone(), Vec::new());
            continue;
        }
        let own = val
            .get(user)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| AuthnError::NoValidationData(user.clone()))?;
        let others: Vec<&str> = val
            .iter()
            .filter(|(u, v)| *u != user && !v.is_empty())
            .map(|(u, _)| u.as_str())
            .collect();
        if others.is_empty() {
            return Err(AuthnError::NoOtherUsers);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(root_seed, &["base-select", user]));
        let k = SELECTION_DRAWS.min(own.len());
        let mut own_order: Vec<usize> = (0..own.len()).collect();
        own_order.shuffle(&mut rng);
        let positives: Vec<&Sample> = own_order[..k].iter().map(|&i| &own[i]).collect();
        let negatives: Vec<&Sample> = (0..k)
            .map(|_| {
                let u = others[rng.gen_range(0..others.len())];
                let pool = &val[u];
                &pool[rng.gen_range(0..pool.len())]
            })
            .collect();

        // One batch per user: k positive then k negative pairs per candidate.
        let mut pairs = Vec::with_capacity(candidates.len() * 2 * k);
        for cand in candidates {
            for p in &positives {
                pairs.push((cand, *p));
            }
            for n in &negatives {
                pairs.push((cand, *n));
            }
        }
        let scores = scorer.score_batch(&pairs)?;

        let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(candidates.len());
        for (j, chunk) in scores.chunks(2 * k).enumerate() {
            let mut loss = 0.0;
            for &s in &chunk[..k] {
                loss -= s.clamp(EPS, 1.0 - EPS).ln();
            }
            for &s in &chunk[k..] {
                loss -= (1.0 - s.clamp(EPS, 1.0 - EPS)).ln();
            }
            ranked.push((j, loss / (2 * k) as f64));
        }
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        set.ranked.insert(user.clone(), ranked);
    }
    Ok(set)
}

/// Indices visited by the expansion operator: start at `j`, then repeatedly
/// step forward by half the current sample's segment count (at least 1), up
/// to `samp_n` indices or the end of the list, whichever comes first.
pub fn expand_indices(
    samples: &[Sample],
    j: usize,
    samp_n: usize,
) -> Result<Vec<usize>, AuthnError> {
    if j >= samples.len() {
        return Err(AuthnError::IndexOutOfRange {
            index: j,
            len: samples.len(),
        });
    }
    let mut indices = vec![j];
    let mut cur = j;
    while indices.len() < samp_n {
        let next = cur + (samples[cur].segment_count() / 2).max(1);
        if next >= samples.len() {
            break;
        }
        indices.push(next);
        cur = next;
    }
    Ok(indices)
}

/// The expanded sample set itself; see [`expand_indices`] for the walk.
pub fn expand_sample<'a>(
    samples: &'a [Sample],
    j: usize,
    samp_n: usize,
) -> Result<Vec<&'a Sample>, AuthnError> {
    Ok(expand_indices(samples, j, samp_n)?
        .into_iter()
        .map(|i| &samples[i])
        .collect())
}

/// Decide whether the query session belongs to the claimed user.
///
/// Expands the first query sample to at most `samp_n` samples, scores each
/// as `f(query, base)` against the user's top-ranked base sample, and
/// accepts when the mean is at least the threshold. `base_samples` must be
/// the same per-user training lists the base set was selected from.
pub fn authenticate<S: PairScorer + ?Sized>(
    scorer: &S,
    bases: &BaseSampleSet,
    base_samples: &BTreeMap<String, Vec<Sample>>,
    request: &AuthRequest,
) -> Result<Verdict, AuthnError> {
    request.validate()?;
    let user = request.claimed_user.as_str();
    let (base_j, _) = bases
        .top(user)
        .ok_or_else(|| AuthnError::UnknownUser(user.to_string()))?;
    let base = base_samples
        .get(user)
        .and_then(|list| list.get(base_j))
        .ok_or_else(|| AuthnError::UnknownUser(user.to_string()))?;
    if request.query_samples.is_empty() {
        return Err(AuthnError::NoQuerySamples);
    }
    let expanded = expand_sample(&request.query_samples, 0, request.samp_n)?;
    let pairs: Vec<(&Sample, &Sample)> = expanded.iter().map(|q| (*q, base)).collect();
    let scores = scorer.score_batch(&pairs)?;
    Ok(decide(scores, request.threshold))
}

/// Decide whether two event-stream records come from the same person.
///
/// Both records are preprocessed with `cfg`; `min(k_pairs, |A| * |B|)` cross
/// pairs are drawn without replacement (seeded) and scored as `f(a, b)`. The
/// verdict reads "consistent" when the mean score clears the threshold — a
/// low score on an account's old-vs-new traffic is the hand-off signal.
pub fn detect_inconsistency<S: PairScorer + ?Sized>(
    scorer: &S,
    cfg: &PreprocessConfig,
    record_a: &UserRecord,
    record_b: &UserRecord,
    threshold: f64,
    k_pairs: usize,
    root_seed: u64,
) -> Result<Verdict, AuthnError> {
    if k_pairs == 0 {
        return Err(AuthnError::BadRequest("k_pairs must be at least 1".into()));
    }
    let a = record_samples(record_a, cfg)?;
    let b = record_samples(record_b, cfg)?;
    if a.is_empty() {
        return Err(AuthnError::InsufficientData("a"));
    }
    if b.is_empty() {
        return Err(AuthnError::InsufficientData("b"));
    }
    let cross = a.len() * b.len();
    let k = k_pairs.min(cross);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(root_seed, &["detect-pairs"]));
    let picks = rand::seq::index::sample(&mut rng, cross, k);
    let pairs: Vec<(&Sample, &Sample)> = picks
        .iter()
        .map(|flat| (&a[flat / b.len()], &b[flat % b.len()]))
        .collect();
    let scores = scorer.score_batch(&pairs)?;
    Ok(decide(scores, threshold))
}

fn record_samples(record: &UserRecord, cfg: &PreprocessConfig) -> Result<Vec<Sample>, AuthnError> {
    let mut stats = PreprocessStats::default();
    let mut samples = Vec::new();
    for (sid, events) in record.sessions.iter().enumerate() {
        samples.extend(preprocess_session(
            events,
            &record.user_id,
            sid as u32,
            cfg,
            &mut stats,
        )?);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::ingest::{NormEvent, SourceTag};

    /// A sample with `segments` whole segments and a recognizable tag in
    /// `true_len` so stubs can tell candidates apart.
    fn tagged(user: &str, tag: usize, segments: usize) -> Sample {
        Sample {
            user_id: user.to_string(),
            session_id: 0,
            segment_ids: (0..segments as u32).collect(),
            true_len: tag,
            effective_duration: 1.0,
            rows: vec![0.0; 16],
        }
    }

    fn sample_list(user: &str, n: usize, segments: usize) -> Vec<Sample> {
        (0..n).map(|j| tagged(user, j, segments)).collect()
    }

    /// Same-user pairs score `same`, cross-user pairs `diff`.
    struct UserStub {
        same: f64,
        diff: f64,
    }

    impl PairScorer for UserStub {
        fn score_pair(&self, a: &Sample, b: &Sample) -> Result<f64, ModelError> {
            Ok(if a.user_id == b.user_id { self.same } else { self.diff })
        }
    }

    /// Scores from a closure over `(a.true_len, b.user == a.user, b.true_len)`
    /// while recording every call.
    struct RecordingStub<F: Fn(usize, bool, usize) -> f64> {
        f: F,
        calls: RefCell<Vec<(usize, bool, usize)>>,
    }

    impl<F: Fn(usize, bool, usize) -> f64> PairScorer for RecordingStub<F> {
        fn score_pair(&self, a: &Sample, b: &Sample) -> Result<f64, ModelError> {
            let key = (a.true_len, a.user_id == b.user_id, b.true_len);
            self.calls.borrow_mut().push(key);
            Ok((self.f)(key.0, key.1, key.2))
        }
    }

    fn two_user_val(n_alice: usize, n_bob: usize) -> BTreeMap<String, Vec<Sample>> {
        let mut val = BTreeMap::new();
        val.insert("alice".to_string(), sample_list("alice", n_alice, 2));
        val.insert("bob".to_string(), sample_list("bob", n_bob, 2));
        val
    }

    #[test]
    fn constant_stub_gives_the_closed_form_loss_and_index_order() {
        let mut train = BTreeMap::new();
        train.insert("alice".to_string(), sample_list("alice", 4, 2));
        let val = two_user_val(25, 25);
        let stub = UserStub { same: 0.9, diff: 0.1 };
        let set = select_base_samples(&stub, &train, &val, 11).unwrap();
        let ranked = &set.ranked["alice"];
        let expect = -(0.9f64.ln() + 0.9f64.ln()) / 2.0;
        assert!((expect - 0.10536).abs() < 1e-4);
        for (rank, &(j, loss)) in ranked.iter().enumerate() {
            assert_eq!(j, rank, "equal losses fall back to index order");
            assert!((loss - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn sharpest_candidate_wins() {
        let mut train = BTreeMap::new();
        train.insert("alice".to_string(), sample_list("alice", 6, 2));
        let val = two_user_val(25, 25);
        let stub = RecordingStub {
            f: |j, same, _| match (j == 3, same) {
                (true, true) => 0.99,
                (true, false) => 0.01,
                (false, true) => 0.6,
                (false, false) => 0.4,
            },
            calls: RefCell::new(Vec::new()),
        };
        let set = select_base_samples(&stub, &train, &val, 17).unwrap();
        assert_eq!(set.top("alice").unwrap().0, 3);
    }

    #[test]
    fn exactly_twenty_validation_samples_are_all_used_once() {
        let mut train = BTreeMap::new();
        train.insert("alice".to_string(), sample_list("alice", 1, 2));
        let val = two_user_val(SELECTION_DRAWS, 25);
        let stub = RecordingStub {
            f: |_, _, _| 0.5,
            calls: RefCell::new(Vec::new()),
        };
        select_base_samples(&stub, &train, &val, 5).unwrap();
        let mut own_tags: Vec<usize> = stub
            .calls
            .borrow()
            .iter()
            .filter(|(_, same, _)| *same)
            .map(|(_, _, tag)| *tag)
            .collect();
        own_tags.sort_unstable();
        assert_eq!(own_tags, (0..SELECTION_DRAWS).collect::<Vec<_>>());
    }

    #[test]
    fn short_validation_sets_degrade_to_all_available_draws() {
        let mut train = BTreeMap::new();
        train.insert("alice".to_string(), sample_list("alice", 2, 2));
        let val = two_user_val(7, 3);
        let stub = UserStub { same: 0.8, diff: 0.3 };
        let set = select_base_samples(&stub, &train, &val, 5).unwrap();
        let expect = -(0.8f64.ln() + 0.7f64.ln()) / 2.0;
        assert!((set.ranked["alice"][0].1 - expect).abs() < 1e-12);
    }

    #[test]
    fn missing_validation_data_is_an_error() {
        let mut train = BTreeMap::new();
        train.insert("alice".to_string(), sample_list("alice", 2, 2));
        let mut val = two_user_val(5, 5);
        val.get_mut("alice").unwrap().clear();
        let stub = UserStub { same: 0.9, diff: 0.1 };
        match select_base_samples(&stub, &train, &val, 5) {
            Err(AuthnError::NoValidationData(u)) => assert_eq!(u, "alice"),
            other => panic!("expected NoValidationData, got {other:?}"),
        }

        let mut lonely = BTreeMap::new();
        lonely.insert("alice".to_string(), sample_list("alice", 5, 2));
        match select_base_samples(&stub, &train, &lonely, 5) {
            Err(AuthnError::NoOtherUsers) => {}
            other => panic!("expected NoOtherUsers, got {other:?}"),
        }
    }

    #[test]
    fn ranking_matches_a_brute_force_of_the_recorded_draws() {
        // Deterministic pseudo-random score per (candidate, side, val tag);
        // the stub records the draws so the loss can be recomputed exactly.
        for case in 0..50u64 {
            let mut r = ChaCha8Rng::seed_from_u64(9000 + case);
            let n_cand = r.gen_range(1..=10);
            let mut train = BTreeMap::new();
            train.insert("alice".to_string(), sample_list("alice", n_cand, 2));
            let val = two_user_val(r.gen_range(1..=25), r.gen_range(1..=25));
            let stub = RecordingStub {
                f: move |j, same, tag| {
                    let h = seed::derive(case, &[&j.to_string(), &same.to_string(), &tag.to_string()]);
                    // Map the hash into (0, 1), quantized so ties happen too.
                    (h % 97 + 1) as f64 / 98.0
                },
                calls: RefCell::new(Vec::new()),
            };
            let set = select_base_samples(&stub, &train, &val, case).unwrap();

            let calls = stub.calls.borrow();
            let mut brute: Vec<(usize, f64)> = (0..n_cand)
                .map(|j| {
                    let terms: Vec<f64> = calls
                        .iter()
                        .filter(|(cand, _, _)| *cand == j)
                        .map(|&(cand, same, tag)| {
                            let s = (stub.f)(cand, same, tag);
                            if same { -s.ln() } else { -(1.0 - s).ln() }
                        })
                        .collect();
                    (j, terms.iter().sum::<f64>() / terms.len() as f64)
                })
                .collect();
            brute.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let got = &set.ranked["alice"];
            assert_eq!(got.len(), brute.len());
            for (g, b) in got.iter().zip(&brute) {
                assert_eq!(g.0, b.0, "case {case}: ranking order diverged");
                assert!((g.1 - b.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expansion_steps_by_half_the_segment_count() {
        let samples = sample_list("alice", 6, 4);
        assert_eq!(expand_indices(&samples, 0, 3).unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn expansion_step_clamps_to_one() {
        let samples = sample_list("alice", 6, 1);
        assert_eq!(expand_indices(&samples, 0, 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn expansion_stops_at_the_end_of_the_list() {
        let samples = sample_list("alice", 6, 4);
        // From index 1: 1 -> 3 -> 5, then 7 is out of range.
        assert_eq!(expand_indices(&samples, 1, 7).unwrap(), vec![1, 3, 5]);
        match expand_indices(&samples, 6, 3) {
            Err(AuthnError::IndexOutOfRange { index: 6, len: 6 }) => {}
            other => panic!("expected IndexOutOfRange, got {other:?}"),
        }
    }

    /// Per-query-tag scores for authenticate tests.
    struct TagStub(Vec<f64>);

    impl PairScorer for TagStub {
        fn score_pair(&self, a: &Sample, _b: &Sample) -> Result<f64, ModelError> {
            Ok(self.0[a.true_len])
        }
    }

    fn base_fixture() -> (BaseSampleSet, BTreeMap<String, Vec<Sample>>) {
        let mut bases = BaseSampleSet::default();
        bases.ranked.insert("alice".to_string(), vec![(1, 0.2), (0, 0.4)]);
        let mut train = BTreeMap::new();
        train.insert("alice".to_string(), sample_list("alice", 2, 2));
        (bases, train)
    }

    #[test]
    fn authenticate_means_the_expanded_scores() {
        let (bases, train) = base_fixture();
        // Three query samples, one segment each: expansion hits tags 0, 1, 2.
        let stub = TagStub(vec![0.9, 0.8, 0.7]);
        let mut request = AuthRequest::new("alice", sample_list("alice", 3, 1));
        request.samp_n = 3;
        request.threshold = 0.65;
        let verdict = authenticate(&stub, &bases, &train, &request).unwrap();
        assert!((verdict.score - 0.8).abs() < 1e-12);
        assert!(verdict.accepted);
        assert_eq!(verdict.samples_used, 3);
        assert_eq!(verdict.per_sample_scores.len(), 3);

        request.threshold = 0.85;
        let verdict = authenticate(&stub, &bases, &train, &request).unwrap();
        assert!(!verdict.accepted);
    }

    #[test]
    fn samp_n_one_is_plain_pair_scoring() {
        let (bases, train) = base_fixture();
        let stub = UserStub { same: 0.7342519, diff: 0.1 };
        let mut request = AuthRequest::new("alice", sample_list("alice", 5, 4));
        request.samp_n = 1;
        let verdict = authenticate(&stub, &bases, &train, &request).unwrap();
        let direct = stub
            .score_pair(&request.query_samples[0], &train["alice"][1])
            .unwrap();
        assert_eq!(verdict.score, direct);
        assert_eq!(verdict.samples_used, 1);
    }

    #[test]
    fn authenticate_rejects_bad_requests() {
        let (bases, train) = base_fixture();
        let stub = UserStub { same: 0.9, diff: 0.1 };
        let request = AuthRequest::new("mallory", sample_list("mallory", 3, 1));
        match authenticate(&stub, &bases, &train, &request) {
            Err(AuthnError::UnknownUser(u)) => assert_eq!(u, "mallory"),
            other => panic!("expected UnknownUser, got {other:?}"),
        }
        let request = AuthRequest::new("alice", Vec::new());
        match authenticate(&stub, &bases, &train, &request) {
            Err(AuthnError::NoQuerySamples) => {}
            other => panic!("expected NoQuerySamples, got {other:?}"),
        }
        let mut request = AuthRequest::new("alice", sample_list("alice", 3, 1));
        request.samp_n = 0;
        assert!(matches!(
            authenticate(&stub, &bases, &train, &request),
            Err(AuthnError::BadRequest(_))
        ));
    }

    #[test]
    fn verdict_score_ignores_score_order() {
        let forward = decide(vec![0.9, 0.8, 0.7, 0.2], 0.5);
        let shuffled = decide(vec![0.2, 0.7, 0.9, 0.8], 0.5);
        assert!((forward.score - shuffled.score).abs() < 1e-12);
    }

    /// Jerky cursor travel: a pause every 100 events splits the stream into
    /// segments short enough to window, each sweeping well over 5% of the
    /// screen.
    fn wiggle_session(seed: u64, n: usize) -> Vec<NormEvent> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| NormEvent {
                t: i as f64 * 0.01 + (i / 100) as f64,
                x: (0.1 + 0.8 * (i % 100) as f64 / 100.0).clamp(0.0, 1.0),
                y: (0.5 + 0.2 * r.gen::<f64>()).clamp(0.0, 1.0),
                button_down: false,
            })
            .collect()
    }

    fn record(user: &str, seed: u64, events: usize) -> UserRecord {
        UserRecord {
            user_id: user.to_string(),
            sessions: vec![wiggle_session(seed, events)],
            source_tag: SourceTag::Synthetic,
        }
    }

    #[test]
    fn identical_records_read_consistent_under_a_user_aware_stub() {
        let cfg = PreprocessConfig::default();
        let stub = UserStub { same: 0.9, diff: 0.1 };
        let a = record("alice", 1, 400);
        let b = record("bob", 2, 400);
        let same = detect_inconsistency(&stub, &cfg, &a, &a, 0.5, 8, 3).unwrap();
        let cross = detect_inconsistency(&stub, &cfg, &a, &b, 0.5, 8, 3).unwrap();
        assert!(same.accepted);
        assert!(!cross.accepted);
        assert!(same.score > cross.score);
    }

    #[test]
    fn tiny_records_are_insufficient() {
        let cfg = PreprocessConfig::default();
        let stub = UserStub { same: 0.9, diff: 0.1 };
        let a = record("alice", 1, 400);
        let tiny = record("tiny", 4, 3);
        match detect_inconsistency(&stub, &cfg, &a, &tiny, 0.5, 8, 3) {
            Err(AuthnError::InsufficientData("b")) => {}
            other => panic!("expected InsufficientData, got {other:?}"),
        }
    }

    #[test]
    fn one_cross_pair_is_a_single_score() {
        let cfg = PreprocessConfig::default();
        let stub = UserStub { same: 0.9, diff: 0.1 };
        let a = record("alice", 1, 400);
        let verdict = detect_inconsistency(&stub, &cfg, &a, &a, 0.5, 1, 3).unwrap();
        assert_eq!(verdict.samples_used, 1);
        assert_eq!(verdict.score, 0.9);
    }

    #[test]
    fn cross_pairs_are_sampled_without_replacement() {
        // Every window in a one-session record starts at a distinct segment,
        // so the first segment id identifies the sample.
        struct PairIdStub {
            calls: RefCell<Vec<(u32, u32)>>,
        }
        impl PairScorer for PairIdStub {
            fn score_pair(&self, a: &Sample, b: &Sample) -> Result<f64, ModelError> {
                self.calls
                    .borrow_mut()
                    .push((a.segment_ids[0], b.segment_ids[0]));
                Ok(0.5)
            }
        }
        let cfg = PreprocessConfig::default();
        let stub = PairIdStub {
            calls: RefCell::new(Vec::new()),
        };
        let a = record("alice", 1, 2000);
        let b = record("bob", 2, 2000);
        let verdict = detect_inconsistency(&stub, &cfg, &a, &b, 0.5, 1_000_000, 3).unwrap();
        let calls = stub.calls.borrow();
        assert_eq!(verdict.samples_used, calls.len());
        assert!(calls.len() > 100, "fixture should give a real cross product");
        let mut seen: Vec<_> = calls.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), calls.len(), "a cross pair was scored twice");
    }

    #[test]
    fn base_set_round_trips_through_the_documented_json() {
        let mut set = BaseSampleSet::default();
        set.ranked
            .insert("alice".to_string(), vec![(3, 0.125), (0, 0.5)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bases.json");
        set.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"alice\""));
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["alice"][0][0], 3);
        assert_eq!(value["alice"][0][1], 0.125);
        assert_eq!(BaseSampleSet::load(&path).unwrap(), set);
    }

    proptest! {
        /// Raising the threshold never turns a rejection into an acceptance.
        #[test]
        fn threshold_is_monotone(
            scores in proptest::collection::vec(0.0f64..=1.0, 1..20),
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let at_hi = decide(scores.clone(), hi);
            let at_lo = decide(scores, lo);
            prop_assert!(!at_hi.accepted || at_lo.accepted);
            prop_assert_eq!(at_hi.score, at_lo.score);
        }
    }
}
