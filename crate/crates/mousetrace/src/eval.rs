//! Biometric evaluation: FAR/FRR, ROC-AUC, threshold curves, reports.
//!
//! Scores are P(same user); an attempt is accepted when its score is >= the
//! threshold (ties accept). AUC uses the rank (Mann-Whitney) formulation
//! with half credit for ties, which equals trapezoidal ROC integration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("score set contains only one class; need >= 1 genuine and >= 1 impostor")]
    OneClassOnly,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad report file: {0}")]
    BadReport(String),
}

/// One scored attempt. `target` is the claimed identity, `attacker` the
/// identity that actually produced the query (equal to `target` on genuine
/// attempts).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredItem {
    pub score: f64,
    pub genuine: bool,
    pub target: String,
    pub attacker: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoredSet {
    pub items: Vec<ScoredItem>,
}

impl ScoredSet {
    pub fn push(&mut self, score: f64, genuine: bool, target: &str, attacker: &str) {
        self.items.push(ScoredItem {
            score,
            genuine,
            target: target.to_string(),
            attacker: attacker.to_string(),
        });
    }

    fn class_counts(&self) -> (usize, usize) {
        let genuine = self.items.iter().filter(|i| i.genuine).count();
        (genuine, self.items.len() - genuine)
    }
}

/// Raw accept/reject counts at a threshold; the float rates are quotients
/// of these integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FarFrrCounts {
    pub accepted_impostors: usize,
    pub impostors: usize,
    pub rejected_genuine: usize,
    pub genuine: usize,
}

pub fn far_frr_counts(set: &ScoredSet, threshold: f64) -> Result<FarFrrCounts, EvalError> {
    let (genuine, impostors) = set.class_counts();
    if genuine == 0 || impostors == 0 {
        return Err(EvalError::OneClassOnly);
    }
    let mut accepted_impostors = 0usize;
    let mut rejected_genuine = 0usize;
    for item in &set.items {
        let accepted = item.score >= threshold;
        match (item.genuine, accepted) {
            (false, true) => accepted_impostors += 1,
            (true, false) => rejected_genuine += 1,
            _ => {}
        }
    }
    Ok(FarFrrCounts {
        accepted_impostors,
        impostors,
        rejected_genuine,
        genuine,
    })
}

/// False-accept and false-reject rates at `threshold` (accept on >=).
pub fn far_frr(set: &ScoredSet, threshold: f64) -> Result<(f64, f64), EvalError> {
    let c = far_frr_counts(set, threshold)?;
    Ok((
        c.accepted_impostors as f64 / c.impostors as f64,
        c.rejected_genuine as f64 / c.genuine as f64,
    ))
}

/// Probability that a random genuine score exceeds a random impostor score,
/// ties counted half.
pub fn roc_auc(set: &ScoredSet) -> Result<f64, EvalError> {
    let (n_g, n_i) = set.class_counts();
    if n_g == 0 || n_i == 0 {
        return Err(EvalError::OneClassOnly);
    }
    let n = set.items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.items[a].score.total_cmp(&set.items[b].score));
    // Average ranks over tie groups give the half-credit convention for free.
    let mut ranks = vec![0.0f64; n];
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.items[order[j + 1]].score == set.items[order[i]].score {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = set
        .items
        .iter()
        .zip(&ranks)
        .filter(|(item, _)| item.genuine)
        .map(|(_, r)| r)
        .sum();
    let wins = rank_sum - (n_g * (n_g + 1)) as f64 / 2.0;
    Ok(wins / (n_g as f64 * n_i as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// FAR/FRR sampled at thresholds 0, 0.05, …, 1 — exactly 21 points.
pub fn frr_far_curve(set: &ScoredSet) -> Result<Vec<CurvePoint>, EvalError> {
    (0..=20)
        .map(|i| {
            let threshold = i as f64 / 20.0;
            let (far, frr) = far_frr(set, threshold)?;
            Ok(CurvePoint {
                threshold,
                far,
                frr,
            })
        })
        .collect()
}

/// Which identity a per-user breakdown groups by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Group impostor items by the attacking identity; each group also
    /// carries the genuine items of the targets that identity attacked.
    AsAttacker,
    /// Group every item by the claimed identity.
    AsTarget,
}

/// AUC per user in the given role. Users whose subset has only one class
/// are omitted rather than failing the whole map.
pub fn per_user_auc(set: &ScoredSet, role: Role) -> BTreeMap<String, f64> {
    let users: BTreeSet<&str> = match role {
        Role::AsAttacker => set
            .items
            .iter()
            .filter(|i| !i.genuine)
            .map(|i| i.attacker.as_str())
            .collect(),
        Role::AsTarget => set.items.iter().map(|i| i.target.as_str()).collect(),
    };
    let mut out = BTreeMap::new();
    for user in users {
        let subset = match role {
            Role::AsTarget => ScoredSet {
                items: set
                    .items
                    .iter()
                    .filter(|i| i.target == user)
                    .cloned()
                    .collect(),
            },
            Role::AsAttacker => {
                let impostor: Vec<ScoredItem> = set
                    .items
                    .iter()
                    .filter(|i| !i.genuine && i.attacker == user)
                    .cloned()
                    .collect();
                let attacked: BTreeSet<String> =
                    impostor.iter().map(|i| i.target.clone()).collect();
                let genuine: Vec<ScoredItem> = set
                    .items
                    .iter()
                    .filter(|i| i.genuine && attacked.contains(&i.target))
                    .cloned()
                    .collect();
                ScoredSet {
                    items: impostor.into_iter().chain(genuine).collect(),
                }
            }
        };
        if let Ok(auc) = roc_auc(&subset) {
            out.insert(user.to_string(), auc);
        }
    }
    out
}

/// Everything one experiment condition reports.
///
/// `train_time_s` is None in files written by seeded experiment runs so
/// that reruns stay byte-identical; wall times live in the run manifest.
/// `auth_time_s` is the mean effective mouse-movement seconds consumed per
/// decision — a function of the data, not the clock.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub far: f64,
    pub frr: f64,
    pub threshold: f64,
    pub curve: Vec<CurvePoint>,
    pub per_user_auc: BTreeMap<String, f64>,
    pub train_time_s: Option<f64>,
    pub auth_time_s: Option<f64>,
    pub config_hash: String,
    /// Tag such as `fold3` or `samp_n=3` distinguishing sibling reports.
    pub condition: Option<String>,
}

impl EvalReport {
    /// Compute all metric fields from a score set at one threshold.
    pub fn from_scores(
        set: &ScoredSet,
        threshold: f64,
        role: Role,
        config_hash: &str,
    ) -> Result<Self, EvalError> {
        let (far, frr) = far_frr(set, threshold)?;
        Ok(Self {
            auc: roc_auc(set)?,
            far,
            frr,
            threshold,
            curve: frr_far_curve(set)?,
            per_user_auc: per_user_auc(set, role),
            train_time_s: None,
            auth_time_s: None,
            config_hash: config_hash.to_string(),
            condition: None,
        })
    }
}

/// Pointwise mean over sibling reports (folds of one experiment). Per-user
/// entries average over the reports that contain the user.
pub fn aggregate_mean(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports
        .first()
        .ok_or_else(|| EvalError::BadReport("cannot aggregate zero reports".into()))?;
    if reports
        .iter()
        .any(|r| r.threshold != first.threshold || r.curve.len() != first.curve.len())
    {
        return Err(EvalError::BadReport(
            "aggregated reports must share threshold and curve shape".into(),
        ));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let curve = (0..first.curve.len())
        .map(|k| CurvePoint {
            threshold: first.curve[k].threshold,
            far: reports.iter().map(|r| r.curve[k].far).sum::<f64>() / n,
            frr: reports.iter().map(|r| r.curve[k].frr).sum::<f64>() / n,
        })
        .collect();
    let mut per_user: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in reports {
        for (u, &auc) in &r.per_user_auc {
            let e = per_user.entry(u.clone()).or_insert((0.0, 0));
            e.0 += auc;
            e.1 += 1;
        }
    }
    let auth_times: Vec<f64> = reports.iter().filter_map(|r| r.auth_time_s).collect();
    Ok(EvalReport {
        auc: mean(|r| r.auc),
        far: mean(|r| r.far),
        frr: mean(|r| r.frr),
        threshold: first.threshold,
        curve,
        per_user_auc: per_user
            .into_iter()
            .map(|(u, (sum, c))| (u, sum / c as f64))
            .collect(),
        train_time_s: None,
        auth_time_s: if auth_times.is_empty() {
            None
        } else {
            Some(auth_times.iter().sum::<f64>() / auth_times.len() as f64)
        },
        config_hash: first.config_hash.clone(),
        condition: Some("mean".into()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Render with at least 6 significant digits, plain decimal notation.
fn fmt_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_sig6).unwrap_or_default()
}

pub fn export_report(
    report: &EvalReport,
    path: &Path,
    format: ReportFormat,
) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    };
    match format {
        ReportFormat::Json => {
            let mut json = serde_json::to_string_pretty(report)
                .map_err(|e| EvalError::BadReport(e.to_string()))?;
            json.push('\n');
            fs::write(path, json).map_err(io)?;
        }
        ReportFormat::Csv => {
            let mut text = String::new();
            text.push_str("# summary\n");
            text.push_str("auc,far,frr,threshold,train_time_s,auth_time_s,config_hash\n");
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_sig6(report.auc),
                fmt_sig6(report.far),
                fmt_sig6(report.frr),
                fmt_sig6(report.threshold),
                fmt_opt(report.train_time_s),
                fmt_opt(report.auth_time_s),
                report.config_hash,
            ));
            text.push_str("# curve\nthreshold,far,frr\n");
            for p in &report.curve {
                text.push_str(&format!(
                    "{},{},{}\n",
                    fmt_sig6(p.threshold),
                    fmt_sig6(p.far),
                    fmt_sig6(p.frr)
                ));
            }
            text.push_str("# per_user_auc\nuser_id,auc\n");
            for (u, auc) in &report.per_user_auc {
                text.push_str(&format!("{u},{}\n", fmt_sig6(*auc)));
            }
            fs::write(path, text).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| EvalError::BadReport(e.to_string()))
}

/// Companion FRR-FAR plot (simple SVG, no dependencies): FAR solid, FRR
/// dashed, threshold on the x axis.
pub fn write_curve_svg(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    let (w, h, m) = (520.0f64, 400.0f64, 50.0f64);
    let sx = |t: f64| m + t * (w - 2.0 * m);
    let sy = |v: f64| h - m - v * (h - 2.0 * m);
    let poly = |pick: &dyn Fn(&CurvePoint) -> f64| -> String {
        report
            .curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.threshold), sy(pick(p))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            sx(0.0),
            sy(v),
            sx(1.0),
            sy(v)
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{v:.2}</text>\n",
            sx(0.0) - 6.0,
            sy(v) + 4.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{v:.2}</text>\n",
            sx(v),
            sy(0.0) + 16.0
        ));
    }
    svg.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>\n",
        poly(&|p| p.far)
    ));
    svg.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#2980b9\" stroke-width=\"1.5\" \
         stroke-dasharray=\"5,3\"/>\n",
        poly(&|p| p.frr)
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"20\" font-size=\"12\">FAR (solid) / FRR (dashed) vs threshold</text>\n",
        m
    ));
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
