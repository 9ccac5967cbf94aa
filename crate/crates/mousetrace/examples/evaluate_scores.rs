//! The evaluation toolbox on its own: FAR/FRR at a threshold, ROC-AUC by
//! rank statistic, the full FRR-FAR curve, per-user AUC, and report export
//! (JSON, CSV, and an SVG plot).
//!
//! Scores here are synthetic — a well-separated genuine/impostor mix — so
//! the example runs instantly; any scorer producing `[0, 1]` similarities
//! plugs into the same functions.
//!
//! Run with: `cargo run --example evaluate_scores`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mousetrace::eval::{
    aggregate_mean, export_report, far_frr, frr_far_curve, roc_auc, write_curve_svg, EvalReport,
    ReportFormat, Role, ScoredSet,
};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let users = ["ada", "bob", "cyd", "dee"];

    // Genuine scores cluster high, impostor scores low, with overlap.
    let mut set = ScoredSet::default();
    for target in users {
        for _ in 0..60 {
            let score: f64 = 0.5 + 0.5 * rng.gen::<f64>() - 0.3 * rng.gen::<f64>();
            set.push(score.clamp(0.0, 1.0), true, target, target);
        }
        for attacker in users.iter().filter(|u| **u != target) {
            for _ in 0..20 {
                let score: f64 = 0.35 * rng.gen::<f64>() + 0.3 * rng.gen::<f64>();
                set.push(score.clamp(0.0, 1.0), false, target, attacker);
            }
        }
    }

    let auc = roc_auc(&set).unwrap();
    println!("auc {auc:.4}");
    for threshold in [0.3, 0.5, 0.7] {
        let (far, frr) = far_frr(&set, threshold).unwrap();
        println!("threshold {threshold}: far {far:.4}, frr {frr:.4}");
    }

    // The curve sweeps every distinct score as a threshold; the crossing is
    // the equal-error neighborhood.
    let curve = frr_far_curve(&set).unwrap();
    let eer_point = curve
        .iter()
        .min_by(|a, b| {
            let da = (a.far - a.frr).abs();
            let db = (b.far - b.frr).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    println!(
        "closest to equal error: threshold {:.3} (far {:.4}, frr {:.4})",
        eer_point.threshold, eer_point.far, eer_point.frr
    );

    // Reports bundle the metrics with provenance (config hash, condition)
    // and aggregate across folds by pointwise mean.
    let mut fold0 = EvalReport::from_scores(&set, 0.5, Role::AsTarget, "example-hash").unwrap();
    fold0.condition = Some("fold0".into());
    let mut fold1 = fold0.clone();
    fold1.condition = Some("fold1".into());
    fold1.auc -= 0.01;
    let mean = aggregate_mean(&[fold0.clone(), fold1]).unwrap();
    println!("mean over folds: auc {:.4}", mean.auc);

    let dir = std::env::temp_dir().join("mousetrace-example-reports");
    std::fs::create_dir_all(&dir).unwrap();
    export_report(&fold0, &dir.join("report.json"), ReportFormat::Json).unwrap();
    export_report(&fold0, &dir.join("report.csv"), ReportFormat::Csv).unwrap();
    write_curve_svg(&fold0, &dir.join("report.svg")).unwrap();
    println!("wrote report.json / report.csv / report.svg to {}", dir.display());
}
