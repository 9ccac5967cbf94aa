//! Generate a small synthetic population and run it through the sample
//! pipeline: segment at pauses and clicks, drop short and low-movement
//! segments, featurize into `[dx, dy, dx/dt, dy/dt]` rows, and window into
//! fixed `(256, 4)` samples.
//!
//! Run with: `cargo run --example synthesize_and_preprocess`

use mousetrace::ingest::synth::{session_seed, VIRTUAL_HEIGHT, VIRTUAL_WIDTH};
use mousetrace::ingest::{normalize, synth_user, SynthParams};
use mousetrace::preprocess::{preprocess_session, PreprocessConfig, PreprocessStats};

fn main() {
    let users = SynthParams::separated_grid(4);
    let cfg = PreprocessConfig::default();
    let mut stats = PreprocessStats::default();
    let mut all = Vec::new();

    for (i, params) in users.iter().enumerate() {
        let user_id = format!("user{i}");
        for session in 0..2 {
            let events = synth_user(params, session_seed(42, &user_id, session), 60.0);
            let norm = normalize(&events, VIRTUAL_WIDTH, VIRTUAL_HEIGHT).unwrap();
            let samples =
                preprocess_session(&norm, &user_id, session as u32, &cfg, &mut stats).unwrap();
            println!(
                "{user_id} session {session}: {} events -> {} samples",
                events.len(),
                samples.len()
            );
            all.extend(samples);
        }
    }

    stats.finalize(&all);
    println!();
    println!(
        "segments: {} kept of {} ({} too short, {} too little movement)",
        stats.segments_kept,
        stats.segments_pre_filter,
        stats.dropped_short,
        stats.dropped_low_movement
    );
    println!(
        "samples: {} total, mean effective duration {:.2}s, mean rows {:.0} of {}",
        all.len(),
        stats.mean_effective_duration_s,
        stats.mean_true_len,
        cfg.max_rows
    );

    // Each sample is a flat row-major matrix; rows past true_len are padding.
    let s = &all[0];
    println!();
    println!("first sample of {}: true_len {}", s.user_id, s.true_len);
    for r in 0..3 {
        let row = s.row(r);
        println!(
            "  row {r}: dx {:+.4}  dy {:+.4}  vx {:+.3}  vy {:+.3}",
            row[0], row[1], row[2], row[3]
        );
    }
}
