//! Event streams to fixed-width feature samples.
//!
//! A session is cut into segments wherever the button state flips or the gap
//! between consecutive timestamps exceeds 0.3 s. Short and low-movement
//! segments are discarded. A sliding window (stride: one segment) then
//! concatenates consecutive segments whose feature rows fit the 256-row
//! limit; each window becomes one zero-padded `(256, 4)` sample of
//! `[dx, dy, dx/dt, dy/dt]` rows. Feature rows never cross a segment
//! boundary, so the concatenation stays smooth.

use serde::{Deserialize, Serialize};

use crate::ingest::NormEvent;

/// Knobs of the segmentation/trimming/windowing pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Cut when the gap between consecutive timestamps exceeds this (seconds).
    pub gap_cut: f64,
    /// Segments with fewer events than this are discarded.
    pub min_seg_points: usize,
    /// Movement threshold as a fraction of the screen; see `literal_filter`.
    pub min_move_frac: f64,
    /// Feature rows per sample; windows never exceed this.
    pub max_rows: usize,
    /// Windows accumulating fewer rows than this emit no sample.
    pub min_sample_rows: usize,
    /// Default (false): discard segments moving less than `min_move_frac` in
    /// BOTH directions. When set, apply the literal reading instead: discard
    /// segments moving more than `min_move_frac` in either direction.
    pub literal_filter: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            gap_cut: 0.3,
            min_seg_points: 5,
            min_move_frac: 0.05,
            max_rows: 256,
            min_sample_rows: 32,
            literal_filter: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.gap_cut > 0.0)
            || self.min_seg_points == 0
            || !(self.min_move_frac > 0.0)
            || self.max_rows == 0
            || self.min_sample_rows == 0
        {
            return Err(PreprocessError::BadConfig(
                "all preprocess parameters must be positive".into(),
            ));
        }
        if self.min_sample_rows > self.max_rows {
            return Err(PreprocessError::BadConfig(format!(
                "min_sample_rows ({}) must not exceed max_rows ({})",
                self.min_sample_rows, self.max_rows
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("invalid preprocess config: {0}")]
    BadConfig(String),
    #[error("segment has fewer than 2 events, cannot featurize")]
    DegenerateSegment,
}

/// A maximal run of events with constant button state and no internal gap.
#[derive(Debug, Clone)]
pub struct Segment {
    pub user_id: String,
    pub session_id: u32,
    /// Index of the first event within the source session.
    pub start_index: usize,
    pub events: Vec<NormEvent>,
}

impl Segment {
    /// Wall-time covered by the segment.
    pub fn duration(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// One `(max_rows, 4)` feature matrix built from consecutive segments.
///
/// Rows are stored row-major as f32, padded with zeros beyond `true_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub user_id: String,
    pub session_id: u32,
    /// Consecutive post-filter segment indices this window concatenated.
    pub segment_ids: Vec<u32>,
    /// Feature rows actually present (<= max_rows).
    pub true_len: usize,
    /// Summed wall-time of the included segments, seconds.
    pub effective_duration: f64,
    /// Row-major `[dx, dy, vx, vy]` rows, length = max_rows * 4.
    pub rows: Vec<f32>,
}

impl Sample {
    /// Number of segments concatenated into this sample; drives the
    /// half-overlap expansion step in dynamic authentication.
    pub fn segment_count(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.rows[r * 4..r * 4 + 4]
    }
}

/// Cut a session exactly where the button state flips or the timestamp gap
/// exceeds `cfg.gap_cut`. Every input event lands in exactly one segment.
pub fn segment_session(
    events: &[NormEvent],
    user_id: &str,
    session_id: u32,
    cfg: &PreprocessConfig,
) -> Vec<Segment> {
    let mut segments = Vec::new();
    if events.is_empty() {
        return segments;
    }
    let mut start = 0usize;
    for k in 1..events.len() {
        let gap = events[k].t - events[k - 1].t;
        if events[k].button_down != events[k - 1].button_down || gap > cfg.gap_cut {
            segments.push(Segment {
                user_id: user_id.to_string(),
                session_id,
                start_index: start,
                events: events[start..k].to_vec(),
            });
            start = k;
        }
    }
    segments.push(Segment {
        user_id: user_id.to_string(),
        session_id,
        start_index: start,
        events: events[start..].to_vec(),
    });
    segments
}

/// Drop segments that carry too little movement information: fewer than
/// `min_seg_points` events, or (by default) a coordinate range below
/// `min_move_frac` in both directions. Survivors keep order and indices.
pub fn filter_segments(segments: Vec<Segment>, cfg: &PreprocessConfig) -> Vec<Segment> {
    segments
        .into_iter()
        .filter(|seg| keep_segment(seg, cfg))
        .collect()
}

fn keep_segment(seg: &Segment, cfg: &PreprocessConfig) -> bool {
    if seg.events.len() < cfg.min_seg_points {
        return false;
    }
    !movement_filtered(seg, cfg)
}

fn movement_filtered(seg: &Segment, cfg: &PreprocessConfig) -> bool {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for e in &seg.events {
        min_x = min_x.min(e.x);
        max_x = max_x.max(e.x);
        min_y = min_y.min(e.y);
        max_y = max_y.max(e.y);
    }
    let range_x = max_x - min_x;
    let range_y = max_y - min_y;
    if cfg.literal_filter {
        range_x > cfg.min_move_frac || range_y > cfg.min_move_frac
    } else {
        range_x < cfg.min_move_frac && range_y < cfg.min_move_frac
    }
}

/// Feature rows of one segment: row k is
/// `[x_{k+1}-x_k, y_{k+1}-y_k, dx/dt, dy/dt]`, exactly `len - 1` rows.
pub fn featurize_segment(seg: &Segment) -> Result<Vec<[f32; 4]>, PreprocessError> {
    if seg.events.len() < 2 {
        return Err(PreprocessError::DegenerateSegment);
    }
    Ok(seg
        .events
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let dx = w[1].x - w[0].x;
            let dy = w[1].y - w[0].y;
            [dx as f32, dy as f32, (dx / dt) as f32, (dy / dt) as f32]
        })
        .collect())
}

/// Slide a window over the post-filter segments of one session with a stride
/// of one segment. Each window greedily appends consecutive segments while
/// the accumulated feature-row count fits `max_rows`; segments are included
/// whole or not at all. Windows below `min_sample_rows` emit nothing.
pub fn window_samples(
    segments: &[Segment],
    cfg: &PreprocessConfig,
) -> Result<Vec<Sample>, PreprocessError> {
    let feature_rows: Vec<Vec<[f32; 4]>> = segments
        .iter()
        .map(featurize_segment)
        .collect::<Result<_, _>>()?;
    let mut samples = Vec::new();
    for start in 0..segments.len() {
        let mut acc = 0usize;
        let mut end = start;
        while end < segments.len() && acc + feature_rows[end].len() <= cfg.max_rows {
            acc += feature_rows[end].len();
            end += 1;
        }
        if end == start || acc < cfg.min_sample_rows {
            continue;
        }
        let mut rows = vec![0.0f32; cfg.max_rows * 4];
        let mut cursor = 0usize;
        let mut effective = 0.0f64;
        for seg_idx in start..end {
            for row in &feature_rows[seg_idx] {
                rows[cursor..cursor + 4].copy_from_slice(row);
                cursor += 4;
            }
            effective += segments[seg_idx].duration();
        }
        samples.push(Sample {
            user_id: segments[start].user_id.clone(),
            session_id: segments[start].session_id,
            segment_ids: (start as u32..end as u32).collect(),
            true_len: acc,
            effective_duration: effective,
            rows,
        });
    }
    Ok(samples)
}

/// Counters describing what the pipeline kept and dropped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub sessions: usize,
    pub events_in: usize,
    pub segments_pre_filter: usize,
    pub dropped_short: usize,
    pub dropped_low_movement: usize,
    pub segments_kept: usize,
    pub samples: usize,
    pub mean_effective_duration_s: f64,
    pub mean_true_len: f64,
}

/// Run the full pipeline on one session.
pub fn preprocess_session(
    events: &[NormEvent],
    user_id: &str,
    session_id: u32,
    cfg: &PreprocessConfig,
    stats: &mut PreprocessStats,
) -> Result<Vec<Sample>, PreprocessError> {
    let segments = segment_session(events, user_id, session_id, cfg);
    stats.sessions += 1;
    stats.events_in += events.len();
    stats.segments_pre_filter += segments.len();
    let mut kept = Vec::with_capacity(segments.len());
    for seg in segments {
        if seg.events.len() < cfg.min_seg_points {
            stats.dropped_short += 1;
        } else if movement_filtered(&seg, cfg) {
            stats.dropped_low_movement += 1;
        } else {
            kept.push(seg);
        }
    }
    stats.segments_kept += kept.len();
    let samples = window_samples(&kept, cfg)?;
    stats.samples += samples.len();
    Ok(samples)
}

impl PreprocessStats {
    /// Fill the derived means from a finished sample list.
    pub fn finalize(&mut self, samples: &[Sample]) {
        if samples.is_empty() {
            return;
        }
        let n = samples.len() as f64;
        self.mean_effective_duration_s =
            samples.iter().map(|s| s.effective_duration).sum::<f64>() / n;
        self.mean_true_len = samples.iter().map(|s| s.true_len as f64).sum::<f64>() / n;
    }
}
