//! Raw mouse-event ingestion: log parsing, coordinate normalization, dataset
//! manifests, and a deterministic synthetic generator for desk-scale runs.
//!
//! The canonical log format is a UTF-8 CSV with header `t,x,y,button,action`,
//! one event per line, `t` in seconds. Adapters translate SapiMouse-style and
//! Balabit-style layouts into the same [`RawEvent`] stream so everything
//! downstream sees a single representation.

pub mod synth;

pub use synth::{synth_user, SynthParams};

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Mouse button identifier as reported by the source log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Button {
    None,
    Left,
    Right,
    Middle,
}

/// What the event reports the mouse was doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Move,
    Press,
    Release,
    Drag,
}

/// One raw, resolution-dependent mouse event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEvent {
    /// Seconds since session start; finite and non-negative.
    pub t: f64,
    /// Horizontal position in pixels.
    pub x: f64,
    /// Vertical position in pixels.
    pub y: f64,
    pub button: Button,
    pub action: Action,
}

/// One timestamped event with coordinates normalized to `[0, 1]` and the
/// button state reduced to "any button currently held".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEvent {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub button_down: bool,
}

/// Where a user's data came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Guided,
    Unguided,
    Synthetic,
}

/// All sessions of one user, normalized and ready for preprocessing.
#[derive(Debug, Clone)]
pub struct UserRecord {
    pub user_id: String,
    pub sessions: Vec<Vec<NormEvent>>,
    pub source_tag: SourceTag,
}

/// Supported input log layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaId {
    /// `t,x,y,button,action` with t in seconds.
    Canonical,
    /// SapiMouse-style: `timestamp,button,state,x,y` with timestamp in ms.
    Sapimouse,
    /// Balabit-style: `record timestamp,client timestamp,button,state,x,y`,
    /// client timestamp in seconds.
    Balabit,
}

impl SchemaId {
    pub fn parse_name(name: &str) -> Result<Self, IngestError> {
        match name.to_ascii_lowercase().as_str() {
            "canonical" => Ok(SchemaId::Canonical),
            "sapimouse" => Ok(SchemaId::Sapimouse),
            "balabit" => Ok(SchemaId::Balabit),
            other => Err(IngestError::UnknownSchema(other.to_string())),
        }
    }

    fn default_source_tag(self) -> SourceTag {
        match self {
            SchemaId::Canonical | SchemaId::Sapimouse => SourceTag::Guided,
            SchemaId::Balabit => SourceTag::Unguided,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("unknown schema `{0}` (expected canonical, sapimouse, or balabit)")]
    UnknownSchema(String),
    #[error("log contains zero parseable events")]
    EmptyLog,
    #[error("screen resolution must be positive, got {width}x{height}")]
    NonpositiveResolution { width: f64, height: f64 },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("manifest error: {0}")]
    BadManifest(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Result of parsing one log: events in file order plus the count of lines
/// that failed to parse and were skipped.
#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub events: Vec<RawEvent>,
    pub malformed_lines: usize,
}

/// Parse a line-delimited event log in the given schema.
///
/// Malformed lines are skipped and counted, never fatal. Blank lines and the
/// header line are ignored without counting. A log with zero parseable
/// events is an error.
pub fn parse_event_log<R: Read>(reader: R, schema: SchemaId) -> Result<ParsedLog, IngestError> {
    let buf = BufReader::new(reader);
    let mut events = Vec::new();
    let mut malformed = 0usize;
    for (line_no, line) in buf.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: PathBuf::from("<stream>"),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 0 && looks_like_header(trimmed) {
            continue;
        }
        match parse_line(trimmed, schema) {
            Some(ev) => events.push(ev),
            None => malformed += 1,
        }
    }
    if events.is_empty() {
        return Err(IngestError::EmptyLog);
    }
    Ok(ParsedLog {
        events,
        malformed_lines: malformed,
    })
}

fn looks_like_header(line: &str) -> bool {
    let first = line.split(',').next().unwrap_or("").trim();
    first.parse::<f64>().is_err()
}

fn parse_line(line: &str, schema: SchemaId) -> Option<RawEvent> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    match schema {
        SchemaId::Canonical => {
            if fields.len() != 5 {
                return None;
            }
            let t = parse_time(fields[0])?;
            let x = parse_coord(fields[1])?;
            let y = parse_coord(fields[2])?;
            let button = parse_button(fields[3])?;
            let action = parse_action(fields[4])?;
            Some(RawEvent {
                t,
                x,
                y,
                button,
                action,
            })
        }
        SchemaId::Sapimouse => {
            if fields.len() != 5 {
                return None;
            }
            let ms = parse_time(fields[0])?;
            let x = parse_coord(fields[3])?;
            let y = parse_coord(fields[4])?;
            Some(RawEvent {
                t: ms / 1000.0,
                x,
                y,
                button: lenient_button(fields[1]),
                action: lenient_action(fields[2]),
            })
        }
        SchemaId::Balabit => {
            if fields.len() != 6 {
                return None;
            }
            let t = parse_time(fields[1])?;
            let x = parse_coord(fields[4])?;
            let y = parse_coord(fields[5])?;
            Some(RawEvent {
                t,
                x,
                y,
                button: lenient_button(fields[2]),
                action: lenient_action(fields[3]),
            })
        }
    }
}

fn parse_time(s: &str) -> Option<f64> {
    let t = s.parse::<f64>().ok()?;
    (t.is_finite() && t >= 0.0).then_some(t)
}

fn parse_coord(s: &str) -> Option<f64> {
    let v = s.parse::<f64>().ok()?;
    v.is_finite().then_some(v)
}

fn parse_button(s: &str) -> Option<Button> {
    match s.to_ascii_lowercase().as_str() {
        "none" => Some(Button::None),
        "left" => Some(Button::Left),
        "right" => Some(Button::Right),
        "middle" => Some(Button::Middle),
        _ => None,
    }
}

fn parse_action(s: &str) -> Option<Action> {
    match s.to_ascii_lowercase().as_str() {
        "move" => Some(Action::Move),
        "press" => Some(Action::Press),
        "release" => Some(Action::Release),
        "drag" => Some(Action::Drag),
        _ => None,
    }
}

/// Dataset-style button vocabulary; anything unknown degrades to `None`.
fn lenient_button(s: &str) -> Button {
    match s.to_ascii_lowercase().as_str() {
        "left" => Button::Left,
        "right" => Button::Right,
        "middle" => Button::Middle,
        _ => Button::None,
    }
}

/// Dataset-style state vocabulary; scroll and other states degrade to moves.
fn lenient_action(s: &str) -> Action {
    match s.to_ascii_lowercase().as_str() {
        "move" | "moved" => Action::Move,
        "pressed" | "press" | "down" => Action::Press,
        "released" | "release" | "up" => Action::Release,
        "drag" | "dragged" => Action::Drag,
        _ => Action::Move,
    }
}

/// Normalize raw events: scale coordinates by the screen resolution with
/// clamping to `[0, 1]`, derive the held-button flag by replaying
/// press/release actions (a drag implies held), sort by time if needed, and
/// merge events sharing a timestamp keeping the last so `t` ends up strictly
/// increasing.
pub fn normalize(
    events: &[RawEvent],
    screen_w: f64,
    screen_h: f64,
) -> Result<Vec<NormEvent>, IngestError> {
    if !(screen_w > 0.0) || !(screen_h > 0.0) {
        return Err(IngestError::NonpositiveResolution {
            width: screen_w,
            height: screen_h,
        });
    }
    if !events.windows(2).all(|w| w[0].t <= w[1].t) {
        // Stable sort keeps the original order of equal timestamps so the
        // merge below still keeps the last one.
        let mut sorted = events.to_vec();
        sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
        return normalize(&sorted, screen_w, screen_h);
    }

    let mut held = false;
    let mut out: Vec<NormEvent> = Vec::with_capacity(events.len());
    for ev in events {
        match ev.action {
            Action::Press | Action::Drag => held = true,
            Action::Release => held = false,
            Action::Move => {}
        }
        let ne = NormEvent {
            t: ev.t,
            x: (ev.x / screen_w).clamp(0.0, 1.0),
            y: (ev.y / screen_h).clamp(0.0, 1.0),
            button_down: held,
        };
        match out.last_mut() {
            Some(last) if last.t == ne.t => *last = ne,
            _ => out.push(ne),
        }
    }
    Ok(out)
}

/// Per-user entry of a dataset manifest. A user either references session
/// files (`schema` + `resolution` + `sessions`) or carries inline synthetic
/// parameters (`synth` + `duration_s`, optional `session_count`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestUser {
    pub user_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sessions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<SourceTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_count: Option<usize>,
}

/// Dataset manifest: the single entry point for loading real or synthetic
/// users. `seed` feeds the synthetic users' generators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub seed: u64,
    pub users: Vec<ManifestUser>,
}

impl DatasetManifest {
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|_| IngestError::MissingFile(path.to_path_buf()))?;
        let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| IngestError::BadManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = BTreeSet::new();
        for user in &self.users {
            if !seen.insert(&user.user_id) {
                return Err(IngestError::BadManifest(format!(
                    "duplicate user_id `{}`",
                    user.user_id
                )));
            }
            let has_files = !user.sessions.is_empty();
            let has_synth = user.synth.is_some();
            if has_files == has_synth {
                return Err(IngestError::BadManifest(format!(
                    "user `{}` must have either session files or synth params",
                    user.user_id
                )));
            }
            if has_files && (user.schema.is_none() || user.resolution.is_none()) {
                return Err(IngestError::BadManifest(format!(
                    "user `{}` needs schema and resolution",
                    user.user_id
                )));
            }
        }
        Ok(())
    }
}

/// Summary counters collected while loading a dataset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestStats {
    pub users: usize,
    pub sessions: usize,
    pub events: usize,
    pub malformed_lines: usize,
}

/// Load every user in the manifest: parse session files (paths resolved
/// relative to `root`), or generate synthetic sessions for inline-parameter
/// users, then normalize. Session order follows the manifest.
pub fn load_dataset(
    root: &Path,
    manifest: &DatasetManifest,
) -> Result<(Vec<UserRecord>, IngestStats), IngestError> {
    manifest.validate()?;
    let mut records = Vec::with_capacity(manifest.users.len());
    let mut stats = IngestStats::default();
    for user in &manifest.users {
        let record = if let Some(params) = &user.synth {
            load_synth_user(user, params, manifest.seed)?
        } else {
            load_file_user(root, user, &mut stats)?
        };
        stats.users += 1;
        stats.sessions += record.sessions.len();
        stats.events += record.sessions.iter().map(Vec::len).sum::<usize>();
        records.push(record);
    }
    Ok((records, stats))
}

fn load_file_user(
    root: &Path,
    user: &ManifestUser,
    stats: &mut IngestStats,
) -> Result<UserRecord, IngestError> {
    let schema = SchemaId::parse_name(user.schema.as_deref().unwrap_or(""))?;
    let [w, h] = user.resolution.unwrap();
    let mut sessions = Vec::with_capacity(user.sessions.len());
    for rel in &user.sessions {
        let path = root.join(rel);
        let file = File::open(&path).map_err(|_| IngestError::MissingFile(path.clone()))?;
        let parsed = parse_event_log(file, schema)?;
        stats.malformed_lines += parsed.malformed_lines;
        let norm = normalize(&parsed.events, w, h)?;
        if norm.is_empty() {
            return Err(IngestError::EmptyLog);
        }
        sessions.push(norm);
    }
    Ok(UserRecord {
        user_id: user.user_id.clone(),
        sessions,
        source_tag: user.environment.unwrap_or(schema.default_source_tag()),
    })
}

fn load_synth_user(
    user: &ManifestUser,
    params: &SynthParams,
    dataset_seed: u64,
) -> Result<UserRecord, IngestError> {
    params
        .validate()
        .map_err(|e| IngestError::BadManifest(format!("user `{}`: {e}", user.user_id)))?;
    let duration = user.duration_s.unwrap_or(90.0);
    let count = user.session_count.unwrap_or(1).max(1);
    let mut sessions = Vec::with_capacity(count);
    for session_idx in 0..count {
        let seed = synth::session_seed(dataset_seed, &user.user_id, session_idx);
        let raw = synth_user(params, seed, duration);
        let norm = normalize(&raw, synth::VIRTUAL_WIDTH, synth::VIRTUAL_HEIGHT)?;
        sessions.push(norm);
    }
    Ok(UserRecord {
        user_id: user.user_id.clone(),
        sessions,
        source_tag: SourceTag::Synthetic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_line_maps_fields_directly() {
        let log = "t,x,y,button,action\n0.125,410,300,none,move\n";
        let parsed = parse_event_log(log.as_bytes(), SchemaId::Canonical).unwrap();
        assert_eq!(parsed.events.len(), 1);
        assert_eq!(parsed.malformed_lines, 0);
        let ev = parsed.events[0];
        assert_eq!(ev.t, 0.125);
        assert_eq!(ev.x, 410.0);
        assert_eq!(ev.y, 300.0);
        assert_eq!(ev.button, Button::None);
        assert_eq!(ev.action, Action::Move);
    }

    #[test]
    fn malformed_line_is_skipped_and_counted() {
        let log = "0.1,100,100,none,move\n0.2,oops,100,none,move\n0.3,120,90,none,move\n";
        let parsed = parse_event_log(log.as_bytes(), SchemaId::Canonical).unwrap();
        assert_eq!(parsed.events.len(), 2);
        assert_eq!(parsed.malformed_lines, 1);
    }

    #[test]
    fn three_wellformed_lines_stay_in_order() {
        let log = "0.1,1,2,none,move\n0.2,3,4,none,move\n0.3,5,6,left,press\n";
        let parsed = parse_event_log(log.as_bytes(), SchemaId::Canonical).unwrap();
        assert_eq!(parsed.events.len(), 3);
        let ts: Vec<f64> = parsed.events.iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn empty_log_is_an_error() {
        let err = parse_event_log("t,x,y,button,action\n".as_bytes(), SchemaId::Canonical);
        assert!(matches!(err, Err(IngestError::EmptyLog)));
    }

    #[test]
    fn sapimouse_layout_converts_ms_to_seconds() {
        let log = "timestamp,button,state,x,y\n1500,NoButton,Move,456,386\n";
        let parsed = parse_event_log(log.as_bytes(), SchemaId::Sapimouse).unwrap();
        let ev = parsed.events[0];
        assert_eq!(ev.t, 1.5);
        assert_eq!(ev.x, 456.0);
        assert_eq!(ev.action, Action::Move);
    }

    #[test]
    fn balabit_layout_uses_client_timestamp() {
        let log = "record timestamp,client timestamp,button,state,x,y\n10.0,3.25,Left,Pressed,100,200\n";
        let parsed = parse_event_log(log.as_bytes(), SchemaId::Balabit).unwrap();
        let ev = parsed.events[0];
        assert_eq!(ev.t, 3.25);
        assert_eq!(ev.button, Button::Left);
        assert_eq!(ev.action, Action::Press);
    }

    fn raw(t: f64, x: f64, y: f64, action: Action) -> RawEvent {
        RawEvent {
            t,
            x,
            y,
            button: if action == Action::Move {
                Button::None
            } else {
                Button::Left
            },
            action,
        }
    }

    #[test]
    fn normalize_scales_to_unit_square() {
        let events = [raw(0.0, 960.0, 540.0, Action::Move)];
        let norm = normalize(&events, 1920.0, 1080.0).unwrap();
        assert_eq!(norm[0].x, 0.5);
        assert_eq!(norm[0].y, 0.5);
        assert!(!norm[0].button_down);
    }

    #[test]
    fn normalize_clamps_offscreen_coordinates() {
        let events = [raw(0.0, 2000.0, -5.0, Action::Move)];
        let norm = normalize(&events, 1920.0, 1080.0).unwrap();
        assert_eq!(norm[0].x, 1.0);
        assert_eq!(norm[0].y, 0.0);
    }

    #[test]
    fn normalize_merges_duplicate_timestamps_keeping_last() {
        let events = [
            raw(1.0, 100.0, 100.0, Action::Move),
            raw(1.0, 200.0, 200.0, Action::Move),
            raw(1.5, 300.0, 300.0, Action::Move),
        ];
        let norm = normalize(&events, 1000.0, 1000.0).unwrap();
        assert_eq!(norm.len(), 2);
        assert_eq!(norm[0].x, 0.2);
    }

    #[test]
    fn normalize_replays_button_state() {
        let events = [
            raw(0.0, 0.0, 0.0, Action::Move),
            raw(0.1, 1.0, 1.0, Action::Press),
            raw(0.2, 2.0, 2.0, Action::Move),
            raw(0.3, 3.0, 3.0, Action::Release),
            raw(0.4, 4.0, 4.0, Action::Move),
        ];
        let norm = normalize(&events, 10.0, 10.0).unwrap();
        let held: Vec<bool> = norm.iter().map(|e| e.button_down).collect();
        assert_eq!(held, vec![false, true, true, false, false]);
    }

    #[test]
    fn normalize_drag_implies_held() {
        let events = [
            raw(0.0, 0.0, 0.0, Action::Move),
            raw(0.1, 1.0, 1.0, Action::Drag),
            raw(0.2, 2.0, 2.0, Action::Move),
        ];
        let norm = normalize(&events, 10.0, 10.0).unwrap();
        assert!(!norm[0].button_down);
        assert!(norm[1].button_down);
        assert!(norm[2].button_down);
    }

    #[test]
    fn normalize_rejects_bad_resolution() {
        let events = [raw(0.0, 1.0, 1.0, Action::Move)];
        assert!(matches!(
            normalize(&events, 0.0, 1080.0),
            Err(IngestError::NonpositiveResolution { .. })
        ));
    }

    #[test]
    fn normalize_is_idempotent_on_unit_resolution() {
        let events = [
            raw(0.0, 0.25, 0.5, Action::Move),
            raw(0.1, 0.5, 0.75, Action::Move),
        ];
        let once = normalize(&events, 1.0, 1.0).unwrap();
        let reraw: Vec<RawEvent> = once
            .iter()
            .map(|e| RawEvent {
                t: e.t,
                x: e.x,
                y: e.y,
                button: Button::None,
                action: Action::Move,
            })
            .collect();
        let twice = normalize(&reraw, 1.0, 1.0).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
    }
}
