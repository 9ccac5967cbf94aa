//! Deterministic synthetic mouse-trajectory generator.
//!
//! Produces movement bursts separated by pauses, with per-user speed,
//! curvature, and click characteristics. Exists so the full pipeline and its
//! tests run without any licensed dataset; the motion model is not a claim
//! about real mouse physiology.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Action, Button, RawEvent};

/// Virtual screen the generator emits pixel coordinates for.
pub const VIRTUAL_WIDTH: f64 = 1920.0;
pub const VIRTUAL_HEIGHT: f64 = 1080.0;

/// Behavioral knobs of one synthetic user. All strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Typical cursor speed in normalized screen units per second.
    pub mean_speed: f64,
    /// Log-scale speed spread as a fraction (0.3 means roughly x/÷ 1.35).
    pub speed_jitter: f64,
    /// Pauses per minute; each pause exceeds the downstream 0.3 s gap cut.
    pub pause_rate: f64,
    /// Nominal pause length in seconds.
    pub pause_len: f64,
    /// Heading turn-rate bias in radians per second.
    pub curvature: f64,
    /// Press/release pairs per minute.
    pub click_rate: f64,
    /// Event rate while the cursor moves, events per second.
    pub sample_hz: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            mean_speed: 0.4,
            speed_jitter: 0.3,
            pause_rate: 12.0,
            pause_len: 0.8,
            curvature: 2.0,
            click_rate: 8.0,
            sample_hz: 50.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("mean_speed", self.mean_speed),
            ("speed_jitter", self.speed_jitter),
            ("pause_rate", self.pause_rate),
            ("pause_len", self.pause_len),
            ("curvature", self.curvature),
            ("click_rate", self.click_rate),
            ("sample_hz", self.sample_hz),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.sample_hz < 20.0 {
            return Err(format!("sample_hz must be >= 20, got {}", self.sample_hz));
        }
        Ok(())
    }

    /// A deterministic grid of `n` well-separated users: speeds log-spaced
    /// over a wide range with tight within-user jitter, and the remaining
    /// knobs (turn rate, polling rate, pause and click habits) cycling
    /// through disjoint sets, so any two users differ in several features
    /// at once.
    pub fn separated_grid(n: usize) -> Vec<SynthParams> {
        let jitters = [0.1, 0.18, 0.26];
        let pause_rates = [15.0, 19.0, 23.0];
        let pause_lens = [0.5, 0.8, 1.2];
        let curvatures = [0.6, 1.8, 3.5, 6.0, 9.0, 13.0];
        let click_rates = [4.0, 10.0, 16.0];
        let rates = [40.0, 50.0, 60.0];
        (0..n)
            .map(|i| {
                let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
                SynthParams {
                    mean_speed: 0.1 * (2.4f64 / 0.1).powf(frac),
                    speed_jitter: jitters[i % jitters.len()],
                    pause_rate: pause_rates[(i / 3) % pause_rates.len()],
                    pause_len: pause_lens[i % pause_lens.len()],
                    curvature: curvatures[i % curvatures.len()],
                    click_rate: click_rates[(i / 2) % click_rates.len()],
                    sample_hz: rates[(i + 1) % rates.len()],
                }
            })
            .collect()
    }
}

/// Derive a session seed from the dataset seed, user id, and session index.
pub fn session_seed(dataset_seed: u64, user_id: &str, session_idx: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(dataset_seed.to_le_bytes());
    hasher.update(user_id.as_bytes());
    hasher.update((session_idx as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Generate a deterministic raw event stream of roughly `duration` seconds.
///
/// Movement comes in bursts at `sample_hz` spacing; bursts are separated by
/// pauses longer than the downstream segmentation gap, and click press/release
/// pairs land inside bursts at `click_rate`.
pub fn synth_user(params: &SynthParams, seed: u64, duration: f64) -> Vec<RawEvent> {
    assert!(duration > 0.0, "duration must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / params.sample_hz;
    let mut t = 0.0f64;
    let mut x = VIRTUAL_WIDTH * 0.5;
    let mut y = VIRTUAL_HEIGHT * 0.5;
    let mut events = Vec::with_capacity((duration * params.sample_hz) as usize);

    // Mean time between pauses; exponential draws, clamped to keep bursts
    // long enough to survive the minimum-points segment filter.
    let burst_mean_s = (60.0 / params.pause_rate).max(0.8);
    let click_prob_per_event = (params.click_rate / 60.0) * dt;

    while t < duration {
        let burst_len = sample_exp(&mut rng, burst_mean_s).clamp(0.8, 12.0);
        let burst_end = t + burst_len;
        let mut heading = rng.gen_range(0.0..std::f64::consts::TAU);
        let turn_dir: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut log_speed_offset = 0.0f64;
        let mut pressed_until: Option<f64> = None;

        while t < burst_end && t < duration {
            // AR(1) walk on log-speed keeps within-burst speed smooth.
            log_speed_offset =
                0.9 * log_speed_offset + params.speed_jitter * 0.45 * sample_gauss(&mut rng);
            let speed = params.mean_speed * log_speed_offset.exp();
            heading += turn_dir * params.curvature * dt + 0.6 * sample_gauss(&mut rng) * dt.sqrt();

            x += speed * heading.cos() * VIRTUAL_WIDTH * dt;
            y += speed * heading.sin() * VIRTUAL_HEIGHT * dt;
            if x < 0.0 || x > VIRTUAL_WIDTH {
                x = x.clamp(0.0, VIRTUAL_WIDTH);
                heading = std::f64::consts::PI - heading;
            }
            if y < 0.0 || y > VIRTUAL_HEIGHT {
                y = y.clamp(0.0, VIRTUAL_HEIGHT);
                heading = -heading;
            }

            let (button, action) = match pressed_until {
                Some(until) if t >= until => {
                    pressed_until = None;
                    (Button::Left, Action::Release)
                }
                Some(_) => (Button::Left, Action::Drag),
                None => {
                    if rng.gen_bool(click_prob_per_event.min(0.5)) {
                        pressed_until = Some(t + rng.gen_range(0.06..0.2));
                        (Button::Left, Action::Press)
                    } else {
                        (Button::None, Action::Move)
                    }
                }
            };
            events.push(RawEvent {
                t,
                x,
                y,
                button,
                action,
            });
            t += dt;
        }
        if let Some(_) = pressed_until {
            events.push(RawEvent {
                t,
                x,
                y,
                button: Button::Left,
                action: Action::Release,
            });
            t += dt;
        }
        // Pause: no events, gap comfortably above the 0.3 s segmentation cut.
        t += (params.pause_len * rng.gen_range(0.9..1.4)).max(0.35);
    }
    events
}

fn sample_exp(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -mean * u.ln()
}

fn sample_gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, first component.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
