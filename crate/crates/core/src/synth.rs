//! Synthetic labeled events drawn from known payoff coefficients.
//!
//! Kinematics are sampled at random; the straight vehicle keeps a constant
//! acceleration so its tendency is stable over the event. The tendency is
//! classified from the resulting IO series, and the crossing order is the
//! one predicted by the generating coefficients of that tendency. Events
//! on which the generating model is indecisive are redrawn.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::IoTracker;
use crate::events::{decision_instants, window_lag, LabeledEvent, SAMPLE_DT};
use crate::expert::{event_loss, game_state, predict_features};
use crate::game::{payoff_features, Coefficients, GameConfig};
use crate::kinematics::{advance, SpeedBounds};
use crate::orientation::{InteractionSnapshot, OrientationConfig, TendencyCategory};

/// Coefficients where each player's payoff is `a*T + k*R` in the cells where
/// it proceeds and zero where it yields.
pub fn proceed_only(left: (f64, f64), straight: (f64, f64)) -> Coefficients {
    let mut c = Coefficients::uniform(0.0);
    for (p, (a, k), cells) in [(0, left, [0, 1]), (1, straight, [0, 2])] {
        for cell in cells {
            c.alpha[p][cell] = a;
            c.beta[p][cell] = k;
        }
    }
    c
}

/// Generating coefficients per tendency used by default.
pub fn default_theta() -> BTreeMap<TendencyCategory, Coefficients> {
    BTreeMap::from([
        (TendencyCategory::Precedence, proceed_only((4.3, 3.7), (1.4, 1.2))),
        (TendencyCategory::Ambiguous, proceed_only((6.6, 1.4), (3.3, 3.2))),
        (TendencyCategory::Yielding, proceed_only((5.6, 1.7), (4.8, 1.1))),
    ])
}

/// Kinematic ranges of one interaction style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub v_straight: (f64, f64),
    pub a_straight: (f64, f64),
    pub ttcp_straight: (f64, f64),
    pub d_left: (f64, f64),
    pub v_left: (f64, f64),
    pub a_left: (f64, f64),
}

pub fn default_styles() -> Vec<Style> {
    vec![
        // left vehicle creeping at the stop line, straight vehicle pushing
        Style {
            v_straight: (3.0, 8.0),
            a_straight: (1.5, 3.5),
            ttcp_straight: (5.0, 9.0),
            d_left: (3.0, 5.5),
            v_left: (0.4, 1.0),
            a_left: (0.3, 1.0),
        },
        Style {
            v_straight: (5.0, 10.0),
            a_straight: (-0.5, 1.0),
            ttcp_straight: (3.0, 9.0),
            d_left: (6.0, 30.0),
            v_left: (1.0, 5.0),
            a_left: (-0.5, 0.5),
        },
        Style {
            v_straight: (5.0, 10.0),
            a_straight: (-3.0, -0.5),
            ttcp_straight: (3.0, 9.0),
            d_left: (6.0, 30.0),
            v_left: (1.0, 5.0),
            a_left: (-0.5, 0.5),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Events per tendency.
    pub per_category: usize,
    pub seed: u64,
    /// Event length (s).
    pub duration: f64,
    pub theta: BTreeMap<TendencyCategory, Coefficients>,
    pub game: GameConfig,
    pub orientation: OrientationConfig,
    /// Largest loss of the generating model on an accepted event.
    pub max_event_loss: f64,
    /// Draws per requested event before giving up on a tendency.
    pub max_attempts_per_event: usize,
    pub styles: Vec<Style>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_category: 100,
            seed: 0,
            duration: 4.0,
            theta: default_theta(),
            game: GameConfig::default(),
            orientation: OrientationConfig::default(),
            max_event_loss: 0.02,
            max_attempts_per_event: 200,
            styles: default_styles(),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Both vehicles at constant acceleration from the given `(d, v, a)` states,
/// sampled at 10 Hz until `duration` or until a front edge reaches the
/// conflict point. Speeds saturate at the game's role bounds.
pub fn constant_accel_series(left: (f64, f64, f64), straight: (f64, f64, f64), duration: f64, game: &GameConfig) -> Vec<InteractionSnapshot> {
    let (mut d_l, mut v_l, a_l) = left;
    let (mut d_s, mut v_s, a_s) = straight;
    let bl = game.v_bounds[0];
    let bs = game.v_bounds[1];
    let steps = (duration / SAMPLE_DT).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let snap = InteractionSnapshot {
            t: k as f64 * SAMPLE_DT,
            d_l,
            v_l,
            d_s,
            v_s,
            l_l: 4.5,
            w_l: 1.8,
            l_s: 4.5,
            w_s: 1.8,
            lat_l: 0.0,
            lat_s: 0.0,
            theta_l: 0.0,
            theta_s: std::f64::consts::FRAC_PI_2,
        };
        out.push(snap);
        if d_l <= 0.5 * snap.l_l || d_s <= 0.5 * snap.l_s {
            break;
        }
        let (v, ds) = advance(v_l, a_l, SAMPLE_DT, SpeedBounds::new(bl.min, bl.max));
        v_l = v;
        d_l -= ds;
        let (v, ds) = advance(v_s, a_s, SAMPLE_DT, SpeedBounds::new(bs.min, bs.max));
        v_s = v;
        d_s -= ds;
    }
    out
}

/// One random approach drawn from a random style.
pub fn sample_series(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<InteractionSnapshot> {
    let style = cfg.styles[rng.gen_range(0..cfg.styles.len())];
    let v_s = draw(rng, style.v_straight);
    let a_s = draw(rng, style.a_straight);
    let d_s = v_s * draw(rng, style.ttcp_straight);
    let d_l = draw(rng, style.d_left);
    let v_l = draw(rng, style.v_left);
    let a_l = draw(rng, style.a_left);
    constant_accel_series((d_l, v_l, a_l), (d_s, v_s, a_s), cfg.duration, &cfg.game)
}

/// Tendency over the decision instants of a series, as the engine sees it
/// at the last instant.
pub fn classify_series(series: &[InteractionSnapshot], orientation: &OrientationConfig) -> Option<TendencyCategory> {
    let ks = decision_instants(series, window_lag(orientation.window));
    let last = *ks.last()?;
    let mut tracker = IoTracker::new(*orientation);
    for s in &series[..=last] {
        tracker.push(*s);
    }
    (!tracker.samples().is_empty()).then(|| tracker.category())
}

/// Events with `per_category` entries for every tendency in `cfg.theta`,
/// ordered by draw. A tendency that cannot be filled within the attempt
/// budget comes back short.
pub fn generate(cfg: &SynthConfig) -> Vec<LabeledEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lag = window_lag(cfg.orientation.window);
    let mut counts: BTreeMap<TendencyCategory, usize> = BTreeMap::new();
    let wanted = cfg.per_category * cfg.theta.len();
    let budget = wanted * cfg.max_attempts_per_event;
    let mut out = Vec::with_capacity(wanted);
    for attempt in 0..budget {
        if out.len() == wanted {
            break;
        }
        let series = sample_series(cfg, &mut rng);
        let Some(category) = classify_series(&series, &cfg.orientation) else { continue };
        let Some(theta) = cfg.theta.get(&category) else { continue };
        if counts.get(&category).copied().unwrap_or(0) >= cfg.per_category {
            continue;
        }
        let ks = decision_instants(&series, lag);
        let feats: Vec<_> = ks.iter().map(|&k| payoff_features(&game_state(&series[k]), &cfg.game)).collect();
        let (pl, ps) = predict_features(&feats, theta);
        let left_first = pl > ps;
        let (lab_l, lab_s) = if left_first { (1.0, 0.0) } else { (0.0, 1.0) };
        if event_loss(lab_l, lab_s, pl, ps) > cfg.max_event_loss {
            continue;
        }
        *counts.entry(category).or_default() += 1;
        out.push(LabeledEvent {
            id: format!("syn-{}-{attempt}", cfg.seed),
            category,
            p_l: u8::from(left_first),
            p_s: u8::from(!left_first),
            series,
        });
    }
    for (cat, n) in &counts {
        if *n < cfg.per_category {
            log::warn!("{cat}: generated {n} of {} events", cfg.per_category);
        }
    }
    out
}
