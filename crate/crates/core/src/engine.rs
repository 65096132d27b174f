//! Decision engine of the left-turn AV: tracks the straight vehicle's
//! interaction orientation, picks the matching expert parameters and plays
//! the Proceed/Yield game.

use serde::{Deserialize, Serialize};

use crate::events::{decision_instants, window_lag, LabeledEvent};
use crate::expert::{game_state, ExpertLibrary};
use crate::game::{build_payoff_matrix, decide, solve_mixed_nash, Action, Bimatrix, Coefficients, GameConfig, GameError, GameState, MixedProfile};
use crate::kinematics::Role;
use crate::orientation::{InteractionSnapshot, IoFrame, IoSample, OrientationConfig, TendencyCategory};

/// Where the payoff coefficients come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSource {
    /// Expert lookup by the observed tendency.
    Library(ExpertLibrary),
    /// One parameter set for every tendency.
    Global(Coefficients),
}

/// Rolling IO estimate of the straight vehicle.
#[derive(Debug, Clone)]
pub struct IoTracker {
    config: OrientationConfig,
    lag: usize,
    history: Vec<InteractionSnapshot>,
    samples: Vec<IoSample>,
    latest: Option<IoFrame>,
}

impl IoTracker {
    pub fn new(config: OrientationConfig) -> Self {
        Self { config, lag: window_lag(config.window), history: Vec::new(), samples: Vec::new(), latest: None }
    }

    /// Adds the next 10 Hz snapshot; returns the IO frame once a full window exists.
    pub fn push(&mut self, snap: InteractionSnapshot) -> Option<IoFrame> {
        self.history.push(snap);
        let k = self.history.len() - 1;
        self.latest = None;
        if k >= self.lag {
            match self.config.io_frame(&self.history[k - self.lag], &snap) {
                Ok(frame) => {
                    self.samples.push(frame.sample);
                    self.latest = Some(frame);
                }
                Err(e) => log::trace!("no IO at t={:.1}: {e}", snap.t),
            }
        }
        self.latest
    }

    pub fn latest(&self) -> Option<IoFrame> {
        self.latest
    }

    pub fn samples(&self) -> &[IoSample] {
        &self.samples
    }

    /// Current tendency; Ambiguous until the first IO sample.
    pub fn category(&self) -> TendencyCategory {
        self.config.classify(&self.samples).unwrap_or(TendencyCategory::Ambiguous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineDecision {
    pub game: Bimatrix,
    pub profile: MixedProfile,
    /// The AV's action.
    pub action: Action,
    pub category: TendencyCategory,
    /// The category had no expert entry of its own.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionEngine {
    pub source: ParamSource,
    pub orientation: OrientationConfig,
    pub game: GameConfig,
}

impl DecisionEngine {
    pub fn new(source: ParamSource, orientation: OrientationConfig, game: GameConfig) -> Self {
        Self { source, orientation, game }
    }

    /// Expert engine configured the way its library was learned.
    pub fn expert(library: ExpertLibrary) -> Self {
        let game = library.meta.game;
        let orientation = OrientationConfig { window: library.meta.window, ..OrientationConfig::default() };
        Self::new(ParamSource::Library(library), orientation, game)
    }

    /// Baseline engine using the library's global parameter set.
    pub fn baseline(library: &ExpertLibrary) -> Self {
        let orientation = OrientationConfig { window: library.meta.window, ..OrientationConfig::default() };
        Self::new(ParamSource::Global(library.global_coefficients()), orientation, library.meta.game)
    }

    pub fn tracker(&self) -> IoTracker {
        IoTracker::new(self.orientation)
    }

    pub fn coefficients(&self, category: TendencyCategory) -> (Coefficients, bool) {
        match &self.source {
            ParamSource::Library(lib) => {
                let l = lib.lookup(category);
                (l.coefficients, l.fallback)
            }
            ParamSource::Global(c) => (*c, false),
        }
    }

    /// One decision at `state`; the disturbance draw is seeded by `seed`.
    pub fn decide(&self, state: &GameState, category: TendencyCategory, seed: u64) -> Result<EngineDecision, GameError> {
        let (c, fallback) = self.coefficients(category);
        let game = build_payoff_matrix(state, &c, &self.game, seed)?;
        let profile = solve_mixed_nash(&game)?;
        let action = decide(&profile, Role::LeftTurn, self.game.decision_threshold);
        Ok(EngineDecision { game, profile, action, category, fallback })
    }

    /// Runs the engine over an event's decision instants.
    pub fn predict_event(&self, event: &LabeledEvent, seed: u64) -> Result<EventPrediction, GameError> {
        let mut tracker = self.tracker();
        let ks = decision_instants(&event.series, window_lag(self.orientation.window));
        let mut instants = Vec::with_capacity(ks.len());
        let mut next = 0;
        for &k in &ks {
            while next <= k {
                tracker.push(event.series[next]);
                next += 1;
            }
            let snap = &event.series[k];
            let category = tracker.category();
            let d = self.decide(&game_state(snap), category, instant_seed(seed, k))?;
            instants.push(InstantPrediction {
                t: snap.t,
                d_l: snap.d_l,
                d_s: snap.d_s,
                io: tracker.latest().map(|f| f.sample.io),
                category,
                p_l: d.profile.p_l[0],
                p_s: d.profile.p_s[0],
                action: d.action,
            });
        }
        let n = instants.len().max(1) as f64;
        let p_hat_l = instants.iter().map(|i| i.p_l).sum::<f64>() / n;
        let p_hat_s = instants.iter().map(|i| i.p_s).sum::<f64>() / n;
        Ok(EventPrediction { id: event.id.clone(), left_first: event.left_first(), instants, p_hat_l, p_hat_s })
    }
}

/// Seed of the disturbance draw at sample `k`.
pub fn instant_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(k as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstantPrediction {
    pub t: f64,
    pub d_l: f64,
    pub d_s: f64,
    pub io: Option<f64>,
    pub category: TendencyCategory,
    pub p_l: f64,
    pub p_s: f64,
    pub action: Action,
}

impl InstantPrediction {
    pub fn left_first(&self) -> bool {
        self.p_l > self.p_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPrediction {
    pub id: String,
    /// Observed crossing order.
    pub left_first: bool,
    pub instants: Vec<InstantPrediction>,
    pub p_hat_l: f64,
    pub p_hat_s: f64,
}

impl EventPrediction {
    /// Predicted crossing order: the left vehicle goes first iff its averaged
    /// Proceed probability exceeds the straight vehicle's.
    pub fn predicted_left_first(&self) -> bool {
        self.p_hat_l > self.p_hat_s
    }

    pub fn correct(&self) -> bool {
        !self.instants.is_empty() && self.predicted_left_first() == self.left_first
    }

    /// First instant from which every prediction matches the observed order.
    pub fn decision_point(&self) -> Option<usize> {
        decision_point(&self.instants.iter().map(|i| i.left_first()).collect::<Vec<_>>(), self.left_first)
    }

    /// Left vehicle's distance to the conflict point at the decision point;
    /// 0 when the prediction is still wrong at the last instant.
    pub fn decision_distance(&self) -> f64 {
        self.decision_point().map_or(0.0, |i| self.instants[i].d_l)
    }
}

/// Earliest index from which `predicted` equals `truth` to the end.
pub fn decision_point(predicted: &[bool], truth: bool) -> Option<usize> {
    let wrong = predicted.iter().rposition(|&p| p != truth);
    match wrong {
        None if predicted.is_empty() => None,
        None => Some(0),
        Some(i) if i + 1 < predicted.len() => Some(i + 1),
        Some(_) => None,
    }
}
