//! Closed-loop simulation of one left-turn AV and one straight HV.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{instant_seed, DecisionEngine, IoTracker};
use crate::events::SAMPLE_DT;
use crate::expert::game_state;
use crate::game::{Action, MixedProfile};
use crate::kinematics::{step_kinematics, GeometryError, IntersectionGeometry, Layout, Point2, Role, SpeedBounds, VehicleState};
use crate::orientation::{InteractionSnapshot, IoSample, TendencyCategory};

/// Commanded HV accelerations are clamped to this range (m/s²).
pub const HV_ACCEL_RANGE: (f64, f64) = (-4.0, 2.0);
pub const SEVERE_PET: f64 = 2.0;
/// Gap kept between the AV's front and the conflict zone when it stops.
const STOP_MARGIN: f64 = 0.5;
/// Hardest braking the AV uses to hold a stop it has committed to (m/s²).
const AV_EMERGENCY_DECEL: f64 = 4.0;
/// Time the AV leaves between the HV clearing the conflict zone and its own
/// projected entry when it goes second (s).
const RESTART_HEADWAY: f64 = 2.2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("session already terminated ({0})")]
    SessionTerminated(TerminalReason),
    #[error("pet undefined: {0}")]
    PetUndefined(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptedProfile {
    /// Speeds up to the top of its speed range and holds it.
    Aggressive,
    /// Brakes at 1.5 m/s² once the AV is unresolved within 4 s TTCP.
    Conservative,
    /// Switches between accelerating and braking every 1.5 s.
    Oscillating,
}

impl ScriptedProfile {
    pub const ALL: [ScriptedProfile; 3] = [ScriptedProfile::Aggressive, ScriptedProfile::Conservative, ScriptedProfile::Oscillating];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HvPolicy {
    Scripted {
        profile: ScriptedProfile,
    },
    /// Drives toward `desired_speed`; gives way at `comfortable_decel` unless
    /// it reaches the conflict point at least `gap_acceptance` seconds ahead
    /// of the AV.
    Reactive {
        desired_speed: f64,
        comfortable_decel: f64,
        gap_acceptance: f64,
    },
    /// Acceleration per tick; zero after the end of the trace.
    Trace {
        accels: Vec<f64>,
    },
    /// Acceleration supplied by the caller on every step.
    External,
}

impl Default for HvPolicy {
    fn default() -> Self {
        HvPolicy::Scripted { profile: ScriptedProfile::Conservative }
    }
}

/// Distance to the conflict point (m) and speed (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub d: f64,
    pub v: f64,
}

/// Ranges the HV's initial state is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomInit {
    pub d: (f64, f64),
    pub v: (f64, f64),
}

impl Default for RandomInit {
    fn default() -> Self {
        Self { d: (40.0, 60.0), v: (6.0, 10.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub geometry: IntersectionGeometry,
    pub av: InitialState,
    pub hv: InitialState,
    /// Redraws the AV's initial state from the episode seed.
    pub av_random: Option<RandomInit>,
    /// Redraws the HV's initial state from the episode seed.
    pub hv_random: Option<RandomInit>,
    pub hv_policy: HvPolicy,
    pub dt: f64,
    pub decision_period: f64,
    pub timeout: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            geometry: IntersectionGeometry::default(),
            av: InitialState { d: 20.0, v: 4.0 },
            hv: InitialState { d: 50.0, v: 8.0 },
            av_random: None,
            hv_random: None,
            hv_policy: HvPolicy::default(),
            dt: SAMPLE_DT,
            decision_period: SAMPLE_DT,
            timeout: 30.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<Layout, SimError> {
        let bad = |m: String| Err(SimError::ConfigInvalid(m));
        if (self.dt - SAMPLE_DT).abs() > 1e-12 {
            return bad(format!("dt must be {SAMPLE_DT} s, the engine's sampling period"));
        }
        let ratio = self.decision_period / self.dt;
        if !(ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-9) {
            return bad("decision_period must be a positive multiple of dt".into());
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return bad("timeout must be > 0".into());
        }
        let layout = self.geometry.layout()?;
        let check = |name: &str, init: InitialState, role: Role| {
            if !(init.d.is_finite() && init.v.is_finite() && init.v >= 0.0) {
                return Err(SimError::ConfigInvalid(format!("{name}: non-finite or negative initial state")));
            }
            if init.d > layout.conflict_s(role) {
                return Err(SimError::ConfigInvalid(format!("{name}: starts before the beginning of its path")));
            }
            Ok(())
        };
        check("av", self.av, Role::LeftTurn)?;
        check("hv", self.hv, Role::Straight)?;
        for (name, r, role) in [("av_random", self.av_random, Role::LeftTurn), ("hv_random", self.hv_random, Role::Straight)] {
            if let Some(r) = r {
                if !(r.d.0 <= r.d.1 && r.v.0 <= r.v.1 && r.v.0 >= 0.0) || r.d.1 > layout.conflict_s(role) {
                    return bad(format!("{name} ranges are invalid"));
                }
            }
        }
        if let HvPolicy::Reactive { desired_speed, comfortable_decel, gap_acceptance } = self.hv_policy {
            if !(desired_speed >= 0.0 && comfortable_decel > 0.0 && gap_acceptance >= 0.0) {
                return bad("reactive policy parameters out of range".into());
            }
        }
        Ok(layout)
    }

    fn decision_stride(&self) -> u64 {
        (self.decision_period / self.dt).round().max(1.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalReason {
    BothCrossed,
    Collision,
    Timeout,
    /// The controlling client went away.
    Aborted,
}

impl std::fmt::Display for TerminalReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TerminalReason::BothCrossed => "both-crossed",
            TerminalReason::Collision => "collision",
            TerminalReason::Timeout => "timeout",
            TerminalReason::Aborted => "aborted",
        })
    }
}

/// State after a tick plus the engine output computed at it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub tick: u64,
    pub t: f64,
    pub av: VehicleState,
    pub hv: VehicleState,
    /// Accelerations applied during the step that led here.
    pub av_accel: f64,
    pub hv_accel: f64,
    /// Engine decision at this tick, while the game is still open.
    pub decision: Option<Action>,
    pub profile: Option<MixedProfile>,
    pub io: Option<IoSample>,
    pub category: Option<TendencyCategory>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub config: SimConfig,
    pub records: Vec<StepRecord>,
    pub terminal: Option<TerminalReason>,
}

impl EpisodeLog {
    /// One JSON object per step, then a final `{"terminal": ...}` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        let _ = writeln!(out, "{}", serde_json::json!({ "terminal": self.terminal }));
        out
    }

    /// Last decision the engine announced.
    pub fn final_decision(&self) -> Option<Action> {
        self.records.iter().rev().find_map(|r| r.decision)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HvMemory {
    None,
    Braking,
}

/// Step-by-step episode runner.
#[derive(Debug, Clone)]
pub struct Episode {
    cfg: SimConfig,
    layout: Layout,
    engine: DecisionEngine,
    tracker: IoTracker,
    av_bounds: SpeedBounds,
    hv_bounds: SpeedBounds,
    hv_desired: f64,
    hv_memory: HvMemory,
    log: EpisodeLog,
    /// Action the AV follows until the next decision.
    av_action: Action,
    /// First tick time with the HV's rear past the conflict zone.
    hv_cleared_at: Option<f64>,
}

impl Episode {
    pub fn new(cfg: &SimConfig, engine: DecisionEngine) -> Result<Self, SimError> {
        let layout = cfg.validate()?;
        let mut cfg = cfg.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut draw = |r: RandomInit| {
            let mut pick = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
            InitialState { d: pick(r.d), v: pick(r.v) }
        };
        if let Some(r) = cfg.hv_random {
            cfg.hv = draw(r);
        }
        if let Some(r) = cfg.av_random {
            cfg.av = draw(r);
        }
        let av_bounds = engine.game.bounds(Role::LeftTurn);
        let hv_bounds = engine.game.bounds(Role::Straight);
        let av = VehicleState::new(Role::LeftTurn, layout.conflict.s_l_cp - cfg.av.d, cfg.av.v.clamp(av_bounds.min, av_bounds.max));
        let hv = VehicleState::new(Role::Straight, layout.conflict.s_s_cp - cfg.hv.d, cfg.hv.v.clamp(hv_bounds.min, hv_bounds.max));
        let mut ep = Self {
            tracker: engine.tracker(),
            engine,
            av_bounds,
            hv_bounds,
            hv_desired: hv.v,
            hv_memory: HvMemory::None,
            log: EpisodeLog { config: cfg.clone(), records: Vec::new(), terminal: None },
            av_action: Action::Yield,
            hv_cleared_at: None,
            layout,
            cfg,
        };
        let first = ep.observe(0, av, hv, 0.0, 0.0);
        ep.log.records.push(first);
        ep.check_terminal();
        Ok(ep)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn last(&self) -> &StepRecord {
        self.log.records.last().expect("episode has an initial record")
    }

    pub fn terminal(&self) -> Option<TerminalReason> {
        self.log.terminal
    }

    /// Ends the episode from outside (client disconnect).
    pub fn abort(&mut self) {
        if self.log.terminal.is_none() {
            self.log.terminal = Some(TerminalReason::Aborted);
        }
    }

    /// Advances one tick. `control` is the HV acceleration for External
    /// policies (zero when `None`) and is ignored otherwise.
    pub fn step(&mut self, control: Option<f64>) -> Result<&StepRecord, SimError> {
        if let Some(r) = self.log.terminal {
            return Err(SimError::SessionTerminated(r));
        }
        let prev = self.last().clone();
        let av_accel = self.av_accel(&prev);
        let hv_accel = self.hv_accel(&prev, control).clamp(HV_ACCEL_RANGE.0, HV_ACCEL_RANGE.1);
        let av = step_kinematics(&prev.av, av_accel, self.cfg.dt, self.av_bounds);
        let hv = step_kinematics(&prev.hv, hv_accel, self.cfg.dt, self.hv_bounds);
        let rec = self.observe(prev.tick + 1, av, hv, av_accel, hv_accel);
        if self.hv_cleared_at.is_none() && self.rear(&rec.hv) >= self.layout.zone_straight.1 {
            self.hv_cleared_at = Some(rec.t);
        }
        self.log.records.push(rec);
        self.check_terminal();
        Ok(self.last())
    }

    pub fn run(mut self, max_ticks: Option<u64>) -> EpisodeLog {
        let limit = max_ticks.unwrap_or(u64::MAX);
        while self.log.terminal.is_none() && self.last().tick < limit {
            self.step(None).expect("not terminated");
        }
        self.log
    }

    fn front(&self, st: &VehicleState) -> f64 {
        st.s + 0.5 * st.length
    }

    fn rear(&self, st: &VehicleState) -> f64 {
        st.s - 0.5 * st.length
    }

    fn snapshot(&self, t: f64, av: &VehicleState, hv: &VehicleState) -> InteractionSnapshot {
        let c = &self.layout.conflict;
        InteractionSnapshot {
            t,
            d_l: c.s_l_cp - av.s,
            v_l: av.v,
            d_s: c.s_s_cp - hv.s,
            v_s: hv.v,
            l_l: av.length,
            w_l: av.width,
            l_s: hv.length,
            w_s: hv.width,
            lat_l: av.lateral,
            lat_s: hv.lateral,
            theta_l: c.theta_l,
            theta_s: c.theta_s,
        }
    }

    /// The game is open while neither front edge has reached the conflict point.
    fn game_open(&self, av: &VehicleState, hv: &VehicleState) -> bool {
        self.front(av) < self.layout.conflict.s_l_cp && self.front(hv) < self.layout.conflict.s_s_cp
    }

    fn observe(&mut self, tick: u64, av: VehicleState, hv: VehicleState, av_accel: f64, hv_accel: f64) -> StepRecord {
        let t = tick as f64 * self.cfg.dt;
        let mut rec = StepRecord {
            tick,
            t,
            av,
            hv,
            av_accel,
            hv_accel,
            decision: None,
            profile: None,
            io: None,
            category: None,
            fallback: false,
        };
        if !self.game_open(&av, &hv) {
            return rec;
        }
        let snap = self.snapshot(t, &av, &hv);
        rec.io = self.tracker.push(snap).map(|f| f.sample);
        let category = self.tracker.category();
        rec.category = Some(category);
        if tick % self.cfg.decision_stride() == 0 {
            match self.engine.decide(&game_state(&snap), category, instant_seed(self.cfg.seed, tick as usize)) {
                Ok(d) => {
                    rec.decision = Some(d.action);
                    rec.profile = Some(d.profile);
                    rec.fallback = d.fallback;
                    self.av_action = d.action;
                }
                Err(e) => log::warn!("tick {tick}: engine failed, keeping {:?}: {e}", self.av_action),
            }
        }
        rec
    }

    /// Yielding AV: coasts until braking at the yield deceleration is needed
    /// to stop at the stop line, then brakes at the constant rate that stops
    /// it exactly there. Past the line it brakes at once, hard enough to stay
    /// out of the conflict zone.
    fn yield_accel(&self, av: &VehicleState) -> f64 {
        let a_y = self.engine.game.accel(Role::LeftTurn, Action::Yield).abs();
        if av.v <= 0.0 {
            return 0.0;
        }
        let line = self.layout.transit_left.0;
        let (gap, floor) = if self.front(av) <= line + 1e-9 {
            (line - self.front(av), 0.0)
        } else {
            (self.layout.zone_left.0 - STOP_MARGIN - self.front(av), a_y)
        };
        if gap <= 1e-6 {
            return -(av.v / self.cfg.dt).min(AV_EMERGENCY_DECEL);
        }
        let need = av.v * av.v / (2.0 * gap);
        if need >= a_y - 1e-9 || floor > 0.0 {
            -need.max(floor).min(AV_EMERGENCY_DECEL)
        } else {
            0.0
        }
    }

    /// Whether the AV can still stop before the conflict zone.
    fn can_stop(&self, av: &VehicleState) -> bool {
        let gap = self.layout.zone_left.0 - self.front(av);
        gap >= 0.0 && av.v * av.v <= 2.0 * AV_EMERGENCY_DECEL * gap
    }

    fn av_accel(&self, rec: &StepRecord) -> f64 {
        let a_p = self.engine.game.accel(Role::LeftTurn, Action::Proceed);
        let (av, hv) = (&rec.av, &rec.hv);
        if self.game_open(av, hv) {
            return match self.av_action {
                Action::Proceed if self.hv_committed(hv) && self.can_stop(av) => self.yield_accel(av),
                Action::Proceed => a_p,
                Action::Yield if !self.can_stop(av) => a_p,
                Action::Yield => self.yield_accel(av),
            };
        }
        let av_first = self.front(av) >= self.layout.conflict.s_l_cp;
        let hv_clear = self.hv_cleared_at.is_some_and(|t_clear| {
            let gap = (self.layout.zone_left.0 - self.front(av)).max(0.0);
            let to_zone = ((av.v * av.v + 2.0 * a_p * gap).sqrt() - av.v) / a_p;
            rec.t + to_zone - t_clear >= RESTART_HEADWAY
        });
        if av_first || hv_clear || !self.can_stop(av) {
            a_p
        } else {
            self.yield_accel(av)
        }
    }

    /// The HV is inside the conflict zone or can no longer stop short of it.
    fn hv_committed(&self, hv: &VehicleState) -> bool {
        let gap = self.layout.zone_straight.0 - self.front(hv);
        gap <= 0.0 && self.rear(hv) < self.layout.zone_straight.1 || gap > 0.0 && hv.v * hv.v > 2.0 * -HV_ACCEL_RANGE.0 * gap
    }

    fn av_resolved(&self, av: &VehicleState) -> bool {
        self.rear(av) >= self.layout.zone_left.1
    }

    fn hv_accel(&mut self, rec: &StepRecord, control: Option<f64>) -> f64 {
        let (av, hv) = (rec.av, rec.hv);
        let hv_before_zone = self.front(&hv) < self.layout.zone_straight.0;
        // An AV standing short of the conflict zone has given way.
        let av_waiting = av.v < 0.1 && self.front(&av) < self.layout.zone_left.0;
        let unresolved = !self.av_resolved(&av) && !av_waiting && hv_before_zone;
        let d_hv = self.layout.conflict.s_s_cp - hv.s;
        let ttcp = if hv.v > 1e-6 { d_hv / hv.v } else { f64::INFINITY };
        let cruise = |v: f64, desired: f64| (0.5 * (desired - v)).clamp(-1.5, 1.5);
        match &self.cfg.hv_policy {
            HvPolicy::External => control.unwrap_or(0.0),
            HvPolicy::Trace { accels } => accels.get(rec.tick as usize).copied().unwrap_or(0.0),
            HvPolicy::Scripted { profile: ScriptedProfile::Aggressive } => cruise(hv.v, self.hv_bounds.max),
            HvPolicy::Scripted { profile: ScriptedProfile::Conservative } => {
                if unresolved && (self.hv_memory == HvMemory::Braking || ttcp <= 4.0) {
                    self.hv_memory = HvMemory::Braking;
                    self.hv_stop_accel(&hv, 1.5)
                } else {
                    self.hv_memory = HvMemory::None;
                    cruise(hv.v, self.hv_desired)
                }
            }
            HvPolicy::Scripted { profile: ScriptedProfile::Oscillating } => {
                let phase = (rec.t / 1.5 + 1e-9).floor() as i64;
                if phase % 2 == 0 {
                    1.0
                } else {
                    -1.5
                }
            }
            HvPolicy::Reactive { desired_speed, comfortable_decel, gap_acceptance } => {
                let free = cruise(hv.v, *desired_speed);
                if !unresolved {
                    return free;
                }
                let d_av = self.layout.conflict.s_l_cp - av.s;
                let ttcp_av = if av.v > 0.1 { d_av / av.v } else { f64::INFINITY };
                if ttcp_av - ttcp >= *gap_acceptance {
                    return free;
                }
                self.hv_stop_accel(&hv, *comfortable_decel)
            }
        }
    }

    /// Braking that stops the HV short of the conflict zone, never gentler
    /// than `decel` while it is moving.
    fn hv_stop_accel(&self, hv: &VehicleState, decel: f64) -> f64 {
        if hv.v <= 0.0 {
            return 0.0;
        }
        let gap = (self.layout.zone_straight.0 - STOP_MARGIN - self.front(hv)).max(0.1);
        let need = hv.v * hv.v / (2.0 * gap);
        -(need.max(decel).min(-HV_ACCEL_RANGE.0))
    }

    fn check_terminal(&mut self) {
        let rec = self.last();
        let reason = if detect_collision(&self.layout, &rec.av, &rec.hv) {
            Some(TerminalReason::Collision)
        } else if self.rear(&rec.av) >= self.layout.transit_left.1 && self.rear(&rec.hv) >= self.layout.transit_straight.1 {
            Some(TerminalReason::BothCrossed)
        } else if rec.t >= self.cfg.timeout - 1e-9 {
            Some(TerminalReason::Timeout)
        } else {
            None
        };
        self.log.terminal = reason;
    }
}

pub fn run_episode(cfg: &SimConfig, engine: &DecisionEngine) -> Result<EpisodeLog, SimError> {
    Ok(Episode::new(cfg, engine.clone())?.run(None))
}

/// Corners of a rectangle of `length` x `width` centered at `c` with heading `h`.
pub fn footprint(c: Point2, h: f64, length: f64, width: f64) -> [Point2; 4] {
    let (u, n) = (Point2::new(h.cos(), h.sin()), Point2::new(-h.sin(), h.cos()));
    let (a, b) = (0.5 * length, 0.5 * width);
    [
        c.add(u.scale(a)).add(n.scale(b)),
        c.add(u.scale(-a)).add(n.scale(b)),
        c.add(u.scale(-a)).add(n.scale(-b)),
        c.add(u.scale(a)).add(n.scale(-b)),
    ]
}

/// Separating-axis test; touching boundaries count as overlap.
pub fn rectangles_overlap(a: &[Point2; 4], b: &[Point2; 4]) -> bool {
    let axes = [a[1].sub(a[0]), a[3].sub(a[0]), b[1].sub(b[0]), b[3].sub(b[0])];
    for axis in axes {
        let len = axis.dot(axis).sqrt();
        if len == 0.0 {
            continue;
        }
        let ax = axis.scale(1.0 / len);
        let span = |r: &[Point2; 4]| {
            r.iter().map(|p| p.dot(ax)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        };
        let (a0, a1) = span(a);
        let (b0, b1) = span(b);
        if a1 < b0 - 1e-9 || b1 < a0 - 1e-9 {
            return false;
        }
    }
    true
}

pub fn detect_collision(layout: &Layout, a: &VehicleState, b: &VehicleState) -> bool {
    let (pa, ha) = layout.pose(a);
    let (pb, hb) = layout.pose(b);
    if pa.distance(pb) > 0.5 * (a.length.hypot(a.width) + b.length.hypot(b.width)) + 1e-9 {
        return false;
    }
    rectangles_overlap(&footprint(pa, ha, a.length, a.width), &footprint(pb, hb, b.length, b.width))
}

/// First time `value` reaches `threshold`, interpolated between ticks.
fn first_time(records: &[StepRecord], threshold: f64, value: impl Fn(&StepRecord) -> f64) -> Option<f64> {
    let k = records.iter().position(|r| value(r) >= threshold)?;
    if k == 0 {
        return Some(records[0].t);
    }
    let (a, b) = (&records[k - 1], &records[k]);
    let (va, vb) = (value(a), value(b));
    Some(a.t + (b.t - a.t) * (threshold - va) / (vb - va))
}

/// Conflict zone entry (front edge) and exit (rear edge) times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneTimes {
    pub entry: Option<f64>,
    pub exit: Option<f64>,
}

pub fn zone_times(log: &EpisodeLog, layout: &Layout, role: Role) -> ZoneTimes {
    let (z0, z1) = layout.zone(role);
    let st = |r: &StepRecord| if role == Role::LeftTurn { r.av } else { r.hv };
    ZoneTimes {
        entry: first_time(&log.records, z0, |r| st(r).s + 0.5 * st(r).length),
        exit: first_time(&log.records, z1, |r| st(r).s - 0.5 * st(r).length),
    }
}

/// `second_entry - first_exit`, floored at zero.
pub fn pet_from_times(first_exit: f64, second_entry: f64) -> f64 {
    (second_entry - first_exit).max(0.0)
}

pub fn compute_pet(log: &EpisodeLog, layout: &Layout) -> Result<f64, SimError> {
    if log.terminal == Some(TerminalReason::Collision) {
        return Err(SimError::PetUndefined("collision"));
    }
    let av = zone_times(log, layout, Role::LeftTurn);
    let hv = zone_times(log, layout, Role::Straight);
    let (Some(ea), Some(eh)) = (av.entry, hv.entry) else {
        return Err(SimError::PetUndefined("a vehicle never entered the conflict zone"));
    };
    let (first, second_entry) = if ea <= eh { (av, eh) } else { (hv, ea) };
    let exit = first.exit.ok_or(SimError::PetUndefined("the first vehicle never left the conflict zone"))?;
    Ok(pet_from_times(exit, second_entry))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub terminal: Option<TerminalReason>,
    pub transit_time_av: Option<f64>,
    pub transit_time_hv: Option<f64>,
    pub combined: Option<f64>,
    pub pet: Option<f64>,
    pub collision: bool,
    pub severe_conflict: bool,
    /// Which vehicle's front edge reached the conflict point first.
    pub first: Option<Role>,
    pub final_decision: Option<Action>,
    pub decision_consistency: Option<bool>,
}

/// Front edge at the stop line to rear edge at the far-side boundary.
pub fn transit_time(log: &EpisodeLog, layout: &Layout, role: Role) -> Option<f64> {
    let (b0, b1) = layout.transit(role);
    let st = |r: &StepRecord| if role == Role::LeftTurn { r.av } else { r.hv };
    let entry = first_time(&log.records, b0, |r| st(r).s + 0.5 * st(r).length)?;
    let exit = first_time(&log.records, b1, |r| st(r).s - 0.5 * st(r).length)?;
    Some(exit - entry)
}

pub fn crossing_order(log: &EpisodeLog, layout: &Layout) -> Option<Role> {
    let av = first_time(&log.records, layout.conflict.s_l_cp, |r| r.av.s + 0.5 * r.av.length);
    let hv = first_time(&log.records, layout.conflict.s_s_cp, |r| r.hv.s + 0.5 * r.hv.length);
    match (av, hv) {
        (Some(a), Some(h)) => Some(if a < h { Role::LeftTurn } else { Role::Straight }),
        (Some(_), None) => Some(Role::LeftTurn),
        (None, Some(_)) => Some(Role::Straight),
        (None, None) => None,
    }
}

pub fn episode_metrics(log: &EpisodeLog, layout: &Layout) -> Metrics {
    let collision = log.terminal == Some(TerminalReason::Collision);
    let pet = compute_pet(log, layout).ok();
    let transit_time_av = transit_time(log, layout, Role::LeftTurn);
    let transit_time_hv = transit_time(log, layout, Role::Straight);
    let first = crossing_order(log, layout);
    let final_decision = log.final_decision();
    let decision_consistency = match (final_decision, first) {
        (Some(d), Some(f)) => Some((d == Action::Proceed) == (f == Role::LeftTurn)),
        _ => None,
    };
    Metrics {
        terminal: log.terminal,
        transit_time_av,
        transit_time_hv,
        combined: transit_time_av.zip(transit_time_hv).map(|(a, b)| a + b),
        pet,
        collision,
        severe_conflict: pet.is_some_and(|p| p < SEVERE_PET),
        first,
        final_decision,
        decision_consistency,
    }
}

/// Seed of episode `i` in a batch.
pub fn episode_seed(master: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(i as u64);
    rng.gen()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub policy: String,
    pub av_d0: f64,
    pub av_v0: f64,
    pub hv_d0: f64,
    pub hv_v0: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

impl Stats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = (n > 0).then(|| v.iter().sum::<f64>() / n as f64);
        let median = (n > 0).then(|| if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) });
        Self { n, mean, median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub episodes: usize,
    pub collisions: usize,
    pub severe_conflicts: usize,
    pub timeouts: usize,
    pub transit_av: Stats,
    pub transit_hv: Stats,
    pub combined: Stats,
    pub pet: Stats,
    /// Share of episodes with a decision whose final decision matched the outcome.
    pub consistency_rate: Option<f64>,
}

impl BatchSummary {
    pub fn severe_rate(&self) -> f64 {
        self.severe_conflicts as f64 / self.episodes.max(1) as f64
    }
}

pub fn summarize(rows: &[EpisodeSummary]) -> BatchSummary {
    let m = || rows.iter().map(|r| r.metrics);
    let judged: Vec<bool> = m().filter_map(|x| x.decision_consistency).collect();
    BatchSummary {
        episodes: rows.len(),
        collisions: m().filter(|x| x.collision).count(),
        severe_conflicts: m().filter(|x| x.severe_conflict).count(),
        timeouts: m().filter(|x| x.terminal == Some(TerminalReason::Timeout)).count(),
        transit_av: Stats::of(m().filter_map(|x| x.transit_time_av)),
        transit_hv: Stats::of(m().filter_map(|x| x.transit_time_hv)),
        combined: Stats::of(m().filter_map(|x| x.combined)),
        pet: Stats::of(m().filter_map(|x| x.pet)),
        consistency_rate: (!judged.is_empty()).then(|| judged.iter().filter(|&&c| c).count() as f64 / judged.len() as f64),
    }
}

fn policy_name(p: &HvPolicy) -> String {
    match p {
        HvPolicy::Scripted { profile } => serde_json::to_value(profile).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        HvPolicy::Reactive { .. } => "reactive".into(),
        HvPolicy::Trace { .. } => "trace".into(),
        HvPolicy::External => "external".into(),
    }
}

/// Runs `n` episodes of `base` with derived seeds, cycling through
/// `policies` (or `base.hv_policy` when empty). Logs are handed to `sink`
/// as they finish.
pub fn run_batch(
    base: &SimConfig,
    policies: &[HvPolicy],
    n: usize,
    master_seed: u64,
    engine: &DecisionEngine,
    mut sink: impl FnMut(usize, &EpisodeLog),
) -> Result<(Vec<EpisodeSummary>, BatchSummary), SimError> {
    if n == 0 {
        return Err(SimError::ConfigInvalid("episodes must be >= 1".into()));
    }
    let layout = base.validate()?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut cfg = base.clone();
        cfg.seed = episode_seed(master_seed, i);
        if !policies.is_empty() {
            cfg.hv_policy = policies[i % policies.len()].clone();
        }
        let log = run_episode(&cfg, engine)?;
        sink(i, &log);
        let (av0, hv0) = (log.config.av, log.config.hv);
        rows.push(EpisodeSummary {
            episode: i,
            seed: cfg.seed,
            policy: policy_name(&cfg.hv_policy),
            av_d0: av0.d,
            av_v0: av0.v,
            hv_d0: hv0.d,
            hv_v0: hv0.v,
            metrics: episode_metrics(&log, &layout),
        });
    }
    let summary = summarize(&rows);
    Ok((rows, summary))
}

/// Episodes as trajectory CSV in the ingestion schema; episode `i` is
/// shifted by `i * spacing` seconds and its tracks are `ep{i}-av`/`ep{i}-hv`.
pub fn trajectories_csv(logs: &[EpisodeLog], layout: &Layout, spacing: f64) -> String {
    let mut out = String::from(crate::ingest::CSV_HEADER);
    out.push('\n');
    let offset_ticks = (spacing / SAMPLE_DT).round() as u64;
    let mut frame = 0u64;
    for (i, log) in logs.iter().enumerate() {
        for (name, pick) in [("av", Role::LeftTurn), ("hv", Role::Straight)] {
            for r in &log.records {
                let st = if pick == Role::LeftTurn { r.av } else { r.hv };
                let (p, h) = layout.pose(&st);
                let t = (i as u64 * offset_ticks + r.tick) as f64 / 10.0;
                let _ = writeln!(
                    out,
                    "{frame},ep{i}-{name},car,{t},{},{},{},{},{h},{},{}",
                    p.x,
                    p.y,
                    st.v * h.cos(),
                    st.v * h.sin(),
                    st.length,
                    st.width
                );
                frame += 1;
            }
        }
    }
    out
}
