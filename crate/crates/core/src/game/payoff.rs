use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Action, Bimatrix, Coefficients, GameError, JointStrategy};
use crate::kinematics::{Role, SpeedBounds};
use crate::orientation::{fit_sigmoid, itsi, ttcp, SigmoidCalibration};

/// Smallest partner TTCP used as a denominator in the cooperative acceleration.
const MIN_PARTNER_TTCP: f64 = 1e-3;
/// The efficiency exponent is clamped so the benefit stays strictly inside (-1, 1).
const MAX_EXPONENT: f64 = 30.0;

/// Distance to the conflict point and speed of one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentKinematics {
    pub d: f64,
    pub v: f64,
}

impl AgentKinematics {
    pub const fn new(d: f64, v: f64) -> Self {
        Self { d, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub left: AgentKinematics,
    pub straight: AgentKinematics,
}

impl GameState {
    pub fn agent(&self, role: Role) -> AgentKinematics {
        match role {
            Role::LeftTurn => self.left,
            Role::Straight => self.straight,
        }
    }
}

fn d_ap() -> [f64; 2] {
    [1.5, 1.5]
}
fn d_ay() -> [f64; 2] {
    [-2.0, -2.0]
}
fn d_sigma() -> f64 {
    0.01 / 3.0
}
fn d_gamma() -> f64 {
    0.5
}
fn d_steps() -> usize {
    5
}
fn d_dt() -> f64 {
    0.1
}
fn d_bounds() -> [SpeedBounds; 2] {
    [SpeedBounds::new(0.0, 5.0), SpeedBounds::new(0.0, 10.0)]
}
fn d_ttcp_calib() -> SigmoidCalibration {
    fit_sigmoid([(-3.0, 0.9), (3.0, 0.1)]).expect("valid default anchors")
}
fn d_ac_calib() -> SigmoidCalibration {
    fit_sigmoid([(-2.0, 0.9), (2.0, 0.1)]).expect("valid default anchors")
}
fn d_cap() -> f64 {
    20.0
}
fn d_threshold() -> f64 {
    0.5
}

/// Parameters of the payoff model other than the learned coefficients.
/// Per-role arrays are indexed `[left, straight]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    #[serde(default = "d_ap")]
    pub a_p: [f64; 2],
    #[serde(default = "d_ay")]
    pub a_y: [f64; 2],
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_bounds")]
    pub v_bounds: [SpeedBounds; 2],
    #[serde(default = "d_ttcp_calib")]
    pub ttcp_calib: SigmoidCalibration,
    #[serde(default = "d_ac_calib")]
    pub ac_calib: SigmoidCalibration,
    #[serde(default = "d_cap")]
    pub ttcp_cap: f64,
    /// Negates the efficiency exponent.
    #[serde(default)]
    pub flip_efficiency: bool,
    #[serde(default = "d_threshold")]
    pub decision_threshold: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            a_p: d_ap(),
            a_y: d_ay(),
            mu: 0.0,
            sigma: d_sigma(),
            gamma: d_gamma(),
            steps: d_steps(),
            dt: d_dt(),
            v_bounds: d_bounds(),
            ttcp_calib: d_ttcp_calib(),
            ac_calib: d_ac_calib(),
            ttcp_cap: d_cap(),
            flip_efficiency: false,
            decision_threshold: d_threshold(),
        }
    }
}

fn idx(role: Role) -> usize {
    match role {
        Role::LeftTurn => 0,
        Role::Straight => 1,
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: &str| Err(GameError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.steps == 0 {
            return bad("at least one rollout step is required");
        }
        if !(self.sigma >= 0.0) || !self.mu.is_finite() {
            return bad("sigma must be >= 0 and mu finite");
        }
        if self.a_p.iter().any(|a| !(*a > 0.0)) || self.a_y.iter().any(|a| !(*a < 0.0)) {
            return bad("proceed acceleration must be > 0 and yield deceleration < 0");
        }
        if !(self.dt > 0.0) || !(self.ttcp_cap > 0.0) {
            return bad("dt and ttcp_cap must be > 0");
        }
        if self.v_bounds.iter().any(|b| !(b.min >= 0.0 && b.max > b.min)) {
            return bad("speed bounds must satisfy 0 <= min < max");
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return bad("decision threshold must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn accel(&self, role: Role, action: Action) -> f64 {
        match action {
            Action::Proceed => self.a_p[idx(role)],
            Action::Yield => self.a_y[idx(role)],
        }
    }

    pub fn bounds(&self, role: Role) -> SpeedBounds {
        self.v_bounds[idx(role)]
    }
}

/// `n` extrapolated states under joint strategy `s`: speeds saturate at the
/// role bounds, distances follow the trapezoid rule and stop at the conflict point.
pub fn extrapolate(state: &GameState, s: JointStrategy, cfg: &GameConfig, n: usize) -> Vec<GameState> {
    let step = |k: AgentKinematics, role: Role| {
        let b = cfg.bounds(role);
        let v0 = k.v.clamp(b.min, b.max);
        let v = (v0 + cfg.accel(role, s.action(role)) * cfg.dt).clamp(b.min, b.max);
        let d = (k.d - 0.5 * (v + v0) * cfg.dt).max(0.0);
        AgentKinematics { d, v }
    };
    let mut out = Vec::with_capacity(n);
    let mut cur = *state;
    for _ in 0..n {
        cur = GameState { left: step(cur.left, Role::LeftTurn), straight: step(cur.straight, Role::Straight) };
        out.push(cur);
    }
    out
}

/// Instantaneous safety benefit of `role` at one extrapolated state.
pub fn step_safety(state: &GameState, role: Role, cfg: &GameConfig) -> f64 {
    let me = state.agent(role);
    let other = state.agent(role.other());
    let t_me = ttcp(me.d, me.v, cfg.ttcp_cap);
    let t_other = ttcp(other.d, other.v, cfg.ttcp_cap);
    let t_floor = t_other.max(MIN_PARTNER_TTCP);
    let ac = 2.0 * (me.d - me.v * t_floor) / (t_floor * t_floor);
    itsi(cfg.ttcp_calib.normalize(t_me - t_other), cfg.ac_calib.normalize(ac))
}

/// `sum_{n=1..} gamma^n values[n-1]`.
pub fn discounted_sum(values: &[f64], gamma: f64) -> f64 {
    let mut w = 1.0;
    values
        .iter()
        .map(|v| {
            w *= gamma;
            w * v
        })
        .sum()
}

/// Discounted safety benefits `(R_l, R_s)` over a rollout.
pub fn safety_benefit(rollout: &[GameState], cfg: &GameConfig) -> (f64, f64) {
    let per = |role: Role| -> Vec<f64> { rollout.iter().map(|st| step_safety(st, role, cfg)).collect() };
    (discounted_sum(&per(Role::LeftTurn), cfg.gamma), discounted_sum(&per(Role::Straight), cfg.gamma))
}

/// Time to reach the conflict point when committing to `action`. Yielding
/// means braking to a stop, waiting out the partner's current TTCP and then
/// accelerating over the remaining distance. Returns `Err(Unreachable)` when
/// the vehicle cannot stop before the conflict point.
pub fn time_to_conflict_under(
    action: Action,
    d0: f64,
    v0: f64,
    a_p: f64,
    a_y: f64,
    partner_ttcp0: f64,
) -> Result<f64, GameError> {
    let proceed = (-v0 + (v0 * v0 + 2.0 * a_p * d0).sqrt()) / a_p;
    match action {
        Action::Proceed => Ok(proceed),
        Action::Yield => {
            let rest = d0 - v0 * v0 / (2.0 * a_y.abs());
            if rest < 0.0 {
                Err(GameError::Unreachable)
            } else {
                Ok((2.0 * rest / a_p).sqrt() + partner_ttcp0)
            }
        }
    }
}

/// Efficiency benefit `2 / (1 + e^(TTCP_0 - TTCP^S)) - 1` of `role` under
/// its own `action`.
pub fn efficiency_benefit(state: &GameState, role: Role, action: Action, cfg: &GameConfig) -> f64 {
    let me = state.agent(role);
    let other = state.agent(role.other());
    let t0 = ttcp(me.d, me.v, cfg.ttcp_cap);
    let partner = ttcp(other.d, other.v, cfg.ttcp_cap);
    let (a_p, a_y) = (cfg.a_p[idx(role)], cfg.a_y[idx(role)]);
    let t_s = time_to_conflict_under(action, me.d.max(0.0), me.v.max(0.0), a_p, a_y, partner).unwrap_or_else(|_| {
        log::trace!("{role:?} cannot stop before the conflict point; using the proceed time");
        time_to_conflict_under(Action::Proceed, me.d.max(0.0), me.v.max(0.0), a_p, a_y, partner).unwrap_or(t0)
    });
    efficiency_from_times(t0, t_s, cfg.flip_efficiency)
}

pub(crate) fn efficiency_from_times(t0: f64, t_s: f64, flip: bool) -> f64 {
    let x = if flip { t_s - t0 } else { t0 - t_s };
    2.0 / (1.0 + x.clamp(-MAX_EXPONENT, MAX_EXPONENT).exp()) - 1.0
}

pub fn payoff(alpha: f64, beta: f64, t: f64, r: f64, eps: f64) -> f64 {
    alpha * t + beta * r + eps
}

/// The non-learned parts of every payoff cell: efficiency `t` and safety
/// `r`, indexed `[player][joint strategy]` with player 0 = left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffFeatures {
    pub t: [[f64; 4]; 2],
    pub r: [[f64; 4]; 2],
}

impl PayoffFeatures {
    /// Assembles the bimatrix for given coefficients and disturbances.
    pub fn bimatrix(&self, c: &Coefficients, eps: &[[f64; 4]; 2]) -> Bimatrix {
        let mut u = [[[0.0; 2]; 2]; 2];
        for p in 0..2 {
            for s in JointStrategy::ALL {
                let k = s.index();
                u[p][s.left.index()][s.straight.index()] =
                    payoff(c.alpha[p][k], c.beta[p][k], self.t[p][k], self.r[p][k], eps[p][k]);
            }
        }
        Bimatrix::new(u[0], u[1])
    }
}

pub fn payoff_features(state: &GameState, cfg: &GameConfig) -> PayoffFeatures {
    let mut f = PayoffFeatures { t: [[0.0; 4]; 2], r: [[0.0; 4]; 2] };
    for s in JointStrategy::ALL {
        let k = s.index();
        let rollout = extrapolate(state, s, cfg, cfg.steps);
        let (rl, rs) = safety_benefit(&rollout, cfg);
        f.r[0][k] = rl;
        f.r[1][k] = rs;
        f.t[0][k] = efficiency_benefit(state, Role::LeftTurn, s.left, cfg);
        f.t[1][k] = efficiency_benefit(state, Role::Straight, s.straight, cfg);
    }
    f
}

/// One disturbance per (player, cell), drawn in the order left PP..YY, straight PP..YY.
pub fn draw_disturbances<R: rand::Rng + ?Sized>(cfg: &GameConfig, rng: &mut R) -> [[f64; 4]; 2] {
    let normal = Normal::new(cfg.mu, cfg.sigma).expect("validated sigma");
    let mut eps = [[0.0; 4]; 2];
    for row in eps.iter_mut() {
        for e in row.iter_mut() {
            *e = normal.sample(rng);
        }
    }
    eps
}

/// Full payoff bimatrix for one decision instant, deterministic in `seed`.
pub fn build_payoff_matrix(
    state: &GameState,
    coeffs: &Coefficients,
    cfg: &GameConfig,
    seed: u64,
) -> Result<Bimatrix, GameError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = draw_disturbances(cfg, &mut rng);
    let game = payoff_features(state, cfg).bimatrix(coeffs, &eps);
    if game.is_finite() {
        Ok(game)
    } else {
        Err(GameError::NonFinite)
    }
}
