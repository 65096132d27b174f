//! Two-player Proceed/Yield game between the left-turn and the straight
//! vehicle: payoff construction with a short future-state rollout, the
//! mixed-strategy equilibrium, and the decision taken from it.

pub mod lemke_howson;
mod payoff;

pub use payoff::{
    draw_disturbances, step_safety,
    build_payoff_matrix, discounted_sum, efficiency_benefit, extrapolate, payoff, payoff_features, safety_benefit,
    time_to_conflict_under, AgentKinematics, GameConfig, GameState, PayoffFeatures,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Role;
use lemke_howson::{LemkeHowson, Matrix, PivotError};

/// Tolerance of the no-profitable-deviation check.
pub const EQUILIBRIUM_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("payoff entries must be finite")]
    NonFinite,
    #[error("pivoting failed: {0}")]
    Pivot(#[from] PivotError),
    #[error("vehicle cannot stop before the conflict point")]
    Unreachable,
    #[error("invalid game configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Proceed,
    Yield,
}

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Proceed => 0,
            Action::Yield => 1,
        }
    }
}

/// One cell of the game, indexed `(left action, straight action)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointStrategy {
    pub left: Action,
    pub straight: Action,
}

impl JointStrategy {
    /// Canonical order `PP, PY, YP, YY`.
    pub const ALL: [JointStrategy; 4] = [
        JointStrategy { left: Action::Proceed, straight: Action::Proceed },
        JointStrategy { left: Action::Proceed, straight: Action::Yield },
        JointStrategy { left: Action::Yield, straight: Action::Proceed },
        JointStrategy { left: Action::Yield, straight: Action::Yield },
    ];

    pub fn index(self) -> usize {
        2 * self.left.index() + self.straight.index()
    }

    pub fn action(self, role: Role) -> Action {
        match role {
            Role::LeftTurn => self.left,
            Role::Straight => self.straight,
        }
    }

    pub fn label(self) -> &'static str {
        ["PP", "PY", "YP", "YY"][self.index()]
    }
}

/// Payoffs of both players; `[left action][straight action]`, index 0 = Proceed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bimatrix {
    pub u_l: [[f64; 2]; 2],
    pub u_s: [[f64; 2]; 2],
}

impl Bimatrix {
    pub fn new(u_l: [[f64; 2]; 2], u_s: [[f64; 2]; 2]) -> Self {
        Self { u_l, u_s }
    }

    pub fn is_finite(&self) -> bool {
        self.u_l.iter().chain(&self.u_s).flatten().all(|v| v.is_finite())
    }

    pub fn get(&self, role: Role, s: JointStrategy) -> f64 {
        let (i, j) = (s.left.index(), s.straight.index());
        match role {
            Role::LeftTurn => self.u_l[i][j],
            Role::Straight => self.u_s[i][j],
        }
    }

    fn matrices(&self) -> (Matrix, Matrix) {
        let to = |u: &[[f64; 2]; 2]| Matrix::from_rows(&[u[0].to_vec(), u[1].to_vec()]);
        (to(&self.u_l), to(&self.u_s))
    }
}

/// Mixed strategies `(Proceed, Yield)` of both players.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile {
    pub p_l: [f64; 2],
    pub p_s: [f64; 2],
}

impl MixedProfile {
    pub fn pure(left: Action, straight: Action) -> Self {
        let one = |a: Action| if a == Action::Proceed { [1.0, 0.0] } else { [0.0, 1.0] };
        Self { p_l: one(left), p_s: one(straight) }
    }

    pub fn proceed(&self, role: Role) -> f64 {
        match role {
            Role::LeftTurn => self.p_l[0],
            Role::Straight => self.p_s[0],
        }
    }

    /// Both players randomise with positive probability on each action.
    pub fn is_fully_mixed(&self) -> bool {
        let inner = |p: f64| p > 1e-12 && p < 1.0 - 1e-12;
        inner(self.p_l[0]) && inner(self.p_s[0])
    }

    pub fn distance(&self, other: &MixedProfile) -> f64 {
        (self.p_l[0] - other.p_l[0]).abs().max((self.p_s[0] - other.p_s[0]).abs())
    }

    fn from_vectors(x: &[f64], y: &[f64]) -> Self {
        Self { p_l: [x[0], 1.0 - x[0]], p_s: [y[0], 1.0 - y[0]] }
    }
}

/// Expected payoffs `(U_l, U_s)` under a mixed profile.
pub fn expected_payoffs(game: &Bimatrix, profile: &MixedProfile) -> (f64, f64) {
    let bilinear = |u: &[[f64; 2]; 2]| -> f64 {
        (0..2).map(|i| (0..2).map(|j| profile.p_l[i] * profile.p_s[j] * u[i][j]).sum::<f64>()).sum()
    };
    (bilinear(&game.u_l), bilinear(&game.u_s))
}

/// Largest gain any player gets by deviating to a pure strategy.
pub fn max_deviation_gain(game: &Bimatrix, profile: &MixedProfile) -> f64 {
    let (ul, us) = expected_payoffs(game, profile);
    let row = |i: usize| profile.p_s[0] * game.u_l[i][0] + profile.p_s[1] * game.u_l[i][1];
    let col = |j: usize| profile.p_l[0] * game.u_s[0][j] + profile.p_l[1] * game.u_s[1][j];
    [row(0) - ul, row(1) - ul, col(0) - us, col(1) - us].into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_equilibrium(game: &Bimatrix, profile: &MixedProfile, eps: f64) -> bool {
    max_deviation_gain(game, profile) <= eps
}

/// Every equilibrium of a 2×2 game found by enumerating supports: the
/// pure profiles that are mutual best responses, plus the completely mixed
/// profile given by the two indifference conditions when it exists.
pub fn support_enumeration(game: &Bimatrix) -> Vec<MixedProfile> {
    let (ul, us) = (&game.u_l, &game.u_s);
    let mut out = Vec::new();
    for s in JointStrategy::ALL {
        let (i, j) = (s.left.index(), s.straight.index());
        if ul[i][j] >= ul[1 - i][j] && us[i][j] >= us[i][1 - j] {
            out.push(MixedProfile::pure(s.left, s.straight));
        }
    }
    // q = P(straight proceeds) leaving the left player indifferent
    let dl = (ul[0][0] - ul[0][1]) - (ul[1][0] - ul[1][1]);
    let ds = (us[0][0] - us[1][0]) - (us[0][1] - us[1][1]);
    if dl != 0.0 && ds != 0.0 {
        let q = (ul[1][1] - ul[0][1]) / dl;
        let p = (us[1][1] - us[1][0]) / ds;
        if (0.0..=1.0).contains(&q) && (0.0..=1.0).contains(&p) {
            let mixed = MixedProfile { p_l: [p, 1.0 - p], p_s: [q, 1.0 - q] };
            if !out.iter().any(|e| e.distance(&mixed) < 1e-12) {
                out.push(mixed);
            }
        }
    }
    out
}

/// Equilibrium selection shared by both solution routes: a completely mixed
/// equilibrium when one exists, otherwise the first candidate.
fn select(candidates: &[MixedProfile]) -> Option<MixedProfile> {
    candidates.iter().find(|p| p.is_fully_mixed()).or_else(|| candidates.first()).copied()
}

/// Equilibrium chosen from [`support_enumeration`]; never fails on finite games.
pub fn solve_by_enumeration(game: &Bimatrix) -> Result<MixedProfile, GameError> {
    if !game.is_finite() {
        return Err(GameError::NonFinite);
    }
    select(&support_enumeration(game)).ok_or(GameError::NonFinite)
}

/// Equilibria reachable by Lemke-Howson: the path dropping label 0 from the
/// artificial equilibrium, then every label from that end point when it is pure.
pub fn lemke_howson_equilibria(game: &Bimatrix) -> Result<Vec<MixedProfile>, GameError> {
    if !game.is_finite() {
        return Err(GameError::NonFinite);
    }
    let (a, b) = game.matrices();
    let mut walker = LemkeHowson::new(&a, &b)?;
    let (x, y) = walker.walk(0)?.ok_or(PivotError::Unbounded)?;
    let first = MixedProfile::from_vectors(&x, &y);
    let mut found = vec![first];
    if !first.is_fully_mixed() {
        for label in 1..4 {
            let mut branch = walker.clone();
            if let Some((x, y)) = branch.walk(label)? {
                let eq = MixedProfile::from_vectors(&x, &y);
                if !found.iter().any(|e| e.distance(&eq) < 1e-12) {
                    found.push(eq);
                }
                if eq.is_fully_mixed() {
                    break;
                }
            }
        }
    }
    Ok(found)
}

/// Mixed-strategy Nash equilibrium by Lemke-Howson. Falls back to support
/// enumeration if pivoting fails or its output fails the equilibrium check.
pub fn solve_mixed_nash(game: &Bimatrix) -> Result<MixedProfile, GameError> {
    if !game.is_finite() {
        return Err(GameError::NonFinite);
    }
    match lemke_howson_equilibria(game) {
        Ok(found) => match select(&found) {
            Some(p) if is_equilibrium(game, &p, EQUILIBRIUM_EPS) => Ok(p),
            _ => solve_by_enumeration(game),
        },
        Err(err) => {
            log::debug!("Lemke-Howson failed ({err}); enumerating supports");
            solve_by_enumeration(game)
        }
    }
}

/// Proceed iff the role's Proceed probability exceeds `threshold`; ties yield.
pub fn decide(profile: &MixedProfile, role: Role, threshold: f64) -> Action {
    if profile.proceed(role) > threshold {
        Action::Proceed
    } else {
        Action::Yield
    }
}

/// Per-player, per-cell payoff coefficients: `alpha` weights efficiency,
/// `beta` weights safety. Indexed `[player][joint strategy]`, player 0 = left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub alpha: [[f64; 4]; 2],
    pub beta: [[f64; 4]; 2],
}

impl Coefficients {
    pub const LEN: usize = 16;

    pub fn uniform(value: f64) -> Self {
        Self { alpha: [[value; 4]; 2], beta: [[value; 4]; 2] }
    }

    /// Flat order: alpha_l, beta_l, alpha_s, beta_s, each over `PP, PY, YP, YY`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::LEN);
        for p in 0..2 {
            v.extend_from_slice(&self.alpha[p]);
            v.extend_from_slice(&self.beta[p]);
        }
        v
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != Self::LEN {
            return None;
        }
        let mut c = Self::uniform(0.0);
        for p in 0..2 {
            c.alpha[p].copy_from_slice(&v[8 * p..8 * p + 4]);
            c.beta[p].copy_from_slice(&v[8 * p + 4..8 * p + 8]);
        }
        Some(c)
    }
}

impl Default for Coefficients {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chicken() -> Bimatrix {
        Bimatrix::new([[0.0, 4.0], [1.0, 3.0]], [[0.0, 1.0], [4.0, 3.0]])
    }

    #[test]
    fn matching_pennies_is_uniform() {
        let u = [[1.0, -1.0], [-1.0, 1.0]];
        let neg = [[-1.0, 1.0], [1.0, -1.0]];
        let p = solve_mixed_nash(&Bimatrix::new(u, neg)).unwrap();
        assert_abs_diff_eq!(p.p_l[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p_s[0], 0.5, epsilon = 1e-12);
        let (el, es) = expected_payoffs(&Bimatrix::new(u, neg), &p);
        assert_abs_diff_eq!(el, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(es, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chicken_selects_the_mixed_equilibrium() {
        let p = solve_mixed_nash(&chicken()).unwrap();
        assert_abs_diff_eq!(p.p_l[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p_s[0], 0.5, epsilon = 1e-12);
        let (el, es) = expected_payoffs(&chicken(), &p);
        assert_abs_diff_eq!(el, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(es, 2.0, epsilon = 1e-12);
        assert_eq!(support_enumeration(&chicken()).len(), 3);
    }

    #[test]
    fn dominant_row_is_played() {
        for us in [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [0.0, 0.0]], [[3.0, -1.0], [2.0, 5.0]]] {
            let g = Bimatrix::new([[2.0, 2.0], [0.0, 0.0]], us);
            let p = solve_mixed_nash(&g).unwrap();
            assert_abs_diff_eq!(p.p_l[0], 1.0, epsilon = 1e-12);
            assert!(is_equilibrium(&g, &p, EQUILIBRIUM_EPS));
        }
    }

    #[test]
    fn pure_profile_selects_cell() {
        let g = chicken();
        let (l, s) = expected_payoffs(&g, &MixedProfile::pure(Action::Proceed, Action::Proceed));
        assert_eq!((l, s), (0.0, 0.0));
        let (l, s) = expected_payoffs(&g, &MixedProfile::pure(Action::Proceed, Action::Yield));
        assert_eq!((l, s), (4.0, 1.0));
    }

    #[test]
    fn decision_rule() {
        let mk = |p: f64| MixedProfile { p_l: [p, 1.0 - p], p_s: [0.5, 0.5] };
        assert_eq!(decide(&mk(0.7), Role::LeftTurn, 0.5), Action::Proceed);
        assert_eq!(decide(&mk(0.5), Role::LeftTurn, 0.5), Action::Yield);
        assert_eq!(decide(&mk(0.3), Role::LeftTurn, 0.5), Action::Yield);
    }

    #[test]
    fn non_finite_games_are_rejected() {
        let g = Bimatrix::new([[f64::NAN, 0.0], [0.0, 0.0]], [[0.0; 2]; 2]);
        assert_eq!(solve_mixed_nash(&g), Err(GameError::NonFinite));
    }

    #[test]
    fn coefficient_layout_round_trips() {
        let v: Vec<f64> = (0..16).map(f64::from).collect();
        let c = Coefficients::from_slice(&v).unwrap();
        assert_eq!(c.alpha[0], [0.0, 1.0, 2.0, 3.0]);
        assert_eq!(c.beta[1], [12.0, 13.0, 14.0, 15.0]);
        assert_eq!(c.to_vec(), v);
        assert!(Coefficients::from_slice(&v[..3]).is_none());
    }

    #[test]
    fn joint_strategy_order() {
        let labels: Vec<_> = JointStrategy::ALL.iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["PP", "PY", "YP", "YY"]);
        for (k, s) in JointStrategy::ALL.iter().enumerate() {
            assert_eq!(s.index(), k);
        }
    }
}
