//! Interaction Orientation: environment pressure (ITSI), the straight
//! vehicle's motion feature on its space-time diagram (S_norm), and their
//! combination into a single tendency score in `[0, 1]`.
//!
//! IO close to 0 marks a pronounced precedence tendency of the observed
//! vehicle, IO close to 1 a yielding tendency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrientationError {
    #[error("zero speed makes the time to the conflict point unbounded")]
    ZeroSpeed,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("sigmoid anchors imply a zero shape factor")]
    IllConditioned,
    #[error("occupied area starts at or before the current time")]
    AreaInPast,
    #[error("evaluation window must end after it starts")]
    InvalidWindow,
    #[error("empty IO series")]
    EmptySeries,
}

/// Logistic normalisation `1 - Sigmoid(alpha * (x - beta))` fitted through two anchors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidCalibration {
    pub alpha: f64,
    pub beta: f64,
    pub anchors: [(f64, f64); 2],
}

impl SigmoidCalibration {
    pub fn normalize(&self, value: f64) -> f64 {
        normalize(value, self)
    }
}

/// Solves for `(alpha, beta)` so that both anchors `(value, normalized)` are reproduced.
pub fn fit_sigmoid(anchors: [(f64, f64); 2]) -> Result<SigmoidCalibration, OrientationError> {
    let [(v1, y1), (v2, y2)] = anchors;
    if v1 == v2 || !(v1.is_finite() && v2.is_finite()) {
        return Err(OrientationError::IllConditioned);
    }
    if !(y1 > 0.0 && y1 < 1.0 && y2 > 0.0 && y2 < 1.0) {
        return Err(OrientationError::IllConditioned);
    }
    let c1 = ((1.0 - y1) / y1).ln();
    let c2 = ((1.0 - y2) / y2).ln();
    let alpha = (c1 - c2) / (v1 - v2);
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(OrientationError::IllConditioned);
    }
    let beta = v1 - c1 / alpha;
    Ok(SigmoidCalibration { alpha, beta, anchors })
}

pub fn normalize(value: f64, calib: &SigmoidCalibration) -> f64 {
    // 1 - 1/(1+e^-x) == 1/(1+e^x)
    1.0 / (1.0 + (calib.alpha * (value - calib.beta)).exp())
}

/// Softmax-weighted blend of the two normalised indicators.
pub fn itsi(ttcp_norm: f64, ac_norm: f64) -> f64 {
    let (w1, w2) = softmax2(ttcp_norm, ac_norm);
    w1 * ttcp_norm + w2 * ac_norm
}

pub fn softmax2(a: f64, b: f64) -> (f64, f64) {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    (ea / (ea + eb), eb / (ea + eb))
}

pub fn interaction_orientation(itsi: f64, s_norm: f64) -> f64 {
    1.0 - itsi * s_norm
}

/// Time to reach the conflict point, capped at `cap` for stopped or crawling vehicles.
pub fn ttcp(distance: f64, speed: f64, cap: f64) -> f64 {
    if speed > 0.0 {
        (distance / speed).min(cap)
    } else {
        cap
    }
}

/// One instant of the left-turn / straight interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionSnapshot {
    pub t: f64,
    /// Left-turn vehicle's remaining distance to the conflict point.
    pub d_l: f64,
    pub v_l: f64,
    pub d_s: f64,
    pub v_s: f64,
    pub l_l: f64,
    pub w_l: f64,
    pub l_s: f64,
    pub w_s: f64,
    /// Lateral offsets, positive to the right of travel.
    pub lat_l: f64,
    pub lat_s: f64,
    pub theta_l: f64,
    pub theta_s: f64,
}

impl InteractionSnapshot {
    /// Straight vehicle's time to the conflict point (uncapped; infinite when stopped).
    pub fn t_s(&self) -> f64 {
        if self.v_s > 0.0 {
            self.d_s / self.v_s
        } else {
            f64::INFINITY
        }
    }

    /// Same instant with the roles swapped, for analysing the left-turn vehicle's tendency.
    pub fn mirrored(&self) -> Self {
        Self {
            t: self.t,
            d_l: self.d_s,
            v_l: self.v_s,
            d_s: self.d_l,
            v_s: self.v_l,
            l_l: self.l_s,
            w_l: self.w_s,
            l_s: self.l_l,
            w_s: self.w_l,
            lat_l: self.lat_s,
            lat_s: self.lat_l,
            theta_l: self.theta_s,
            theta_s: self.theta_l,
        }
    }
}

/// `TTCP_left - TTCP_straight`.
pub fn delta_ttcp(snap: &InteractionSnapshot) -> Result<f64, OrientationError> {
    if !(snap.v_l > 0.0 && snap.v_s > 0.0) {
        return Err(OrientationError::ZeroSpeed);
    }
    Ok(snap.d_l / snap.v_l - snap.d_s / snap.v_s)
}

/// [`delta_ttcp`] with each TTCP capped at `cap`.
pub fn delta_ttcp_capped(snap: &InteractionSnapshot, cap: f64) -> f64 {
    ttcp(snap.d_l, snap.v_l, cap) - ttcp(snap.d_s, snap.v_s, cap)
}

/// Acceleration the left-turn vehicle needs to reach the conflict point
/// together with the straight vehicle arriving after `t_s`.
pub fn cooperative_accel_with(d_l: f64, v_l: f64, t_s: f64) -> Result<f64, OrientationError> {
    if !(t_s > 0.0) {
        return Err(OrientationError::DegenerateGeometry("straight vehicle time to conflict must be > 0"));
    }
    if !(d_l > 0.0) {
        return Err(OrientationError::DegenerateGeometry("left vehicle distance to conflict must be > 0"));
    }
    if d_l >= 0.5 * v_l * t_s {
        Ok(2.0 * (d_l - v_l * t_s) / (t_s * t_s))
    } else {
        Ok(v_l * v_l / (2.0 * d_l))
    }
}

pub fn cooperative_accel(snap: &InteractionSnapshot) -> Result<f64, OrientationError> {
    cooperative_accel_with(snap.d_l, snap.v_l, snap.t_s())
}

/// Rectangle occupied by the left-turn vehicle on the straight vehicle's ST diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupiedArea {
    pub t1: f64,
    pub t2: f64,
    pub s1: f64,
    pub s2: f64,
}

/// Straight vehicle's current point on its own ST diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StPoint {
    pub t0: f64,
    pub s0: f64,
    pub v0: f64,
}

pub fn occupied_area(snap: &InteractionSnapshot, st: StPoint) -> Result<OccupiedArea, OrientationError> {
    if !(snap.v_l > 0.0) {
        return Err(OrientationError::ZeroSpeed);
    }
    let t1 = st.t0 + snap.d_l / snap.v_l;
    let t2 = t1 + snap.l_l / snap.v_l;
    let s1 = st.s0 + snap.d_s;
    let s2 = s1 + snap.w_l + snap.l_l;
    Ok(OccupiedArea { t1, t2, s1, s2 })
}

/// [`occupied_area`] with the time offsets capped, used when the left-turn
/// vehicle is stopped or crawling.
pub fn occupied_area_capped(snap: &InteractionSnapshot, st: StPoint, cap: f64) -> OccupiedArea {
    let t1 = st.t0 + ttcp(snap.d_l, snap.v_l, cap);
    let t2 = t1 + ttcp(snap.l_l, snap.v_l, cap);
    let s1 = st.s0 + snap.d_s;
    OccupiedArea { t1, t2, s1, s2: s1 + snap.w_l + snap.l_l }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Deviator {
    Left,
    Straight,
}

/// Moves the occupied area for a lateral deviation of one vehicle
/// (offset taken from the snapshot, positive = rightward).
pub fn shift_for_lateral_deviation(
    area: &OccupiedArea,
    snap: &InteractionSnapshot,
    deviator: Deviator,
) -> Result<OccupiedArea, OrientationError> {
    let (ds_l, ds_s) = match deviator {
        Deviator::Left => {
            let ds_l = snap.theta_l.tan() * snap.lat_l;
            (ds_l, snap.theta_l.sin() * ds_l)
        }
        Deviator::Straight => (snap.theta_s.sin() * snap.lat_s, snap.theta_s.tan() * snap.lat_s),
    };
    if ds_l == 0.0 && ds_s == 0.0 {
        return Ok(*area);
    }
    if !(snap.v_s > 0.0) {
        return Err(OrientationError::ZeroSpeed);
    }
    let dt = ds_s / snap.v_s;
    Ok(OccupiedArea { t1: area.t1 - dt, t2: area.t2 - dt, s1: area.s1 + ds_l, s2: area.s2 + ds_l })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelBounds {
    pub a_min: f64,
    pub a_max: f64,
}

/// Constant accelerations whose trajectories from `st` graze the area's
/// top-left corner `(t1, S2)` (maximum) and bottom-right corner `(t2, S1)` (minimum).
pub fn boundary_accelerations(area: &OccupiedArea, st: StPoint) -> Result<AccelBounds, OrientationError> {
    let h1 = area.t1 - st.t0;
    let h2 = area.t2 - st.t0;
    if !(h1 > 0.0) || !(h2 > 0.0) {
        return Err(OrientationError::AreaInPast);
    }
    let a_min = 2.0 * ((area.s1 - st.s0) - st.v0 * h2) / (h2 * h2);
    let a_max = 2.0 * ((area.s2 - st.s0) - st.v0 * h1) / (h1 * h1);
    Ok(AccelBounds { a_min, a_max })
}

/// Displacement over `dt` under constant `a`, stopping (not reversing) at zero speed.
pub fn displacement(v: f64, a: f64, dt: f64) -> f64 {
    if a < 0.0 && v + a * dt < 0.0 {
        v * v / (2.0 * -a)
    } else {
        v * dt + 0.5 * a * dt * dt
    }
}

/// Observed displacement normalised between the displacements produced by
/// the two boundary accelerations over `[t0, t_s]`.
pub fn s_norm(
    actual_displacement: f64,
    v_s: f64,
    t0: f64,
    bounds: AccelBounds,
    t_s: f64,
) -> Result<f64, OrientationError> {
    let dt = t_s - t0;
    if !(dt > 0.0) {
        return Err(OrientationError::InvalidWindow);
    }
    let s_min = displacement(v_s, bounds.a_min, dt);
    let s_max = displacement(v_s, bounds.a_max, dt);
    if !(s_max > s_min) {
        log::debug!("degenerate S_norm bounds ({s_min}, {s_max}); using 0.5");
        return Ok(0.5);
    }
    Ok(if actual_displacement >= s_max {
        1.0
    } else if actual_displacement <= s_min {
        0.0
    } else {
        (actual_displacement - s_min) / (s_max - s_min)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TendencyCategory {
    Precedence,
    Ambiguous,
    Yielding,
}

impl TendencyCategory {
    pub const ALL: [TendencyCategory; 3] =
        [TendencyCategory::Precedence, TendencyCategory::Ambiguous, TendencyCategory::Yielding];

    pub fn as_str(self) -> &'static str {
        match self {
            TendencyCategory::Precedence => "precedence",
            TendencyCategory::Ambiguous => "ambiguous",
            TendencyCategory::Yielding => "yielding",
        }
    }
}

impl std::fmt::Display for TendencyCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TendencyCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "precedence" => Ok(TendencyCategory::Precedence),
            "ambiguous" => Ok(TendencyCategory::Ambiguous),
            "yielding" => Ok(TendencyCategory::Yielding),
            other => Err(format!("unknown tendency category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoSample {
    pub t: f64,
    pub itsi: f64,
    pub s_norm: f64,
    pub io: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationConfig {
    /// Cap on TTCP for stopped vehicles (s).
    pub ttcp_cap: f64,
    pub ttcp_calib: SigmoidCalibration,
    pub ac_calib: SigmoidCalibration,
    /// Evaluation window `t_s - t0` (s).
    pub window: f64,
    /// Mean IO at or below this is a precedence tendency.
    pub precedence_max: f64,
    /// Mean IO at or above this is a yielding tendency.
    pub yielding_min: f64,
}

impl Default for OrientationConfig {
    fn default() -> Self {
        Self {
            ttcp_cap: 20.0,
            ttcp_calib: fit_sigmoid([(-3.0, 0.9), (3.0, 0.1)]).expect("valid default anchors"),
            ac_calib: fit_sigmoid([(-2.0, 0.9), (2.0, 0.1)]).expect("valid default anchors"),
            window: 1.0,
            precedence_max: 0.4,
            yielding_min: 0.6,
        }
    }
}

/// Per-instant analysis record (one CSV row of `io-analyze`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoFrame {
    pub sample: IoSample,
    pub delta_ttcp: f64,
    pub a_c: f64,
}

impl OrientationConfig {
    /// Normalised environment indicators `(ΔTTCP, a_c, ITSI)` at one instant.
    pub fn environment(&self, snap: &InteractionSnapshot) -> Result<(f64, f64, f64), OrientationError> {
        let dt = delta_ttcp_capped(snap, self.ttcp_cap);
        let t_s = ttcp(snap.d_s, snap.v_s, self.ttcp_cap);
        let ac = cooperative_accel_with(snap.d_l, snap.v_l, t_s)?;
        let value = itsi(self.ttcp_calib.normalize(dt), self.ac_calib.normalize(ac));
        Ok((dt, ac, value))
    }

    /// IO of the straight vehicle at `now`, judged from how it moved since `start`.
    pub fn io_frame(
        &self,
        start: &InteractionSnapshot,
        now: &InteractionSnapshot,
    ) -> Result<IoFrame, OrientationError> {
        let (delta, ac, itsi_now) = self.environment(now)?;
        let st = StPoint { t0: start.t, s0: 0.0, v0: start.v_s };
        let mut area = occupied_area_capped(start, st, self.ttcp_cap);
        if start.lat_l != 0.0 {
            area = shift_for_lateral_deviation(&area, start, Deviator::Left)?;
        }
        if start.lat_s != 0.0 {
            area = shift_for_lateral_deviation(&area, start, Deviator::Straight)?;
        }
        let bounds = boundary_accelerations(&area, st)?;
        let moved = start.d_s - now.d_s;
        let sn = s_norm(moved, start.v_s, start.t, bounds, now.t)?;
        let io = interaction_orientation(itsi_now, sn);
        Ok(IoFrame { sample: IoSample { t: now.t, itsi: itsi_now, s_norm: sn, io }, delta_ttcp: delta, a_c: ac })
    }

    /// IO frames for a uniformly sampled series; the first frame is produced
    /// once a full window of history is available. Frames after either
    /// vehicle reaches the conflict point are omitted.
    pub fn io_series(&self, series: &[InteractionSnapshot], dt: f64) -> Vec<IoFrame> {
        let lag = (self.window / dt).round().max(1.0) as usize;
        (lag..series.len())
            .filter_map(|k| self.io_frame(&series[k - lag], &series[k]).ok())
            .collect()
    }

    pub fn classify(&self, series: &[IoSample]) -> Result<TendencyCategory, OrientationError> {
        classify_tendency_with(series, self.window, self.precedence_max, self.yielding_min)
    }
}

/// Tendency from the mean IO over the trailing `window` seconds.
pub fn classify_tendency(series: &[IoSample], window: f64) -> Result<TendencyCategory, OrientationError> {
    classify_tendency_with(series, window, 0.4, 0.6)
}

fn classify_tendency_with(
    series: &[IoSample],
    window: f64,
    precedence_max: f64,
    yielding_min: f64,
) -> Result<TendencyCategory, OrientationError> {
    let last = series.last().ok_or(OrientationError::EmptySeries)?;
    let from = last.t - window + 1e-9;
    let (sum, n) = series
        .iter()
        .rev()
        .take_while(|s| s.t > from)
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.io, n + 1));
    let mean = sum / n as f64;
    Ok(if mean >= yielding_min {
        TendencyCategory::Yielding
    } else if mean <= precedence_max {
        TendencyCategory::Precedence
    } else {
        TendencyCategory::Ambiguous
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn snap(d_l: f64, v_l: f64, d_s: f64, v_s: f64) -> InteractionSnapshot {
        InteractionSnapshot {
            t: 0.0,
            d_l,
            v_l,
            d_s,
            v_s,
            l_l: 4.5,
            w_l: 2.0,
            l_s: 4.5,
            w_s: 2.0,
            lat_l: 0.0,
            lat_s: 0.0,
            theta_l: FRAC_PI_4,
            theta_s: FRAC_PI_4,
        }
    }

    #[test]
    fn delta_ttcp_examples() {
        assert_abs_diff_eq!(delta_ttcp(&snap(20.0, 4.0, 30.0, 10.0)).unwrap(), 2.0);
        assert_abs_diff_eq!(delta_ttcp(&snap(20.0, 4.0, 50.0, 10.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(delta_ttcp(&snap(10.0, 5.0, 40.0, 8.0)).unwrap(), -3.0);
        assert_eq!(delta_ttcp(&snap(10.0, 0.0, 40.0, 8.0)), Err(OrientationError::ZeroSpeed));
        assert_abs_diff_eq!(delta_ttcp_capped(&snap(10.0, 0.0, 40.0, 8.0), 20.0), 15.0);
    }

    #[test]
    fn cooperative_accel_examples() {
        assert_abs_diff_eq!(cooperative_accel_with(20.0, 4.0, 3.0).unwrap(), 16.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cooperative_accel_with(12.0, 4.0, 3.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cooperative_accel_with(5.0, 4.0, 3.0).unwrap(), 1.6, epsilon = 1e-12);
        assert!(cooperative_accel_with(5.0, 4.0, 0.0).is_err());
        assert!(cooperative_accel_with(0.0, 4.0, 3.0).is_err());
    }

    #[test]
    fn sigmoid_fit_examples() {
        let c = fit_sigmoid([(-2.0, 0.9), (2.0, 0.1)]).unwrap();
        assert_abs_diff_eq!(c.alpha, 9f64.ln() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.alpha, 1.09861, epsilon = 1e-5);
        assert_abs_diff_eq!(c.beta, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.normalize(-2.0), 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(c.normalize(c.beta), 0.5, epsilon = 1e-15);
        assert!(c.normalize(1e6) < 1e-12);
        let sym = fit_sigmoid([(4.0, 0.8), (10.0, 0.2)]).unwrap();
        assert_abs_diff_eq!(sym.beta, 7.0, epsilon = 1e-12);
        assert_eq!(fit_sigmoid([(0.0, 0.5), (1.0, 0.5)]), Err(OrientationError::IllConditioned));
    }

    #[test]
    fn itsi_examples() {
        assert_abs_diff_eq!(itsi(0.5, 0.5), 0.5, epsilon = 1e-15);
        let (w1, w2) = softmax2(0.8, 0.2);
        assert_abs_diff_eq!(w1, 0.6457, epsilon = 1e-4);
        assert_abs_diff_eq!(w2, 0.3543, epsilon = 1e-4);
        assert_abs_diff_eq!(itsi(0.8, 0.2), 0.5874, epsilon = 1e-4);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(itsi(0.0, 1.0), e / (1.0 + e), epsilon = 1e-12);
    }

    #[test]
    fn occupied_area_example() {
        let mut s = snap(15.0, 5.0, 25.0, 10.0);
        s.l_l = 4.5;
        s.w_l = 2.0;
        let st = StPoint { t0: 0.0, s0: 0.0, v0: 10.0 };
        let a = occupied_area(&s, st).unwrap();
        assert_abs_diff_eq!(a.t1, 3.0);
        assert_abs_diff_eq!(a.t2, 3.9, epsilon = 1e-12);
        assert_abs_diff_eq!(a.s1, 25.0);
        assert_abs_diff_eq!(a.s2, 31.5);
        s.v_l = 10.0;
        let b = occupied_area(&s, st).unwrap();
        assert_abs_diff_eq!(b.t1, 1.5);
        assert_abs_diff_eq!(b.t2 - b.t1, 0.45, epsilon = 1e-12);
        s.l_l = 0.0;
        s.w_l = 0.0;
        let c = occupied_area(&s, st).unwrap();
        assert_eq!((c.t1, c.s1), (c.t2, c.s2));
        s.v_l = 0.0;
        assert_eq!(occupied_area(&s, st), Err(OrientationError::ZeroSpeed));
    }

    #[test]
    fn lateral_shift_example() {
        let mut s = snap(15.0, 5.0, 25.0, 10.0);
        let area = OccupiedArea { t1: 3.0, t2: 3.9, s1: 25.0, s2: 31.5 };
        assert_eq!(shift_for_lateral_deviation(&area, &s, Deviator::Left).unwrap(), area);
        s.lat_l = 1.0;
        let moved = shift_for_lateral_deviation(&area, &s, Deviator::Left).unwrap();
        assert_abs_diff_eq!(moved.t1, 2.929289, epsilon = 1e-6);
        assert_abs_diff_eq!(moved.t2, 3.829289, epsilon = 1e-6);
        assert_abs_diff_eq!(moved.s1, 26.0, epsilon = 1e-12);
        assert_abs_diff_eq!(moved.s2, 32.5, epsilon = 1e-12);
        s.lat_l = -1.0;
        let back = shift_for_lateral_deviation(&moved, &s, Deviator::Left).unwrap();
        assert_abs_diff_eq!(back.t1, area.t1, epsilon = 1e-9);
        assert_abs_diff_eq!(back.s2, area.s2, epsilon = 1e-9);
        s.lat_s = 0.5;
        let st = shift_for_lateral_deviation(&area, &s, Deviator::Straight).unwrap();
        assert_abs_diff_eq!(st.s1 - area.s1, FRAC_PI_4.sin() * 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(area.t1 - st.t1, 0.05, epsilon = 1e-12);
        s.v_s = 0.0;
        assert_eq!(shift_for_lateral_deviation(&area, &s, Deviator::Straight), Err(OrientationError::ZeroSpeed));
    }

    #[test]
    fn boundary_acceleration_examples() {
        let st = StPoint { t0: 0.0, s0: 0.0, v0: 8.0 };
        let area = OccupiedArea { t1: 2.0, t2: 3.0, s1: 20.0, s2: 28.0 };
        let b = boundary_accelerations(&area, st).unwrap();
        assert_abs_diff_eq!(b.a_min, -8.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.a_max, 6.0, epsilon = 1e-12);
        let graze = OccupiedArea { t1: 2.0, t2: 3.0, s1: 24.0, s2: 28.0 };
        assert_abs_diff_eq!(boundary_accelerations(&graze, st).unwrap().a_min, 0.0);
        let past = OccupiedArea { t1: 0.0, t2: 1.0, s1: 20.0, s2: 28.0 };
        assert_eq!(boundary_accelerations(&past, st), Err(OrientationError::AreaInPast));
    }

    #[test]
    fn s_norm_examples() {
        // pick bounds producing S_min = 10, S_max = 20 over 1 s from rest
        let b = AccelBounds { a_min: 20.0, a_max: 40.0 };
        assert_abs_diff_eq!(s_norm(15.0, 0.0, 0.0, b, 1.0).unwrap(), 0.5);
        assert_eq!(s_norm(25.0, 0.0, 0.0, b, 1.0).unwrap(), 1.0);
        assert_eq!(s_norm(5.0, 0.0, 0.0, b, 1.0).unwrap(), 0.0);
        let b = AccelBounds { a_min: -8.0 / 9.0, a_max: 6.0 };
        let expected = (9.0 - (8.0 - 4.0 / 9.0)) / (11.0 - (8.0 - 4.0 / 9.0));
        assert_abs_diff_eq!(s_norm(9.0, 8.0, 0.0, b, 1.0).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.419, epsilon = 1e-3);
        let flat = AccelBounds { a_min: 1.0, a_max: 1.0 };
        assert_eq!(s_norm(3.0, 1.0, 0.0, flat, 1.0).unwrap(), 0.5);
        assert_eq!(s_norm(3.0, 1.0, 1.0, flat, 1.0), Err(OrientationError::InvalidWindow));
    }

    #[test]
    fn displacement_stops_at_zero_speed() {
        assert_abs_diff_eq!(displacement(2.0, -4.0, 1.0), 0.5);
        assert_abs_diff_eq!(displacement(2.0, 1.0, 1.0), 2.5);
    }

    #[test]
    fn io_examples() {
        assert_eq!(interaction_orientation(0.3, 0.0), 1.0);
        assert_eq!(interaction_orientation(1.0, 1.0), 0.0);
        assert_abs_diff_eq!(interaction_orientation(0.5874, 0.5), 0.7063, epsilon = 1e-12);
    }

    fn constant(io: f64) -> Vec<IoSample> {
        (0..20).map(|k| IoSample { t: k as f64 * 0.1, itsi: 0.5, s_norm: 0.5, io }).collect()
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(classify_tendency(&constant(0.9), 1.0).unwrap(), TendencyCategory::Yielding);
        assert_eq!(classify_tendency(&constant(0.1), 1.0).unwrap(), TendencyCategory::Precedence);
        assert_eq!(classify_tendency(&constant(0.5), 1.0).unwrap(), TendencyCategory::Ambiguous);
        assert_eq!(classify_tendency(&[], 1.0), Err(OrientationError::EmptySeries));
    }

    #[test]
    fn classification_uses_trailing_window_only() {
        let mut s = constant(0.1);
        for x in s.iter_mut().skip(10) {
            x.io = 0.9;
        }
        assert_eq!(classify_tendency(&s, 1.0).unwrap(), TendencyCategory::Yielding);
        assert_eq!(classify_tendency(&s, 2.0).unwrap(), TendencyCategory::Ambiguous);
    }

    #[test]
    fn decelerating_straight_vehicle_reads_as_yielding() {
        let cfg = OrientationConfig::default();
        // straight vehicle brakes hard from 8 m/s while the left-turner rolls at 4 m/s
        let mut series = Vec::new();
        let (mut d_s, mut v_s, mut d_l) = (30.0, 8.0, 12.0);
        for k in 0..=10 {
            let mut s = snap(d_l, 4.0, d_s, v_s);
            s.t = k as f64 * 0.1;
            series.push(s);
            let v_next = (v_s - 3.0 * 0.1f64).max(0.0);
            d_s -= 0.5 * (v_s + v_next) * 0.1;
            v_s = v_next;
            d_l -= 0.4;
        }
        let frames = cfg.io_series(&series, 0.1);
        assert_eq!(frames.len(), 1);
        assert!(frames[0].sample.io > 0.6, "{:?}", frames[0]);
    }
}
