//! JSON messages exchanged with a cockpit client.

use serde::{Deserialize, Serialize};
use socialturn::game::Action;
use socialturn::kinematics::{Layout, VehicleState};
use socialturn::orientation::TendencyCategory;
use socialturn::sim::{Metrics, StepRecord, TerminalReason};

/// Messages sent by the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Opens a session. `config` is merged over the server's default
    /// simulation config. In lockstep mode the server advances one tick per
    /// `control` message instead of pacing on the wall clock.
    Start {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        config: Option<serde_json::Value>,
        #[serde(default)]
        lockstep: bool,
    },
    /// HV acceleration command (m/s²), held until the next one.
    Control { accel: f64 },
}

/// Pose and motion of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Arc length along the vehicle's path (m).
    pub s: f64,
    pub v: f64,
    pub lateral: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleView {
    pub fn of(layout: &Layout, st: &VehicleState) -> Self {
        let (p, heading) = layout.pose(st);
        Self { x: p.x, y: p.y, heading, s: st.s, v: st.v, lateral: st.lateral, length: st.length, width: st.width }
    }
}

/// One simulator record as seen by the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tick: u64,
    pub t: f64,
    pub av: VehicleView,
    pub hv: VehicleView,
    pub av_accel: f64,
    pub hv_accel: f64,
    pub io: Option<f64>,
    pub itsi: Option<f64>,
    pub s_norm: Option<f64>,
    /// `[proceed, yield]` probabilities of the left-turn AV.
    pub p_l: Option<[f64; 2]>,
    pub p_s: Option<[f64; 2]>,
    pub av_decision: Option<Action>,
    pub expert_category: Option<TendencyCategory>,
    pub fallback: bool,
}

impl StateMessage {
    pub fn from_record(layout: &Layout, r: &StepRecord) -> Self {
        Self {
            tick: r.tick,
            t: r.t,
            av: VehicleView::of(layout, &r.av),
            hv: VehicleView::of(layout, &r.hv),
            av_accel: r.av_accel,
            hv_accel: r.hv_accel,
            io: r.io.map(|s| s.io),
            itsi: r.io.map(|s| s.itsi),
            s_norm: r.io.map(|s| s.s_norm),
            p_l: r.profile.map(|p| p.p_l),
            p_s: r.profile.map(|p| p.p_s),
            av_decision: r.decision,
            expert_category: r.category,
            fallback: r.fallback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    /// Not JSON, or not a known message.
    MalformedMessage,
    /// The `start` config did not validate.
    InvalidConfig,
    /// `control` before `start`.
    NoSession,
    /// `start` while a session is running.
    SessionActive,
}

/// Messages sent by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMessage {
    State(StateMessage),
    End { tick: u64, reason: TerminalReason, metrics: Metrics },
    Error { code: ErrorCode, message: String },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self::Error { code, message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, serde_json::Error> {
    serde_json::from_str(text)
}
