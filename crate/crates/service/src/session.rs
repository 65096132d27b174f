use serde_json::Value;
use socialturn::engine::DecisionEngine;
use socialturn::sim::{episode_metrics, Episode, EpisodeLog, HvPolicy, SimConfig, SimError};
use thiserror::Error;

use crate::protocol::{ServerMessage, StateMessage};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Overlays `patch` on `base`, recursing into objects.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Builds the config of a live session. The HV is driven by the client
/// unless the overrides name another policy.
pub fn session_config(default: &SimConfig, overrides: Option<&Value>, seed: Option<u64>) -> Result<SimConfig, SessionError> {
    let mut base = SimConfig { hv_policy: HvPolicy::External, ..default.clone() };
    if let Some(s) = seed {
        base.seed = s;
    }
    let Some(patch) = overrides else { return Ok(base) };
    if !patch.is_object() {
        return Err(SessionError::Config("config must be a JSON object".into()));
    }
    let mut value = serde_json::to_value(&base).expect("config serializes");
    merge(&mut value, patch);
    serde_json::from_value(value).map_err(|e| SessionError::Config(e.to_string()))
}

/// One live episode with a held HV command.
#[derive(Debug)]
pub struct Session {
    episode: Episode,
    control: f64,
}

impl Session {
    pub fn new(cfg: &SimConfig, engine: &DecisionEngine) -> Result<Self, SessionError> {
        let episode = Episode::new(cfg, engine.clone()).map_err(|e| match e {
            SimError::ConfigInvalid(m) => SessionError::Config(m),
            other => SessionError::Sim(other),
        })?;
        Ok(Self { episode, control: 0.0 })
    }

    /// Latest command wins; the simulator clamps it when applied.
    pub fn set_control(&mut self, accel: f64) {
        self.control = accel;
    }

    pub fn control(&self) -> f64 {
        self.control
    }

    pub fn state(&self) -> StateMessage {
        StateMessage::from_record(self.episode.layout(), self.episode.last())
    }

    /// Advances one step under the held command.
    pub fn tick(&mut self) -> Result<StateMessage, SimError> {
        self.episode.step(Some(self.control))?;
        Ok(self.state())
    }

    pub fn is_over(&self) -> bool {
        self.episode.terminal().is_some()
    }

    /// `end` message once the episode has terminated.
    pub fn end(&self) -> Option<ServerMessage> {
        let reason = self.episode.terminal()?;
        Some(ServerMessage::End {
            tick: self.episode.last().tick,
            reason,
            metrics: episode_metrics(self.episode.log(), self.episode.layout()),
        })
    }

    pub fn abort(&mut self) {
        self.episode.abort();
    }

    pub fn log(&self) -> &EpisodeLog {
        self.episode.log()
    }
}

/// Sets the command and advances one step.
pub fn session_tick(session: &mut Session, control: f64) -> Result<StateMessage, SimError> {
    session.set_control(control);
    session.tick()
}
