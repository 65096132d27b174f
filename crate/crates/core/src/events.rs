//! Labeled interaction events, the unit of learning and evaluation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::orientation::{InteractionSnapshot, TendencyCategory};

/// Sample period of every event series (s).
pub const SAMPLE_DT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event {id}: {reason}")]
    Invalid { id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEvent {
    pub id: String,
    pub category: TendencyCategory,
    /// 1 when the left-turn vehicle crossed first.
    pub p_l: u8,
    /// 1 when the straight vehicle crossed first.
    pub p_s: u8,
    /// Snapshots at 10 Hz, oldest first.
    pub series: Vec<InteractionSnapshot>,
}

impl LabeledEvent {
    pub fn left_first(&self) -> bool {
        self.p_l == 1
    }

    pub fn validate(&self) -> Result<(), EventError> {
        let bad = |reason: &str| Err(EventError::Invalid { id: self.id.clone(), reason: reason.to_string() });
        if self.p_l + self.p_s != 1 || self.p_l > 1 || self.p_s > 1 {
            return bad("exactly one of p_l, p_s must be 1");
        }
        if self.series.is_empty() {
            return bad("empty series");
        }
        if self.series.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return bad("timestamps must increase");
        }
        Ok(())
    }
}

/// Samples per orientation window.
pub fn window_lag(window: f64) -> usize {
    (window / SAMPLE_DT).round().max(1.0) as usize
}

/// Indices at which the engine decides: a full orientation window of
/// history exists and neither front edge has reached the conflict point.
pub fn decision_instants(series: &[InteractionSnapshot], lag: usize) -> Vec<usize> {
    (lag..series.len())
        .take_while(|&k| {
            let s = &series[k];
            s.d_l > 0.5 * s.l_l && s.d_s > 0.5 * s.l_s
        })
        .collect()
}

pub fn write_jsonl(path: &Path, events: &[LabeledEvent]) -> Result<(), EventError> {
    let mut out = BufWriter::new(File::create(path)?);
    for ev in events {
        serde_json::to_writer(&mut out, ev).map_err(|e| EventError::Parse { line: 0, message: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<LabeledEvent>, EventError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: LabeledEvent =
            serde_json::from_str(&line).map_err(|e| EventError::Parse { line: i + 1, message: e.to_string() })?;
        ev.validate()?;
        events.push(ev);
    }
    Ok(events)
}

/// SHA-256 over the canonical JSON encoding of the events, in order.
pub fn fingerprint(events: &[LabeledEvent]) -> String {
    let mut h = Sha256::new();
    for ev in events {
        h.update(serde_json::to_vec(ev).expect("events serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
