//! Trajectory CSV ingestion and left-turn / straight event extraction.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{LabeledEvent, SAMPLE_DT};
use crate::kinematics::{ConflictGeometry, Layout, Point2, Role};
use crate::orientation::{InteractionSnapshot, OrientationConfig, TendencyCategory};
use crate::synth::classify_series;

pub const CSV_HEADER: &str = "frame,track_id,agent_type,t,x,y,vx,vy,heading,length,width";
const COLUMNS: [&str; 11] = ["frame", "track_id", "agent_type", "t", "x", "y", "vx", "vy", "heading", "length", "width"];

/// Co-presence radius around the conflict point (m).
pub const GATE_RADIUS: f64 = 50.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("track {0}: timestamps are not strictly increasing")]
    NonMonotonicTime(String),
    #[error("event {0}: a vehicle never crosses the conflict point")]
    Unresolved(String),
}

#[derive(Debug, Clone, Deserialize)]
struct Row {
    #[allow(dead_code)]
    frame: i64,
    track_id: String,
    agent_type: String,
    t: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    heading: f64,
    length: f64,
    width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl TrackFrame {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: String,
    pub agent_type: String,
    pub frames: Vec<TrackFrame>,
}

impl TrackRecord {
    /// Grid index of the first frame; frame `k` is at `(start_tick + k) * 0.1` s.
    pub fn start_tick(&self) -> i64 {
        tick(self.frames[0].t)
    }

    fn at_tick(&self, k: i64) -> Option<&TrackFrame> {
        let i = k - self.start_tick();
        usize::try_from(i).ok().and_then(|i| self.frames.get(i))
    }
}

fn tick(t: f64) -> i64 {
    (t / SAMPLE_DT).round() as i64
}

/// A rejected CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub tracks: Vec<TrackRecord>,
    pub rejected: Vec<RowError>,
}

pub fn parse_trajectories(path: &Path) -> Result<ParseReport, IngestError> {
    parse_reader(std::fs::File::open(path)?)
}

/// Parses CSV text, resampling every track onto the absolute 10 Hz grid.
pub fn parse_reader<R: Read>(reader: R) -> Result<ParseReport, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(IngestError::MissingColumn(col.to_string()));
        }
    }
    let mut raw: BTreeMap<String, (String, Vec<TrackFrame>)> = BTreeMap::new();
    let mut rejected = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowError { line: e.position().map_or(0, |p| p.line()), message: e.to_string() });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = match rec.deserialize(Some(&headers)) {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let values = [row.t, row.x, row.y, row.vx, row.vy, row.heading, row.length, row.width];
        if values.iter().any(|v| !v.is_finite()) {
            rejected.push(RowError { line, message: "non-finite value".into() });
            continue;
        }
        let entry = raw.entry(row.track_id.clone()).or_insert_with(|| (row.agent_type.clone(), Vec::new()));
        entry.1.push(TrackFrame {
            t: row.t,
            x: row.x,
            y: row.y,
            vx: row.vx,
            vy: row.vy,
            heading: row.heading,
            length: row.length,
            width: row.width,
        });
    }
    let mut tracks = Vec::with_capacity(raw.len());
    for (id, (agent_type, frames)) in raw {
        if frames.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(IngestError::NonMonotonicTime(id));
        }
        let frames = resample(&frames);
        if frames.is_empty() {
            log::debug!("track {id} is shorter than one sample period");
            continue;
        }
        tracks.push(TrackRecord { track_id: id, agent_type, frames });
    }
    Ok(ParseReport { tracks, rejected })
}

fn lerp(a: f64, b: f64, u: f64) -> f64 {
    a + (b - a) * u
}

fn lerp_angle(a: f64, b: f64, u: f64) -> f64 {
    let d = (b - a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    crate::kinematics::wrap_angle(a + d * u)
}

/// Linear interpolation onto the grid `k * 0.1 s` within the track's time span.
pub fn resample(frames: &[TrackFrame]) -> Vec<TrackFrame> {
    let (Some(first), Some(last)) = (frames.first(), frames.last()) else { return Vec::new() };
    let k0 = (first.t / SAMPLE_DT - 1e-9).ceil() as i64;
    let k1 = (last.t / SAMPLE_DT + 1e-9).floor() as i64;
    let mut out = Vec::with_capacity((k1 - k0 + 1).max(0) as usize);
    let mut j = 0;
    for k in k0..=k1 {
        let t = k as f64 * SAMPLE_DT;
        while j + 1 < frames.len() && frames[j + 1].t < t - 1e-9 {
            j += 1;
        }
        let a = frames[j];
        let f = if (a.t - t).abs() <= 1e-9 || j + 1 == frames.len() {
            TrackFrame { t, ..a }
        } else {
            let b = frames[j + 1];
            if (b.t - t).abs() <= 1e-9 {
                TrackFrame { t, ..b }
            } else {
                let u = (t - a.t) / (b.t - a.t);
                TrackFrame {
                    t,
                    x: lerp(a.x, b.x, u),
                    y: lerp(a.y, b.y, u),
                    vx: lerp(a.vx, b.vx, u),
                    vy: lerp(a.vy, b.vy, u),
                    heading: lerp_angle(a.heading, b.heading, u),
                    length: a.length,
                    width: a.width,
                }
            }
        };
        out.push(f);
    }
    out
}

/// Which path a track follows, if any: mean absolute lateral offset below
/// half a lane and forward progress of at least one lane width.
pub fn classify_track(track: &TrackRecord, layout: &Layout) -> Option<Role> {
    let tol = 0.5 * layout.geometry.lane_width;
    let mut best: Option<(f64, Role)> = None;
    for role in [Role::LeftTurn, Role::Straight] {
        let path = layout.path(role);
        let proj: Vec<(f64, f64)> = track.frames.iter().map(|f| path.project(f.position())).collect();
        let mean_lat = proj.iter().map(|p| p.1.abs()).sum::<f64>() / proj.len() as f64;
        let progress = proj.last()?.0 - proj.first()?.0;
        if mean_lat < tol && progress >= layout.geometry.lane_width && best.map_or(true, |b| mean_lat < b.0) {
            best = Some((mean_lat, role));
        }
    }
    best.map(|b| b.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub id: String,
    pub left_track: String,
    pub straight_track: String,
    pub t_start: f64,
    pub t_end: f64,
    pub conflict: ConflictGeometry,
    pub t_cross_left: Option<f64>,
    pub t_cross_straight: Option<f64>,
    pub series: Vec<InteractionSnapshot>,
}

/// First time the front edge reaches the conflict point, interpolated
/// between samples.
fn crossing_time(series: &[InteractionSnapshot], front: impl Fn(&InteractionSnapshot) -> f64) -> Option<f64> {
    let k = series.iter().position(|s| front(s) <= 0.0)?;
    if k == 0 {
        return Some(series[0].t);
    }
    let (a, b) = (&series[k - 1], &series[k]);
    let (fa, fb) = (front(a), front(b));
    Some(lerp(a.t, b.t, fa / (fa - fb)))
}

/// Pairs every left-turn track with every straight track that is within
/// [`GATE_RADIUS`] of the conflict point at the same time. The event runs
/// from the first co-present sample until both front edges have crossed, or
/// until one track ends.
pub fn extract_events(tracks: &[TrackRecord], layout: &Layout) -> Vec<InteractionEvent> {
    let roles: Vec<Option<Role>> = tracks.iter().map(|t| classify_track(t, layout)).collect();
    let cp = layout.conflict.point;
    let mut events = Vec::new();
    for (i, left) in tracks.iter().enumerate().filter(|(i, _)| roles[*i] == Some(Role::LeftTurn)) {
        for (j, straight) in tracks.iter().enumerate().filter(|(j, _)| roles[*j] == Some(Role::Straight)) {
            if i == j {
                continue;
            }
            let lo = left.start_tick().max(straight.start_tick());
            let hi = (left.start_tick() + left.frames.len() as i64).min(straight.start_tick() + straight.frames.len() as i64);
            let near = |f: &TrackFrame| f.position().distance(cp) <= GATE_RADIUS;
            let Some(gate) = (lo..hi).find(|&k| {
                matches!((left.at_tick(k), straight.at_tick(k)), (Some(a), Some(b)) if near(a) && near(b))
            }) else {
                continue;
            };
            let mut series = Vec::new();
            for k in gate..hi {
                let (a, b) = (left.at_tick(k).expect("in range"), straight.at_tick(k).expect("in range"));
                let snap = snapshot(k, a, b, layout);
                let done = snap.d_l <= -0.5 * snap.l_l - snap.w_s && snap.d_s <= -0.5 * snap.l_s - snap.w_l;
                series.push(snap);
                if done {
                    break;
                }
            }
            let t_cross_left = crossing_time(&series, |s| s.d_l - 0.5 * s.l_l);
            let t_cross_straight = crossing_time(&series, |s| s.d_s - 0.5 * s.l_s);
            events.push(InteractionEvent {
                id: format!("{}-{}", left.track_id, straight.track_id),
                left_track: left.track_id.clone(),
                straight_track: straight.track_id.clone(),
                t_start: series[0].t,
                t_end: series.last().expect("non-empty").t,
                conflict: layout.conflict,
                t_cross_left,
                t_cross_straight,
                series,
            });
        }
    }
    events
}

fn snapshot(k: i64, l: &TrackFrame, s: &TrackFrame, layout: &Layout) -> InteractionSnapshot {
    let (sl, lat_l) = layout.left.project(l.position());
    let (ss, lat_s) = layout.straight.project(s.position());
    InteractionSnapshot {
        t: k as f64 * SAMPLE_DT,
        d_l: layout.conflict.s_l_cp - sl,
        v_l: l.speed(),
        d_s: layout.conflict.s_s_cp - ss,
        v_s: s.speed(),
        l_l: l.length,
        w_l: l.width,
        l_s: s.length,
        w_s: s.width,
        lat_l,
        lat_s,
        theta_l: layout.conflict.theta_l,
        theta_s: layout.conflict.theta_s,
    }
}

/// `(P_l, P_s)`: the left vehicle proceeded first iff it crossed strictly earlier.
pub fn label_event(event: &InteractionEvent) -> Result<(u8, u8), IngestError> {
    match (event.t_cross_left, event.t_cross_straight) {
        (Some(l), Some(s)) => Ok(if l < s { (1, 0) } else { (0, 1) }),
        _ => Err(IngestError::Unresolved(event.id.clone())),
    }
}

/// An event that could not be turned into a labeled event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discarded {
    pub id: String,
    pub reason: String,
}

/// Labels events and classifies the straight vehicle's tendency.
pub fn label_events(events: &[InteractionEvent], orientation: &OrientationConfig) -> (Vec<LabeledEvent>, Vec<Discarded>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for ev in events {
        match label_event(ev) {
            Ok((p_l, p_s)) => {
                let category = classify_series(&ev.series, orientation).unwrap_or_else(|| {
                    log::debug!("event {}: too short for a tendency, using ambiguous", ev.id);
                    TendencyCategory::Ambiguous
                });
                kept.push(LabeledEvent { id: ev.id.clone(), category, p_l, p_s, series: ev.series.clone() });
            }
            Err(e) => dropped.push(Discarded { id: ev.id.clone(), reason: e.to_string() }),
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::IntersectionGeometry;

    fn csv_line(frame: i64, id: &str, t: f64, x: f64, y: f64, vx: f64, vy: f64) -> String {
        format!("{frame},{id},car,{t},{x},{y},{vx},{vy},{},4.5,1.8\n", vy.atan2(vx))
    }

    #[test]
    fn header_must_have_every_column() {
        let text = "frame,track_id,agent_type,t,x,y,vx,vy,heading,length\n";
        match parse_reader(text.as_bytes()) {
            Err(IngestError::MissingColumn(c)) => assert_eq!(c, "width"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicated_timestamp_names_the_track() {
        let mut text = format!("{CSV_HEADER}\n");
        text += &csv_line(0, "a", 0.0, 0.0, 0.0, 1.0, 0.0);
        text += &csv_line(1, "b", 0.0, 0.0, 0.0, 1.0, 0.0);
        text += &csv_line(2, "b", 0.0, 0.1, 0.0, 1.0, 0.0);
        match parse_reader(text.as_bytes()) {
            Err(IngestError::NonMonotonicTime(id)) => assert_eq!(id, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows_are_reported() {
        let mut text = format!("{CSV_HEADER}\n");
        text += &csv_line(0, "a", 0.0, 0.0, 0.0, 1.0, 0.0);
        text += "1,a,car,oops,0,0,0,0,0,4.5,1.8\n";
        text += &csv_line(2, "a", 0.2, 0.2, 0.0, 1.0, 0.0);
        let rep = parse_reader(text.as_bytes()).unwrap();
        assert_eq!(rep.rejected.len(), 1);
        assert_eq!(rep.rejected[0].line, 3);
        assert_eq!(rep.tracks[0].frames.len(), 3);
    }

    #[test]
    fn labels_follow_crossing_order() {
        let layout = IntersectionGeometry::default().layout().unwrap();
        let mut ev = InteractionEvent {
            id: "e".into(),
            left_track: "l".into(),
            straight_track: "s".into(),
            t_start: 0.0,
            t_end: 20.0,
            conflict: layout.conflict,
            t_cross_left: Some(12.3),
            t_cross_straight: Some(14.0),
            series: Vec::new(),
        };
        assert_eq!(label_event(&ev).unwrap(), (1, 0));
        std::mem::swap(&mut ev.t_cross_left, &mut ev.t_cross_straight);
        assert_eq!(label_event(&ev).unwrap(), (0, 1));
        ev.t_cross_straight = None;
        assert!(matches!(label_event(&ev), Err(IngestError::Unresolved(_))));
    }
}
