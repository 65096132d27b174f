use std::path::Path;

use socialturn::engine::{DecisionEngine, ParamSource};
use socialturn::game::{Coefficients, GameConfig};
use socialturn::ingest::*;
use socialturn::kinematics::{IntersectionGeometry, Layout, Role};
use socialturn::orientation::OrientationConfig;
use socialturn::sim::{crossing_order, run_episode, trajectories_csv, HvPolicy, InitialState, ScriptedProfile, SimConfig, TerminalReason};

fn layout() -> Layout {
    IntersectionGeometry::default().layout().unwrap()
}

/// Constant-speed track along a layout path, 10 Hz from `t0`.
fn track_along(layout: &Layout, role: Role, id: &str, t0: f64, v: f64, until_s: f64) -> Vec<String> {
    let path = layout.path(role);
    let mut rows = Vec::new();
    let mut k = 0;
    loop {
        let s = v * k as f64 * 0.1;
        if s > until_s.min(path.length()) {
            break;
        }
        let p = path.point_at(s);
        let h = path.heading_at(s);
        rows.push(format!("0,{id},car,{},{},{},{},{},{h},4.5,1.8", t0 + k as f64 * 0.1, p.x, p.y, v * h.cos(), v * h.sin()));
        k += 1;
    }
    rows
}

fn parse(rows: Vec<Vec<String>>) -> ParseReport {
    let mut text = format!("{CSV_HEADER}\n");
    for r in rows.into_iter().flatten() {
        text += &r;
        text.push('\n');
    }
    parse_reader(text.as_bytes()).unwrap()
}

#[test]
fn fixture_file_round_trip() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_tracks.csv");
    let rep = parse_trajectories(&path).unwrap();
    assert!(rep.rejected.is_empty());
    let counts: Vec<_> = rep.tracks.iter().map(|t| (t.track_id.as_str(), t.frames.len())).collect();
    assert_eq!(counts, [("a", 5), ("b", 3)]);
    assert_eq!(rep.tracks[1].agent_type, "truck");
    assert_eq!(rep.tracks[1].frames[0].length, 8.0);
}

#[test]
fn seven_hz_source_is_resampled_by_linear_interpolation() {
    // x = t^2 so that interpolation error is visible between samples
    let src: Vec<(f64, f64, f64)> = (0..=21).map(|k| {
        let t = k as f64 / 7.0;
        (t, t * t, 1.0 - 0.5 * t)
    }).collect();
    let mut text = format!("{CSV_HEADER}\n");
    for (i, (t, x, y)) in src.iter().enumerate() {
        text += &format!("{i},p,car,{t},{x},{y},0,0,0,4.5,1.8\n");
    }
    let rep = parse_reader(text.as_bytes()).unwrap();
    let frames = &rep.tracks[0].frames;
    assert_eq!(frames.len(), 31);
    for f in frames {
        let j = src.iter().rposition(|s| s.0 <= f.t + 1e-12).unwrap().min(src.len() - 2);
        let (a, b) = (src[j], src[j + 1]);
        let u = (f.t - a.0) / (b.0 - a.0);
        assert!((f.x - (a.1 + u * (b.1 - a.1))).abs() <= 1e-9, "x at t={}", f.t);
        assert!((f.y - (a.2 + u * (b.2 - a.2))).abs() <= 1e-9, "y at t={}", f.t);
    }
    // grid points that coincide with source stamps reproduce them
    for (t, x, y) in [src[0], src[7], src[14], src[21]] {
        let f = frames.iter().find(|f| (f.t - t).abs() < 1e-9).unwrap();
        assert!((f.x - x).abs() <= 1e-9 && (f.y - y).abs() <= 1e-9);
    }
    assert_eq!(frames.first().unwrap().x, 0.0);
    assert!((frames.last().unwrap().x - 9.0).abs() <= 1e-9);
}

#[test]
fn one_pair_gives_one_event_and_a_shift_removes_it() {
    let lay = layout();
    let left = track_along(&lay, Role::LeftTurn, "L", 0.0, 6.0, f64::INFINITY);
    let straight = track_along(&lay, Role::Straight, "S", 0.0, 10.0, f64::INFINITY);
    let rep = parse(vec![left.clone(), straight]);
    let events = extract_events(&rep.tracks, &lay);
    assert_eq!(events.len(), 1);
    let ev = &events[0];
    assert_eq!(ev.id, "L-S");
    // the straight vehicle covers its 67 m to the conflict point first
    assert_eq!(label_event(ev).unwrap(), (0, 1));
    assert!(ev.series.windows(2).all(|w| (w[1].t - w[0].t - 0.1).abs() < 1e-9));

    let shifted = track_along(&lay, Role::Straight, "S", 60.0, 10.0, f64::INFINITY);
    let rep = parse(vec![left, shifted]);
    assert!(extract_events(&rep.tracks, &lay).is_empty());
}

#[test]
fn two_sequential_straight_vehicles_give_two_events() {
    let lay = layout();
    let left = track_along(&lay, Role::LeftTurn, "L", 0.0, 2.0, 30.0);
    let s1 = track_along(&lay, Role::Straight, "S1", 0.0, 10.0, f64::INFINITY);
    let s2 = track_along(&lay, Role::Straight, "S2", 4.0, 10.0, f64::INFINITY);
    let rep = parse(vec![left, s1, s2]);
    let ids: Vec<_> = extract_events(&rep.tracks, &lay).into_iter().map(|e| e.id).collect();
    assert_eq!(ids, ["L-S1", "L-S2"]);
}

#[test]
fn a_vehicle_that_never_crosses_is_discarded() {
    let lay = layout();
    let left = track_along(&lay, Role::LeftTurn, "L", 0.0, 6.0, f64::INFINITY);
    // stops 20 m short of the conflict point
    let straight = track_along(&lay, Role::Straight, "S", 0.0, 8.0, lay.conflict.s_s_cp - 20.0);
    let rep = parse(vec![left, straight]);
    let events = extract_events(&rep.tracks, &lay);
    assert_eq!(events.len(), 1);
    assert!(matches!(label_event(&events[0]), Err(IngestError::Unresolved(_))));
    let (kept, dropped) = label_events(&events, &OrientationConfig::default());
    assert!(kept.is_empty());
    assert_eq!(dropped.len(), 1);
}

#[test]
fn simulator_episodes_survive_the_csv_round_trip() {
    let lay = layout();
    let engine = DecisionEngine::new(ParamSource::Global(Coefficients::uniform(1.0)), OrientationConfig::default(), GameConfig::default());
    let cases = [
        (InitialState { d: 20.0, v: 4.0 }, InitialState { d: 50.0, v: 8.0 }, ScriptedProfile::Conservative),
        (InitialState { d: 40.0, v: 3.0 }, InitialState { d: 35.0, v: 9.0 }, ScriptedProfile::Aggressive),
        (InitialState { d: 15.0, v: 2.0 }, InitialState { d: 55.0, v: 7.0 }, ScriptedProfile::Oscillating),
    ];
    let mut logs = Vec::new();
    for (i, (av, hv, profile)) in cases.into_iter().enumerate() {
        let cfg = SimConfig { av, hv, hv_policy: HvPolicy::Scripted { profile }, seed: i as u64, ..SimConfig::default() };
        let log = run_episode(&cfg, &engine).unwrap();
        assert_eq!(log.terminal, Some(TerminalReason::BothCrossed));
        logs.push(log);
    }
    let csv = trajectories_csv(&logs, &lay, 100.0);
    let rep = parse_reader(csv.as_bytes()).unwrap();
    assert!(rep.rejected.is_empty());
    let events = extract_events(&rep.tracks, &lay);
    let (labeled, dropped) = label_events(&events, &OrientationConfig::default());
    assert!(dropped.is_empty());
    assert_eq!(labeled.len(), logs.len());
    for (i, log) in logs.iter().enumerate() {
        let ev = labeled.iter().find(|e| e.id == format!("ep{i}-av-ep{i}-hv")).unwrap();
        let left_first = crossing_order(log, &lay) == Some(Role::LeftTurn);
        assert_eq!((ev.p_l == 1, ev.p_s == 1), (left_first, !left_first), "episode {i}");
    }
}
