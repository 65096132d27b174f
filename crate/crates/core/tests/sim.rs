use std::f64::consts::{FRAC_PI_4, SQRT_2};

use socialturn::engine::{DecisionEngine, ParamSource};
use socialturn::game::{Action, GameConfig};
use socialturn::kinematics::{IntersectionGeometry, Layout, Point2, Role};
use socialturn::orientation::OrientationConfig;
use socialturn::sim::*;
use socialturn::synth::proceed_only;

fn layout() -> Layout {
    IntersectionGeometry::default().layout().unwrap()
}

/// Engine with one fixed parameter set that proceeds readily.
fn eager() -> DecisionEngine {
    DecisionEngine::new(ParamSource::Global(proceed_only((1.0, 3.0), (1.0, 3.0))), OrientationConfig::default(), GameConfig::default())
}

fn scripted(profile: ScriptedProfile) -> HvPolicy {
    HvPolicy::Scripted { profile }
}

#[test]
fn conservative_hv_lets_the_av_through() {
    let cfg = SimConfig { hv_policy: scripted(ScriptedProfile::Conservative), ..SimConfig::default() };
    let log = run_episode(&cfg, &eager()).unwrap();
    let lay = layout();
    assert_eq!(log.terminal, Some(TerminalReason::BothCrossed));
    assert_eq!(crossing_order(&log, &lay), Some(Role::LeftTurn));
    let m = episode_metrics(&log, &lay);
    assert!(!m.collision);
    assert!(m.pet.unwrap() >= 0.0);
}

#[test]
fn fast_aggressive_hv_crosses_first_without_collision() {
    let cfg = SimConfig {
        av: InitialState { d: 45.0, v: 2.0 },
        hv: InitialState { d: 40.0, v: 10.0 },
        hv_policy: scripted(ScriptedProfile::Aggressive),
        ..SimConfig::default()
    };
    let log = run_episode(&cfg, &eager()).unwrap();
    let lay = layout();
    assert_eq!(log.terminal, Some(TerminalReason::BothCrossed));
    assert_eq!(crossing_order(&log, &lay), Some(Role::Straight));
    assert!(!episode_metrics(&log, &lay).collision);
}

#[test]
fn same_seed_gives_identical_logs() {
    let cfg = SimConfig {
        av_random: Some(RandomInit { d: (15.0, 30.0), v: (1.0, 5.0) }),
        hv_random: Some(RandomInit::default()),
        hv_policy: scripted(ScriptedProfile::Oscillating),
        seed: 99,
        ..SimConfig::default()
    };
    let a = run_episode(&cfg, &eager()).unwrap().to_jsonl();
    let b = run_episode(&cfg, &eager()).unwrap().to_jsonl();
    assert_eq!(a, b);
    let c = run_episode(&SimConfig { seed: 100, ..cfg }, &eager()).unwrap().to_jsonl();
    assert_ne!(a, c);
}

#[test]
fn pet_definition() {
    assert!((pet_from_times(10.0, 12.9) - 2.9).abs() < 1e-12);
    assert_eq!(pet_from_times(10.0, 10.0), 0.0);
}

#[test]
fn collision_leaves_pet_undefined() {
    let cfg = SimConfig { av: InitialState { d: 0.0, v: 3.0 }, hv: InitialState { d: 0.0, v: 3.0 }, ..SimConfig::default() };
    let log = run_episode(&cfg, &eager()).unwrap();
    assert_eq!(log.terminal, Some(TerminalReason::Collision));
    let lay = layout();
    assert!(matches!(compute_pet(&log, &lay), Err(SimError::PetUndefined(_))));
    let m = episode_metrics(&log, &lay);
    assert!(m.collision && m.pet.is_none() && !m.severe_conflict);
}

#[test]
fn footprints_touching_at_a_corner_collide() {
    let a = footprint(Point2::new(0.0, 0.0), 0.0, 2.0, 2.0);
    // a square turned 45 degrees whose left vertex sits on a's corner (1, 1)
    let touching = footprint(Point2::new(1.0 + SQRT_2, 1.0), FRAC_PI_4, 2.0, 2.0);
    assert!(touching.iter().any(|p| p.distance(Point2::new(1.0, 1.0)) < 1e-12));
    assert!(rectangles_overlap(&a, &touching));
    let apart = footprint(Point2::new(1.0 + SQRT_2 + 1e-6, 1.0), FRAC_PI_4, 2.0, 2.0);
    assert!(!rectangles_overlap(&a, &apart));
    for h in [0.0, 0.3, 1.2, 2.9] {
        assert!(rectangles_overlap(&a, &footprint(Point2::new(0.0, 0.0), h, 5.0, 1.0)));
    }
    assert!(!rectangles_overlap(&footprint(Point2::new(0.0, 0.0), 0.0, 5.0, 2.0), &footprint(Point2::new(10.0, 0.0), 0.0, 5.0, 2.0)));
}

#[test]
fn transit_times_match_a_direct_scan() {
    let lay = layout();
    let cfg = SimConfig { hv_policy: scripted(ScriptedProfile::Conservative), ..SimConfig::default() };
    let log = run_episode(&cfg, &eager()).unwrap();
    // first tick at or past each boundary; interpolation can only move it earlier by < dt
    let scan = |front: bool, bound: f64| {
        log.records.iter().find(|r| if front { r.av.s + 0.5 * r.av.length >= bound } else { r.av.s - 0.5 * r.av.length >= bound }).unwrap().t
    };
    let coarse = scan(false, lay.transit_left.1) - scan(true, lay.transit_left.0);
    let exact = transit_time(&log, &lay, Role::LeftTurn).unwrap();
    assert!((exact - coarse).abs() < 0.1 + 1e-9, "{exact} vs {coarse}");
    let m = episode_metrics(&log, &lay);
    assert_eq!(m.combined, Some(m.transit_time_av.unwrap() + m.transit_time_hv.unwrap()));
    assert_eq!(m.decision_consistency, Some((m.final_decision == Some(Action::Proceed)) == (m.first == Some(Role::LeftTurn))));
}

#[test]
fn batch_of_one_is_a_single_episode() {
    let base = SimConfig { hv_random: Some(RandomInit::default()), ..SimConfig::default() };
    let pol = [scripted(ScriptedProfile::Aggressive)];
    let (rows, summary) = run_batch(&base, &pol, 1, 42, &eager(), |_, _| {}).unwrap();
    let cfg = SimConfig { seed: episode_seed(42, 0), hv_policy: pol[0].clone(), ..base.clone() };
    let log = run_episode(&cfg, &eager()).unwrap();
    assert_eq!(rows[0].metrics, episode_metrics(&log, &layout()));
    assert_eq!(summary.episodes, 1);
    let (_, again) = run_batch(&base, &pol, 1, 42, &eager(), |_, _| {}).unwrap();
    assert_eq!(format!("{summary:?}"), format!("{again:?}"));
}

#[test]
fn speeds_stay_in_bounds_and_paths_are_monotone() {
    let game = GameConfig::default();
    let base = SimConfig {
        av_random: Some(RandomInit { d: (10.0, 40.0), v: (0.0, 5.0) }),
        hv_random: Some(RandomInit { d: (20.0, 60.0), v: (2.0, 12.0) }),
        ..SimConfig::default()
    };
    let policies: Vec<_> = ScriptedProfile::ALL.iter().map(|p| scripted(*p)).collect();
    let mut logs = Vec::new();
    run_batch(&base, &policies, 30, 3, &eager(), |_, log| logs.push(log.clone())).unwrap();
    for log in logs {
        assert!(log.terminal.is_some());
        for w in log.records.windows(2) {
            assert!((w[1].t - w[0].t - 0.1).abs() < 1e-9);
            assert!(w[1].av.s >= w[0].av.s && w[1].hv.s >= w[0].hv.s);
        }
        for r in &log.records {
            let (bl, bs) = (game.v_bounds[0], game.v_bounds[1]);
            assert!(r.av.v >= bl.min && r.av.v <= bl.max);
            assert!(r.hv.v >= bs.min && r.hv.v <= bs.max);
        }
    }
}

#[test]
fn conservative_batch_is_collision_free() {
    let base = SimConfig {
        av_random: Some(RandomInit { d: (15.0, 30.0), v: (1.0, 5.0) }),
        hv_random: Some(RandomInit::default()),
        ..SimConfig::default()
    };
    let (_, s) = run_batch(&base, &[scripted(ScriptedProfile::Conservative)], 200, 11, &eager(), |_, _| {}).unwrap();
    assert_eq!(s.collisions, 0);
    assert_eq!(s.timeouts, 0);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        SimConfig { dt: 0.05, ..SimConfig::default() },
        SimConfig { timeout: 0.0, ..SimConfig::default() },
        SimConfig { decision_period: 0.15, ..SimConfig::default() },
        SimConfig { av: InitialState { d: 500.0, v: 1.0 }, ..SimConfig::default() },
    ] {
        assert!(matches!(run_episode(&cfg, &eager()), Err(SimError::ConfigInvalid(_))), "{cfg:?}");
    }
}
