use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socialturn::game::*;
use socialturn::kinematics::Role;

fn random_game(rng: &mut ChaCha8Rng) -> Bimatrix {
    let mut m = || [[rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)], [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]];
    let a = m();
    let b = m();
    Bimatrix::new(a, b)
}

fn assert_profile(p: &MixedProfile) {
    for pair in [p.p_l, p.p_s] {
        assert!(pair[0] >= 0.0 && pair[1] >= 0.0, "{p:?}");
        assert!((pair[0] + pair[1] - 1.0).abs() <= 1e-12, "{p:?}");
    }
}

#[test]
fn ten_thousand_random_games_have_certified_equilibria() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let g = random_game(&mut rng);
        let p = solve_mixed_nash(&g).unwrap();
        assert_profile(&p);
        assert!(max_deviation_gain(&g, &p) <= EQUILIBRIUM_EPS, "{g:?} {p:?}");
    }
}

#[test]
fn lemke_howson_agrees_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let g = random_game(&mut rng);
        let all = support_enumeration(&g);
        let lh = lemke_howson_equilibria(&g).unwrap();
        for p in &lh {
            assert!(all.iter().any(|e| e.distance(p) <= 1e-9), "{g:?}: {p:?} not in {all:?}");
        }
        let chosen = solve_mixed_nash(&g).unwrap();
        let reference = solve_by_enumeration(&g).unwrap();
        assert!(chosen.distance(&reference) <= 1e-9, "{g:?}: {chosen:?} vs {reference:?}");
    }
}

fn entry() -> impl Strategy<Value = f64> {
    -10.0f64..10.0
}

fn bimatrix() -> impl Strategy<Value = Bimatrix> {
    proptest::array::uniform4(entry())
        .prop_flat_map(|a| (Just(a), proptest::array::uniform4(entry())))
        .prop_map(|(a, b)| Bimatrix::new([[a[0], a[1]], [a[2], a[3]]], [[b[0], b[1]], [b[2], b[3]]]))
}

proptest! {
    #[test]
    fn adding_a_constant_keeps_the_equilibrium(g in bimatrix(), c in -50.0f64..50.0, row in any::<bool>()) {
        let base = solve_mixed_nash(&g).unwrap();
        let mut h = g;
        let m = if row { &mut h.u_l } else { &mut h.u_s };
        for r in m.iter_mut() {
            for v in r.iter_mut() {
                *v += c;
            }
        }
        let shifted = solve_mixed_nash(&h).unwrap();
        prop_assert!(base.distance(&shifted) <= 1e-9, "{:?} vs {:?}", base, shifted);
    }

    #[test]
    fn safety_and_efficiency_stay_in_range(
        dl in 0.0f64..80.0, vl in 0.0f64..6.0, ds in 0.0f64..80.0, vs in 0.0f64..12.0,
    ) {
        let cfg = GameConfig::default();
        let st = GameState { left: AgentKinematics::new(dl, vl), straight: AgentKinematics::new(ds, vs) };
        let f = payoff_features(&st, &cfg);
        let cap: f64 = (1..=cfg.steps).map(|n| cfg.gamma.powi(n as i32)).sum();
        for p in 0..2 {
            for k in 0..4 {
                prop_assert!(f.r[p][k] >= 0.0 && f.r[p][k] <= cap);
                prop_assert!(f.t[p][k] > -1.0 && f.t[p][k] < 1.0, "{}", f.t[p][k]);
            }
        }
    }

    #[test]
    fn swapping_roles_transposes_the_game(d in 1.0f64..60.0, v in 0.0f64..5.0, a in proptest::array::uniform8(-10.0f64..10.0)) {
        let cfg = GameConfig { sigma: 0.0, v_bounds: [cfg_bounds(); 2], ..GameConfig::default() };
        let st = GameState { left: AgentKinematics::new(d, v), straight: AgentKinematics::new(d, v) };
        // coefficients mirror each other: straight's cell (i, j) is left's cell (j, i)
        let mirror = [0usize, 2, 1, 3];
        let mut c = Coefficients::uniform(0.0);
        for k in 0..4 {
            c.alpha[0][k] = a[k];
            c.beta[0][k] = a[4 + k];
            c.alpha[1][mirror[k]] = a[k];
            c.beta[1][mirror[k]] = a[4 + k];
        }
        let g = build_payoff_matrix(&st, &c, &cfg, 1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((g.u_l[i][j] - g.u_s[j][i]).abs() <= 1e-12);
            }
        }
    }
}

fn cfg_bounds() -> socialturn::kinematics::SpeedBounds {
    socialturn::kinematics::SpeedBounds::new(0.0, 10.0)
}

#[test]
fn zero_noise_builds_are_identical() {
    let cfg = GameConfig { sigma: 0.0, ..GameConfig::default() };
    let st = GameState { left: AgentKinematics::new(15.0, 3.0), straight: AgentKinematics::new(45.0, 9.0) };
    let c = Coefficients::default();
    let a = build_payoff_matrix(&st, &c, &cfg, 1).unwrap();
    let b = build_payoff_matrix(&st, &c, &cfg, 2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn decisions_follow_the_profile() {
    let g = Bimatrix::new([[2.0, 2.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]);
    let p = solve_mixed_nash(&g).unwrap();
    assert_eq!(decide(&p, Role::LeftTurn, 0.5), Action::Proceed);
    assert_eq!(decide(&p, Role::Straight, 0.5), Action::Proceed);
}
