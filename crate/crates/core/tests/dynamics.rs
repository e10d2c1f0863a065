use hardball::dynamics::precise::{bits_for_collisions, simulate_precise, PreciseState};
use hardball::dynamics::{
    apply_collision, conserved, conserved_velocities, pair_collision_time, reverse, simulate, OrbitSegment, Stop,
};
use hardball::model::{sample_initial_state, to_hat, torus_separation, validate, PhaseState, SystemParams};
use hardball::Error;
use proptest::prelude::*;

fn head_on() -> (SystemParams, PhaseState) {
    let params = SystemParams::equal_masses(2, 2, 10.0, 0.5);
    let state = PhaseState::new(vec![0.0, 0.0, 3.0, 0.0], vec![1.0, 0.0, -1.0, 0.0], 0.0);
    (params, state)
}

/// Smallest positive root of `|s + tau dv|^2 = (2r)^2` over every image in
/// `{-15..15}^2`, which covers every lift drawn below, by the plain quadratic
/// formula.
fn brute_collision_time(dq: [f64; 2], dv: [f64; 2], side: f64, r: f64, horizon: f64) -> Option<(f64, [i64; 2])> {
    let mut best: Option<(f64, [i64; 2])> = None;
    for a0 in -15i64..=15 {
        for a1 in -15i64..=15 {
            let s = [dq[0] - side * a0 as f64, dq[1] - side * a1 as f64];
            let a = dv[0] * dv[0] + dv[1] * dv[1];
            let b = s[0] * dv[0] + s[1] * dv[1];
            let c = s[0] * s[0] + s[1] * s[1] - 4.0 * r * r;
            let disc = b * b - a * c;
            if a == 0.0 || disc < 0.0 {
                continue;
            }
            let tau = (-b - disc.sqrt()) / a;
            if tau > 0.0 && tau <= horizon && best.is_none_or(|(t, _)| tau < t) {
                best = Some((tau, [a0, a1]));
            }
        }
    }
    best
}

#[test]
fn head_on_pair_prediction() {
    let (params, state) = head_on();
    let p = pair_collision_time(&state, &params, 0, 1, f64::INFINITY).unwrap().unwrap();
    assert!((p.tau - 1.0).abs() < 1e-15, "tau = {}", p.tau);
    assert_eq!(p.image, vec![0, 0]);
}

#[test]
fn no_prediction_without_approach() {
    let params = SystemParams::equal_masses(2, 2, 10.0, 0.5);
    let still = PhaseState::new(vec![0.0, 0.0, 3.0, 0.0], vec![0.3, 0.1, 0.3, 0.1], 0.0);
    assert!(pair_collision_time(&still, &params, 0, 1, 100.0).unwrap().is_none());
    let receding = PhaseState::new(vec![0.0, 0.0, 3.0, 0.0], vec![-1.0, 0.0, 1.0, 0.0], 0.0);
    // Within the first period they only separate.
    assert!(pair_collision_time(&receding, &params, 0, 1, 1.0).unwrap().is_none());
}

#[test]
fn equal_mass_head_on_swaps_velocities() {
    let (params, state) = head_on();
    let touching = PhaseState::new(vec![1.0, 0.0, 2.0, 0.0], state.velocities.clone(), 1.0);
    let after = apply_collision(&touching, &params, (0, 1), &[0, 0]).unwrap();
    assert_eq!(after.velocities, vec![-1.0, 0.0, 1.0, 0.0]);
    assert_eq!(after.positions, touching.positions);
}

#[test]
fn massless_ball_reflects_off_its_partner() {
    let params = SystemParams::new(2, 2, 1.0, 0.1, vec![0.0, 1.7]).with_zero_masses_allowed();
    let state = PhaseState::new(vec![0.0, 0.0, 0.2, 0.0], vec![1.0, 0.5, -0.2, 0.1], 0.0);
    let after = apply_collision(&state, &params, (0, 1), &[0, 0]).unwrap();
    // Unit normal n = (-1, 0); v_0' = v_0 - 2 ((v_0 - v_1) . n) n, v_1 unchanged.
    let expected = [1.0 - 2.0 * 1.2, 0.5, -0.2, 0.1];
    for (x, y) in after.velocities.iter().zip(expected) {
        assert!((x - y).abs() < 1e-15, "{:?}", after.velocities);
    }
}

#[test]
fn collision_law_rejects_bad_input() {
    let (params, state) = head_on();
    assert!(matches!(
        apply_collision(&state, &params, (0, 1), &[0, 0]),
        Err(Error::NotInContact { .. })
    ));
    let receding = PhaseState::new(vec![1.0, 0.0, 2.0, 0.0], vec![-1.0, 0.0, 1.0, 0.0], 0.0);
    assert!(matches!(
        apply_collision(&receding, &params, (0, 1), &[0, 0]),
        Err(Error::RecedingPair { .. })
    ));
}

#[test]
fn head_on_simulation() {
    let (params, state) = head_on();
    let seg = simulate(&params, &state, Stop::collisions(1)).unwrap();
    assert_eq!(seg.symbols(), vec![(0, 1)]);
    assert_eq!(seg.images(), vec![vec![0, 0]]);
    assert!((seg.events[0].time - 1.0).abs() < 1e-15);
}

#[test]
fn free_flight_before_first_collision() {
    let (params, state) = head_on();
    let seg = simulate(&params, &state, Stop::time(0.5)).unwrap();
    assert!(seg.is_empty());
    assert_eq!(seg.final_state.positions, vec![0.5, 0.0, 2.5, 0.0]);
    assert_eq!(seg.final_state.time, 0.5);
}

#[test]
fn simulation_is_deterministic() {
    let params = SystemParams::new(3, 2, 1.0, 0.12, vec![1.0, 0.6, 1.9]);
    let state = sample_initial_state(&params, 42).unwrap();
    let a = simulate(&params, &state, Stop::collisions(500)).unwrap();
    let b = simulate(&params, &state, Stop::collisions(500)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.replay().unwrap(), 0.0);
}

#[test]
fn validation_examples() {
    assert!(validate(&SystemParams::equal_masses(2, 2, 1.0, 0.1)).is_ok());
    assert!(matches!(
        validate(&SystemParams::equal_masses(2, 2, 1.0, 0.3)),
        Err(Error::OverlapGeometry { .. })
    ));
    assert!(matches!(
        validate(&SystemParams::new(3, 2, 1.0, 0.1, vec![0.0, 0.0, 1.0])),
        Err(Error::DegenerateMasses { .. })
    ));
}

#[test]
fn sampler_contract() {
    let params = SystemParams::new(4, 3, 1.0, 0.1, vec![0.5, 1.0, 1.5, 2.0]);
    let state = sample_initial_state(&params, 42).unwrap();
    let (h, p) = conserved(&state, &params);
    assert!((2.0 * h - 1.0).abs() <= 1e-14);
    assert!(p.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-14);
    assert_eq!(state, sample_initial_state(&params, 42).unwrap());

    let params = SystemParams::equal_masses(2, 2, 1.0, 0.2);
    for seed in 0..50 {
        let s = sample_initial_state(&params, seed).unwrap();
        assert!(s.min_separation(&params) >= 0.4);
    }
}

#[test]
fn hat_coordinates() {
    let params = SystemParams::new(2, 2, 1.0, 0.1, vec![4.0, 1.0]);
    let state = PhaseState::new(vec![0.0; 4], vec![1.0, 0.0, -4.0, 0.0], 0.0);
    let hat = to_hat(&state, &params).unwrap();
    assert_eq!(hat.velocities, vec![2.0, 0.0, -4.0, 0.0]);
    // sum sqrt(m_i) v^_i = sum m_i v_i = 0.
    assert_eq!(2.0 * hat.velocities[0] + hat.velocities[2], 0.0);

    let params = SystemParams::new(3, 2, 1.0, 0.1, vec![0.7, 1.3, 2.0]);
    let state = sample_initial_state(&params, 5).unwrap();
    let hat = to_hat(&state, &params).unwrap();
    assert!((hat.velocities.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
}

#[test]
fn torus_separation_examples() {
    assert_eq!(torus_separation(&[0.3, 0.7], &[0.3, 0.7], 1.0), (vec![0.0, 0.0], vec![0, 0]));
    let (s, a) = torus_separation(&[0.9, 0.0], &[0.0, 0.0], 1.0);
    assert!((s[0] + 0.1).abs() < 1e-15 && s[1] == 0.0);
    assert_eq!(a, vec![1, 0]);
    assert_eq!(torus_separation(&[-0.5, 0.2], &[0.0, 0.0], 1.0), (vec![-0.5, 0.2], vec![0, 0]));
}

#[test]
fn reverse_is_an_involution() {
    let params = SystemParams::equal_masses(3, 2, 1.0, 0.1);
    let state = sample_initial_state(&params, 8).unwrap();
    assert_eq!(reverse(&reverse(&state)), state);
}

#[test]
fn double_and_high_precision_agree_early() {
    for seed in 0..5 {
        let params = SystemParams::new(3, 2, 1.0, 0.13, vec![1.0, 1.4, 0.8]);
        let state = sample_initial_state(&params, seed).unwrap();
        let fast = simulate(&params, &state, Stop::collisions(6)).unwrap();
        let bits = bits_for_collisions(6);
        let slow = simulate_precise(&params, &PreciseState::from_f64(&state, bits), Stop::collisions(6), bits)
            .unwrap()
            .to_orbit_segment();
        assert_eq!(fast.symbols(), slow.symbols());
        assert_eq!(fast.images(), slow.images());
        for (a, b) in fast.events.iter().zip(&slow.events) {
            assert!((a.time - b.time).abs() <= 1e-8 * b.time.max(1.0));
            for (x, y) in a.post_velocities.iter().zip(&b.post_velocities) {
                assert!((x - y).abs() <= 1e-8, "seed {seed}");
            }
        }
    }
}

#[test]
fn high_precision_reversal() {
    let params = SystemParams::new(3, 2, 1.0, 0.12, vec![1.0, 2.0, 0.5]);
    let n = 100;
    let bits = bits_for_collisions(n);
    let start = PreciseState::from_f64(&sample_initial_state(&params, 3).unwrap(), bits);
    let fwd = simulate_precise(&params, &start, Stop::collisions(n), bits).unwrap();
    let span = (fwd.final_state.time.to_f64()) - start.time.to_f64();
    let back = simulate_precise(&params, &fwd.final_state.reverse(), Stop::time(span), bits).unwrap();
    let mut expected = fwd.symbols();
    expected.reverse();
    assert_eq!(back.symbols(), expected);
    let end = back.final_state.to_f64();
    for (x, y) in end.positions.iter().zip(&start.to_f64().positions) {
        assert!((x - y).abs() <= 1e-6);
    }
}

fn max_conservation_error(seg: &OrbitSegment) -> f64 {
    let (h0, _) = conserved(&seg.initial, &seg.params);
    let mut worst: f64 = 0.0;
    for e in &seg.events {
        let (h, p) = conserved_velocities(&e.post_velocities, &seg.params);
        worst = worst.max((h - h0).abs());
        worst = worst.max(p.iter().map(|x| x.abs()).fold(0.0, f64::max));
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn image_window_matches_brute_force(
        qa in prop::array::uniform2(-5.0f64..5.0),
        qb in prop::array::uniform2(-5.0f64..5.0),
        dv in prop::array::uniform2(-3.0f64..3.0),
        frac in 0.05f64..1.0,
    ) {
        let (side, r) = (1.0, 0.1);
        let params = SystemParams::equal_masses(2, 2, side, r);
        let state = PhaseState::new(vec![qa[0], qa[1], qb[0], qb[1]], vec![dv[0], dv[1], 0.0, 0.0], 0.0);
        prop_assume!(state.min_separation(&params) > 2.0 * r + 1e-6);
        let speed = (dv[0] * dv[0] + dv[1] * dv[1]).sqrt();
        prop_assume!(speed > 1e-3);
        let horizon = frac * side / (2.0 * speed);
        let got = pair_collision_time(&state, &params, 0, 1, horizon);
        prop_assume!(!matches!(got, Err(Error::TangentialApproach { .. })));
        let got = got.unwrap();
        let dq = [qa[0] - qb[0], qa[1] - qb[1]];
        let want = brute_collision_time(dq, dv, side, r, horizon);
        match (got, want) {
            (None, None) => {}
            (Some(p), Some((tau, a))) => {
                prop_assert!((p.tau - tau).abs() <= 1e-9 * tau.max(1.0), "{} vs {}", p.tau, tau);
                prop_assert_eq!(p.image, a.to_vec());
            }
            (g, w) => prop_assert!(false, "engine {:?}, brute force {:?}", g, w),
        }
    }

    #[test]
    fn every_collision_conserves_energy_and_momentum(
        seed in 0u64..10_000,
        masses in prop::collection::vec(0.3f64..3.0, 3),
    ) {
        let params = SystemParams::new(3, 2, 1.0, 0.12, masses);
        let state = sample_initial_state(&params, seed).unwrap();
        let seg = simulate(&params, &state, Stop::collisions(200));
        prop_assume!(seg.is_ok());
        let seg = seg.unwrap();
        prop_assert!(max_conservation_error(&seg) <= 1e-13);
        prop_assert!(seg.contact_residues().into_iter().all(|x| x <= 1e-10));
    }
}
