mod common;

use hardball::dynamics::precise::{bits_for_collisions, simulate_rounded};
use hardball::dynamics::{simulate, OrbitSegment, Stop};
use hardball::model::{sample_initial_state, SystemParams};
use hardball::neutral::synthetic::{path_with_massless_ends, tree_with_even_runs};
use hardball::neutral::{
    advance_system, advances_along, cpf_verify, is_sufficient, neutral_direct, neutral_jacobian, JacobianOptions,
    DEFAULT_RANK_TOL,
};
use proptest::prelude::*;

fn segment(n_balls: usize, masses: &[f64], n: usize, seed: u64) -> OrbitSegment {
    let params = SystemParams::new(n_balls, 2, 1.0, 0.12, masses.to_vec());
    let state = sample_initial_state(&params, seed).unwrap();
    simulate_rounded(&params, &state, n, bits_for_collisions(n)).unwrap()
}

#[test]
fn three_methods_agree() {
    for seed in 0..12u64 {
        let n_balls = 2 + (seed % 2) as usize;
        let masses: Vec<f64> = (0..n_balls).map(|k| 0.5 + 0.37 * ((seed as usize + 3 * k) % 5) as f64).collect();
        let n = 5 + (seed as usize * 7) % 26;
        let seg = segment(n_balls, &masses, n, seed);
        let direct = neutral_direct(&seg, DEFAULT_RANK_TOL).unwrap();
        let system = advance_system(&seg, DEFAULT_RANK_TOL).unwrap();
        let jac = neutral_jacobian(&seg, &JacobianOptions::default()).unwrap();
        assert_eq!(direct.dim, system.dim_n, "seed {seed}");
        assert_eq!(direct.dim, jac.dim_history, "seed {seed}");
        assert_eq!(system.equations(), n + system.p_sigma - n_balls);
        for (w, a) in direct.basis.iter().zip(&direct.advances) {
            assert!(cpf_verify(&seg, w, a).unwrap().relative <= 1e-9);
            // Advances of a basis vector solve the advance system.
            assert!(system.residual(a) <= 1e-9);
        }
    }
}

#[test]
fn flow_direction_advances_every_collision_by_one() {
    let seg = segment(3, &[1.0, 1.6, 0.7], 25, 4);
    let v = seg.initial.velocities.clone();
    let basis = neutral_direct(&seg, DEFAULT_RANK_TOL).unwrap();
    let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(basis.distance(&v) <= 1e-9 * scale);
    let (alphas, off) = advances_along(&seg, &v);
    assert!(off <= 1e-12);
    assert!(alphas.iter().all(|a| (a - 1.0).abs() <= 1e-9), "{alphas:?}");
    assert!(basis.advances_of(&v).iter().all(|a| (a - 1.0).abs() <= 1e-8));
    assert!(cpf_verify(&seg, &v, &alphas).unwrap().relative <= 1e-10);
}

#[test]
fn translations_do_not_advance() {
    let seg = segment(3, &[1.0, 1.0, 1.0], 20, 9);
    let basis = neutral_direct(&seg, DEFAULT_RANK_TOL).unwrap();
    let w = vec![0.3, -0.8, 0.3, -0.8, 0.3, -0.8];
    assert!(basis.distance(&w) <= 1e-12);
    let (alphas, off) = advances_along(&seg, &w);
    assert_eq!(off, 0.0);
    assert!(alphas.iter().all(|&a| a == 0.0));
    let r = cpf_verify(&seg, &w, &alphas).unwrap();
    assert_eq!(r.absolute, 0.0);
}

#[test]
fn one_collision_of_two_balls() {
    let params = SystemParams::equal_masses(2, 2, 1.0, 0.15);
    let state = sample_initial_state(&params, 1).unwrap();
    let seg = simulate(&params, &state, Stop::collisions(1)).unwrap();
    assert_eq!(neutral_direct(&seg, DEFAULT_RANK_TOL).unwrap().dim, 3);
    assert!(is_sufficient(&seg, DEFAULT_RANK_TOL).unwrap().sufficient);
}

#[test]
fn no_collisions_leave_everything_neutral() {
    let params = SystemParams::equal_masses(3, 2, 1.0, 0.1);
    let state = sample_initial_state(&params, 2).unwrap();
    let seg = simulate(&params, &state, Stop::collisions(0)).unwrap();
    assert!(seg.is_empty());
    assert_eq!(neutral_direct(&seg, DEFAULT_RANK_TOL).unwrap().dim, 6);
    assert_eq!(neutral_jacobian(&seg, &JacobianOptions::default()).unwrap().dim_history, 6);
    assert_eq!(advance_system(&seg, DEFAULT_RANK_TOL).unwrap().dim_n, 6);
}

#[test]
fn disconnected_scheme_is_not_sufficient() {
    let params = SystemParams::equal_masses(4, 2, 1.0, 0.1);
    let state = sample_initial_state(&params, 6).unwrap();
    let seg = simulate(&params, &state, Stop::collisions(2)).unwrap();
    let s = is_sufficient(&seg, DEFAULT_RANK_TOL).unwrap();
    assert!(s.p_sigma >= 2);
    assert_eq!(s.p_sigma, common::components_dfs(&seg.symbols(), 4));
    assert!(!s.sufficient);
}

#[test]
fn example_one_even_runs_on_a_tree() {
    for n_balls in 3..=6 {
        for seed in 0..3 {
            let seg = tree_with_even_runs(n_balls, 2, 4, seed);
            let system = advance_system(&seg, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(system.dim_alpha, n_balls - 1);
            assert_eq!(system.dim_n, 2 + n_balls - 1);
            assert_eq!(neutral_direct(&seg, DEFAULT_RANK_TOL).unwrap().dim, 2 + n_balls - 1);
        }
    }
}

#[test]
fn example_two_massless_path_ends() {
    for n_balls in 3..=5 {
        for seed in 0..3 {
            let seg = path_with_massless_ends(n_balls, 2, 5, seed);
            let s = is_sufficient(&seg, DEFAULT_RANK_TOL).unwrap();
            assert!(!s.sufficient);
            assert!(s.dim_direct >= 2 + 2);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_combinations_satisfy_the_path_formula(
        seed in 0u64..1000,
        n in 5usize..30,
        coeffs in prop::collection::vec(-1.0f64..1.0, 12),
        masses in prop::collection::vec(0.5f64..2.0, 3),
    ) {
        let params = SystemParams::new(3, 2, 1.0, 0.12, masses);
        let state = sample_initial_state(&params, seed).unwrap();
        let seg = simulate(&params, &state, Stop::collisions(n));
        prop_assume!(seg.is_ok());
        let seg = seg.unwrap();
        let basis = neutral_direct(&seg, DEFAULT_RANK_TOL).unwrap();
        let mut w = vec![0.0; 6];
        for (b, c) in basis.basis.iter().zip(&coeffs) {
            for (x, y) in w.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        let (alphas, off) = advances_along(&seg, &w);
        prop_assert!(off <= 1e-8);
        prop_assert!(cpf_verify(&seg, &w, &alphas).unwrap().relative <= 1e-9);
        let a = basis.advances_of(&w);
        let norm = alphas.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        prop_assert!(alphas.iter().zip(&a).all(|(x, y)| (x - y).abs() <= 1e-8 * norm));
    }
}
