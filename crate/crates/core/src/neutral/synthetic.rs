//! Prescribed velocity histories that exercise the neutral-space linear
//! algebra without running the simulator.
//!
//! A synthetic segment carries pairs, images, times and pre/post velocities
//! that obey the collision law for the chosen normals, but no consistent
//! positions: every position vector in it is zero. Only the neutral-space
//! and combinatorial analyses, which never look at positions, accept them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{CollisionEvent, OrbitSegment};
use crate::model::{dot, PhaseState, SystemParams};

/// A scheme whose collision graph is a random tree, every edge visit being a
/// run of an even number of collisions of the same pair with the same image
/// and zero time slots. Each run multiplies the velocities by the square of
/// one reflection, i.e. leaves them unchanged, which keeps the advances of
/// different tree edges independent.
pub fn tree_with_even_runs(n_balls: usize, dim: usize, rounds: usize, seed: u64) -> OrbitSegment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masses: Vec<f64> = (0..n_balls).map(|_| rng.random_range(0.5..2.0)).collect();
    let params = SystemParams::new(n_balls, dim, 1.0, 0.1, masses);
    let edges: Vec<(usize, usize)> = (1..n_balls).map(|v| (rng.random_range(0..v), v)).collect();
    let mut v = gaussian(&mut rng, n_balls * dim);
    let initial = PhaseState::new(vec![0.0; n_balls * dim], v.clone(), 0.0);
    let mut events = Vec::new();
    let mut t = 0.0;
    for round in 0..rounds {
        for &(i, j) in &edges {
            let run = if round % 2 == 0 { 2 } else { 4 };
            let normal = approaching_normal(&mut rng, &v, (i, j), dim);
            t += rng.random_range(0.1..1.0);
            for _ in 0..run {
                let pre = v.clone();
                reflect(&params, &mut v, (i, j), &normal);
                events.push(CollisionEvent {
                    index: events.len() + 1,
                    time: t,
                    pair: (i, j),
                    image: vec![0; dim],
                    pre_velocities: pre,
                    post_velocities: v.clone(),
                    normal: normal.clone(),
                });
            }
        }
    }
    let final_state = PhaseState::new(vec![0.0; n_balls * dim], v, t);
    OrbitSegment {
        params,
        initial,
        events,
        final_state,
    }
}

/// A scheme on the path graph `{i, i+1}` with the first and third balls
/// massless. Every collision is approaching and obeys the collision law;
/// edges are visited in random order, each at least `min_visits` times.
pub fn path_with_massless_ends(n_balls: usize, dim: usize, min_visits: usize, seed: u64) -> OrbitSegment {
    assert!(n_balls >= 3, "needs three balls for two massless ones");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masses: Vec<f64> = (0..n_balls)
        .map(|b| if b == 0 || b == 2 { 0.0 } else { rng.random_range(0.5..2.0) })
        .collect();
    let params = SystemParams::new(n_balls, dim, 1.0, 0.1, masses).with_zero_masses_allowed();
    let mut order: Vec<(usize, usize)> = Vec::new();
    for _ in 0..min_visits {
        let mut round: Vec<(usize, usize)> = (0..n_balls - 1).map(|i| (i, i + 1)).collect();
        for k in (1..round.len()).rev() {
            round.swap(k, rng.random_range(0..=k));
        }
        order.extend(round);
    }
    let mut v = gaussian(&mut rng, n_balls * dim);
    let initial = PhaseState::new(vec![0.0; n_balls * dim], v.clone(), 0.0);
    let mut events = Vec::new();
    let mut t = 0.0;
    for pair in order {
        let normal = approaching_normal(&mut rng, &v, pair, dim);
        t += rng.random_range(0.1..1.0);
        let pre = v.clone();
        reflect(&params, &mut v, pair, &normal);
        events.push(CollisionEvent {
            index: events.len() + 1,
            time: t,
            pair,
            image: vec![0; dim],
            pre_velocities: pre,
            post_velocities: v.clone(),
            normal,
        });
    }
    let final_state = PhaseState::new(vec![0.0; n_balls * dim], v, t);
    OrbitSegment {
        params,
        initial,
        events,
        final_state,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random unit vector with `<v_i - v_j, n> < 0`.
fn approaching_normal(rng: &mut ChaCha8Rng, v: &[f64], (i, j): (usize, usize), dim: usize) -> Vec<f64> {
    let dv: Vec<f64> = (0..dim).map(|c| v[i * dim + c] - v[j * dim + c]).collect();
    loop {
        let mut n = gaussian(rng, dim);
        let len = dot(&n, &n).sqrt();
        n.iter_mut().for_each(|x| *x /= len);
        let s = dot(&n, &dv);
        if s.abs() > 0.1 * dot(&dv, &dv).sqrt() {
            if s > 0.0 {
                n.iter_mut().for_each(|x| *x = -*x);
            }
            return n;
        }
    }
}

/// Collision law for a unit normal, without the approach requirement.
fn reflect(params: &SystemParams, v: &mut [f64], (i, j): (usize, usize), n: &[f64]) {
    let d = params.dim;
    let (mi, mj) = (params.masses[i], params.masses[j]);
    let dv: Vec<f64> = (0..d).map(|c| v[i * d + c] - v[j * d + c]).collect();
    let f = 2.0 * dot(&dv, n);
    for c in 0..d {
        v[i * d + c] -= mj / (mi + mj) * f * n[c];
        v[j * d + c] += mi / (mi + mj) * f * n[c];
    }
}
