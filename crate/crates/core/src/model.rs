//! Domain types for a system of hard balls on the flat torus `T^dim_L`.
//!
//! Positions are Euclidean lifts: they are never wrapped back into the unit
//! cell, so a trajectory is a continuous curve in `R^(N*dim)` and every
//! collision carries the integer image vector that selects the periodic copy
//! it happened at.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on rejection-sampling draws for initial positions.
pub const DEFAULT_PACKING_ATTEMPTS: usize = 1_000_000;

/// Outer geometry and masses of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_balls: usize,
    pub dim: usize,
    pub torus_side: f64,
    pub radius: f64,
    pub masses: Vec<f64>,
    /// Admit zero masses. The zero-mass collision law is an algebraic device,
    /// so this is only meant for analysis runs.
    #[serde(default)]
    pub allow_zero_mass: bool,
}

impl SystemParams {
    pub fn new(n_balls: usize, dim: usize, torus_side: f64, radius: f64, masses: Vec<f64>) -> Self {
        Self {
            n_balls,
            dim,
            torus_side,
            radius,
            masses,
            allow_zero_mass: false,
        }
    }

    /// Equal unit masses.
    pub fn equal_masses(n_balls: usize, dim: usize, torus_side: f64, radius: f64) -> Self {
        Self::new(n_balls, dim, torus_side, radius, vec![1.0; n_balls])
    }

    pub fn with_zero_masses_allowed(mut self) -> Self {
        self.allow_zero_mass = true;
        self
    }

    /// Length of the flat coordinate vectors, `N * dim`.
    pub fn coords(&self) -> usize {
        self.n_balls * self.dim
    }

    pub fn validate(&self) -> Result<()> {
        validate(self)
    }

    pub fn all_masses_positive(&self) -> bool {
        self.masses.iter().all(|&m| m > 0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Checks the invariants of [`SystemParams`].
pub fn validate(params: &SystemParams) -> Result<()> {
    if params.n_balls < 2 || params.dim < 2 {
        return Err(Error::BadDimension {
            n_balls: params.n_balls,
            dim: params.dim,
        });
    }
    if !(params.torus_side.is_finite() && params.torus_side > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "torus side must be positive, got {}",
            params.torus_side
        )));
    }
    if !(params.radius.is_finite() && params.radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {}",
            params.radius
        )));
    }
    if 4.0 * params.radius >= params.torus_side {
        return Err(Error::OverlapGeometry {
            four_r: 4.0 * params.radius,
            side: params.torus_side,
        });
    }
    if params.masses.len() != params.n_balls {
        return Err(Error::InvalidParameter(format!(
            "expected {} masses, got {}",
            params.n_balls,
            params.masses.len()
        )));
    }
    if let Some(m) = params.masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
        return Err(Error::InvalidParameter(format!("mass {m} is not a finite non-negative number")));
    }
    let positive = params.masses.iter().filter(|&&m| m > 0.0).count();
    // A single massive ball is enough for the zero-mass analysis configurations.
    let required = if params.allow_zero_mass { 1 } else { 2 };
    if positive < required {
        return Err(Error::DegenerateMasses {
            required,
            found: positive,
        });
    }
    if !params.allow_zero_mass {
        if let Some(ball) = params.masses.iter().position(|&m| m == 0.0) {
            return Err(Error::ZeroMass { ball });
        }
    }
    Ok(())
}

/// A point of the flow: lifted positions, velocities and the current time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub time: f64,
}

impl PhaseState {
    pub fn new(positions: Vec<f64>, velocities: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(positions.len(), velocities.len());
        Self {
            positions,
            velocities,
            time,
        }
    }

    pub fn position(&self, ball: usize, dim: usize) -> &[f64] {
        &self.positions[ball * dim..(ball + 1) * dim]
    }

    pub fn velocity(&self, ball: usize, dim: usize) -> &[f64] {
        &self.velocities[ball * dim..(ball + 1) * dim]
    }

    /// Smallest torus distance between two centers.
    pub fn min_separation(&self, params: &SystemParams) -> f64 {
        let d = params.dim;
        let mut best = f64::INFINITY;
        for i in 0..params.n_balls {
            for j in i + 1..params.n_balls {
                let (sep, _) = torus_separation(self.position(i, d), self.position(j, d), params.torus_side);
                best = best.min(norm(&sep));
            }
        }
        best
    }
}

/// Mass-rescaled coordinates `q^_i = sqrt(m_i) q_i`, `v^_i = sqrt(m_i) v_i`.
///
/// In these coordinates the energy is the Euclidean norm of the velocity and
/// every collision acts as an orthogonal reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct HatState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

pub fn to_hat(state: &PhaseState, params: &SystemParams) -> Result<HatState> {
    if let Some(ball) = params.masses.iter().position(|&m| m <= 0.0) {
        return Err(Error::ZeroMass { ball });
    }
    let d = params.dim;
    let scale = |xs: &[f64]| -> Vec<f64> {
        xs.iter()
            .enumerate()
            .map(|(k, x)| params.masses[k / d].sqrt() * x)
            .collect()
    };
    Ok(HatState {
        positions: scale(&state.positions),
        velocities: scale(&state.velocities),
    })
}

/// Minimum-image separation `q_a - q_b - L*a` with every component in the
/// half-open cell `[-L/2, L/2)`, together with the image vector `a`.
///
/// Because the cell is half open, a component sitting exactly on `-L/2` stays
/// there for `(a, b)` but also maps to `-L/2` for `(b, a)`, so antisymmetry
/// holds everywhere except on that boundary.
pub fn torus_separation(q_a: &[f64], q_b: &[f64], side: f64) -> (Vec<f64>, Vec<i64>) {
    let mut sep = Vec::with_capacity(q_a.len());
    let mut image = Vec::with_capacity(q_a.len());
    for (x, y) in q_a.iter().zip(q_b) {
        let diff = x - y;
        let a = ((diff + 0.5 * side) / side).floor();
        let mut s = diff - side * a;
        let mut a = a as i64;
        // Rounding can push the reduced value onto the open end of the cell.
        if s >= 0.5 * side {
            s -= side;
            a += 1;
        }
        sep.push(s);
        image.push(a);
    }
    (sep, image)
}

/// Draws a non-overlapping configuration with standardized velocities.
///
/// Centers are placed by random sequential addition with a separation margin
/// of `1e-9 * L` above `2r`; velocities are Gaussian, shifted to zero total
/// momentum and scaled to `sum m_i |v_i|^2 = 1`.
pub fn sample_initial_state(params: &SystemParams, seed: u64) -> Result<PhaseState> {
    sample_initial_state_with(params, seed, DEFAULT_PACKING_ATTEMPTS)
}

pub fn sample_initial_state_with(params: &SystemParams, seed: u64, max_attempts: usize) -> Result<PhaseState> {
    params.validate()?;
    if let Some(ball) = params.masses.iter().position(|&m| m <= 0.0) {
        return Err(Error::ZeroMass { ball });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = sample_positions(params, &mut rng, max_attempts)?;
    let mut velocities: Vec<f64> = (0..params.coords()).map(|_| rng.sample(StandardNormal)).collect();
    normalize_velocities(params, &mut velocities);
    Ok(PhaseState::new(positions, velocities, 0.0))
}

/// Rejection-samples centers in `[0, L)^dim` with pairwise torus distance at
/// least `2r + 1e-9 L`.
pub fn sample_positions<R: Rng>(params: &SystemParams, rng: &mut R, max_attempts: usize) -> Result<Vec<f64>> {
    let d = params.dim;
    let min_dist = 2.0 * params.radius + 1e-9 * params.torus_side;
    let mut positions: Vec<f64> = Vec::with_capacity(params.coords());
    let mut attempts = 0usize;
    while positions.len() < params.coords() {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::PackingTimeout {
                n_balls: params.n_balls,
                attempts: max_attempts,
            });
        }
        let candidate: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * params.torus_side).collect();
        let placed = positions.len() / d;
        let clear = (0..placed).all(|b| {
            let (sep, _) = torus_separation(&candidate, &positions[b * d..(b + 1) * d], params.torus_side);
            norm(&sep) >= min_dist
        });
        if clear {
            positions.extend_from_slice(&candidate);
        }
    }
    Ok(positions)
}

/// Projects onto `sum m_i v_i = 0` and rescales to `sum m_i |v_i|^2 = 1`.
pub fn normalize_velocities(params: &SystemParams, velocities: &mut [f64]) {
    let d = params.dim;
    let total = params.total_mass();
    for c in 0..d {
        let p: f64 = (0..params.n_balls).map(|i| params.masses[i] * velocities[i * d + c]).sum();
        for i in 0..params.n_balls {
            velocities[i * d + c] -= p / total;
        }
    }
    let two_h: f64 = velocities
        .iter()
        .enumerate()
        .map(|(k, v)| params.masses[k / d] * v * v)
        .sum();
    let s = two_h.sqrt().recip();
    velocities.iter_mut().for_each(|v| *v *= s);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_examples() {
        assert!(SystemParams::new(2, 2, 1.0, 0.1, vec![1.0, 1.0]).validate().is_ok());
        assert!(matches!(
            SystemParams::new(2, 2, 1.0, 0.3, vec![1.0, 1.0]).validate(),
            Err(Error::OverlapGeometry { .. })
        ));
        assert!(matches!(
            SystemParams::new(3, 2, 1.0, 0.1, vec![0.0, 0.0, 1.0]).validate(),
            Err(Error::DegenerateMasses { found: 1, .. })
        ));
        assert!(matches!(
            SystemParams::new(1, 2, 1.0, 0.1, vec![1.0]).validate(),
            Err(Error::BadDimension { .. })
        ));
        assert!(matches!(
            SystemParams::new(2, 1, 1.0, 0.1, vec![1.0, 1.0]).validate(),
            Err(Error::BadDimension { .. })
        ));
    }

    #[test]
    fn zero_masses_need_the_flag() {
        let p = SystemParams::new(3, 2, 1.0, 0.1, vec![1.0, 0.0, 1.0]);
        assert!(matches!(p.validate(), Err(Error::ZeroMass { ball: 1 })));
        assert!(p.clone().with_zero_masses_allowed().validate().is_ok());
        let single = SystemParams::new(3, 2, 1.0, 0.1, vec![0.0, 1.0, 0.0]).with_zero_masses_allowed();
        assert!(single.validate().is_ok());
        assert!(matches!(
            sample_initial_state(&p.with_zero_masses_allowed(), 1),
            Err(Error::ZeroMass { ball: 1 })
        ));
    }

    #[test]
    fn sampler_normalizes_and_is_deterministic() {
        let params = SystemParams::new(4, 3, 1.0, 0.1, vec![1.0, 2.0, 0.5, 3.0]);
        let s = sample_initial_state(&params, 42).unwrap();
        let d = params.dim;
        for c in 0..d {
            let p: f64 = (0..4).map(|i| params.masses[i] * s.velocities[i * d + c]).sum();
            assert!(p.abs() <= 1e-14, "momentum component {p}");
        }
        let two_h: f64 = s
            .velocities
            .iter()
            .enumerate()
            .map(|(k, v)| params.masses[k / d] * v * v)
            .sum();
        assert!((two_h - 1.0).abs() <= 1e-14);
        assert_eq!(s, sample_initial_state(&params, 42).unwrap());
        assert_ne!(s, sample_initial_state(&params, 43).unwrap());
    }

    #[test]
    fn sampler_respects_contact_distance() {
        let params = SystemParams::equal_masses(2, 2, 1.0, 0.2);
        for seed in 0..50 {
            let s = sample_initial_state(&params, seed).unwrap();
            assert!(s.min_separation(&params) >= 0.4);
        }
    }

    #[test]
    fn dense_packing_times_out() {
        let params = SystemParams::equal_masses(30, 2, 1.0, 0.24);
        assert!(matches!(
            sample_initial_state_with(&params, 0, 10_000),
            Err(Error::PackingTimeout { .. })
        ));
    }

    #[test]
    fn hat_coordinates() {
        let params = SystemParams::new(2, 2, 1.0, 0.1, vec![4.0, 1.0]);
        let state = PhaseState::new(vec![0.0; 4], vec![1.0, 0.0, -4.0, 0.0], 0.0);
        let hat = to_hat(&state, &params).unwrap();
        assert_eq!(hat.velocities, vec![2.0, 0.0, -4.0, 0.0]);
        let p: f64 = (0..2).map(|i| params.masses[i].sqrt() * hat.velocities[2 * i]).sum();
        assert_eq!(p, 0.0);

        let unit = SystemParams::equal_masses(3, 2, 1.0, 0.1);
        let s = sample_initial_state(&unit, 3).unwrap();
        let h = to_hat(&s, &unit).unwrap();
        assert_eq!(h.velocities, s.velocities);
        assert_eq!(h.positions, s.positions);
        assert!((dot(&h.velocities, &h.velocities) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn separation_examples() {
        let (s, a) = torus_separation(&[0.3, 0.7], &[0.3, 0.7], 1.0);
        assert_eq!((s, a), (vec![0.0, 0.0], vec![0, 0]));
        let (s, a) = torus_separation(&[0.9, 0.0], &[0.0, 0.0], 1.0);
        assert!((s[0] + 0.1).abs() < 1e-15 && s[1] == 0.0);
        assert_eq!(a, vec![1, 0]);
        let (s, a) = torus_separation(&[-0.5, 0.2], &[0.0, 0.0], 1.0);
        assert_eq!((s, a), (vec![-0.5, 0.2], vec![0, 0]));
        // Boundary: the reverse direction also lands on -L/2.
        let (s, a) = torus_separation(&[0.0, 0.0], &[-0.5, 0.2], 1.0);
        assert_eq!(s, vec![-0.5, -0.2]);
        assert_eq!(a, vec![1, 0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn separation_is_reduced_and_antisymmetric(
                qa in proptest::collection::vec(-50.0f64..50.0, 3),
                qb in proptest::collection::vec(-50.0f64..50.0, 3),
                side in 0.5f64..4.0,
            ) {
                let (s, a) = torus_separation(&qa, &qb, side);
                let (r, b) = torus_separation(&qb, &qa, side);
                for c in 0..3 {
                    prop_assert!(s[c] >= -0.5 * side && s[c] < 0.5 * side);
                    prop_assert!((qa[c] - qb[c] - side * a[c] as f64 - s[c]).abs() < 1e-9);
                    if s[c] != -0.5 * side && r[c] != -0.5 * side {
                        prop_assert!((s[c] + r[c]).abs() < 1e-9);
                        prop_assert_eq!(a[c], -b[c]);
                    }
                }
            }

            #[test]
            fn hat_velocity_norm_is_mass_norm(seed in 0u64..500, m2 in 0.1f64..5.0, m3 in 0.1f64..5.0) {
                let params = SystemParams::new(3, 2, 1.0, 0.1, vec![1.0, m2, m3]);
                let s = sample_initial_state(&params, seed).unwrap();
                let h = to_hat(&s, &params).unwrap();
                let mass_norm: f64 = s.velocities.iter().enumerate()
                    .map(|(k, v)| params.masses[k / 2] * v * v).sum::<f64>().sqrt();
                let hat_norm = dot(&h.velocities, &h.velocities).sqrt();
                prop_assert!((hat_norm - mass_norm).abs() <= 4.0 * f64::EPSILON * mass_norm);
            }
        }
    }
}
