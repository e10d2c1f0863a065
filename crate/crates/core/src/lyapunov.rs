//! Tangent dynamics and Lyapunov spectra.
//!
//! A tangent vector is a flat `[dq (N*dim), dv (N*dim)]`. Free flight maps it
//! by `dq += tau dv`; a collision maps it by the derivative of "fly to the
//! perturbed collision time, reflect, fly back to the nominal time". Frames
//! are orthonormalized in the mass metric `sum m_i (dq_i.dq_i' + dv_i.dv_i')`,
//! in which reflections are isometries.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CollisionEvent, OrbitSegment, SimOptions, Simulator};
use crate::error::{Error, Result};
use crate::model::{dot, PhaseState, SystemParams};

/// Free flight of a tangent vector over time `tau`.
pub fn tangent_free_flight(tangent: &mut [f64], tau: f64) {
    let half = tangent.len() / 2;
    let (dq, dv) = tangent.split_at_mut(half);
    for (q, v) in dq.iter_mut().zip(dv.iter()) {
        *q += tau * v;
    }
}

/// Derivative of the collision step at `event`, applied in place to a
/// tangent vector given at the collision time.
///
/// With `n` the unit normal, `dv = v_i - v_j` before the collision and
/// `sigma = 2r`, the collision time shifts by `dt = -(n.ddq) / (n.dv)`, the
/// normal turns by `dn = (ddq + dv dt) / sigma`, positions pick up
/// `(v - v') dt` and the velocities of the pair change by the derivative of
/// the collision law in `(dv, n)`.
pub fn tangent_collision_map(event: &CollisionEvent, params: &SystemParams, tangent: &mut [f64]) -> Result<()> {
    let d = params.dim;
    let nd = params.coords();
    let (i, j) = event.pair;
    let n = &event.normal;
    let dv = event.relative_pre(d);
    let approach = dot(n, &dv);
    if approach.abs() <= 1e-12 * dot(&dv, &dv).sqrt() {
        return Err(Error::TangentialApproach {
            i,
            j,
            discriminant: approach * approach,
        });
    }
    let sigma = 2.0 * params.radius;
    let (mi, mj) = (params.masses[i], params.masses[j]);
    let (wi, wj) = (mj / (mi + mj), mi / (mi + mj));

    let ddq: Vec<f64> = (0..d).map(|c| tangent[i * d + c] - tangent[j * d + c]).collect();
    let ddv: Vec<f64> = (0..d).map(|c| tangent[nd + i * d + c] - tangent[nd + j * d + c]).collect();
    let dt = -dot(n, &ddq) / approach;
    let dn: Vec<f64> = (0..d).map(|c| (ddq[c] + dv[c] * dt) / sigma).collect();
    let s = dot(&ddv, n) + dot(&dv, &dn);
    for ball in [i, j] {
        for c in 0..d {
            let jump = event.pre_velocities[ball * d + c] - event.post_velocities[ball * d + c];
            tangent[ball * d + c] += jump * dt;
        }
    }
    for c in 0..d {
        let kick = 2.0 * (s * n[c] + approach * dn[c]);
        tangent[nd + i * d + c] -= wi * kick;
        tangent[nd + j * d + c] += wj * kick;
    }
    Ok(())
}

/// Carries tangent vectors from the segment's initial time to `t_end` (at or
/// after the last collision), through every collision of the segment.
pub fn propagate_tangent(segment: &OrbitSegment, vectors: &mut [Vec<f64>], t_end: f64) -> Result<()> {
    let mut t = segment.initial.time;
    for e in &segment.events {
        for v in vectors.iter_mut() {
            tangent_free_flight(v, e.time - t);
            tangent_collision_map(e, &segment.params, v)?;
        }
        t = e.time;
    }
    for v in vectors.iter_mut() {
        tangent_free_flight(v, t_end - t);
    }
    Ok(())
}

fn mass_dot(params: &SystemParams, a: &[f64], b: &[f64]) -> f64 {
    let d = params.dim;
    let nd = params.coords();
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (x, y))| params.masses[(k % nd) / d] * x * y)
        .sum()
}

/// Modified Gram-Schmidt in the mass metric; returns the norms removed.
pub fn orthonormalize(params: &SystemParams, frame: &mut [Vec<f64>]) -> Vec<f64> {
    let mut norms = Vec::with_capacity(frame.len());
    for k in 0..frame.len() {
        let (done, rest) = frame.split_at_mut(k);
        let v = &mut rest[0];
        for u in done.iter() {
            let c = mass_dot(params, u, v);
            for (x, y) in v.iter_mut().zip(u) {
                *x -= c * y;
            }
        }
        let len = mass_dot(params, v, v).sqrt();
        v.iter_mut().for_each(|x| *x /= len);
        norms.push(len);
    }
    norms
}

/// Largest deviation of the mass-metric Gram matrix from the identity.
pub fn gram_defect(params: &SystemParams, frame: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, u) in frame.iter().enumerate() {
        for (b, w) in frame.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((mass_dot(params, u, w) - target).abs());
        }
    }
    worst
}

/// Squared frame-vector norms outside `[1/limit, limit]` force an early
/// renormalization; beyond that the contracting vectors lose every digit to
/// the expanding ones in Gram-Schmidt.
const STRETCH_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOptions {
    /// Maximum number of collisions between renormalizations.
    pub renorm_every: usize,
    /// Number of tangent vectors; `None` means the full `2 N dim`.
    pub frame_size: Option<usize>,
    /// Seed of the random initial frame.
    pub frame_seed: u64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            renorm_every: 10,
            frame_size: None,
            frame_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub n_balls: usize,
    pub dim: usize,
    /// Descending.
    pub exponents: Vec<f64>,
    /// Difference between the estimates from the two halves of the run,
    /// aligned with `exponents`.
    pub convergence: Vec<f64>,
    /// `(time, cumulative log stretch per vector)` at every renormalization,
    /// in frame order.
    pub history: Vec<(f64, Vec<f64>)>,
    pub total_time: f64,
    pub collisions: usize,
}

impl Spectrum {
    pub fn full_frame(&self) -> bool {
        self.exponents.len() == 2 * self.n_balls * self.dim
    }

    /// Number of exponents forced to vanish: the flow direction, the energy,
    /// and `dim` translations and `dim` momentum directions.
    pub fn zero_modes(&self) -> usize {
        2 * self.dim + 2
    }

    /// `5 lambda_1 / sqrt(T)`.
    pub fn default_tol(&self) -> f64 {
        let top = self.exponents.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        5.0 * top / self.total_time.sqrt()
    }
}

/// Co-evolves a tangent frame with the orbit from `state` for `total_time`.
pub fn lyapunov_spectrum(
    params: &SystemParams,
    state: &PhaseState,
    total_time: f64,
    opts: &LyapunovOptions,
    sim_opts: SimOptions,
) -> Result<Spectrum> {
    if let Some(ball) = params.masses.iter().position(|&m| m <= 0.0) {
        return Err(Error::ZeroMass { ball });
    }
    if !(total_time.is_finite() && total_time > 0.0) {
        return Err(Error::InvalidParameter(format!("total time must be positive, got {total_time}")));
    }
    if opts.renorm_every == 0 {
        return Err(Error::InvalidParameter("renorm_every must be positive".into()));
    }
    let full = 2 * params.coords();
    let m = opts.frame_size.unwrap_or(full);
    if m == 0 || m > full {
        return Err(Error::InvalidParameter(format!("frame size must be in 1..={full}, got {m}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.frame_seed);
    let mut frame: Vec<Vec<f64>> = (0..m).map(|_| (0..full).map(|_| rng.sample(StandardNormal)).collect()).collect();
    orthonormalize(params, &mut frame);

    let mut sim = Simulator::new(params, state, sim_opts)?;
    let t0 = state.time;
    let end = t0 + total_time;
    let mut sums = vec![0.0; m];
    let mut history = Vec::new();
    let mut half: Option<(f64, Vec<f64>)> = None;
    let mut t = t0;
    let mut since = 0;
    let renorm = |frame: &mut [Vec<f64>], t: f64, sums: &mut Vec<f64>, history: &mut Vec<(f64, Vec<f64>)>| {
        for (s, len) in sums.iter_mut().zip(orthonormalize(params, frame)) {
            *s += len.ln();
        }
        history.push((t, sums.clone()));
    };
    while let Some(e) = sim.next_event(end)? {
        for v in frame.iter_mut() {
            tangent_free_flight(v, e.time - t);
            tangent_collision_map(&e, params, v)?;
        }
        t = e.time;
        since += 1;
        let drifted = frame.iter().any(|v| {
            let n2 = mass_dot(params, v, v);
            !(STRETCH_LIMIT.recip()..=STRETCH_LIMIT).contains(&n2)
        });
        if since == opts.renorm_every || drifted {
            since = 0;
            renorm(&mut frame, t, &mut sums, &mut history);
            if half.is_none() && t - t0 >= 0.5 * total_time {
                half = Some((t, sums.clone()));
            }
        }
    }
    for v in frame.iter_mut() {
        tangent_free_flight(v, end - t);
    }
    renorm(&mut frame, end, &mut sums, &mut history);
    let exps: Vec<f64> = sums.iter().map(|s| s / total_time).collect();
    let conv: Vec<f64> = match &half {
        Some((th, sh)) if *th > t0 && *th < end => sh
            .iter()
            .zip(&sums)
            .map(|(a, b)| (a / (th - t0) - (b - a) / (end - th)).abs())
            .collect(),
        _ => vec![f64::INFINITY; m],
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| exps[b].total_cmp(&exps[a]));
    debug!("spectrum after {} collisions: {:?}", sim.collisions(), exps);
    Ok(Spectrum {
        n_balls: params.n_balls,
        dim: params.dim,
        exponents: order.iter().map(|&k| exps[k]).collect(),
        convergence: order.iter().map(|&k| conv[k]).collect(),
        history,
        total_time,
        collisions: sim.collisions(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    /// The frame does not span the whole tangent space.
    Unavailable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Unavailable => "unavailable",
        })
    }
}

/// Three-valued test that all exponents other than the forced zero modes are
/// nonzero.
///
/// Exponents with `|lambda| < tol` count as zero and those above `3 tol` as
/// nonzero; anything in between, or a half-sample difference larger than the
/// `2 tol` gap, makes the verdict inconclusive. Otherwise the test passes iff
/// exactly `2 dim + 2` exponents are zero.
pub fn relevant_nonzero(spectrum: &Spectrum, tol: f64) -> Verdict {
    if !spectrum.full_frame() {
        return Verdict::Unavailable;
    }
    // Written so that NaN counts as unconverged.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if spectrum.convergence.iter().any(|c| !(*c <= 2.0 * tol)) {
        return Verdict::Inconclusive;
    }
    if spectrum.exponents.iter().any(|l| l.abs() >= tol && l.abs() <= 3.0 * tol) {
        return Verdict::Inconclusive;
    }
    let zeros = spectrum.exponents.iter().filter(|l| l.abs() < tol).count();
    if zeros == spectrum.zero_modes() {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(exponents: Vec<f64>) -> Spectrum {
        Spectrum {
            n_balls: 2,
            dim: 2,
            convergence: vec![0.0; exponents.len()],
            exponents,
            history: Vec::new(),
            total_time: 1e4,
            collisions: 0,
        }
    }

    #[test]
    fn verdict_rules() {
        let ok = synthetic(vec![0.5, 0.001, 0.0, 0.0, 0.0, 0.0, -0.001, -0.5]);
        assert_eq!(relevant_nonzero(&ok, 0.025), Verdict::Pass);
        assert_eq!(relevant_nonzero(&synthetic(vec![0.0; 8]), 0.025), Verdict::Fail);
        let gray = synthetic(vec![0.5, 0.025, 0.0, 0.0, 0.0, 0.0, -0.001, -0.5]);
        assert_eq!(relevant_nonzero(&gray, 0.025), Verdict::Inconclusive);
        let partial = synthetic(vec![0.5, 0.0]);
        assert_eq!(relevant_nonzero(&partial, 0.025), Verdict::Unavailable);
        let mut noisy = ok.clone();
        noisy.convergence[0] = 0.2;
        assert_eq!(relevant_nonzero(&noisy, 0.025), Verdict::Inconclusive);
    }

    #[test]
    fn orthonormalization_in_mass_metric() {
        let params = SystemParams::new(2, 2, 1.0, 0.1, vec![1.0, 2.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut frame: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.sample(StandardNormal)).collect()).collect();
        orthonormalize(&params, &mut frame);
        assert!(gram_defect(&params, &frame) < 1e-12);
    }
}
