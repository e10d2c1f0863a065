//! Event-driven evolution of the hard-ball flow.
//!
//! The engine keeps lifted (unwrapped) positions at the time of the most
//! recent collision and advances every ball by `q += (t_k - t_{k-1}) v` at each
//! event, which is exactly what [`OrbitSegment::replay`] does, so replaying a
//! segment produced here is bit-identical.
//!
//! Pair predictions are restricted to images `round(dq/L) + {-1,0,1}^dim`.
//! That window is complete as long as the relative displacement over the
//! prediction horizon stays below `L/2`: a contact needs every component of
//! `dq - L a` to be at most `2r + L/2 < L` in size. Each pair therefore gets
//! the horizon `L / (2 |dv|)` and a recheck entry when nothing is found inside
//! it.

pub mod precise;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, normalize_velocities, norm, PhaseState, SystemParams};

/// One recorded collision. Ball indices are 0-based with `pair.0 < pair.1`;
/// `index` is the 1-based position in the segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub index: usize,
    pub time: f64,
    pub pair: (usize, usize),
    pub image: Vec<i64>,
    pub pre_velocities: Vec<f64>,
    pub post_velocities: Vec<f64>,
    pub normal: Vec<f64>,
}

impl CollisionEvent {
    /// Velocity of `ball` just before the collision.
    pub fn pre(&self, ball: usize, dim: usize) -> &[f64] {
        &self.pre_velocities[ball * dim..(ball + 1) * dim]
    }

    pub fn post(&self, ball: usize, dim: usize) -> &[f64] {
        &self.post_velocities[ball * dim..(ball + 1) * dim]
    }

    /// `v_i - v_j` before the collision.
    pub fn relative_pre(&self, dim: usize) -> Vec<f64> {
        let (i, j) = self.pair;
        sub(self.pre(i, dim), self.pre(j, dim))
    }

    pub fn relative_post(&self, dim: usize) -> Vec<f64> {
        let (i, j) = self.pair;
        sub(self.post(i, dim), self.post(j, dim))
    }
}

/// A lifted orbit segment: the initial state, every collision in time order,
/// and the state at the end of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub params: SystemParams,
    pub initial: PhaseState,
    pub events: Vec<CollisionEvent>,
    pub final_state: PhaseState,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn symbols(&self) -> Vec<(usize, usize)> {
        self.events.iter().map(|e| e.pair).collect()
    }

    pub fn images(&self) -> Vec<Vec<i64>> {
        self.events.iter().map(|e| e.image.clone()).collect()
    }

    /// Time slots `tau_k = t_k - t_{k-1}` with `t_0` the initial time.
    pub fn time_slots(&self) -> Vec<f64> {
        let mut prev = self.initial.time;
        self.events
            .iter()
            .map(|e| {
                let tau = e.time - prev;
                prev = e.time;
                tau
            })
            .collect()
    }

    /// Velocities after `k` collisions (`k = 0` is the initial velocity).
    pub fn velocities_after(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.initial.velocities
        } else {
            &self.events[k - 1].post_velocities
        }
    }

    /// Contact residues `| |q_i - q_j - L a|^2 - 4r^2 |` recomputed from the
    /// initial positions and the stored times and velocities.
    pub fn contact_residues(&self) -> Vec<f64> {
        let p = &self.params;
        let d = p.dim;
        let mut q = self.initial.positions.clone();
        let mut t = self.initial.time;
        let four_r2 = 4.0 * p.radius * p.radius;
        let mut out = Vec::with_capacity(self.events.len());
        let mut v: &[f64] = &self.initial.velocities;
        for e in &self.events {
            let dt = e.time - t;
            for (x, w) in q.iter_mut().zip(v) {
                *x += dt * w;
            }
            let sep = image_separation(&q, e.pair, &e.image, d, p.torus_side);
            out.push((dot(&sep, &sep) - four_r2).abs());
            t = e.time;
            v = &e.post_velocities;
        }
        out
    }

    /// Re-derives every post-collision velocity from the initial state using
    /// the stored times, pairs and images, and returns the largest deviation
    /// from the stored velocities relative to the largest speed component.
    ///
    /// Segments produced by [`Simulator`] replay with deviation exactly zero;
    /// segments rounded from the high-precision engine agree only up to the
    /// chaotic amplification of the rounding.
    pub fn replay(&self) -> Result<f64> {
        let p = &self.params;
        let d = p.dim;
        let mut q = self.initial.positions.clone();
        let mut v = self.initial.velocities.clone();
        let mut t = self.initial.time;
        let mut worst: f64 = 0.0;
        for e in &self.events {
            let dt = e.time - t;
            for (x, w) in q.iter_mut().zip(&v) {
                *x += dt * w;
            }
            let sep = image_separation(&q, e.pair, &e.image, d, p.torus_side);
            collide(p, &mut v, e.pair, &sep, 1.0)?;
            let scale = e.post_velocities.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
            for (a, b) in v.iter().zip(&e.post_velocities) {
                worst = worst.max((a - b).abs() / scale);
            }
            t = e.time;
        }
        Ok(worst)
    }
}

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stop {
    pub max_collisions: Option<usize>,
    /// Duration measured from the initial state's time.
    pub max_time: Option<f64>,
}

impl Stop {
    pub fn collisions(n: usize) -> Self {
        Self {
            max_collisions: Some(n),
            max_time: None,
        }
    }

    pub fn time(t: f64) -> Self {
        Self {
            max_collisions: None,
            max_time: Some(t),
        }
    }

    fn check(&self) -> Result<()> {
        match (self.max_collisions, self.max_time) {
            (None, None) => Err(Error::InvalidParameter("a run needs a collision count or a duration".into())),
            (_, Some(t)) if !(t.is_finite() && t >= 0.0) => {
                Err(Error::InvalidParameter(format!("run duration must be finite and non-negative, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TangentPolicy {
    #[default]
    Abort,
    /// Perturb a velocity of the offending pair by a relative `1e-9` and predict again.
    Nudge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Upper bound on the per-pair prediction horizon.
    pub horizon_cap: f64,
    /// Relative discriminant threshold below which an approach counts as grazing.
    pub tangent_tol: f64,
    pub tangent_policy: TangentPolicy,
    /// Two collisions closer than `sim_tol * max(1, t)` are rejected.
    pub sim_tol: f64,
    /// Collisions allowed per unit of time before the run is declared faulty.
    pub max_rate: u64,
    /// Restore `H = 1/2`, `P = 0` every this many collisions.
    pub resync_every: Option<u64>,
    /// Contact tolerance for `apply_collision`, relative to `4r^2`.
    pub contact_tol: f64,
    pub(crate) reflection_sign: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon_cap: f64::INFINITY,
            tangent_tol: 1e-12,
            tangent_policy: TangentPolicy::Abort,
            sim_tol: 1e-12,
            max_rate: 1_000_000,
            resync_every: None,
            contact_tol: 1e-8,
            reflection_sign: 1.0,
        }
    }
}

/// A predicted collision of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub tau: f64,
    pub image: Vec<i64>,
    pub discriminant: f64,
}

/// Total energy `H = 1/2 sum m |v|^2` and momentum `P = sum m v`.
pub fn conserved(state: &PhaseState, params: &SystemParams) -> (f64, Vec<f64>) {
    conserved_velocities(&state.velocities, params)
}

pub fn conserved_velocities(velocities: &[f64], params: &SystemParams) -> (f64, Vec<f64>) {
    let d = params.dim;
    let mut p = vec![0.0; d];
    let mut h = 0.0;
    for (i, &m) in params.masses.iter().enumerate() {
        let v = &velocities[i * d..(i + 1) * d];
        h += 0.5 * m * dot(v, v);
        for c in 0..d {
            p[c] += m * v[c];
        }
    }
    (h, p)
}

/// Negates every velocity; positions and time are kept.
pub fn reverse(state: &PhaseState) -> PhaseState {
    PhaseState {
        positions: state.positions.clone(),
        velocities: state.velocities.iter().map(|v| -v).collect(),
        time: state.time,
    }
}

/// Smallest positive collision time of balls `i` and `j` within `horizon`,
/// searching the images around the minimum image.
pub fn pair_collision_time(
    state: &PhaseState,
    params: &SystemParams,
    i: usize,
    j: usize,
    horizon: f64,
) -> Result<Option<Prediction>> {
    let d = params.dim;
    let dq = sub(state.position(i, d), state.position(j, d));
    let dv = sub(state.velocity(i, d), state.velocity(j, d));
    predict(&dq, &dv, params, horizon, 1e-12, (i, j), &window(&dq, params.torus_side))
}

/// Same as [`pair_collision_time`] but over an explicit list of images.
pub fn pair_collision_time_over(
    state: &PhaseState,
    params: &SystemParams,
    i: usize,
    j: usize,
    horizon: f64,
    images: &[Vec<i64>],
) -> Result<Option<Prediction>> {
    let d = params.dim;
    let dq = sub(state.position(i, d), state.position(j, d));
    let dv = sub(state.velocity(i, d), state.velocity(j, d));
    predict(&dq, &dv, params, horizon, 1e-12, (i, j), images)
}

/// Images `round(dq/L) + {-1,0,1}^dim`.
pub(crate) fn window(dq: &[f64], side: f64) -> Vec<Vec<i64>> {
    let center: Vec<i64> = dq.iter().map(|x| (x / side).round() as i64).collect();
    let dim = dq.len();
    let mut out = Vec::with_capacity(3usize.pow(dim as u32));
    let mut offs = vec![-1i64; dim];
    loop {
        out.push(center.iter().zip(&offs).map(|(c, o)| c + o).collect());
        let mut c = 0;
        loop {
            if c == dim {
                return out;
            }
            offs[c] += 1;
            if offs[c] <= 1 {
                break;
            }
            offs[c] = -1;
            c += 1;
        }
    }
}

fn predict(
    dq: &[f64],
    dv: &[f64],
    params: &SystemParams,
    horizon: f64,
    tangent_tol: f64,
    pair: (usize, usize),
    images: &[Vec<i64>],
) -> Result<Option<Prediction>> {
    let a_coef = dot(dv, dv);
    if a_coef == 0.0 {
        return Ok(None);
    }
    let speed = a_coef.sqrt();
    let sigma = 2.0 * params.radius;
    let reach = speed * horizon + sigma;
    let mut best: Option<Prediction> = None;
    for image in images {
        let sep: Vec<f64> = dq
            .iter()
            .zip(image)
            .map(|(x, a)| x - params.torus_side * *a as f64)
            .collect();
        let c0 = dot(&sep, &sep);
        if c0.sqrt() > reach {
            continue;
        }
        let b = dot(&sep, dv);
        if b >= 0.0 {
            continue;
        }
        let c = c0 - sigma * sigma;
        let disc = b * b - a_coef * c;
        if disc < 0.0 {
            continue;
        }
        let tau = if c <= 0.0 {
            0.0
        } else {
            if disc < tangent_tol * (b * b + (a_coef * c).abs()) && -b / a_coef <= horizon {
                return Err(Error::TangentialApproach {
                    i: pair.0,
                    j: pair.1,
                    discriminant: disc,
                });
            }
            // Smaller root of A tau^2 + 2B tau + C, written without cancellation.
            c / (-b + disc.sqrt())
        };
        if tau > horizon {
            continue;
        }
        if best.as_ref().is_none_or(|p| tau < p.tau) {
            best = Some(Prediction {
                tau,
                image: image.clone(),
                discriminant: disc,
            });
        }
    }
    Ok(best)
}

/// Applies the elastic collision law to a state whose balls `i` and `j`
/// touch at image `a`. Positions are unchanged.
pub fn apply_collision(state: &PhaseState, params: &SystemParams, pair: (usize, usize), image: &[i64]) -> Result<PhaseState> {
    apply_collision_with(state, params, pair, image, &SimOptions::default())
}

pub fn apply_collision_with(
    state: &PhaseState,
    params: &SystemParams,
    pair: (usize, usize),
    image: &[i64],
    opts: &SimOptions,
) -> Result<PhaseState> {
    let sep = image_separation(&state.positions, pair, image, params.dim, params.torus_side);
    let four_r2 = 4.0 * params.radius * params.radius;
    let residue = (dot(&sep, &sep) - four_r2).abs();
    if residue > opts.contact_tol * four_r2 {
        return Err(Error::NotInContact {
            i: pair.0,
            j: pair.1,
            residue,
        });
    }
    let mut out = state.clone();
    collide(params, &mut out.velocities, pair, &sep, opts.reflection_sign)?;
    Ok(out)
}

/// `q_i - q_j - L a` from a flat position vector.
pub(crate) fn image_separation(q: &[f64], pair: (usize, usize), image: &[i64], dim: usize, side: f64) -> Vec<f64> {
    let (i, j) = pair;
    (0..dim)
        .map(|c| q[i * dim + c] - q[j * dim + c] - side * image[c] as f64)
        .collect()
}

/// Collision law in place: the relative velocity is reflected across the plane
/// orthogonal to `sep`, the momentum change is shared by the mass fractions
/// `m_j/(m_i+m_j)` and `m_i/(m_i+m_j)`. A zero mass on one side reduces to a
/// reflection of that ball's velocity relative to its partner.
pub(crate) fn collide(params: &SystemParams, v: &mut [f64], pair: (usize, usize), sep: &[f64], sign: f64) -> Result<()> {
    let (i, j) = pair;
    let d = params.dim;
    let (mi, mj) = (params.masses[i], params.masses[j]);
    if mi + mj == 0.0 {
        return Err(Error::ZeroMassPair { i, j });
    }
    let dv: Vec<f64> = (0..d).map(|c| v[i * d + c] - v[j * d + c]).collect();
    let b = dot(&dv, sep);
    if b >= 0.0 {
        return Err(Error::RecedingPair { i, j });
    }
    let f = 2.0 * b / dot(sep, sep);
    let (wi, wj) = (mj / (mi + mj), mi / (mi + mj));
    for c in 0..d {
        v[i * d + c] -= sign * wi * f * sep[c];
        v[j * d + c] += sign * wj * f * sep[c];
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EntryKind {
    Collision,
    Recheck,
}

#[derive(Debug, Clone)]
struct Entry {
    time: f64,
    pair: (usize, usize),
    kind: EntryKind,
    image: Vec<i64>,
    gens: (u64, u64),
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.pair.cmp(&other.pair))
            .then(self.kind.cmp(&other.kind))
            .then(self.gens.cmp(&other.gens))
    }
}

/// Step-wise event-driven engine.
///
/// [`Simulator::next_event`] yields collisions one at a time so that callers
/// can co-evolve other data (tangent frames, statistics) without storing the
/// whole history.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: SystemParams,
    opts: SimOptions,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    t_last: f64,
    gens: Vec<u64>,
    heap: BinaryHeap<Reverse<Entry>>,
    count: usize,
    rate_window: (f64, u64),
    resyncs: u64,
    nudges: u64,
}

impl Simulator {
    pub fn new(params: &SystemParams, state: &PhaseState, opts: SimOptions) -> Result<Self> {
        params.validate()?;
        let coords = params.coords();
        if state.positions.len() != coords || state.velocities.len() != coords {
            return Err(Error::InvalidParameter(format!(
                "state has {} position and {} velocity coordinates, expected {coords}",
                state.positions.len(),
                state.velocities.len()
            )));
        }
        let closest = state.min_separation(params);
        if closest < 2.0 * params.radius * (1.0 - 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "initial state overlaps: closest centers at {closest}, contact distance {}",
                2.0 * params.radius
            )));
        }
        let mut sim = Self {
            params: params.clone(),
            opts,
            positions: state.positions.clone(),
            velocities: state.velocities.clone(),
            t_last: state.time,
            gens: vec![0; params.n_balls],
            heap: BinaryHeap::new(),
            count: 0,
            rate_window: (state.time.floor(), 0),
            resyncs: 0,
            nudges: 0,
        };
        for i in 0..params.n_balls {
            for j in i + 1..params.n_balls {
                sim.schedule((i, j), state.time)?;
            }
        }
        Ok(sim)
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// Number of collisions processed so far.
    pub fn collisions(&self) -> usize {
        self.count
    }

    /// Time of the latest collision (or the start time).
    pub fn last_event_time(&self) -> f64 {
        self.t_last
    }

    pub fn resyncs(&self) -> u64 {
        self.resyncs
    }

    pub fn nudges(&self) -> u64 {
        self.nudges
    }

    /// State at the latest collision.
    pub fn state(&self) -> PhaseState {
        PhaseState::new(self.positions.clone(), self.velocities.clone(), self.t_last)
    }

    /// Free flight from the latest collision to `t`, which must not lie past
    /// the next collision.
    pub fn state_at(&self, t: f64) -> PhaseState {
        let dt = t - self.t_last;
        let positions = self.positions.iter().zip(&self.velocities).map(|(q, v)| q + dt * v).collect();
        PhaseState::new(positions, self.velocities.clone(), t)
    }

    fn horizon(&self, dv: &[f64]) -> f64 {
        let speed = norm(dv);
        if speed == 0.0 {
            return f64::INFINITY;
        }
        (self.params.torus_side / (2.0 * speed)).min(self.opts.horizon_cap)
    }

    /// Predicts the next collision of `pair` from time `now` and queues it, or
    /// queues a recheck at the end of the pair's horizon.
    fn schedule(&mut self, pair: (usize, usize), now: f64) -> Result<()> {
        loop {
            let d = self.params.dim;
            let (i, j) = pair;
            let lead = now - self.t_last;
            let dv: Vec<f64> = (0..d).map(|c| self.velocities[i * d + c] - self.velocities[j * d + c]).collect();
            let dq: Vec<f64> = (0..d)
                .map(|c| self.positions[i * d + c] - self.positions[j * d + c] + lead * dv[c])
                .collect();
            let h = self.horizon(&dv);
            if !h.is_finite() {
                return Ok(());
            }
            if now + h <= now {
                return Err(Error::NumericalBreakdown {
                    time: now,
                    reason: format!("prediction horizon of pair ({i}, {j}) is below the time resolution"),
                });
            }
            let gens = (self.gens[i], self.gens[j]);
            match predict(&dq, &dv, &self.params, h, self.opts.tangent_tol, pair, &window(&dq, self.params.torus_side)) {
                Ok(Some(p)) => {
                    self.heap.push(Reverse(Entry {
                        time: now + p.tau,
                        pair,
                        kind: EntryKind::Collision,
                        image: p.image,
                        gens,
                    }));
                    return Ok(());
                }
                Ok(None) => {
                    self.heap.push(Reverse(Entry {
                        time: now + h,
                        pair,
                        kind: EntryKind::Recheck,
                        image: Vec::new(),
                        gens,
                    }));
                    return Ok(());
                }
                Err(e @ Error::TangentialApproach { .. }) if self.opts.tangent_policy == TangentPolicy::Nudge => {
                    warn!("{e}; nudging ball {i} at t = {now}");
                    self.nudge(i, now)?;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Moves everything to `now`, perturbs ball `ball`'s velocity and
    /// re-predicts its pairs. Nudged runs are no longer replayable.
    fn nudge(&mut self, ball: usize, now: f64) -> Result<()> {
        let d = self.params.dim;
        let dt = now - self.t_last;
        for (q, v) in self.positions.iter_mut().zip(&self.velocities) {
            *q += dt * v;
        }
        self.t_last = now;
        let v = &mut self.velocities[ball * d..(ball + 1) * d];
        let speed = norm(v).max(1e-300);
        v[d - 1] += 1e-9 * speed;
        self.nudges += 1;
        self.gens[ball] += 1;
        for other in 0..self.params.n_balls {
            if other != ball {
                self.schedule((ball.min(other), ball.max(other)), now)?;
            }
        }
        Ok(())
    }

    fn is_current(&self, e: &Entry) -> bool {
        self.gens[e.pair.0] == e.gens.0 && self.gens[e.pair.1] == e.gens.1
    }

    /// Processes queue entries until the next collision at a time `<= until`
    /// and returns it, or returns `None` when no collision happens by then.
    pub fn next_event(&mut self, until: f64) -> Result<Option<CollisionEvent>> {
        loop {
            let Some(Reverse(top)) = self.heap.peek() else {
                return Ok(None);
            };
            if top.time > until {
                return Ok(None);
            }
            let Reverse(entry) = self.heap.pop().expect("peeked");
            if !self.is_current(&entry) {
                continue;
            }
            match entry.kind {
                EntryKind::Recheck => self.schedule(entry.pair, entry.time)?,
                EntryKind::Collision => {
                    self.check_simultaneous(&entry)?;
                    return self.perform(entry).map(Some);
                }
            }
        }
    }

    fn check_simultaneous(&mut self, entry: &Entry) -> Result<()> {
        let eps = self.opts.sim_tol * entry.time.abs().max(1.0);
        let clash = self
            .heap
            .iter()
            .filter(|Reverse(e)| e.kind == EntryKind::Collision && e.pair != entry.pair && self.is_current(e))
            .find(|Reverse(e)| e.time - entry.time <= eps);
        if let Some(Reverse(other)) = clash {
            return Err(Error::SimultaneousCollision {
                first: entry.pair,
                second: other.pair,
                time: entry.time,
            });
        }
        Ok(())
    }

    fn perform(&mut self, entry: Entry) -> Result<CollisionEvent> {
        let p = &self.params;
        let d = p.dim;
        let t = entry.time;
        let dt = t - self.t_last;
        for (q, v) in self.positions.iter_mut().zip(&self.velocities) {
            *q += dt * v;
        }
        self.t_last = t;
        let sep = image_separation(&self.positions, entry.pair, &entry.image, d, p.torus_side);
        let pre = self.velocities.clone();
        collide(p, &mut self.velocities, entry.pair, &sep, self.opts.reflection_sign)?;
        let len = norm(&sep);
        self.count += 1;
        let event = CollisionEvent {
            index: self.count,
            time: t,
            pair: entry.pair,
            image: entry.image,
            pre_velocities: pre,
            post_velocities: self.velocities.clone(),
            normal: sep.iter().map(|x| x / len).collect(),
        };

        let bucket = t.floor();
        if bucket != self.rate_window.0 {
            self.rate_window = (bucket, 0);
        }
        self.rate_window.1 += 1;
        if self.rate_window.1 > self.opts.max_rate {
            return Err(Error::AccumulationGuard {
                limit: self.opts.max_rate,
                time: t,
            });
        }

        let (i, j) = entry.pair;
        self.gens[i] += 1;
        self.gens[j] += 1;
        let resynced = match self.opts.resync_every {
            Some(every) if every > 0 && (self.count as u64).is_multiple_of(every) => {
                self.resync();
                true
            }
            _ => false,
        };
        let n = self.params.n_balls;
        if resynced {
            for g in self.gens.iter_mut() {
                *g += 1;
            }
            for a in 0..n {
                for b in a + 1..n {
                    self.schedule((a, b), t)?;
                }
            }
        } else {
            for other in 0..n {
                if other != i && other != j {
                    self.schedule((i.min(other), i.max(other)), t)?;
                    self.schedule((j.min(other), j.max(other)), t)?;
                }
            }
            self.schedule((i, j), t)?;
        }
        if self.heap.len() > 16 * n * n + 64 {
            let gens = self.gens.clone();
            self.heap.retain(|Reverse(e)| gens[e.pair.0] == e.gens.0 && gens[e.pair.1] == e.gens.1);
        }
        Ok(event)
    }

    fn resync(&mut self) {
        let (h, p) = conserved_velocities(&self.velocities, &self.params);
        if self.params.masses.iter().all(|&m| m > 0.0) {
            normalize_velocities(&self.params, &mut self.velocities);
        }
        self.resyncs += 1;
        info!(
            "resynchronized after {} collisions: H was {h:.17e}, |P| was {:.3e}",
            self.count,
            norm(&p)
        );
    }
}

/// Runs the flow from `state` until the stop condition and records every
/// collision.
pub fn simulate(params: &SystemParams, state: &PhaseState, stop: Stop) -> Result<OrbitSegment> {
    simulate_with(params, state, stop, SimOptions::default())
}

pub fn simulate_with(params: &SystemParams, state: &PhaseState, stop: Stop, opts: SimOptions) -> Result<OrbitSegment> {
    stop.check()?;
    let mut sim = Simulator::new(params, state, opts)?;
    let until = stop.max_time.map_or(f64::INFINITY, |t| state.time + t);
    let cap = stop.max_collisions.unwrap_or(usize::MAX);
    let mut events = Vec::new();
    while events.len() < cap {
        match sim.next_event(until)? {
            Some(e) => events.push(e),
            None => break,
        }
    }
    let final_state = match stop.max_time {
        Some(_) if events.len() < cap => sim.state_at(until),
        _ => sim.state(),
    };
    debug!("simulated {} collisions up to t = {}", events.len(), final_state.time);
    Ok(OrbitSegment {
        params: params.clone(),
        initial: state.clone(),
        events,
        final_state,
    })
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
