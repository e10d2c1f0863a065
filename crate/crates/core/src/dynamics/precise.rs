//! Arbitrary-precision reference engine.
//!
//! Hard-ball dynamics is chaotic: every collision multiplies perturbations by
//! a factor of order `|v| tau / r`, so a double-precision trajectory loses all
//! digits after a few dozen collisions. Checks that need the *same* orbit over
//! many collisions (time reversal over 10^3 collisions, finite-difference
//! Jacobians of long velocity histories) run here instead, with a working
//! precision chosen to outgrow the amplification.
//!
//! The algorithm mirrors [`super::Simulator`]: per-pair horizons, the
//! `{-1,0,1}^dim` image window, the smaller-root formula, the same error
//! conditions. Scheduling is a plain scan over the cached per-pair
//! predictions, which is the cheapest option for the handful of balls these
//! checks use.

use rug::Float;

use super::{window, CollisionEvent, OrbitSegment, Stop};
use crate::error::{Error, Result};
use crate::model::{PhaseState, SystemParams};

/// Working precision (bits) that comfortably covers `n` collisions of a
/// round trip.
pub fn bits_for_collisions(n: usize) -> u32 {
    (64 + 8 * n).max(128) as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreciseState {
    pub positions: Vec<Float>,
    pub velocities: Vec<Float>,
    pub time: Float,
}

impl PreciseState {
    /// Exact embedding of a double-precision state.
    pub fn from_f64(state: &PhaseState, prec: u32) -> Self {
        let lift = |xs: &[f64]| xs.iter().map(|&x| Float::with_val(prec, x)).collect();
        Self {
            positions: lift(&state.positions),
            velocities: lift(&state.velocities),
            time: Float::with_val(prec, state.time),
        }
    }

    pub fn to_f64(&self) -> PhaseState {
        PhaseState::new(to_f64s(&self.positions), to_f64s(&self.velocities), self.time.to_f64())
    }

    pub fn reverse(&self) -> Self {
        Self {
            positions: self.positions.clone(),
            velocities: self.velocities.iter().map(|v| Float::with_val(v.prec(), -v)).collect(),
            time: self.time.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreciseEvent {
    pub time: Float,
    pub pair: (usize, usize),
    pub image: Vec<i64>,
    pub pre_velocities: Vec<Float>,
    pub post_velocities: Vec<Float>,
    pub normal: Vec<Float>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreciseSegment {
    pub params: SystemParams,
    pub prec: u32,
    pub initial: PreciseState,
    pub events: Vec<PreciseEvent>,
    pub final_state: PreciseState,
}

impl PreciseSegment {
    pub fn symbols(&self) -> Vec<(usize, usize)> {
        self.events.iter().map(|e| e.pair).collect()
    }

    pub fn images(&self) -> Vec<Vec<i64>> {
        self.events.iter().map(|e| e.image.clone()).collect()
    }

    /// Rounds every quantity to the nearest double.
    pub fn to_orbit_segment(&self) -> OrbitSegment {
        let events = self
            .events
            .iter()
            .enumerate()
            .map(|(k, e)| CollisionEvent {
                index: k + 1,
                time: e.time.to_f64(),
                pair: e.pair,
                image: e.image.clone(),
                pre_velocities: to_f64s(&e.pre_velocities),
                post_velocities: to_f64s(&e.post_velocities),
                normal: to_f64s(&e.normal),
            })
            .collect();
        OrbitSegment {
            params: self.params.clone(),
            initial: self.initial.to_f64(),
            events,
            final_state: self.final_state.to_f64(),
        }
    }
}

fn to_f64s(xs: &[Float]) -> Vec<f64> {
    xs.iter().map(Float::to_f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Collision,
    Recheck,
}

#[derive(Debug, Clone)]
struct Pending {
    time: Float,
    kind: Kind,
    image: Vec<i64>,
}

struct Engine<'a> {
    params: &'a SystemParams,
    prec: u32,
    masses: Vec<Float>,
    q: Vec<Float>,
    v: Vec<Float>,
    t_last: Float,
    pairs: Vec<(usize, usize)>,
    pending: Vec<Option<Pending>>,
    count: usize,
    rate_window: (f64, u64),
}

const TANGENT_TOL: f64 = 1e-12;
const SIM_TOL: f64 = 1e-12;
const MAX_RATE: u64 = 1_000_000;

impl<'a> Engine<'a> {
    fn new(params: &'a SystemParams, state: &PreciseState, prec: u32) -> Result<Self> {
        let n = params.n_balls;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut engine = Self {
            params,
            prec,
            masses: params.masses.iter().map(|&m| Float::with_val(prec, m)).collect(),
            q: state.positions.iter().map(|x| Float::with_val(prec, x)).collect(),
            v: state.velocities.iter().map(|x| Float::with_val(prec, x)).collect(),
            t_last: Float::with_val(prec, &state.time),
            pending: vec![None; pairs.len()],
            pairs,
            count: 0,
            rate_window: (state.time.to_f64().floor(), 0),
        };
        let now = engine.t_last.clone();
        for p in 0..engine.pairs.len() {
            engine.pending[p] = engine.predict(p, &now)?;
        }
        Ok(engine)
    }

    fn f(&self, x: f64) -> Float {
        Float::with_val(self.prec, x)
    }

    fn predict(&self, p: usize, now: &Float) -> Result<Option<Pending>> {
        let prec = self.prec;
        let params = self.params;
        let d = params.dim;
        let (i, j) = self.pairs[p];
        let lead = Float::with_val(prec, now - &self.t_last);
        let dv: Vec<Float> = (0..d)
            .map(|c| Float::with_val(prec, &self.v[i * d + c] - &self.v[j * d + c]))
            .collect();
        let dq: Vec<Float> = (0..d)
            .map(|c| {
                let mut x = Float::with_val(prec, &self.q[i * d + c] - &self.q[j * d + c]);
                x += Float::with_val(prec, &lead * &dv[c]);
                x
            })
            .collect();
        let a_coef = dot(&dv, &dv, prec);
        let speed = a_coef.to_f64().sqrt();
        if speed == 0.0 {
            return Ok(None);
        }
        let side = params.torus_side;
        let sigma = 2.0 * params.radius;
        let h = side / (2.0 * speed) * (1.0 - 1e-12);
        let h_mp = self.f(h);
        let dq_f: Vec<f64> = dq.iter().map(Float::to_f64).collect();
        let reach = speed * h + sigma + 1e-9 * side;
        let sigma2 = Float::with_val(prec, self.f(sigma).square_ref());
        let mut best: Option<(Float, Vec<i64>)> = None;
        for image in window(&dq_f, side) {
            let coarse: f64 = dq_f
                .iter()
                .zip(&image)
                .map(|(x, a)| (x - side * *a as f64).powi(2))
                .sum();
            if coarse.sqrt() > reach {
                continue;
            }
            let sep: Vec<Float> = dq
                .iter()
                .zip(&image)
                .map(|(x, a)| Float::with_val(prec, x - Float::with_val(prec, side * *a as f64)))
                .collect();
            let b = dot(&sep, &dv, prec);
            if b >= 0 {
                continue;
            }
            let c = Float::with_val(prec, dot(&sep, &sep, prec) - &sigma2);
            let disc = Float::with_val(prec, b.square_ref()) - Float::with_val(prec, &a_coef * &c);
            if disc < 0 {
                continue;
            }
            let tau = if c <= 0 {
                Float::with_val(prec, 0)
            } else {
                let (bf, af, cf, df) = (b.to_f64(), a_coef.to_f64(), c.to_f64(), disc.to_f64());
                if df < TANGENT_TOL * (bf * bf + (af * cf).abs()) && -bf / af <= h {
                    return Err(Error::TangentialApproach {
                        i,
                        j,
                        discriminant: df,
                    });
                }
                let root = Float::with_val(prec, disc.sqrt_ref());
                let denom = Float::with_val(prec, &root - &b);
                Float::with_val(prec, &c / &denom)
            };
            if tau > h_mp {
                continue;
            }
            if best.as_ref().is_none_or(|(t, _)| tau < *t) {
                best = Some((tau, image));
            }
        }
        Ok(Some(match best {
            Some((tau, image)) => Pending {
                time: Float::with_val(prec, now + &tau),
                kind: Kind::Collision,
                image,
            },
            None => Pending {
                time: Float::with_val(prec, now + &h_mp),
                kind: Kind::Recheck,
                image: Vec::new(),
            },
        }))
    }

    fn next_event(&mut self, until: Option<&Float>) -> Result<Option<PreciseEvent>> {
        loop {
            let mut first: Option<usize> = None;
            for (p, slot) in self.pending.iter().enumerate() {
                if let Some(e) = slot {
                    if first.is_none_or(|f| e.time < self.pending[f].as_ref().expect("set").time) {
                        first = Some(p);
                    }
                }
            }
            let Some(p) = first else {
                return Ok(None);
            };
            let entry = self.pending[p].clone().expect("set");
            if until.is_some_and(|u| entry.time > *u) {
                return Ok(None);
            }
            match entry.kind {
                Kind::Recheck => {
                    self.pending[p] = self.predict(p, &entry.time)?;
                }
                Kind::Collision => {
                    let tf = entry.time.to_f64();
                    let eps = SIM_TOL * tf.abs().max(1.0);
                    for (o, slot) in self.pending.iter().enumerate() {
                        if let Some(other) = slot {
                            if o != p && other.kind == Kind::Collision {
                                let gap = Float::with_val(self.prec, &other.time - &entry.time).to_f64();
                                if gap <= eps {
                                    return Err(Error::SimultaneousCollision {
                                        first: self.pairs[p],
                                        second: self.pairs[o],
                                        time: tf,
                                    });
                                }
                            }
                        }
                    }
                    return self.perform(p, entry).map(Some);
                }
            }
        }
    }

    fn perform(&mut self, p: usize, entry: Pending) -> Result<PreciseEvent> {
        let prec = self.prec;
        let d = self.params.dim;
        let dt = Float::with_val(prec, &entry.time - &self.t_last);
        for (q, v) in self.q.iter_mut().zip(&self.v) {
            *q += Float::with_val(prec, &dt * v);
        }
        self.t_last = entry.time.clone();
        let (i, j) = self.pairs[p];
        let side = self.params.torus_side;
        let sep: Vec<Float> = (0..d)
            .map(|c| {
                let x = Float::with_val(prec, &self.q[i * d + c] - &self.q[j * d + c]);
                x - Float::with_val(prec, side * entry.image[c] as f64)
            })
            .collect();
        let pre = self.v.clone();
        let (mi, mj) = (&self.masses[i], &self.masses[j]);
        let total = Float::with_val(prec, mi + mj);
        if total == 0 {
            return Err(Error::ZeroMassPair { i, j });
        }
        let dv: Vec<Float> = (0..d)
            .map(|c| Float::with_val(prec, &self.v[i * d + c] - &self.v[j * d + c]))
            .collect();
        let b = dot(&dv, &sep, prec);
        if b >= 0 {
            return Err(Error::RecedingPair { i, j });
        }
        let len2 = dot(&sep, &sep, prec);
        let f = Float::with_val(prec, &b * 2u32) / &len2;
        let wi = Float::with_val(prec, mj / &total);
        let wj = Float::with_val(prec, mi / &total);
        let fi = Float::with_val(prec, &wi * &f);
        let fj = Float::with_val(prec, &wj * &f);
        for (c, s) in sep.iter().enumerate() {
            self.v[i * d + c] -= Float::with_val(prec, &fi * s);
            self.v[j * d + c] += Float::with_val(prec, &fj * s);
        }
        let len = Float::with_val(prec, len2.sqrt_ref());
        self.count += 1;

        let tf = entry.time.to_f64();
        let bucket = tf.floor();
        if bucket != self.rate_window.0 {
            self.rate_window = (bucket, 0);
        }
        self.rate_window.1 += 1;
        if self.rate_window.1 > MAX_RATE {
            return Err(Error::AccumulationGuard {
                limit: MAX_RATE,
                time: tf,
            });
        }

        let now = entry.time.clone();
        for o in 0..self.pairs.len() {
            let (a, b) = self.pairs[o];
            if a == i || a == j || b == i || b == j {
                self.pending[o] = self.predict(o, &now)?;
            }
        }
        Ok(PreciseEvent {
            time: entry.time,
            pair: (i, j),
            image: entry.image,
            pre_velocities: pre,
            post_velocities: self.v.clone(),
            normal: sep.iter().map(|x| Float::with_val(prec, x / &len)).collect(),
        })
    }

    fn state_at(&self, t: &Float) -> PreciseState {
        let dt = Float::with_val(self.prec, t - &self.t_last);
        PreciseState {
            positions: self
                .q
                .iter()
                .zip(&self.v)
                .map(|(q, v)| Float::with_val(self.prec, q + Float::with_val(self.prec, &dt * v)))
                .collect(),
            velocities: self.v.clone(),
            time: t.clone(),
        }
    }
}

fn dot(a: &[Float], b: &[Float], prec: u32) -> Float {
    let mut s = Float::with_val(prec, 0);
    for (x, y) in a.iter().zip(b) {
        s += Float::with_val(prec, x * y);
    }
    s
}

/// High-precision counterpart of [`super::simulate`].
pub fn simulate_precise(params: &SystemParams, state: &PreciseState, stop: Stop, prec: u32) -> Result<PreciseSegment> {
    stop.check()?;
    params.validate()?;
    let closest = state.to_f64().min_separation(params);
    if closest < 2.0 * params.radius * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter(format!("initial state overlaps: closest centers at {closest}")));
    }
    let mut engine = Engine::new(params, state, prec)?;
    let until = stop
        .max_time
        .map(|t| Float::with_val(prec, &state.time + Float::with_val(prec, t)));
    let cap = stop.max_collisions.unwrap_or(usize::MAX);
    let mut events = Vec::new();
    while events.len() < cap {
        match engine.next_event(until.as_ref())? {
            Some(e) => events.push(e),
            None => break,
        }
    }
    let final_state = match &until {
        Some(u) if events.len() < cap => engine.state_at(u),
        _ => engine.state_at(&engine.t_last.clone()),
    };
    Ok(PreciseSegment {
        params: params.clone(),
        prec,
        initial: PreciseState {
            positions: state.positions.iter().map(|x| Float::with_val(prec, x)).collect(),
            velocities: state.velocities.iter().map(|x| Float::with_val(prec, x)).collect(),
            time: Float::with_val(prec, &state.time),
        },
        events,
        final_state,
    })
}

/// Simulates `n` collisions from a double-precision state at `prec` bits and
/// rounds the result.
pub fn simulate_rounded(params: &SystemParams, state: &PhaseState, n: usize, prec: u32) -> Result<OrbitSegment> {
    let start = PreciseState::from_f64(state, prec);
    Ok(simulate_precise(params, &start, Stop::collisions(n), prec)?.to_orbit_segment())
}
