//! Bundled invariant suites, run by `hardball selftest`.
//!
//! A [`Fault`] can be injected to check that the suites actually detect the
//! defects they guard against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::combinatorics::{richness, threshold_c, Pair};
use crate::dynamics::precise::{bits_for_collisions, simulate_precise, PreciseState};
use crate::dynamics::{conserved, simulate_with, SimOptions, Stop};
use crate::error::Result;
use crate::model::{sample_initial_state, SystemParams};
use crate::neutral::cpf::cpf_verify_impl;
use crate::neutral::synthetic::{path_with_massless_ends, tree_with_even_runs};
use crate::neutral::{advance_system_impl, neutral_direct, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the momentum exchange in the collision law.
    ReflectionSign,
    /// Use the wrong ball's mass in the connecting path formula.
    CpfMassFactor,
}

impl std::str::FromStr for Fault {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflection-sign" => Ok(Fault::ReflectionSign),
            "cpf-mass-factor" => Ok(Fault::CpfMassFactor),
            other => Err(crate::Error::Config(format!("unknown fault `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const SUITES: [&str; 6] = ["conservation", "reversal", "cpf-identity", "example-i", "example-ii", "richness"];

pub fn run_all(fault: Option<Fault>) -> Vec<SuiteResult> {
    SUITES.iter().map(|name| run_suite(name, fault)).collect()
}

pub fn run_suite(name: &'static str, fault: Option<Fault>) -> SuiteResult {
    let outcome = match name {
        "conservation" => conservation(fault),
        "reversal" => reversal(),
        "cpf-identity" => cpf_identity(fault),
        "example-i" => example_one(),
        "example-ii" => example_two(),
        "richness" => richness_oracle(),
        _ => Ok((false, format!("no suite named `{name}`"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    SuiteResult { name, passed, detail }
}

type Outcome = Result<(bool, String)>;

fn conservation(fault: Option<Fault>) -> Outcome {
    let params = SystemParams::new(3, 2, 1.0, 0.15, vec![1.0, 2.3, 0.7]);
    let state = sample_initial_state(&params, 1)?;
    let mut opts = SimOptions::default();
    if fault == Some(Fault::ReflectionSign) {
        opts.reflection_sign = -1.0;
    }
    let seg = simulate_with(&params, &state, Stop::collisions(5000), opts)?;
    let mut drift: f64 = 0.0;
    let mut momentum: f64 = 0.0;
    for e in &seg.events {
        let (h, p) = crate::dynamics::conserved_velocities(&e.post_velocities, &params);
        drift = drift.max((h - 0.5).abs());
        momentum = momentum.max(p.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    let (h, _) = conserved(&seg.final_state, &params);
    drift = drift.max((h - 0.5).abs());
    let residue = seg.contact_residues().into_iter().fold(0.0, f64::max);
    let ok = drift <= 1e-9 && momentum <= 1e-9 && residue <= 1e-10;
    Ok((
        ok,
        format!("{} events, |H - 1/2| {drift:.1e}, |P| {momentum:.1e}, contact {residue:.1e}", seg.len()),
    ))
}

fn reversal() -> Outcome {
    let n = 200;
    let bits = bits_for_collisions(n);
    let mut worst: f64 = 0.0;
    for (seed, n_balls) in [(1u64, 2usize), (2, 3)] {
        let params = SystemParams::new(n_balls, 2, 1.0, 0.12, (0..n_balls).map(|k| 1.0 + 0.3 * k as f64).collect());
        let start = PreciseState::from_f64(&sample_initial_state(&params, seed)?, bits);
        let fwd = simulate_precise(&params, &start, Stop::collisions(n), bits)?;
        let back = simulate_precise(&params, &fwd.final_state.reverse(), Stop::collisions(n), bits)?;
        let mut expected = fwd.symbols();
        expected.reverse();
        if back.symbols() != expected {
            return Ok((false, format!("reversed symbolic sequence differs for N = {n_balls}")));
        }
        // Time-reversal returns to the start only after flying the same total time.
        let duration = rug::Float::with_val(bits, &fwd.final_state.time - &start.time);
        let tail = rug::Float::with_val(bits, &duration - &(rug::Float::with_val(bits, &back.final_state.time - &fwd.final_state.time)));
        for (k, q) in back.final_state.positions.iter().enumerate() {
            let v = &back.final_state.velocities[k];
            let end = rug::Float::with_val(bits, q + &rug::Float::with_val(bits, v * &tail));
            let err = rug::Float::with_val(bits, &end - &start.positions[k]).to_f64().abs();
            worst = worst.max(err);
        }
    }
    Ok((worst <= 1e-6, format!("{n} collisions there and back, position error {worst:.1e}")))
}

fn cpf_identity(fault: Option<Fault>) -> Outcome {
    let faulty = fault == Some(Fault::CpfMassFactor);
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for seed in 0..6u64 {
        let n_balls = 2 + (seed % 2) as usize;
        let params = SystemParams::new(n_balls, 2, 1.0, 0.15, (0..n_balls).map(|k| 0.6 + 0.7 * k as f64).collect());
        let state = sample_initial_state(&params, seed)?;
        let seg = simulate_with(&params, &state, Stop::collisions(12), SimOptions::default())?;
        let basis = neutral_direct(&seg, DEFAULT_RANK_TOL)?;
        for (w, a) in basis.basis.iter().zip(&basis.advances) {
            worst = worst.max(cpf_verify_impl(&seg, w, a, faulty)?.relative);
        }
        if advance_system_impl(&seg, DEFAULT_RANK_TOL, faulty)?.dim_n != basis.dim {
            mismatched += 1;
        }
    }
    Ok((
        worst <= 1e-9 && mismatched == 0,
        format!("max relative residual {worst:.1e}, {mismatched} dimension mismatches"),
    ))
}

fn example_one() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for n_balls in [3usize, 4, 5] {
        let seg = tree_with_even_runs(n_balls, 2, 3, n_balls as u64);
        let direct = neutral_direct(&seg, DEFAULT_RANK_TOL)?.dim;
        let system = advance_system_impl(&seg, DEFAULT_RANK_TOL, false)?;
        ok &= system.dim_alpha == n_balls - 1 && direct == 2 + n_balls - 1 && system.dim_n == direct;
        notes.push(format!("N={n_balls}: dim alpha {}, dim N {direct}", system.dim_alpha));
    }
    Ok((ok, notes.join("; ")))
}

fn example_two() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for n_balls in [3usize, 4] {
        let seg = path_with_massless_ends(n_balls, 2, 6, 7 + n_balls as u64);
        let direct = neutral_direct(&seg, DEFAULT_RANK_TOL)?.dim;
        ok &= direct >= 2 + 2 && direct != 2 + 1;
        notes.push(format!("N={n_balls}: dim N {direct}"));
    }
    Ok((ok, notes.join("; ")))
}

/// Largest number of consecutive connected blocks, by trying every cut.
fn richness_brute(sigma: &[Pair], n: usize) -> usize {
    fn connected(block: &[Pair], n: usize) -> bool {
        crate::combinatorics::component_count(block, n) == 1
    }
    let len = sigma.len();
    // best[k] = max blocks covering sigma[..k] exactly with a connected last block.
    let mut best = vec![None::<usize>; len + 1];
    best[0] = Some(0);
    for end in 1..=len {
        for start in 0..end {
            if let Some(b) = best[start] {
                if connected(&sigma[start..end], n) {
                    best[end] = best[end].max(Some(b + 1));
                }
            }
        }
    }
    // Trailing collisions may be absorbed by the last block.
    best.iter().flatten().copied().max().unwrap_or(0)
}

fn richness_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let n = rng.random_range(2..=4usize);
        let len = rng.random_range(0..=10usize);
        let sigma: Vec<Pair> = (0..len)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i.min(j), i.max(j))
            })
            .collect();
        let (g, b) = (richness(&sigma, n), richness_brute(&sigma, n));
        if g != b {
            return Ok((false, format!("greedy {g} vs exhaustive {b} on {sigma:?}")));
        }
    }
    for n in 3..=8u32 {
        let factorial: u64 = (1..=n as u64).product();
        let expected = num_rational::BigRational::new((3 * factorial).into(), (1u64 << (n - 1)).into());
        if threshold_c(n as usize) != expected {
            return Ok((false, format!("C({n}) = {}", threshold_c(n as usize))));
        }
    }
    Ok((true, "500 random sequences, C(3..=8)".into()))
}
