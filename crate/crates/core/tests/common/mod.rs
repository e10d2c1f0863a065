//! Oracles shared by the integration tests. Everything here is written
//! independently of the library code it checks.
#![allow(dead_code)]

pub type Pair = (usize, usize);

/// Number of connected components of the graph on `0..n` with edges `edges`,
/// by depth-first search.
pub fn components_dfs(edges: &[Pair], n: usize) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    count
}

/// Largest number of consecutive disjoint blocks of `sigma`, each spanning a
/// connected graph on all `n` vertices, by trying every set of cut points.
pub fn richness_by_cuts(sigma: &[Pair], n: usize) -> usize {
    let len = sigma.len();
    if len == 0 {
        return 0;
    }
    let mut best = 0;
    // Bit k set: a block ends after position k. The last block always ends at
    // `len`; collisions after the final cut may be left over only by
    // extending the last block, which keeps it connected.
    for cuts in 0u32..(1 << (len - 1)) {
        let mut start = 0;
        let mut blocks = 0;
        let mut ok = true;
        for end in 1..=len {
            if end == len || cuts & (1 << (end - 1)) != 0 {
                if components_dfs(&sigma[start..end], n) != 1 {
                    ok = false;
                    break;
                }
                blocks += 1;
                start = end;
            }
        }
        if ok {
            best = best.max(blocks);
        }
    }
    best
}

pub fn pairs(n: usize) -> Vec<Pair> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Depth-first walk over every sequence up to `max_len` whose balls appear in
/// order of first use (0 first, then 1, ...). Each node extends the exact
/// maximum `best[end]` = most connected blocks exactly covering `sigma[..end]`
/// and compares the running maximum with the library's greedy count.
struct Walk {
    n: usize,
    max_len: usize,
    sigma: Vec<Pair>,
    best: Vec<Option<usize>>,
    checked: u64,
    mismatch: Option<Vec<Pair>>,
}

impl Walk {
    fn run(n: usize, max_len: usize) -> Result<u64, Vec<Pair>> {
        let mut w = Walk {
            n,
            max_len,
            sigma: Vec::new(),
            best: vec![Some(0)],
            checked: 0,
            mismatch: None,
        };
        w.visit(0);
        match w.mismatch {
            Some(s) => Err(s),
            None => Ok(w.checked),
        }
    }

    fn visit(&mut self, used: usize) {
        let exact = self.best.iter().flatten().copied().max().unwrap_or(0);
        if self.mismatch.is_some() {
            return;
        }
        if hardball::combinatorics::richness(&self.sigma, self.n) != exact {
            self.mismatch = Some(self.sigma.clone());
            return;
        }
        self.checked += 1;
        if self.sigma.len() == self.max_len {
            return;
        }
        for (i, j) in pairs(self.n) {
            // Canonical: a pair may introduce only the next unused labels.
            let fresh = (i >= used) as usize + (j >= used) as usize;
            let ok = match fresh {
                0 => true,
                1 => j == used,
                _ => i == used && j == used + 1,
            };
            if !ok {
                continue;
            }
            self.sigma.push((i, j));
            let end = self.sigma.len();
            let mut next = None;
            let mut parent: Vec<usize> = (0..self.n).collect();
            let mut sets = self.n;
            for start in (0..end).rev() {
                let (a, b) = self.sigma[start];
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                    sets -= 1;
                }
                if sets == 1 {
                    if let Some(prev) = self.best[start] {
                        next = next.max(Some(prev + 1));
                    }
                }
            }
            self.best.push(next);
            self.visit(used.max(j + 1));
            self.best.pop();
            self.sigma.pop();
        }
    }
}

fn root(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        x = parent[x];
    }
    x
}

/// Compares the library's richness with the exact maximum on every
/// sequence of at most `max_len` collisions of `n` balls, up to relabeling.
/// Returns the number of sequences checked or the first mismatch.
pub fn exhaustive_richness_check(n: usize, max_len: usize) -> Result<u64, Vec<Pair>> {
    Walk::run(n, max_len)
}

pub fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

use hardball::dynamics::precise::{simulate_precise, PreciseState};
use hardball::dynamics::{simulate, Stop};
use hardball::model::{PhaseState, SystemParams};
use rug::Float;

/// Central finite difference of the time-`t_end` flow map along `xi`
/// (`[dq, dv]`), from two high-precision runs. Returns `None` if either run
/// sees a different collision sequence than `expected`.
pub fn flow_derivative(
    params: &SystemParams,
    state: &PhaseState,
    xi: &[f64],
    t_end: f64,
    expected: &[Pair],
) -> Option<Vec<f64>> {
    let bits = 512;
    let h = Float::with_val(bits, Float::i_exp(1, -120));
    let nd = params.coords();
    let shifted = |sign: i32| {
        let mut s = PreciseState::from_f64(state, bits);
        for k in 0..nd {
            s.positions[k] += Float::with_val(bits, &h * xi[k]) * sign;
            s.velocities[k] += Float::with_val(bits, &h * xi[nd + k]) * sign;
        }
        let seg = simulate_precise(params, &s, Stop::time(t_end - state.time), bits).ok()?;
        (seg.symbols() == expected).then_some(seg.final_state)
    };
    let (plus, minus) = (shifted(1)?, shifted(-1)?);
    let two_h = Float::with_val(bits, &h * 2);
    let diff = |a: &Float, b: &Float| (Float::with_val(bits, a - b) / &two_h).to_f64();
    let mut out: Vec<f64> = plus.positions.iter().zip(&minus.positions).map(|(a, b)| diff(a, b)).collect();
    out.extend(plus.velocities.iter().zip(&minus.velocities).map(|(a, b)| diff(a, b)));
    Some(out)
}

/// A time strictly between collision `n` and `n + 1` of the orbit of `state`.
pub fn time_after(params: &SystemParams, state: &PhaseState, n: usize) -> f64 {
    let seg = simulate(params, state, Stop::collisions(n + 1)).unwrap();
    0.5 * (seg.events[n - 1].time + seg.events[n].time)
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}
