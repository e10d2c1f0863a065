//! Collision graphs of symbolic sequences: connectivity, richness, the
//! richness thresholds `C(N)`, and the Property (A) check on recorded schemes.
//!
//! Pairs are 0-based `(i, j)` with `i < j`; reported collision indices are
//! 1-based.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::dynamics::OrbitSegment;

pub type Pair = (usize, usize);

/// Disjoint-set forest over `0..n`.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            sets: n,
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true if the call merged two sets.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        self.sets -= 1;
        true
    }

    pub(crate) fn sets(&self) -> usize {
        self.sets
    }
}

/// Connected components of a collision graph on the vertex set `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// `label[i]` is the smallest vertex of `i`'s component.
    pub label: Vec<usize>,
    pub count: usize,
}

impl Components {
    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.label[a] == self.label[b]
    }

    /// Components as sorted vertex lists, ordered by smallest member.
    pub fn parts(&self) -> Vec<Vec<usize>> {
        let mut parts: Vec<Vec<usize>> = Vec::new();
        for (v, &l) in self.label.iter().enumerate() {
            match parts.iter_mut().find(|p| p[0] == l) {
                Some(p) => p.push(v),
                None => parts.push(vec![v]),
            }
        }
        parts
    }
}

pub fn components(sigma: &[Pair], n: usize) -> Components {
    let mut uf = UnionFind::new(n);
    for &(i, j) in sigma {
        uf.union(i, j);
    }
    let label = (0..n).map(|v| uf.find(v)).collect();
    Components { label, count: uf.sets() }
}

/// Number of components `P_Sigma`.
pub fn component_count(sigma: &[Pair], n: usize) -> usize {
    components(sigma, n).count
}

/// Largest number of consecutive disjoint blocks of `sigma` whose collision
/// graphs each connect all `n` balls.
///
/// Closing a block as soon as it becomes connected is optimal: any
/// decomposition can be rearranged so that its first block ends no later than
/// the greedy one without losing a block.
pub fn richness(sigma: &[Pair], n: usize) -> usize {
    if n <= 1 {
        return sigma.len();
    }
    let mut blocks = 0;
    let mut uf = UnionFind::new(n);
    for &(i, j) in sigma {
        uf.union(i, j);
        if uf.sets() == 1 {
            blocks += 1;
            uf = UnionFind::new(n);
        }
    }
    blocks
}

/// The richness threshold `C(N)`: `C(2) = 1`, `C(N) = (N/2) max(C(N-1), 3)`.
///
/// # Panics
/// If `n < 2`.
pub fn threshold_c(n: usize) -> BigRational {
    assert!(n >= 2, "C(N) is defined for N >= 2");
    let three = BigRational::from_integer(BigInt::from(3));
    let mut c = BigRational::one();
    for k in 3..=n {
        let m = if c > three { c.clone() } else { three.clone() };
        c = BigRational::new(BigInt::from(k), BigInt::from(2)) * m;
    }
    c
}

/// `ceil(C(N))`, the richness demanded by default.
pub fn required_richness(n: usize) -> usize {
    threshold_c(n).ceil().to_integer().to_usize().expect("C(N) fits in usize")
}

/// The discrete data `(Sigma, A, tau)` of a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicScheme {
    pub sigma: Vec<Pair>,
    pub images: Vec<Vec<i64>>,
    /// `tau_k = t_k - t_{k-1}`.
    pub taus: Vec<f64>,
}

impl SymbolicScheme {
    pub fn from_segment(segment: &OrbitSegment) -> Self {
        Self {
            sigma: segment.symbols(),
            images: segment.images(),
            taus: segment.time_slots(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Comparison {
    Exact,
    /// `|tau_l + sum tau_j| <= eps * sum |tau_j|` counts as equality.
    Relative(f64),
}

impl Default for Comparison {
    fn default() -> Self {
        Comparison::Relative(1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropertyA {
    Holds,
    /// 1-based collision indices `k < l`.
    Violated { k: usize, l: usize },
}

impl PropertyA {
    pub fn holds(&self) -> bool {
        matches!(self, PropertyA::Holds)
    }
}

/// Looks for `k < l` with `sigma_k = sigma_l`, `a_k = a_l`, every collision in
/// between disjoint from `sigma_k`, and `tau_l = -(tau_{k+1} + ... + tau_{l-1})`.
/// Returns the first such pair in lexicographic order.
pub fn check_property_a(scheme: &SymbolicScheme, cmp: Comparison) -> PropertyA {
    let n = scheme.sigma.len();
    for k in 0..n {
        let (a, b) = scheme.sigma[k];
        let mut between = 0.0;
        let mut scale = 0.0;
        for l in k + 1..n {
            let s = scheme.sigma[l];
            if s == scheme.sigma[k] && scheme.images[l] == scheme.images[k] {
                let lhs = scheme.taus[l] + between;
                let equal = match cmp {
                    Comparison::Exact => lhs == 0.0,
                    Comparison::Relative(eps) => lhs.abs() <= eps * (scale + scheme.taus[l].abs()),
                };
                if equal {
                    return PropertyA::Violated { k: k + 1, l: l + 1 };
                }
            }
            if s.0 == a || s.0 == b || s.1 == a || s.1 == b {
                break;
            }
            between += scheme.taus[l];
            scale += scheme.taus[l].abs();
        }
    }
    PropertyA::Holds
}

/// Per-segment combinatorial record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub n: usize,
    pub p_sigma: usize,
    pub richness: usize,
    pub property_a: bool,
}

pub fn summarize(segment: &OrbitSegment) -> SchemeSummary {
    let sigma = segment.symbols();
    let n_balls = segment.params.n_balls;
    SchemeSummary {
        n: sigma.len(),
        p_sigma: component_count(&sigma, n_balls),
        richness: richness(&sigma, n_balls),
        property_a: check_property_a(&SymbolicScheme::from_segment(segment), Comparison::default()).holds(),
    }
}
