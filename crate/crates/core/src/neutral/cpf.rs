//! Connecting path formula for unequal masses.
//!
//! For two balls `a`, `b` in the same component of the collision graph, the
//! relative neutral displacement at the end of a segment is a linear
//! combination of the advances, with coefficients built from relative
//! velocities just before and after the collisions and mass fractions.
//!
//! The construction is stated backwards in time, so it is phrased here with
//! "later" and "earlier": the spanning forest collects, scanning from the
//! latest collision back, every collision that joins two components; the path
//! `f_1, ..., f_h` from `a` to `b` runs through that forest over vertices
//! `B_0 = a, ..., B_h = b`; the reference moment (the end of the segment)
//! plays the role of a fictitious edge `f_0 = f_{h+1}` later than everything.
//! Forward collision indices serve as the time order.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{components, UnionFind};
use crate::dynamics::{CollisionEvent, OrbitSegment};
use crate::error::{Error, Result};
use crate::model::{dot, SystemParams};

/// Coefficient vectors `(collision index, Gamma)` of the advances in the
/// connecting path formula for `a`, `b` over the whole segment. Indices are
/// 0-based; a collision may appear twice when it is adjacent to the path at
/// both of its balls.
pub fn cpf_coefficients(segment: &OrbitSegment, a: usize, b: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    cpf_terms(&segment.events, &segment.params, a, b, false)
}

pub(crate) fn cpf_terms(
    events: &[CollisionEvent],
    params: &SystemParams,
    a: usize,
    b: usize,
    faulty: bool,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let n_balls = params.n_balls;
    if a == b || a >= n_balls || b >= n_balls {
        return Err(Error::InvalidParameter(format!("connecting path needs two distinct balls, got {a} and {b}")));
    }
    let d = params.dim;
    let n = events.len();
    let m = &params.masses;

    // Spanning forest, scanning from the latest collision back.
    let mut uf = UnionFind::new(n_balls);
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_balls];
    for l in (0..n).rev() {
        let (i, j) = events[l].pair;
        if uf.union(i, j) {
            adjacency[i].push((j, l));
            adjacency[j].push((i, l));
        }
    }
    let (vertices, path) = forest_path(&adjacency, a, b).ok_or(Error::NotConnectedPair { a, b })?;
    let h = path.len();
    // Time of f_i for i = 0..=h+1 with the reference moment at both ends.
    let t = |i: usize| if i == 0 || i == h + 1 { n } else { path[i - 1] };

    let rel = |e: &CollisionEvent, x: usize, y: usize, post: bool| -> Vec<f64> {
        let v = if post { &e.post_velocities } else { &e.pre_velocities };
        (0..d).map(|c| v[x * d + c] - v[y * d + c]).collect()
    };

    let mut terms = Vec::new();
    for i in 1..=h {
        let e = &events[path[i - 1]];
        let (x, y) = (vertices[i - 1], vertices[i]);
        let (before, after) = (rel(e, x, y, false), rel(e, x, y, true));
        let (prev, here, next) = (t(i - 1), t(i), t(i + 1));
        let gamma = if prev < here && next < here {
            before
        } else if prev > here && next > here {
            after
        } else {
            let total = m[x] + m[y];
            if total == 0.0 {
                return Err(Error::ZeroMassPair { i: x, j: y });
            }
            let (wx, wy) = (m[x] / total, m[y] / total);
            if next < here {
                // Later neighbor before, earlier neighbor after.
                (0..d).map(|c| wx * before[c] + wy * after[c]).collect()
            } else {
                (0..d).map(|c| wx * after[c] + wy * before[c]).collect()
            }
        };
        terms.push((path[i - 1], gamma));
    }

    for (i, &vertex) in vertices.iter().enumerate().take(h + 1) {
        let (lo, hi) = {
            let (s, u) = (t(i), t(i + 1));
            (s.min(u), s.max(u))
        };
        let sign = if t(i) > t(i + 1) { 1.0 } else { -1.0 };
        for (l, e) in events.iter().enumerate() {
            let in_window = if i == 0 || i == h { l > t(i.max(1)) } else { lo < l && l < hi };
            if !in_window {
                continue;
            }
            let other = match e.pair {
                (p, q) if p == vertex => q,
                (p, q) if q == vertex => p,
                _ => continue,
            };
            let total = m[vertex] + m[other];
            if total == 0.0 {
                return Err(Error::ZeroMassPair { i: vertex, j: other });
            }
            let factor = if faulty { m[vertex] } else { m[other] } / total;
            let (before, after) = (rel(e, vertex, other, false), rel(e, vertex, other, true));
            let gamma = (0..d).map(|c| sign * factor * (after[c] - before[c])).collect();
            terms.push((l, gamma));
        }
    }
    Ok(terms)
}

/// Vertices and edge labels of the unique forest path from `a` to `b`.
fn forest_path(adjacency: &[Vec<(usize, usize)>], a: usize, b: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let n = adjacency.len();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut stack = vec![a];
    seen[a] = true;
    while let Some(x) = stack.pop() {
        for &(y, l) in &adjacency[x] {
            if !seen[y] {
                seen[y] = true;
                parent[y] = Some((x, l));
                stack.push(y);
            }
        }
    }
    if !seen[b] {
        return None;
    }
    let mut vertices = vec![b];
    let mut edges = Vec::new();
    let mut x = b;
    while x != a {
        let (p, l) = parent[x].expect("visited vertex has a parent");
        vertices.push(p);
        edges.push(l);
        x = p;
    }
    vertices.reverse();
    edges.reverse();
    Some((vertices, edges))
}

/// Discrepancy between the propagated displacement and the connecting path
/// formula, maximized over all connected pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpfResidual {
    pub absolute: f64,
    /// `absolute / |W|`.
    pub relative: f64,
}

/// Propagates `w` with the advances `alphas` and compares, for every pair of
/// connected balls, the final relative displacement with the formula.
pub fn cpf_verify(segment: &OrbitSegment, w: &[f64], alphas: &[f64]) -> Result<CpfResidual> {
    cpf_verify_impl(segment, w, alphas, false)
}

pub(crate) fn cpf_verify_impl(segment: &OrbitSegment, w: &[f64], alphas: &[f64], faulty: bool) -> Result<CpfResidual> {
    let p = &segment.params;
    let d = p.dim;
    let end = super::propagate(segment, w, alphas);
    let comps = components(&segment.symbols(), p.n_balls);
    let mut worst: f64 = 0.0;
    for a in 0..p.n_balls {
        for b in a + 1..p.n_balls {
            if !comps.connected(a, b) {
                continue;
            }
            let mut rhs = vec![0.0; d];
            for (l, g) in cpf_terms(&segment.events, p, a, b, faulty)? {
                for c in 0..d {
                    rhs[c] += alphas[l] * g[c];
                }
            }
            let diff: Vec<f64> = (0..d).map(|c| end[a * d + c] - end[b * d + c] - rhs[c]).collect();
            worst = worst.max(dot(&diff, &diff).sqrt());
        }
    }
    let scale = dot(w, w).sqrt();
    Ok(CpfResidual {
        absolute: worst,
        relative: if scale > 0.0 { worst / scale } else { worst },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, Stop};
    use crate::model::PhaseState;

    #[test]
    fn single_collision_uses_outgoing_velocities() {
        let p = SystemParams::new(2, 2, 10.0, 0.5, vec![1.0, 3.0]);
        let s = PhaseState::new(vec![0.0, 0.0, 3.0, 0.2], vec![1.0, 0.0, -1.0 / 3.0, 0.0], 0.0);
        let seg = simulate(&p, &s, Stop::collisions(1)).unwrap();
        let terms = cpf_coefficients(&seg, 0, 1).unwrap();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].0, 0);
        assert_eq!(terms[0].1, seg.events[0].relative_post(2));
    }

    #[test]
    fn unconnected_pair_is_rejected() {
        let p = SystemParams::equal_masses(3, 2, 10.0, 0.5);
        let s = PhaseState::new(vec![0.0, 0.0, 3.0, 0.0, 0.0, 5.0], vec![1.0, 0.0, -1.0, 0.0, 0.0, 0.0], 0.0);
        let seg = simulate(&p, &s, Stop::collisions(1)).unwrap();
        assert!(matches!(cpf_coefficients(&seg, 0, 2), Err(Error::NotConnectedPair { a: 0, b: 2 })));
    }
}
