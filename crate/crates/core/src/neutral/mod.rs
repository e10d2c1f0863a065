//! Neutral spaces of orbit segments.
//!
//! A neutral vector is a perturbation `W = (dq_1, ..., dq_N)` of the initial
//! positions, velocities held fixed, that leaves the whole velocity history
//! unchanged to first order. Along a neutral perturbation every collision is
//! merely shifted in time by its *advance* `alpha_k`, and the perturbation
//! itself follows the same reflection law as the velocities:
//! `dq_i <- dq_i + alpha_k (v_i^k - v_i^{k-1})` for the colliding balls.
//!
//! Three independent computations are provided:
//! * [`neutral_direct`] restricts the space collision by collision;
//! * [`advance_system`] solves the linear system for the advances built from
//!   the connecting path formula (see [`cpf`]) and converts its solution
//!   dimension to `dim N = dim * P_Sigma + dim{alpha}`;
//! * [`jacobian::neutral_jacobian`] differentiates the velocity history of a
//!   high-precision re-simulation by central differences.

pub mod cpf;
pub mod jacobian;
pub mod synthetic;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{component_count, UnionFind};
use crate::dynamics::{sub, OrbitSegment};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::dot;

pub use cpf::{cpf_coefficients, cpf_verify, CpfResidual};
pub use jacobian::{neutral_jacobian, JacobianOptions, JacobianReport};

/// Default relative singular-value threshold for double-precision kernels.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Orthonormal basis of the neutral space and the advances of each basis vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralBasis {
    /// Basis vectors of length `N * dim`.
    pub basis: Vec<Vec<f64>>,
    /// `advances[b][k]` is `alpha_{k+1}` of basis vector `b`.
    pub advances: Vec<Vec<f64>>,
    pub dim: usize,
}

impl NeutralBasis {
    /// Euclidean distance from `w` to the span of the basis.
    pub fn distance(&self, w: &[f64]) -> f64 {
        let mut r = w.to_vec();
        for b in &self.basis {
            let c = dot(b, w);
            for (x, y) in r.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        dot(&r, &r).sqrt()
    }

    /// Advances of an arbitrary vector of the span.
    pub fn advances_of(&self, w: &[f64]) -> Vec<f64> {
        let n = self.advances.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for (b, a) in self.basis.iter().zip(&self.advances) {
            let c = dot(b, w);
            for (x, y) in out.iter_mut().zip(a) {
                *x += c * y;
            }
        }
        out
    }
}

/// Restricts the full space `R^(N*dim)` collision by collision.
///
/// At collision `k` the relative displacement `dq_i - dq_j` must be parallel
/// to the incoming relative velocity, which removes the `dim - 1` components
/// orthogonal to it. The surviving space is carried as an orthonormal basis
/// together with the displacement each basis vector has reached, so every
/// constraint is imposed on current data rather than on a long product of
/// collision maps.
pub fn neutral_direct(segment: &OrbitSegment, rank_tol: f64) -> Result<NeutralBasis> {
    let p = &segment.params;
    let d = p.dim;
    let coords = p.coords();
    let mut basis = DMatrix::<f64>::identity(coords, coords);
    let mut disp = basis.clone();
    let mut alpha = DMatrix::<f64>::zeros(0, coords);

    for (k, e) in segment.events.iter().enumerate() {
        let (i, j) = e.pair;
        let dv = e.relative_pre(d);
        let speed2 = dot(&dv, &dv);
        if speed2 == 0.0 {
            return Err(Error::SingularSegment {
                index: k + 1,
                reason: "zero relative velocity".into(),
            });
        }
        let m = disp.ncols();
        let rel = disp.rows(i * d, d) - disp.rows(j * d, d);
        let u = nalgebra::DVector::from_column_slice(&dv) / speed2.sqrt();
        let along = u.transpose() * &rel;
        let ortho = &rel - &u * &along;
        let scale = disp.norm().max(1.0);
        let z = linalg::kernel(&ortho, rank_tol * scale);
        basis = &basis * &z;
        disp = &disp * &z;
        alpha = &alpha * &z;
        let row = (&along * &z) / speed2.sqrt();
        let mut grown = DMatrix::<f64>::zeros(alpha.nrows() + 1, z.ncols());
        grown.view_mut((0, 0), (alpha.nrows(), z.ncols())).copy_from(&alpha);
        grown.row_mut(alpha.nrows()).copy_from(&row);
        alpha = grown;
        for ball in [i, j] {
            for c in 0..d {
                let jump = e.post_velocities[ball * d + c] - e.pre_velocities[ball * d + c];
                let mut r = disp.row_mut(ball * d + c);
                r += &row * jump;
            }
        }
        log::trace!("collision {}: neutral dimension {} -> {}", k + 1, m, z.ncols());
    }

    let dim = basis.ncols();
    Ok(NeutralBasis {
        basis: (0..dim).map(|c| basis.column(c).iter().copied().collect()).collect(),
        advances: (0..dim).map(|c| alpha.column(c).iter().copied().collect()).collect(),
        dim,
    })
}

/// Advances of `w` along the segment and the largest violation of the
/// parallelism condition (relative to `|w|`), without assuming `w` neutral.
pub fn advances_along(segment: &OrbitSegment, w: &[f64]) -> (Vec<f64>, f64) {
    let d = segment.params.dim;
    let mut dq = w.to_vec();
    let mut alphas = Vec::with_capacity(segment.len());
    let mut worst: f64 = 0.0;
    let scale = dot(w, w).sqrt().max(f64::MIN_POSITIVE);
    for e in &segment.events {
        let (i, j) = e.pair;
        let dv = e.relative_pre(d);
        let rel = sub(&dq[i * d..(i + 1) * d], &dq[j * d..(j + 1) * d]);
        let a = dot(&rel, &dv) / dot(&dv, &dv);
        let off: f64 = rel.iter().zip(&dv).map(|(r, v)| (r - a * v).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(off / scale);
        for ball in [i, j] {
            for c in 0..d {
                dq[ball * d + c] += a * (e.post_velocities[ball * d + c] - e.pre_velocities[ball * d + c]);
            }
        }
        alphas.push(a);
    }
    (alphas, worst)
}

/// Carries `w` through the segment with prescribed advances and returns the
/// displacement after the last collision.
pub fn propagate(segment: &OrbitSegment, w: &[f64], alphas: &[f64]) -> Vec<f64> {
    propagate_prefix(segment, segment.len(), w, alphas)
}

pub(crate) fn propagate_prefix(segment: &OrbitSegment, upto: usize, w: &[f64], alphas: &[f64]) -> Vec<f64> {
    let d = segment.params.dim;
    let mut dq = w.to_vec();
    for (e, a) in segment.events[..upto].iter().zip(alphas) {
        for ball in [e.pair.0, e.pair.1] {
            for c in 0..d {
                dq[ball * d + c] += a * (e.post_velocities[ball * d + c] - e.pre_velocities[ball * d + c]);
            }
        }
    }
    dq
}

/// The homogeneous system for the advances.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvanceSystem {
    /// `dim` rows per equation, one column per collision.
    pub matrix: DMatrix<f64>,
    /// 1-based indices of the closing collisions that produced the equations.
    pub closing: Vec<usize>,
    pub p_sigma: usize,
    pub dim_alpha: usize,
    pub dim_n: usize,
}

impl AdvanceSystem {
    pub fn equations(&self) -> usize {
        self.closing.len()
    }

    /// Largest residual `|E alpha|` relative to `|alpha|`.
    pub fn residual(&self, alphas: &[f64]) -> f64 {
        let a = nalgebra::DVector::from_column_slice(alphas);
        let norm = a.norm().max(f64::MIN_POSITIVE);
        (&self.matrix * a).amax() / norm
    }
}

/// Builds and solves the advance equations.
///
/// Every collision whose balls are already connected by the earlier
/// collisions closes a cycle. For it the connecting path formula over the
/// earlier collisions expresses the relative displacement just before the
/// collision; requiring it to equal `alpha_k` times the incoming relative
/// velocity gives one vector equation.
pub fn advance_system(segment: &OrbitSegment, rank_tol: f64) -> Result<AdvanceSystem> {
    advance_system_impl(segment, rank_tol, false)
}

pub(crate) fn advance_system_impl(segment: &OrbitSegment, rank_tol: f64, faulty: bool) -> Result<AdvanceSystem> {
    let p = &segment.params;
    let d = p.dim;
    let n = segment.len();
    let mut uf = UnionFind::new(p.n_balls);
    let mut closing = Vec::new();
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    for (k, e) in segment.events.iter().enumerate() {
        let (i, j) = e.pair;
        if uf.find(i) == uf.find(j) {
            let terms = cpf::cpf_terms(&segment.events[..k], p, i, j, faulty)?;
            let mut block = vec![0.0; d * n];
            for (l, g) in terms {
                for c in 0..d {
                    block[c * n + l] += g[c];
                }
            }
            let dv = e.relative_pre(d);
            for c in 0..d {
                block[c * n + k] -= dv[c];
            }
            blocks.push(block);
            closing.push(k + 1);
        } else {
            uf.union(i, j);
        }
    }
    let mut matrix = DMatrix::<f64>::zeros(d * blocks.len(), n);
    for (b, block) in blocks.iter().enumerate() {
        for c in 0..d {
            for l in 0..n {
                matrix[(b * d + c, l)] = block[c * n + l];
            }
        }
    }
    let dim_alpha = n - linalg::rank(&matrix, rank_tol);
    let p_sigma = component_count(&segment.symbols(), p.n_balls);
    Ok(AdvanceSystem {
        matrix,
        closing,
        p_sigma,
        dim_alpha,
        dim_n: d * p_sigma + dim_alpha,
    })
}

/// Outcome of the sufficiency decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sufficiency {
    pub sufficient: bool,
    pub dim_direct: usize,
    pub dim_cpf: usize,
    pub dim_alpha: usize,
    pub p_sigma: usize,
    pub equations: usize,
}

/// A segment is sufficient when its neutral space is no larger than the
/// flow direction plus the uniform translations (`dim + 1`).
pub fn is_sufficient(segment: &OrbitSegment, rank_tol: f64) -> Result<Sufficiency> {
    let direct = neutral_direct(segment, rank_tol)?;
    let system = advance_system(segment, rank_tol)?;
    if direct.dim != system.dim_n {
        let sweep: Vec<String> = [1e-6, 1e-8, 1e-10, 1e-12]
            .iter()
            .map(|&t| {
                let a = neutral_direct(segment, t).map(|b| b.dim.to_string()).unwrap_or_else(|e| e.to_string());
                let b = advance_system(segment, t).map(|s| s.dim_n.to_string()).unwrap_or_else(|e| e.to_string());
                format!("tol {t:e}: direct {a}, cpf {b}")
            })
            .collect();
        return Err(Error::MethodDisagreement(format!(
            "direct dimension {} vs advance-system dimension {} ({})",
            direct.dim,
            system.dim_n,
            sweep.join("; ")
        )));
    }
    Ok(Sufficiency {
        sufficient: direct.dim == segment.params.dim + 1,
        dim_direct: direct.dim,
        dim_cpf: system.dim_n,
        dim_alpha: system.dim_alpha,
        p_sigma: system.p_sigma,
        equations: system.equations(),
    })
}
