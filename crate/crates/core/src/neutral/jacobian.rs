//! Finite-difference oracle for the neutral space.
//!
//! The velocity history `(v^1, ..., v^n)` is differentiated with respect to
//! the `N * dim` initial positions by central differences of high-precision
//! re-simulations. The Jacobian of a chaotic history has singular values
//! spread over many orders of magnitude (its largest grow like the product of
//! the collision expansion factors), so the re-simulation precision, the step
//! and the rank threshold are all chosen far below double precision.

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::dynamics::precise::{simulate_precise, PreciseSegment, PreciseState};
use crate::dynamics::{OrbitSegment, Stop};
use crate::error::{Error, Result};
use crate::linalg::mp_singular_values;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianOptions {
    /// Working precision; `None` picks `384 + 24 n` bits.
    pub bits: Option<u32>,
    /// Finite-difference step as a power of two; `None` picks `-bits/3`.
    pub step_exp: Option<i32>,
    /// Singular values below `rank_tol * sigma_max` count as zero.
    pub rank_tol: f64,
}

impl Default for JacobianOptions {
    fn default() -> Self {
        Self {
            bits: None,
            step_exp: None,
            rank_tol: 1e-50,
        }
    }
}

impl JacobianOptions {
    pub fn bits_for(&self, n: usize) -> u32 {
        self.bits.unwrap_or(384 + 24 * n as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    /// Kernel dimension of the derivative of the full velocity history.
    pub dim_history: usize,
    /// Kernel dimension of the derivative of the final velocities only.
    pub dim_endpoint: usize,
    /// `log10` of the singular values of the history Jacobian, descending.
    pub log10_singular_values: Vec<f64>,
    pub bits: u32,
}

/// Kernel dimension of the velocity-history Jacobian of the segment.
///
/// The segment's initial state is re-simulated at high precision; its
/// collision scheme must match the recorded one, and every probe must keep
/// it, otherwise [`Error::SchemeChanged`] is returned.
pub fn neutral_jacobian(segment: &OrbitSegment, opts: &JacobianOptions) -> Result<JacobianReport> {
    let p = &segment.params;
    let n = segment.len();
    let coords = p.coords();
    let bits = opts.bits_for(n);
    let step_exp = opts.step_exp.unwrap_or(-(bits as i32) / 3);
    let base_state = PreciseState::from_f64(&segment.initial, bits);
    let run = |state: &PreciseState| simulate_precise(p, state, Stop::collisions(n), bits);

    let base = run(&base_state)?;
    if let Some(k) = first_mismatch(&base, &segment.symbols(), &segment.images()) {
        return Err(Error::SingularSegment {
            index: k,
            reason: "high-precision re-simulation does not reproduce the recorded scheme".into(),
        });
    }
    let symbols = base.symbols();
    let images = base.images();

    let h = Float::with_val(bits, Float::i_exp(1, step_exp));
    let two_h = Float::with_val(bits, &h * 2u32);
    let mut history_cols: Vec<Vec<Float>> = Vec::with_capacity(coords);
    let mut endpoint_cols: Vec<Vec<Float>> = Vec::with_capacity(coords);
    for c in 0..coords {
        let probe = |sign: i32| -> Result<PreciseSegment> {
            let mut s = base_state.clone();
            if sign > 0 {
                s.positions[c] += &h;
            } else {
                s.positions[c] -= &h;
            }
            let seg = run(&s)?;
            if let Some(k) = first_mismatch(&seg, &symbols, &images) {
                return Err(Error::SchemeChanged { index: k });
            }
            Ok(seg)
        };
        let plus = probe(1)?;
        let minus = probe(-1)?;
        let mut col = Vec::with_capacity(n * coords);
        for (ep, em) in plus.events.iter().zip(&minus.events) {
            for (a, b) in ep.post_velocities.iter().zip(&em.post_velocities) {
                col.push(Float::with_val(bits, a - b) / &two_h);
            }
        }
        let tail = if n == 0 { Vec::new() } else { col[(n - 1) * coords..].to_vec() };
        history_cols.push(col);
        endpoint_cols.push(tail);
    }

    let history = mp_singular_values(history_cols);
    let endpoint = mp_singular_values(endpoint_cols);
    let dim_history = kernel_dim(&history, opts.rank_tol, coords);
    let dim_endpoint = kernel_dim(&endpoint, opts.rank_tol, coords);
    Ok(JacobianReport {
        dim_history,
        dim_endpoint,
        log10_singular_values: history
            .iter()
            .map(|s| if *s == 0 { f64::NEG_INFINITY } else { Float::with_val(bits, s.log10_ref()).to_f64() })
            .collect(),
        bits,
    })
}

fn kernel_dim(singular: &[Float], rank_tol: f64, coords: usize) -> usize {
    let Some(top) = singular.first() else {
        return coords;
    };
    if *top == 0 {
        return coords;
    }
    let cut = Float::with_val(top.prec(), top * rank_tol);
    coords - singular.iter().filter(|s| **s > cut).count()
}

/// 1-based index of the first collision whose pair or image differs.
fn first_mismatch(seg: &PreciseSegment, symbols: &[(usize, usize)], images: &[Vec<i64>]) -> Option<usize> {
    let got_s = seg.symbols();
    let got_i = seg.images();
    (0..symbols.len().max(got_s.len()))
        .find(|&k| got_s.get(k) != symbols.get(k) || got_i.get(k) != images.get(k))
        .map(|k| k + 1)
}
