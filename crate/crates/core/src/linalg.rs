//! Kernel extraction by singular-value thresholding, in double precision
//! (nalgebra) and in arbitrary precision (one-sided Jacobi on `rug` floats).

use nalgebra::DMatrix;
use rug::Float;

/// Orthonormal basis (as columns) of the null space of `m`, counting singular
/// values `<= tol` as zero.
pub fn kernel(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    // Pad to at least `cols` rows so that the thin SVD spans the whole domain.
    let padded = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= tol)
        .collect();
    let mut out = DMatrix::zeros(cols, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        out.set_column(c, &v_t.row(k).transpose());
    }
    out
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with singular values `<= rel_tol * sigma_max` treated as zero.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&top) => s.iter().filter(|&&x| x > rel_tol * top).count(),
    }
}

/// Singular values of a matrix given by its columns, by one-sided Jacobi
/// rotations at the precision of the entries. Returned in descending order.
pub fn mp_singular_values(mut cols: Vec<Vec<Float>>) -> Vec<Float> {
    let Some(prec) = cols.first().and_then(|c| c.first()).map(Float::prec) else {
        return cols.iter().map(|_| Float::new(64)).collect();
    };
    let n = cols.len();
    let dot = |a: &[Float], b: &[Float]| {
        let mut s = Float::with_val(prec, 0);
        for (x, y) in a.iter().zip(b) {
            s += Float::with_val(prec, x * y);
        }
        s
    };
    let eps = Float::with_val(prec, Float::i_exp(1, 8 - prec as i32));
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                let bound = Float::with_val(prec, &alpha * &beta).sqrt() * &eps;
                if Float::with_val(prec, gamma.abs_ref()) <= bound || gamma == 0 {
                    continue;
                }
                rotated = true;
                let zeta = Float::with_val(prec, &beta - &alpha) / Float::with_val(prec, &gamma * 2u32);
                let root = (Float::with_val(prec, zeta.square_ref()) + 1u32).sqrt();
                let mut t = Float::with_val(prec, zeta.abs_ref()) + &root;
                t.recip_mut();
                if zeta.is_sign_negative() {
                    t = -t;
                }
                let c = (Float::with_val(prec, t.square_ref()) + 1u32).sqrt().recip();
                let s = Float::with_val(prec, &c * &t);
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let nx = Float::with_val(prec, &c * &*x) - Float::with_val(prec, &s * &*y);
                    let ny = Float::with_val(prec, &s * &*x) + Float::with_val(prec, &c * &*y);
                    *x = nx;
                    *y = ny;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut out: Vec<Float> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    out.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = kernel(&m, 1e-12);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).norm() < 1e-14);
        assert!((k.transpose() * &k - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn rank_thresholds_relative() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12]);
        assert_eq!(rank(&m, 1e-8), 1);
        assert_eq!(rank(&m, 1e-14), 2);
        assert_eq!(rank(&DMatrix::zeros(3, 3), 1e-8), 0);
    }

    #[test]
    fn jacobi_matches_double_svd() {
        let data = [3.0, 1.0, 2.0, -1.0, 0.5, 4.0, 2.0, 2.0, 1.0, 0.0, -3.0, 1.5];
        let m = DMatrix::from_row_slice(4, 3, &data);
        let cols = (0..3)
            .map(|c| (0..4).map(|r| Float::with_val(200, m[(r, c)])).collect())
            .collect();
        let mp = mp_singular_values(cols);
        let dd = singular_values(&m);
        for (a, b) in mp.iter().zip(&dd) {
            assert!((a.to_f64() - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn jacobi_sees_tiny_singular_values() {
        let prec = 400;
        let tiny = Float::with_val(prec, Float::i_exp(1, -200));
        let one = Float::with_val(prec, 1);
        let cols = vec![
            vec![one.clone(), one.clone()],
            vec![Float::with_val(prec, &one + &tiny), one.clone()],
        ];
        let s = mp_singular_values(cols);
        let ratio = Float::with_val(prec, &s[1] / &s[0]).to_f64();
        assert!(ratio > 1e-62 && ratio < 1e-59, "{ratio:e}");
    }
}
