//! Small dense decompositions, delegated to nalgebra.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{LmduError, Result};

pub(crate) fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues non-increasing.
/// Eigenvectors are the columns of the returned matrix.
pub fn sym_eigen_desc(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    // symmetrize against rounding
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y))
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let chol = to_na(a).cholesky().ok_or_else(|| LmduError::Singular("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > max * 1e-13) {
        return Err(LmduError::Singular("matrix is numerically singular".into()));
    }
    let x = chol.solve(&to_na(b));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LmduError::Singular("non-finite solution".into()));
    }
    Ok(from_na(&x))
}

/// Minimizes `sum_i r_i ||x_i B - z_i||^2` where `target_i = r_i z_i`.
/// Errors when `R^(1/2) X` is rank deficient.
pub fn weighted_lstsq(x: &Array2<f64>, r: &Array1<f64>, target: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, p) = x.dim();
    if n < p {
        return Err(LmduError::Singular("fewer rows than columns".into()));
    }
    if r.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(LmduError::Singular("row weights must be positive".into()));
    }
    let q = target.ncols();
    let mut xrx = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DMatrix::<f64>::zeros(p, q);
    for ((xi, ti), &ri) in x.rows().into_iter().zip(target.rows()).zip(r) {
        for a in 0..p {
            let f = ri * xi[a];
            for c in a..p {
                xrx[(a, c)] += f * xi[c];
            }
            for c in 0..q {
                rhs[(a, c)] += xi[a] * ti[c];
            }
        }
    }
    for a in 0..p {
        for c in 0..a {
            xrx[(a, c)] = xrx[(c, a)];
        }
    }
    if let Some(chol) = xrx.cholesky() {
        let l = chol.l_dirty();
        let pivots: Vec<f64> = (0..p).map(|i| l[(i, i)] * l[(i, i)]).collect();
        let max = pivots.iter().cloned().fold(0.0, f64::max);
        let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > max * 1e-6 {
            let sol = chol.solve(&rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return Ok(from_na(&sol));
            }
        }
    }
    // QR of R^(1/2) X: near-coincident points make single rows heavy enough
    // that the normal equations lose the surrogate's descent
    let sr = r.mapv(f64::sqrt);
    let m = DMatrix::from_fn(n, p, |i, j| sr[i] * x[[i, j]]);
    let scaled = DMatrix::from_fn(n, target.ncols(), |i, j| target[[i, j]] / sr[i]);
    let qr = m.qr();
    let rf = qr.r();
    let diag: Vec<f64> = (0..p).map(|j| rf[(j, j)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > max * 1e-12) {
        return Err(LmduError::Singular("weighted design is rank deficient".into()));
    }
    let qtb = qr.q().transpose() * scaled;
    let sol = rf.solve_upper_triangular(&qtb).ok_or_else(|| LmduError::Singular("triangular solve failed".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(LmduError::Singular("non-finite solution".into()));
    }
    Ok(from_na(&sol))
}

/// `A B` by plain loops; for the few columns of the inner loop, gemm's
/// packing costs more than the product.
pub fn thin_dot(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, p) = a.dim();
    let q = b.ncols();
    let mut out = vec![0.0; n * q];
    for (ai, oi) in a.rows().into_iter().zip(out.chunks_exact_mut(q.max(1))) {
        for c in 0..p {
            let f = ai[c];
            for (o, bv) in oi.iter_mut().zip(b.row(c)) {
                *o += f * bv;
            }
        }
    }
    Array2::from_shape_vec((n, q), out).expect("shape matches")
}

/// Thin SVD `A = U diag(s) V^T`, singular values non-increasing.
pub fn svd(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let m = to_na(a);
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| {
        svd.singular_values[y].partial_cmp(&svd.singular_values[x]).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y))
    });
    let s = order.iter().map(|&j| svd.singular_values[j]).collect();
    let uu = Array2::from_shape_fn((u.nrows(), k), |(i, j)| u[(i, order[j])]);
    let vv = Array2::from_shape_fn((vt.ncols(), k), |(i, j)| vt[(order[j], i)]);
    (uu, s, vv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn eigen_sorted_descending() {
        let a = array![[1.0, 0.0], [0.0, 3.0]];
        let (vals, vecs) = sym_eigen_desc(&a);
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[[1, 0]].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_reconstructs() {
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, -1.0]];
        let (u, s, v) = svd(&a);
        let rec = u.dot(&Array2::from_diag(&s)).dot(&v.t());
        assert_abs_diff_eq!((&rec - &a).mapv(f64::abs).sum(), 0.0, epsilon = 1e-10);
        assert!(s[0] >= s[1]);
    }

    #[test]
    fn spd_solve_and_singular() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let x = solve_spd(&a, &array![[1.0], [2.0]]).unwrap();
        assert_abs_diff_eq!(a.dot(&x)[[1, 0]], 2.0, epsilon = 1e-12);
        assert!(solve_spd(&array![[1.0, 1.0], [1.0, 1.0]], &array![[1.0], [1.0]]).is_err());
    }

    #[test]
    fn weighted_lstsq_matches_normal_equations_and_survives_heavy_rows() {
        let x = array![[1.0, 0.5], [1.0, -1.0], [1.0, 2.0], [1.0, 0.0]];
        let z = array![[1.0], [0.0], [3.0], [0.5]];
        let r = array![1.0, 2.0, 0.5, 1e9];
        let target = &z * &r.view().insert_axis(ndarray::Axis(1));
        let b = weighted_lstsq(&x, &r, &target).unwrap();
        let rd = Array2::from_diag(&r);
        let xrx = x.t().dot(&rd).dot(&x);
        let grad = xrx.dot(&b) - x.t().dot(&target);
        assert!(grad.iter().all(|g| g.abs() < 1e-4 * 1e9));
        // the heavy row is fit almost exactly
        assert_abs_diff_eq!(x.row(3).dot(&b.column(0)), 0.5, epsilon = 1e-8);
        let dup = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(weighted_lstsq(&dup, &array![1.0, 1.0, 1.0], &array![[1.0], [1.0], [1.0]]).is_err());
    }

    #[test]
    fn thin_dot_matches_gemm() {
        let a = array![[1.0, 2.0, 0.0], [-1.0, 0.5, 3.0]];
        let b = array![[1.0, 0.0], [2.0, 1.0], [0.0, -2.0]];
        assert_abs_diff_eq!((thin_dot(&a, &b) - a.dot(&b)).mapv(f64::abs).sum(), 0.0, epsilon = 1e-14);
    }
}
