//! Weighted least-squares unfolding (SMACOF) for the inner loop.
//!
//! Working dissimilarities can be negative. Cells with `delta < 0` get an
//! inflated weight and a zero entry in `A`, which keeps each half-step a
//! majorization step for the raw stress `sum w (delta - d)^2`.
//!
//! Each sweep updates `U` (or `B`) and then `V`. The auxiliary matrices are
//! rebuilt from the current distances before each half-step.

use ndarray::{Array1, Array2, Axis};

use crate::error::{LmduError, Result};
use crate::geometry::{distances_unchecked, SupervisedUnfoldingMap, UnfoldingMap};
use crate::linalg::{sym_eigen_desc, thin_dot, weighted_lstsq};

/// Default regularizer for negative dissimilarities at zero distance.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Auxiliary matrices of one SMACOF half-step.
#[derive(Debug, Clone)]
pub struct SmacofWork {
    pub w: Array2<f64>,
    pub a: Array2<f64>,
    /// Row sums of `A`.
    pub p: Array1<f64>,
    /// Column sums of `A`.
    pub q: Array1<f64>,
    /// Row sums of `W`.
    pub rdiag: Array1<f64>,
    /// Column sums of `W`.
    pub cdiag: Array1<f64>,
}

impl SmacofWork {
    pub fn new(w0: &Array2<f64>, delta: &Array2<f64>, d: &Array2<f64>, epsilon: f64) -> Self {
        let (n, r) = d.dim();
        let mut w = Array2::zeros((n, r));
        let mut a = Array2::zeros((n, r));
        let mut p = Array1::zeros(n);
        let mut q = Array1::zeros(r);
        let mut rdiag = Array1::zeros(n);
        let mut cdiag = Array1::zeros(r);
        for i in 0..n {
            for k in 0..r {
                let (wik, aik) = cell_weights(w0[[i, k]], delta[[i, k]], d[[i, k]], epsilon);
                w[[i, k]] = wik;
                a[[i, k]] = aik;
                p[i] += aik;
                q[k] += aik;
                rdiag[i] += wik;
                cdiag[k] += wik;
            }
        }
        Self { w, a, p, q, rdiag, cdiag }
    }
}

#[inline]
fn cell_weights(w0: f64, delta: f64, d: f64, epsilon: f64) -> (f64, f64) {
    if delta >= 0.0 {
        let a = if d > 0.0 { w0 * delta / d } else { 0.0 };
        (w0, a)
    } else if d > 0.0 {
        (w0 * (d - delta) / d, 0.0)
    } else {
        (w0 * (epsilon + delta * delta) / epsilon, 0.0)
    }
}

/// Weights adjusted for negative dissimilarities.
pub fn adjusted_weights(w0: &Array2<f64>, delta: &Array2<f64>, d: &Array2<f64>, epsilon: f64) -> Array2<f64> {
    Array2::from_shape_fn(d.dim(), |ix| cell_weights(w0[ix], delta[ix], d[ix], epsilon).0)
}

/// `a_ir = w_ir delta_ir / d_ir` for `delta >= 0, d > 0`, else zero. Uses base weights.
pub fn a_matrix(w0: &Array2<f64>, delta: &Array2<f64>, d: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn(d.dim(), |ix| cell_weights(w0[ix], delta[ix], d[ix], 1.0).1)
}

/// Raw stress `sum w (delta - d)^2`.
pub fn weighted_stress(w: &Array2<f64>, delta: &Array2<f64>, d: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for ((wik, dl), dd) in w.iter().zip(delta.iter()).zip(d.iter()) {
        let e = dl - dd;
        total += wik * e * e;
    }
    total
}

/// The majorizing function of the raw stress at support `(u0, v0)`, up to the
/// constant `sum w delta^2`, evaluated at `(u, v)`.
pub fn stress_majorizer(
    u: &Array2<f64>,
    v: &Array2<f64>,
    u0: &Array2<f64>,
    v0: &Array2<f64>,
    work: &SmacofWork,
) -> f64 {
    let up = preliminary_u(u0, v0, work);
    let vp = preliminary_v(u0, v0, work);
    let tr_uru: f64 = (0..u.nrows()).map(|i| work.rdiag[i] * u.row(i).dot(&u.row(i))).sum();
    let tr_vcv: f64 = (0..v.nrows()).map(|k| work.cdiag[k] * v.row(k).dot(&v.row(k))).sum();
    let tr_uwv = (u.t().dot(&work.w.dot(v))).diag().sum();
    tr_uru + tr_vcv - 2.0 * tr_uwv - 2.0 * (u * &up).sum() - 2.0 * (v * &vp).sum()
}

/// `PU - AV`.
pub fn preliminary_u(u: &Array2<f64>, v: &Array2<f64>, work: &SmacofWork) -> Array2<f64> {
    let mut out = work.a.dot(v);
    out.mapv_inplace(|x| -x);
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row.scaled_add(work.p[i], &u.row(i));
    }
    out
}

/// `QV - A'U`.
pub fn preliminary_v(u: &Array2<f64>, v: &Array2<f64>, work: &SmacofWork) -> Array2<f64> {
    let mut out = work.a.t().dot(u);
    out.mapv_inplace(|x| -x);
    for (k, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row.scaled_add(work.q[k], &v.row(k));
    }
    out
}

/// `U+ = R^-1 (PU - AV + WV)`.
pub fn update_u(u: &Array2<f64>, v: &Array2<f64>, work: &SmacofWork) -> Result<Array2<f64>> {
    if let Some(i) = work.rdiag.iter().position(|&x| !(x > 0.0)) {
        return Err(LmduError::ZeroWeight(format!("row {i} of W")));
    }
    let diff = &work.w - &work.a;
    let mut out = diff.dot(v);
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row.scaled_add(work.p[i], &u.row(i));
        row /= work.rdiag[i];
    }
    Ok(out)
}

/// `V+ = C^-1 (QV - A'U + W'U)`.
pub fn update_v(u: &Array2<f64>, v: &Array2<f64>, work: &SmacofWork) -> Result<Array2<f64>> {
    if let Some(k) = work.cdiag.iter().position(|&x| !(x > 0.0)) {
        return Err(LmduError::ZeroWeight(format!("column {k} of W")));
    }
    let diff = &work.w - &work.a;
    let mut out = diff.t().dot(u);
    for (k, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row.scaled_add(work.q[k], &v.row(k));
        row /= work.cdiag[k];
    }
    Ok(out)
}

/// `B+ = (X'RX)^-1 X'(PXB - AV + WV)`.
pub fn update_b(x: &Array2<f64>, b: &Array2<f64>, v: &Array2<f64>, work: &SmacofWork) -> Result<Array2<f64>> {
    let u = x.dot(b);
    let diff = &work.w - &work.a;
    let mut target = diff.dot(v);
    for (i, mut row) in target.axis_iter_mut(Axis(0)).enumerate() {
        row.scaled_add(work.p[i], &u.row(i));
    }
    weighted_lstsq(x, &work.rdiag, &target)
        .map_err(|_| LmduError::Singular("X'RX is singular (collinear predictors?)".into()))
}

/// Fused `U` half-step: `u_i+ = (sum_r w_ir v_r + sum_r a_ir (u_i - v_r)) / r_i`,
/// without materializing `W` or `A`. Returns the numerators and `r_i`.
/// Differences are formed before scaling by `a`, which is unbounded as a
/// distance vanishes while `a (u_i - v_r)` is not. `d` holds the distances
/// of `(u, v)`.
fn row_targets(
    u: &Array2<f64>,
    v: &Array2<f64>,
    d: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> (Array2<f64>, Array1<f64>) {
    let (n, s) = u.dim();
    let r = v.nrows();
    let (u, v, d) = (u.as_standard_layout(), v.as_standard_layout(), d.as_standard_layout());
    let (w0, delta) = (w0.as_standard_layout(), delta.as_standard_layout());
    let (us, vs, ds) = (u.as_slice().unwrap(), v.as_slice().unwrap(), d.as_slice().unwrap());
    let (ws, dls) = (w0.as_slice().unwrap(), delta.as_slice().unwrap());
    let mut target = vec![0.0; n * s];
    let mut rdiag = Array1::zeros(n);
    for i in 0..n {
        let ui = &us[i * s..(i + 1) * s];
        let ti = &mut target[i * s..(i + 1) * s];
        let mut rs = 0.0;
        for k in 0..r {
            let vk = &vs[k * s..(k + 1) * s];
            let c = i * r + k;
            let (w, a) = cell_weights(ws[c], dls[c], ds[c], epsilon);
            rs += w;
            for t in 0..s {
                ti[t] += w * vk[t] + a * (ui[t] - vk[t]);
            }
        }
        rdiag[i] = rs;
    }
    (Array2::from_shape_vec((n, s), target).expect("shape matches"), rdiag)
}

/// Fused `V` half-step numerators and column weight sums.
fn column_targets(
    u: &Array2<f64>,
    v: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> (Array2<f64>, Array1<f64>) {
    let (n, s) = u.dim();
    let r = v.nrows();
    let (u, v) = (u.as_standard_layout(), v.as_standard_layout());
    let (w0, delta) = (w0.as_standard_layout(), delta.as_standard_layout());
    let (us, vs) = (u.as_slice().unwrap(), v.as_slice().unwrap());
    let (ws, dls) = (w0.as_slice().unwrap(), delta.as_slice().unwrap());
    let mut target = vec![0.0; r * s];
    let mut cdiag = Array1::<f64>::zeros(r);
    for i in 0..n {
        let ui = &us[i * s..(i + 1) * s];
        for k in 0..r {
            let vk = &vs[k * s..(k + 1) * s];
            let dist = ui.iter().zip(vk).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let c = i * r + k;
            let (w, a) = cell_weights(ws[c], dls[c], dist, epsilon);
            cdiag[k] += w;
            let tk = &mut target[k * s..(k + 1) * s];
            for t in 0..s {
                tk[t] += w * ui[t] + a * (vk[t] - ui[t]);
            }
        }
    }
    (Array2::from_shape_vec((r, s), target).expect("shape matches"), cdiag)
}

fn fused_update_u(
    u: &Array2<f64>,
    v: &Array2<f64>,
    d: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> Result<Array2<f64>> {
    let (mut target, rdiag) = row_targets(u, v, d, w0, delta, epsilon);
    for (i, mut row) in target.axis_iter_mut(Axis(0)).enumerate() {
        if !(rdiag[i] > 0.0) {
            return Err(LmduError::ZeroWeight(format!("row {i} of W")));
        }
        row /= rdiag[i];
    }
    Ok(target)
}

fn fused_update_v(
    u: &Array2<f64>,
    v: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> Result<Array2<f64>> {
    let (mut target, cdiag) = column_targets(u, v, w0, delta, epsilon);
    for (k, mut row) in target.axis_iter_mut(Axis(0)).enumerate() {
        if !(cdiag[k] > 0.0) {
            return Err(LmduError::ZeroWeight(format!("column {k} of W")));
        }
        row /= cdiag[k];
    }
    Ok(target)
}

/// `u = XB` and `d` its distances to `v`.
fn fused_update_b(
    x: &Array2<f64>,
    u: &Array2<f64>,
    v: &Array2<f64>,
    d: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> Result<Array2<f64>> {
    let (target, rdiag) = row_targets(u, v, d, w0, delta, epsilon);
    weighted_lstsq(x, &rdiag, &target)
        .map_err(|_| LmduError::Singular("X'RX is singular (collinear predictors?)".into()))
}

fn sweep_unsupervised(
    u: &Array2<f64>,
    v: &Array2<f64>,
    d: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let u1 = fused_update_u(u, v, d, w0, delta, epsilon)?;
    let v1 = fused_update_v(&u1, v, w0, delta, epsilon)?;
    Ok((u1, v1))
}

/// Returns `(B+, U+ = X B+, V+)`.
fn sweep_supervised(
    x: &Array2<f64>,
    u: &Array2<f64>,
    v: &Array2<f64>,
    d: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let b1 = fused_update_b(x, u, v, d, w0, delta, epsilon)?;
    let u1 = thin_dot(x, &b1);
    let v1 = fused_update_v(&u1, v, w0, delta, epsilon)?;
    Ok((b1, u1, v1))
}

/// One unsupervised sweep: `U` from the current support, then `V` from the
/// refreshed support `(U+, V)`.
pub fn smacof_step_unsupervised(
    u: &Array2<f64>,
    v: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = distances_unchecked(u.view(), v.view());
    sweep_unsupervised(u, v, &d, w0, delta, epsilon)
}

/// One supervised sweep: `B`, then `U = XB`, then `V`.
pub fn smacof_step_supervised(
    x: &Array2<f64>,
    b: &Array2<f64>,
    v: &Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    epsilon: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let u = x.dot(b);
    let d = distances_unchecked(u.view(), v.view());
    let (b1, _, v1) = sweep_supervised(x, &u, v, &d, w0, delta, epsilon)?;
    Ok((b1, v1))
}

/// Settings of the inner loop.
#[derive(Debug, Clone, Copy)]
pub struct InnerOptions {
    pub max_sweeps: usize,
    /// Break when the stress decrease falls below this.
    pub tolerance: f64,
    pub epsilon: f64,
}

/// Outcome of an inner loop: final coordinates and distances.
#[derive(Debug, Clone)]
pub struct InnerResult {
    pub coords: Array2<f64>,
    pub v: Array2<f64>,
    pub d: Array2<f64>,
    pub sweeps: usize,
    pub stress: f64,
}

fn distances_and_stress(u: &Array2<f64>, v: &Array2<f64>, w0: &Array2<f64>, delta: &Array2<f64>) -> (Array2<f64>, f64) {
    let d = distances_unchecked(u.view(), v.view());
    let s = weighted_stress(w0, delta, &d);
    (d, s)
}

/// Runs up to `max_sweeps` unsupervised sweeps, stopping once
/// `old - new < tolerance`. `d` holds the distances of `(u, v)`.
pub fn inner_unsupervised(
    u: Array2<f64>,
    v: Array2<f64>,
    d: Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    opts: InnerOptions,
) -> Result<InnerResult> {
    let (mut u, mut v, mut d) = (u, v, d);
    let mut old = weighted_stress(w0, delta, &d);
    let mut sweeps = 0;
    for _ in 0..opts.max_sweeps {
        sweeps += 1;
        (u, v) = sweep_unsupervised(&u, &v, &d, w0, delta, opts.epsilon)?;
        let (dn, new) = distances_and_stress(&u, &v, w0, delta);
        d = dn;
        let done = old - new < opts.tolerance;
        old = new;
        if done {
            break;
        }
    }
    Ok(InnerResult { coords: u, v, d, sweeps, stress: old })
}

/// Supervised counterpart of [`inner_unsupervised`]; `coords` holds `B`.
pub fn inner_supervised(
    x: &Array2<f64>,
    b: Array2<f64>,
    v: Array2<f64>,
    d: Array2<f64>,
    w0: &Array2<f64>,
    delta: &Array2<f64>,
    opts: InnerOptions,
) -> Result<InnerResult> {
    let (mut b, mut v, mut d) = (b, v, d);
    let mut u = thin_dot(x, &b);
    let mut old = weighted_stress(w0, delta, &d);
    let mut sweeps = 0;
    for _ in 0..opts.max_sweeps {
        sweeps += 1;
        (b, u, v) = sweep_supervised(x, &u, &v, &d, w0, delta, opts.epsilon)?;
        let (dn, new) = distances_and_stress(&u, &v, w0, delta);
        d = dn;
        let done = old - new < opts.tolerance;
        old = new;
        if done {
            break;
        }
    }
    Ok(InnerResult { coords: b, v, d, sweeps, stress: old })
}

/// Sign of the first largest-magnitude entry of a column.
fn dominant_sign(col: ndarray::ArrayView1<f64>) -> f64 {
    let mut best = 0.0f64;
    for &x in col.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Rotation to principal axes of `U' D_n U` with the sign rule applied.
fn principal_rotation(u: &Array2<f64>, v: &Array2<f64>, weights: &Array1<f64>) -> Array2<f64> {
    let mut wu = u.clone();
    for (i, mut row) in wu.axis_iter_mut(Axis(0)).enumerate() {
        row *= weights[i];
    }
    let cross = u.t().dot(&wu);
    let (_, mut e) = sym_eigen_desc(&cross);
    let ue = u.dot(&e);
    let ve = v.dot(&e);
    for s in 0..e.ncols() {
        let col = ue.column(s);
        let sign = if col.iter().any(|x| x.abs() > 1e-12) { dominant_sign(col) } else { dominant_sign(ve.column(s)) };
        if sign < 0.0 {
            e.column_mut(s).mapv_inplace(|x| -x);
        }
    }
    e
}

/// Removes the translation and rotation freedom of an unsupervised map:
/// weighted centering of `U`, then principal axes of `U' D_n U`.
pub fn identify_unsupervised(map: &UnfoldingMap, weights: &Array1<f64>) -> Result<UnfoldingMap> {
    if weights.len() != map.u.nrows() {
        return Err(LmduError::DimensionMismatch("weights vs rows of U".into()));
    }
    let total = weights.sum();
    if !(total > 0.0) {
        return Err(LmduError::ZeroWeight("identification weights".into()));
    }
    let centre = weights.dot(&map.u) / total;
    let u = &map.u - &centre.view().insert_axis(Axis(0));
    let v = &map.v - &centre.view().insert_axis(Axis(0));
    let e = principal_rotation(&u, &v, weights);
    Ok(UnfoldingMap { offsets: map.offsets.clone(), variant: map.variant, u: u.dot(&e), v: v.dot(&e) })
}

/// Rotates a supervised map so that `XB` is in principal coordinates. No
/// centering: the origin is the person with `x = 0`.
pub fn identify_supervised(
    map: &SupervisedUnfoldingMap,
    weights: &Array1<f64>,
    x: &Array2<f64>,
) -> Result<SupervisedUnfoldingMap> {
    let u = map.person_coordinates(x)?;
    if weights.len() != u.nrows() {
        return Err(LmduError::DimensionMismatch("weights vs rows of X".into()));
    }
    let e = principal_rotation(&u, &map.v, weights);
    Ok(SupervisedUnfoldingMap {
        offsets: map.offsets.clone(),
        variant: map.variant,
        b: map.b.dot(&e),
        v: map.v.dot(&e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::majorization::OffsetVariant;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, s: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, s), |_| rng.random_range(-1.5..1.5))
    }

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn weight_branches() {
        let w0 = array![[1.0, 2.0, 1.0]];
        let delta = array![[1.0, -1.0, -1.0]];
        let d = array![[0.5, 1.0, 0.0]];
        let w = adjusted_weights(&w0, &delta, &d, 1e-6);
        assert_eq!(w[[0, 0]], 1.0);
        assert_eq!(w[[0, 1]], 4.0);
        assert_abs_diff_eq!(w[[0, 2]], (1e-6 + 1.0) / 1e-6, epsilon = 1e-6);
    }

    #[test]
    fn a_matrix_branches() {
        let w0 = array![[1.0, 1.0, 1.0]];
        let a = a_matrix(&w0, &array![[2.0, 2.0, -2.0]], &array![[4.0, 0.0, 1.0]]);
        assert_eq!(a, array![[0.5, 0.0, 0.0]]);
    }

    #[test]
    fn stress_examples() {
        let d = array![[1.0, 2.0]];
        assert_eq!(weighted_stress(&array![[1.0, 1.0]], &d, &d), 0.0);
        assert_eq!(weighted_stress(&array![[1.0]], &array![[3.0]], &array![[1.0]]), 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random(&mut rng, 4, 3).mapv(f64::abs);
        let delta = random(&mut rng, 4, 3);
        let dd = random(&mut rng, 4, 3).mapv(f64::abs);
        let mut oracle = 0.0;
        for i in 0..4 {
            for r in 0..3 {
                oracle += w[[i, r]] * (delta[[i, r]] - dd[[i, r]]).powi(2);
            }
        }
        assert_abs_diff_eq!(weighted_stress(&w, &delta, &dd), oracle, epsilon = 1e-12);
    }

    #[test]
    fn exact_dissimilarities_are_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random(&mut rng, 5, 2);
        let v = random(&mut rng, 3, 2);
        let delta = distances_unchecked(u.view(), v.view());
        let w0 = Array2::ones((5, 3));
        let (u1, v1) = smacof_step_unsupervised(&u, &v, &w0, &delta, DEFAULT_EPSILON).unwrap();
        assert!(max_abs(&(&u1 - &u)) < 1e-12);
        assert!(max_abs(&(&v1 - &v)) < 1e-12);
    }

    #[test]
    fn fused_sweep_matches_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random(&mut rng, 6, 2);
        let v = random(&mut rng, 4, 2);
        let delta = random(&mut rng, 6, 4);
        let w0 = Array2::from_shape_fn((6, 4), |(i, _)| 1.0 + i as f64);
        let d = distances_unchecked(u.view(), v.view());
        let work = SmacofWork::new(&w0, &delta, &d, DEFAULT_EPSILON);
        let u1 = update_u(&u, &v, &work).unwrap();
        let d = distances_unchecked(u1.view(), v.view());
        let work = SmacofWork::new(&w0, &delta, &d, DEFAULT_EPSILON);
        let v1 = update_v(&u1, &v, &work).unwrap();
        let (fu, fv) = smacof_step_unsupervised(&u, &v, &w0, &delta, DEFAULT_EPSILON).unwrap();
        assert!(max_abs(&(&fu - &u1)) < 1e-12);
        assert!(max_abs(&(&fv - &v1)) < 1e-12);
        let x = random(&mut rng, 6, 3);
        let b = random(&mut rng, 3, 2);
        let d = distances_unchecked(x.dot(&b).view(), v.view());
        let work = SmacofWork::new(&w0, &delta, &d, DEFAULT_EPSILON);
        let b1 = update_b(&x, &b, &v, &work).unwrap();
        let (fb, _) = smacof_step_supervised(&x, &b, &v, &w0, &delta, DEFAULT_EPSILON).unwrap();
        assert!(max_abs(&(&fb - &b1)) < 1e-10);
    }

    #[test]
    fn one_by_one_update() {
        let (u1, v1) =
            smacof_step_unsupervised(&array![[0.0]], &array![[1.0]], &array![[1.0]], &array![[2.0]], DEFAULT_EPSILON)
                .unwrap();
        assert_abs_diff_eq!(u1[[0, 0]], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!((u1[[0, 0]] - v1[[0, 0]]).abs(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_distance_cell_moves_to_target() {
        // single cell at zero distance: a = 0, u+ = R^-1 W v = v
        let work = SmacofWork::new(&array![[1.0]], &array![[0.7]], &array![[0.0]], DEFAULT_EPSILON);
        assert_eq!(work.a[[0, 0]], 0.0);
        let u1 = update_u(&array![[0.3, 0.3]], &array![[0.3, 0.3]], &work).unwrap();
        assert_eq!(u1, array![[0.3, 0.3]]);
    }

    #[test]
    fn identity_predictors_reduce_to_unsupervised() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random(&mut rng, 4, 2);
        let v = random(&mut rng, 3, 2);
        let delta = random(&mut rng, 4, 3);
        let w0 = Array2::from_shape_fn((4, 3), |(i, _)| 1.0 + i as f64);
        let x = Array2::eye(4);
        let (u1, v1) = smacof_step_unsupervised(&u, &v, &w0, &delta, DEFAULT_EPSILON).unwrap();
        let (b1, vb) = smacof_step_supervised(&x, &u, &v, &w0, &delta, DEFAULT_EPSILON).unwrap();
        assert!(max_abs(&(&u1 - &b1)) < 1e-10);
        assert!(max_abs(&(&v1 - &vb)) < 1e-10);
    }

    #[test]
    fn intercept_column_gives_weighted_mean_target() {
        // S = 1, X = 1: every person shares coordinate b; with V fixed and all
        // delta >= 0, b+ = sum_i (p_i b - (A v)_i + (W v)_i) / sum_i r_i
        let x = Array2::ones((3, 1));
        let b = array![[0.2]];
        let v = array![[1.0], [-0.5]];
        let w0 = array![[1.0, 2.0], [1.0, 1.0], [3.0, 1.0]];
        let delta = array![[0.5, 1.0], [1.5, 0.2], [0.9, 0.1]];
        let u = x.dot(&b);
        let d = distances_unchecked(u.view(), v.view());
        let work = SmacofWork::new(&w0, &delta, &d, DEFAULT_EPSILON);
        let b1 = update_b(&x, &b, &v, &work).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..3 {
            for k in 0..2 {
                let a = w0[[i, k]] * delta[[i, k]] / d[[i, k]];
                num += a * (b[[0, 0]] - v[[k, 0]]) + w0[[i, k]] * v[[k, 0]];
                den += w0[[i, k]];
            }
        }
        assert_abs_diff_eq!(b1[[0, 0]], num / den, epsilon = 1e-12);
    }

    #[test]
    fn collinear_predictors_are_reported() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let b = array![[0.1], [0.1]];
        let v = array![[1.0]];
        let w0 = Array2::ones((3, 1));
        let delta = Array2::ones((3, 1));
        let err = smacof_step_supervised(&x, &b, &v, &w0, &delta, DEFAULT_EPSILON).unwrap_err();
        assert!(matches!(err, LmduError::Singular(_)));
    }

    #[test]
    fn sweeps_do_not_increase_stress() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (n, r, s) = (rng.random_range(2..12), rng.random_range(2..6), rng.random_range(1..4));
            let mut u = random(&mut rng, n, s);
            let mut v = random(&mut rng, r, s);
            let delta = random(&mut rng, n, r) * 2.0;
            let w0 = Array2::from_shape_fn((n, r), |(i, _)| 1.0 + (i % 3) as f64);
            let mut old = weighted_stress(&w0, &delta, &distances_unchecked(u.view(), v.view()));
            for _ in 0..10 {
                let (u1, v1) = smacof_step_unsupervised(&u, &v, &w0, &delta, DEFAULT_EPSILON).unwrap();
                let new = weighted_stress(&w0, &delta, &distances_unchecked(u1.view(), v1.view()));
                assert!(new <= old + 1e-9 * old.abs().max(1.0), "{new} > {old}");
                old = new;
                u = u1;
                v = v1;
            }
        }
    }

    #[test]
    fn identification_preserves_distances_and_diagonalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random(&mut rng, 7, 3) + 0.8;
        let v = random(&mut rng, 4, 3);
        let weights = Array1::from_shape_fn(7, |i| 1.0 + i as f64);
        let map = UnfoldingMap { offsets: Array1::ones(4), variant: OffsetVariant::PerItem, u, v };
        let id = identify_unsupervised(&map, &weights).unwrap();
        assert!(max_abs(&(&id.distances() - &map.distances())) < 1e-10);
        let centre = weights.dot(&id.u);
        assert!(centre.iter().all(|c| c.abs() < 1e-10));
        let mut wu = id.u.clone();
        for (i, mut row) in wu.axis_iter_mut(Axis(0)).enumerate() {
            row *= weights[i];
        }
        let cross = id.u.t().dot(&wu);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert!(cross[[a, b]].abs() < 1e-9);
                }
            }
            if a > 0 {
                assert!(cross[[a, a]] <= cross[[a - 1, a - 1]] + 1e-12);
            }
        }
        // a second pass changes nothing
        let again = identify_unsupervised(&id, &weights).unwrap();
        assert!(max_abs(&(&again.u - &id.u)) < 1e-9);
        assert!(max_abs(&(&again.v - &id.v)) < 1e-9);
    }

    #[test]
    fn supervised_identification() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random(&mut rng, 20, 3);
        let map = SupervisedUnfoldingMap {
            offsets: Array1::ones(5),
            variant: OffsetVariant::PerItem,
            b: random(&mut rng, 3, 2),
            v: random(&mut rng, 5, 2),
        };
        let w = Array1::ones(20);
        let id = identify_supervised(&map, &w, &x).unwrap();
        let before = distances_unchecked(x.dot(&map.b).view(), map.v.view());
        let after = distances_unchecked(x.dot(&id.b).view(), id.v.view());
        assert!(max_abs(&(&before - &after)) < 1e-10);
        let u = x.dot(&id.b);
        let cross = u.t().dot(&u);
        assert!(cross[[0, 1]].abs() < 1e-9);
        assert!(cross[[0, 0]] >= cross[[1, 1]]);
    }

    #[test]
    fn rank_deficient_identification_is_deterministic() {
        let u = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let v = array![[0.0, 1.0], [1.0, 0.0]];
        let map = UnfoldingMap { offsets: Array1::ones(2), variant: OffsetVariant::PerItem, u, v };
        let w = Array1::ones(3);
        let a = identify_unsupervised(&map, &w).unwrap();
        let b = identify_unsupervised(&map, &w).unwrap();
        assert_eq!(a, b);
        assert!(max_abs(&(&a.distances() - &map.distances())) < 1e-10);
    }
}
