//! Outer majorization of the logistic negative log-likelihood.
//!
//! Every cell loss `L_ir(theta) = -n_i log(1 / (1 + exp(-q_ir theta)))` has
//! second derivative at most `n_i / 4`, so around a support point it is
//! bounded by `(n_i / 8)(theta - lambda_ir)^2 + c` with working response
//! `lambda_ir = theta_ir + 4 (y_ir - pi_ir)`. Minimizing that weighted least
//! squares surrogate over offsets and coordinates is the inner problem.

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{LmduError, Result};
use crate::geometry::{distances_unchecked, linear_predictor, logistic};

/// How offsets are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetVariant {
    /// One offset `m_r` per item.
    #[default]
    PerItem,
    /// A single offset shared by all items.
    Shared,
    /// One offset `m_i` per person (row).
    PerPerson,
}

impl std::str::FromStr for OffsetVariant {
    type Err = LmduError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-item" => Ok(Self::PerItem),
            "shared" => Ok(Self::Shared),
            "per-person" => Ok(Self::PerPerson),
            other => Err(LmduError::InvalidOption(format!("unknown offset variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for OffsetVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PerItem => "per-item",
            Self::Shared => "shared",
            Self::PerPerson => "per-person",
        })
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss of one cell with weight `n`: `n log(1 + exp(-q theta))`.
#[inline]
pub fn cell_loss(y: f64, n: f64, theta: f64) -> f64 {
    let q = 2.0 * y - 1.0;
    n * softplus(-q * theta)
}

/// `xi = q exp(-q theta) / (1 + exp(-q theta))`.
#[inline]
pub fn xi(y: f64, theta: f64) -> f64 {
    let q = 2.0 * y - 1.0;
    q * logistic(-q * theta)
}

/// Per-cell losses `L_ir`.
pub fn cell_losses(y: &Array2<f64>, weights: &Array1<f64>, theta: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(theta.dim());
    Zip::indexed(&mut out).and(y).and(theta).for_each(|(i, _), o, &yy, &t| *o = cell_loss(yy, weights[i], t));
    out
}

/// Twice the negative log-likelihood.
pub fn deviance(y: &Array2<f64>, weights: &Array1<f64>, theta: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    Zip::indexed(y).and(theta).for_each(|(i, _), &yy, &t| total += cell_loss(yy, weights[i], t));
    2.0 * total
}

/// Working responses `lambda = theta + 4 (y - pi)`.
pub fn working_responses(y: &Array2<f64>, pi: &Array2<f64>, theta: &Array2<f64>) -> Array2<f64> {
    let mut lambda = theta.clone();
    Zip::from(&mut lambda).and(y).and(pi).for_each(|l, &yy, &p| *l += 4.0 * (yy - p));
    lambda
}

/// Weighted-mean offset update from `t_ir = lambda_ir + D_ir`.
pub fn update_offsets(t: &Array2<f64>, w0: &Array2<f64>, variant: OffsetVariant) -> Result<Array1<f64>> {
    if t.dim() != w0.dim() {
        return Err(LmduError::DimensionMismatch("T and W differ in shape".into()));
    }
    let wt = t * w0;
    match variant {
        OffsetVariant::PerItem => {
            let num = wt.sum_axis(Axis(0));
            let den = w0.sum_axis(Axis(0));
            if den.iter().any(|&d| d <= 0.0) {
                return Err(LmduError::ZeroWeight("item column".into()));
            }
            Ok(num / den)
        }
        OffsetVariant::Shared => {
            let den = w0.sum();
            if den <= 0.0 {
                return Err(LmduError::ZeroWeight("all cells".into()));
            }
            Ok(Array1::from_elem(t.ncols(), wt.sum() / den))
        }
        OffsetVariant::PerPerson => {
            let num = wt.sum_axis(Axis(1));
            let den = w0.sum_axis(Axis(1));
            if den.iter().any(|&d| d <= 0.0) {
                return Err(LmduError::ZeroWeight("person row".into()));
            }
            Ok(num / den)
        }
    }
}

/// Working dissimilarities `delta_ir = m - lambda_ir`; may be negative.
pub fn working_dissimilarities(lambda: &Array2<f64>, offsets: &Array1<f64>, variant: OffsetVariant) -> Array2<f64> {
    let mut delta = lambda.clone();
    for ((i, r), d) in delta.indexed_iter_mut() {
        let m = match variant {
            OffsetVariant::PerPerson => offsets[i],
            _ => offsets[r],
        };
        *d = m - *d;
    }
    delta
}

/// Base weights `w_ir = n_i`.
pub fn base_weights(weights: &Array1<f64>, items: usize) -> Array2<f64> {
    Array2::from_shape_fn((weights.len(), items), |(i, _)| weights[i])
}

/// Quadratic majorizer of one cell at support `support`:
/// `L(s) + L'(s)(theta - s) + (n/8)(theta - s)^2`.
pub fn surrogate_cell(theta: f64, support: f64, y: f64, n: f64) -> f64 {
    let diff = theta - support;
    cell_loss(y, n, support) - n * xi(y, support) * diff + 0.125 * n * diff * diff
}

/// The constant `c` for which `(n/8)(theta - lambda)^2 + c` equals [`surrogate_cell`].
pub fn surrogate_constant(support: f64, y: f64, n: f64) -> f64 {
    let x = xi(y, support);
    let lambda = support + 4.0 * x;
    cell_loss(y, n, support) - 0.125 * n * lambda * lambda + n * x * support + 0.125 * n * support * support
}

/// Quantities of one outer iteration, evaluated at the current support point.
#[derive(Debug, Clone)]
pub struct WorkingState {
    pub theta: Array2<f64>,
    pub pi: Array2<f64>,
    pub lambda: Array2<f64>,
    pub t: Array2<f64>,
    pub w0: Array2<f64>,
    /// Offsets after the weighted-mean update.
    pub offsets: Array1<f64>,
    /// Dissimilarities `m - lambda` for the updated offsets.
    pub delta: Array2<f64>,
}

impl WorkingState {
    /// Computes `Pi`, `Lambda`, `T`, the offset update and `Delta` from the
    /// current offsets and distances.
    pub fn outer_step(
        y: &Array2<f64>,
        weights: &Array1<f64>,
        offsets: &Array1<f64>,
        variant: OffsetVariant,
        d: &Array2<f64>,
    ) -> Result<Self> {
        let theta = linear_predictor(offsets.view(), variant, d);
        let pi = theta.mapv(logistic);
        let lambda = working_responses(y, &pi, &theta);
        let t = &lambda + d;
        let w0 = base_weights(weights, y.ncols());
        let offsets = update_offsets(&t, &w0, variant)?;
        let delta = working_dissimilarities(&lambda, &offsets, variant);
        Ok(Self { theta, pi, lambda, t, w0, offsets, delta })
    }
}

/// Deviance gradients for an unconstrained map.
#[derive(Debug, Clone)]
pub struct DevianceGradients {
    pub offsets: Array1<f64>,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

/// Analytic gradients of the deviance with respect to offsets, `U` and `V`.
///
/// Offset gradients are per item (or per person); for a shared offset the
/// derivative is their sum.
///
/// Undefined where a distance is zero; callers keep configurations away from
/// coincident person and item points.
pub fn deviance_gradients(
    y: &Array2<f64>,
    weights: &Array1<f64>,
    offsets: &Array1<f64>,
    variant: OffsetVariant,
    u: &Array2<f64>,
    v: &Array2<f64>,
) -> DevianceGradients {
    let d = distances_unchecked(u.view(), v.view());
    let theta = linear_predictor(offsets.view(), variant, &d);
    let (n, r) = d.dim();
    let s = u.ncols();
    // dDev/dtheta = -2 n_i xi_ir
    let g = Array2::from_shape_fn((n, r), |(i, k)| -2.0 * weights[i] * xi(y[[i, k]], theta[[i, k]]));
    let mut gm = Array1::zeros(offsets.len());
    let mut gu = Array2::zeros(u.dim());
    let mut gv = Array2::zeros(v.dim());
    for i in 0..n {
        for k in 0..r {
            let gik = g[[i, k]];
            match variant {
                OffsetVariant::PerPerson => gm[i] += gik,
                OffsetVariant::PerItem | OffsetVariant::Shared => gm[k] += gik,
            }
            let dik = d[[i, k]];
            for t in 0..s {
                // theta = m - d, dd/du = (u - v)/d
                let dir = (u[[i, t]] - v[[k, t]]) / dik;
                gu[[i, t]] -= gik * dir;
                gv[[k, t]] += gik * dir;
            }
        }
    }
    DevianceGradients { offsets: gm, u: gu, v: gv }
}

/// Gradient with respect to `B` for `U = X B`, by the chain rule.
pub fn deviance_gradient_b(x: &Array2<f64>, grad_u: &Array2<f64>) -> Array2<f64> {
    x.t().dot(grad_u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cell_deviance_is_two_ln_two() {
        let d = deviance(&array![[1.0]], &array![1.0], &array![[0.0]]);
        assert_abs_diff_eq!(d, 2.0 * std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 1.386294, epsilon = 1e-6);
    }

    #[test]
    fn saturated_correct_predictions_have_zero_deviance() {
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let theta = array![[800.0, -800.0], [-800.0, 800.0]];
        assert_eq!(deviance(&y, &array![3.0, 1.0], &theta), 0.0);
        let wrong = array![[-800.0, 800.0], [800.0, -800.0]];
        assert!(deviance(&y, &array![3.0, 1.0], &wrong).is_finite());
    }

    #[test]
    fn working_response_symmetric_points() {
        assert_abs_diff_eq!(xi(1.0, 0.0), 0.5);
        assert_abs_diff_eq!(xi(0.0, 0.0), -0.5);
        let theta = array![[0.0, 0.0]];
        let pi = theta.mapv(logistic);
        let lambda = working_responses(&array![[1.0, 0.0]], &pi, &theta);
        assert_eq!(lambda, array![[2.0, -2.0]]);
    }

    #[test]
    fn working_response_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let theta: f64 = rng.random_range(-8.0..8.0);
            let y = f64::from(rng.random_bool(0.5) as u8);
            let lambda = theta + 4.0 * xi(y, theta);
            let pi = logistic(theta);
            assert_abs_diff_eq!(lambda - theta - 4.0 * (y - pi), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn offset_updates() {
        let t = array![[1.0], [3.0]];
        let w = array![[1.0], [1.0]];
        assert_eq!(update_offsets(&t, &w, OffsetVariant::PerItem).unwrap(), array![2.0]);
        let t = array![[0.0], [4.0]];
        let w = array![[3.0], [1.0]];
        assert_eq!(update_offsets(&t, &w, OffsetVariant::PerItem).unwrap(), array![1.0]);
        let t = Array2::from_elem((3, 4), 2.5);
        let w = Array2::from_shape_fn((3, 4), |(i, _)| 1.0 + i as f64);
        assert_eq!(update_offsets(&t, &w, OffsetVariant::Shared).unwrap(), Array1::from_elem(4, 2.5));
        let t = array![[1.0, 3.0], [0.0, 0.0]];
        let w = array![[1.0, 1.0], [2.0, 2.0]];
        assert_eq!(update_offsets(&t, &w, OffsetVariant::PerPerson).unwrap(), array![2.0, 0.0]);
        assert!(update_offsets(&t, &Array2::zeros((2, 2)), OffsetVariant::PerItem).is_err());
    }

    #[test]
    fn dissimilarities() {
        let d = working_dissimilarities(&array![[-1.0, 3.0]], &array![2.0, 1.0], OffsetVariant::PerItem);
        assert_eq!(d, array![[3.0, -2.0]]);
    }

    #[test]
    fn dissimilarity_below_distance_for_endorsers() {
        // y = 1 at the offset optimum: delta = m - theta - 4(1 - pi) = D - 4(1 - pi)
        let (m, dist) = (1.5, 0.4);
        let theta = m - dist;
        let lambda = theta + 4.0 * (1.0 - logistic(theta));
        let delta = m - lambda;
        assert_abs_diff_eq!(delta, dist + 4.0 * (logistic(theta) - 1.0), epsilon = 1e-14);
        assert!(delta < dist);
    }

    #[test]
    fn surrogate_forms_agree_and_touch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s: f64 = rng.random_range(-6.0..6.0);
            let th: f64 = rng.random_range(-6.0..6.0);
            let y = f64::from(rng.random_bool(0.5) as u8);
            let n = rng.random_range(1..5) as f64;
            let lambda = s + 4.0 * xi(y, s);
            let expanded = 0.125 * n * (th - lambda).powi(2) + surrogate_constant(s, y, n);
            assert_abs_diff_eq!(expanded, surrogate_cell(th, s, y, n), epsilon = 1e-9);
            assert_abs_diff_eq!(surrogate_cell(s, s, y, n), cell_loss(y, n, s), epsilon = 1e-12);
            assert!(surrogate_cell(th, s, y, n) - cell_loss(y, n, th) >= -1e-10);
        }
    }

    #[test]
    fn outer_step_weights_are_row_constant() {
        let y = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let w = array![4.0, 2.0];
        let d = array![[0.5, 1.0, 0.2], [1.0, 0.3, 0.9]];
        let ws = WorkingState::outer_step(&y, &w, &array![0.1, 0.2, 0.3], OffsetVariant::PerItem, &d).unwrap();
        for r in 0..3 {
            assert_eq!(ws.w0[[0, r]], 4.0);
            assert_eq!(ws.w0[[1, r]], 2.0);
        }
        let lam = &ws.theta + &((&y - &ws.pi) * 4.0);
        assert_abs_diff_eq!((&ws.lambda - &lam).mapv(f64::abs).sum(), 0.0, epsilon = 1e-12);
    }
}
