//! Joint-space geometry: two-mode distances, endorsement probabilities,
//! classification regions and the region-count formulas.

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{LmduError, Result};
use crate::majorization::OffsetVariant;

/// Item offsets, person coordinates `U` (I x S) and item coordinates `V` (R x S).
///
/// With [`OffsetVariant::PerPerson`] the offsets have one entry per row of `U`;
/// otherwise one per item.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldingMap {
    pub offsets: Array1<f64>,
    pub variant: OffsetVariant,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl UnfoldingMap {
    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn distances(&self) -> Array2<f64> {
        distances_unchecked(self.u.view(), self.v.view())
    }

    pub fn theta(&self) -> Array2<f64> {
        linear_predictor(self.offsets.view(), self.variant, &self.distances())
    }

    pub fn probabilities(&self) -> Array2<f64> {
        self.theta().mapv(logistic)
    }
}

/// Supervised map: person coordinates are `U = X B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedUnfoldingMap {
    pub offsets: Array1<f64>,
    pub variant: OffsetVariant,
    pub b: Array2<f64>,
    pub v: Array2<f64>,
}

impl SupervisedUnfoldingMap {
    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn person_coordinates(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.b.nrows() {
            return Err(LmduError::DimensionMismatch(format!(
                "X has {} columns, B has {} rows",
                x.ncols(),
                self.b.nrows()
            )));
        }
        Ok(x.dot(&self.b))
    }

    pub fn theta(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let u = self.person_coordinates(x)?;
        let d = distances_unchecked(u.view(), self.v.view());
        Ok(linear_predictor(self.offsets.view(), self.variant, &d))
    }

    pub fn probabilities(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.theta(x)?.mapv(logistic))
    }
}

/// `D_ir = ||u_i - v_r||`.
pub fn distance_matrix(u: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>> {
    if u.ncols() != v.ncols() {
        return Err(LmduError::DimensionMismatch(format!("U has {} columns, V has {}", u.ncols(), v.ncols())));
    }
    Ok(distances_unchecked(u.view(), v.view()))
}

pub(crate) fn distances_unchecked(u: ArrayView2<f64>, v: ArrayView2<f64>) -> Array2<f64> {
    let (n, s) = u.dim();
    let r = v.nrows();
    let (u, v) = (u.as_standard_layout(), v.as_standard_layout());
    let (us, vs) = (u.as_slice().expect("standard layout"), v.as_slice().expect("standard layout"));
    let mut out = vec![0.0; n * r];
    for (ui, row) in us.chunks_exact(s.max(1)).zip(out.chunks_exact_mut(r.max(1))) {
        for (vk, o) in vs.chunks_exact(s.max(1)).zip(row.iter_mut()) {
            *o = ui.iter().zip(vk).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        }
    }
    Array2::from_shape_vec((n, r), out).expect("shape matches")
}

/// Numerically stable `1 / (1 + exp(-t))`.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `theta = m - D`, broadcasting the offsets along items or persons.
pub fn linear_predictor(offsets: ArrayView1<f64>, variant: OffsetVariant, d: &Array2<f64>) -> Array2<f64> {
    let mut theta = d.clone();
    for ((i, r), t) in theta.indexed_iter_mut() {
        let m = match variant {
            OffsetVariant::PerPerson => offsets[i],
            _ => offsets[r],
        };
        *t = m - *t;
    }
    theta
}

/// Item-offset endorsement probabilities `pi_ir = 1 / (1 + exp(D_ir - m_r))`.
pub fn endorse_prob(m: &Array1<f64>, d: &Array2<f64>) -> Result<Array2<f64>> {
    if m.len() != d.ncols() {
        return Err(LmduError::DimensionMismatch(format!("{} offsets for {} items", m.len(), d.ncols())));
    }
    Ok(linear_predictor(m.view(), OffsetVariant::PerItem, d).mapv(logistic))
}

/// 1 where the probability strictly exceeds `threshold`, else 0.
pub fn classify(pi: &Array2<f64>, threshold: f64) -> Array2<u8> {
    pi.mapv(|p| u8::from(p > threshold))
}

/// Geometry of the response model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionFamily {
    Distance,
    InnerProduct,
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.checked_mul((n - j) as u128)? / (j as u128 + 1);
    }
    Some(acc)
}

/// Maximum number of classification regions for `R` items in `S` dimensions.
///
/// Distance family: `C(R-1, S) + sum_{s=0..S} C(R, s)`; inner-product family
/// drops the first term.
pub fn max_regions(items: u64, dim: u64, family: RegionFamily) -> Result<u128> {
    if items == 0 || dim == 0 {
        return Err(LmduError::InvalidOption("R and S must be positive".into()));
    }
    let overflow = || LmduError::InvalidOption("region count overflows u128".into());
    let mut total: u128 = 0;
    for s in 0..=dim {
        total = total.checked_add(binomial(items, s).ok_or_else(overflow)?).ok_or_else(overflow)?;
    }
    if family == RegionFamily::Distance {
        total = total.checked_add(binomial(items - 1, dim).ok_or_else(overflow)?).ok_or_else(overflow)?;
    }
    Ok(total)
}

/// Number of distinct predicted profiles over a `steps x steps` grid covering
/// `[lo, hi]^2`. `profile` maps a point to a bitmask of endorsed items.
pub fn region_census(lo: f64, hi: f64, steps: usize, profile: impl Fn(f64, f64) -> u64) -> usize {
    let mut seen = HashSet::new();
    let h = if steps > 1 { (hi - lo) / (steps - 1) as f64 } else { 0.0 };
    for a in 0..steps {
        let x = lo + h * a as f64;
        for b in 0..steps {
            seen.insert(profile(x, lo + h * b as f64));
        }
    }
    seen.len()
}

/// Bitmask of items whose disc `||p - v_r|| < m_r` contains the point.
pub fn distance_profile(m: &Array1<f64>, v: &Array2<f64>, x: f64, y: f64) -> u64 {
    let mut mask = 0u64;
    for r in 0..v.nrows() {
        let d = ((x - v[[r, 0]]).powi(2) + (y - v[[r, 1]]).powi(2)).sqrt();
        if logistic(m[r] - d) > 0.5 {
            mask |= 1 << r;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_four_five() {
        let d = distance_matrix(&array![[0.0, 0.0]], &array![[3.0, 4.0]]).unwrap();
        assert_eq!(d[[0, 0]], 5.0);
    }

    #[test]
    fn square_case_has_zero_diagonal() {
        let u = array![[1.0, 2.0], [-0.5, 3.0], [0.0, 0.0]];
        let d = distance_matrix(&u, &u).unwrap();
        for i in 0..3 {
            assert_eq!(d[[i, i]], 0.0);
        }
    }

    #[test]
    fn distances_match_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Array2::from_shape_fn((4, 2), |_| rng.random_range(-2.0..2.0));
        let v = Array2::from_shape_fn((3, 2), |_| rng.random_range(-2.0..2.0));
        let d = distance_matrix(&u, &v).unwrap();
        for i in 0..4 {
            for r in 0..3 {
                let mut ss = 0.0;
                for s in 0..2 {
                    ss += (u[[i, s]] - v[[r, s]]) * (u[[i, s]] - v[[r, s]]);
                }
                assert_abs_diff_eq!(d[[i, r]], ss.sqrt(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(distance_matrix(&array![[0.0]], &array![[0.0, 1.0]]).is_err());
    }

    #[test]
    fn probability_at_radius_is_half() {
        let p = endorse_prob(&array![1.7], &array![[1.7]]).unwrap();
        assert_eq!(p[[0, 0]], 0.5);
    }

    #[test]
    fn probability_peak_for_offset_two() {
        let p = endorse_prob(&array![2.0], &array![[0.0]]).unwrap();
        assert_abs_diff_eq!(p[[0, 0]], 0.880797077977882, epsilon = 1e-12);
    }

    #[test]
    fn zero_offset_caps_probability() {
        let d = array![[0.0, 0.3, 2.0, 50.0]];
        let p = endorse_prob(&array![0.0, 0.0, 0.0, 0.0], &d).unwrap();
        assert!(p.iter().all(|&x| x <= 0.5));
    }

    #[test]
    fn logistic_saturates_without_overflow() {
        assert_eq!(logistic(-1000.0), 0.0);
        assert_eq!(logistic(1000.0), 1.0);
        assert!(logistic(-745.0) > 0.0);
    }

    #[test]
    fn log_odds_round_trip() {
        for t in [-20.0, -3.2, -0.1, 0.0, 0.7, 5.0, 20.0] {
            let p = logistic(t);
            assert_abs_diff_eq!((p / (1.0 - p)).ln(), t, epsilon = 1e-6);
        }
    }

    #[test]
    fn classify_tie_goes_to_zero() {
        let c = classify(&array![[0.51, 0.5, 0.49]], 0.5);
        assert_eq!(c, array![[1, 0, 0]]);
    }

    #[test]
    fn person_inside_circle_is_endorser() {
        let m = array![1.0];
        let d = distance_matrix(&array![[0.2, 0.3]], &array![[0.0, 0.0]]).unwrap();
        let c = classify(&endorse_prob(&m, &d).unwrap(), 0.5);
        assert_eq!(c[[0, 0]], 1);
    }

    #[test]
    fn region_counts_match_known_values() {
        assert_eq!(max_regions(4, 2, RegionFamily::Distance).unwrap(), 14);
        assert_eq!(max_regions(6, 1, RegionFamily::Distance).unwrap(), 12);
        assert_eq!(max_regions(6, 2, RegionFamily::Distance).unwrap(), 32);
        assert_eq!(max_regions(6, 3, RegionFamily::Distance).unwrap(), 52);
        assert_eq!(max_regions(6, 2, RegionFamily::InnerProduct).unwrap(), 1 + 6 + 15);
        // S = R - 1 represents every profile
        assert_eq!(max_regions(5, 4, RegionFamily::Distance).unwrap(), 32);
        assert!(max_regions(0, 2, RegionFamily::Distance).is_err());
        assert!(max_regions(100, 10, RegionFamily::Distance).is_ok());
        assert!(max_regions(400, 300, RegionFamily::Distance).is_err());
    }

    #[test]
    fn monotone_in_distance_and_offset() {
        let m = Array1::from_elem(5, 0.4);
        let d = array![[0.0, 0.5, 1.0, 2.0, 4.0]];
        let p = endorse_prob(&m, &d).unwrap();
        for k in 1..5 {
            assert!(p[[0, k]] < p[[0, k - 1]]);
        }
        let lo = endorse_prob(&array![0.3], &array![[1.0]]).unwrap()[[0, 0]];
        let hi = endorse_prob(&array![0.31], &array![[1.0]]).unwrap()[[0, 0]];
        assert!(hi > lo);
    }

    #[test]
    fn per_person_offsets_broadcast_along_rows() {
        let d = array![[1.0, 2.0], [1.0, 2.0]];
        let theta = linear_predictor(array![3.0, 0.0].view(), OffsetVariant::PerPerson, &d);
        assert_eq!(theta, array![[2.0, 1.0], [-1.0, -2.0]]);
    }
}
