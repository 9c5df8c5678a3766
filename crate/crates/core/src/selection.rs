//! Parameter counts and AIC for choosing the dimensionality and predictors.
//!
//! Two counting rules are available. [`NparRule::Published`] reproduces the
//! AIC values reported for the religious and election analyses;
//! [`NparRule::Text`] is the closed form usually written down, which differs
//! by `2S` in the unsupervised and supervised cases.

use serde::{Deserialize, Serialize};

use crate::error::{LmduError, Result};
use crate::majorization::OffsetVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Unsupervised,
    Supervised,
    /// Inner-product (reduced-rank) baseline.
    ReducedRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NparRule {
    #[default]
    Published,
    Text,
}

/// Number of free parameters.
///
/// `rows` is the number of participants `I` (unsupervised) or predictors `P`.
/// `participants` is only consulted for per-person offsets.
pub fn npar(
    kind: ModelKind,
    rows: u64,
    items: u64,
    dim: u64,
    variant: OffsetVariant,
    participants: u64,
    rule: NparRule,
) -> Result<i64> {
    if rows == 0 || items == 0 {
        return Err(LmduError::InvalidOption("npar needs positive I/P and R".into()));
    }
    let (i, r, s) = (rows as i64, items as i64, dim as i64);
    let offsets = match variant {
        OffsetVariant::PerItem => r,
        OffsetVariant::Shared => 1,
        OffsetVariant::PerPerson => participants as i64,
    };
    let n = match (kind, rule) {
        (ModelKind::Unsupervised, NparRule::Published) => i * s + r * s - s * (s - 1) / 2,
        (ModelKind::Unsupervised, NparRule::Text) => (i - 1) * s + r * s - s * (s - 1) / 2,
        (ModelKind::Supervised, NparRule::Published) => i * s + r * s - s * (s + 1) / 2,
        (ModelKind::Supervised, NparRule::Text) => i * s + r * s - s * (s - 1) / 2,
        (ModelKind::ReducedRank, _) => i * s + r * s - s * s,
    };
    Ok(n + offsets)
}

/// `AIC = deviance + 2 npar`.
pub fn aic(deviance: f64, npar: i64) -> f64 {
    deviance + 2.0 * npar as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pub_npar(kind: ModelKind, rows: u64, items: u64, dim: u64) -> i64 {
        npar(kind, rows, items, dim, OffsetVariant::PerItem, rows, NparRule::Published).unwrap()
    }

    #[test]
    fn counts_behind_reported_aics() {
        assert_eq!(pub_npar(ModelKind::Unsupervised, 351, 8, 2), 725);
        assert_eq!(pub_npar(ModelKind::Unsupervised, 3525, 6, 1), 3537);
        assert_eq!(pub_npar(ModelKind::Supervised, 5, 8, 2), 31);
    }

    #[test]
    fn aic_values() {
        assert_abs_diff_eq!(aic(918.52, 725), 2368.52, epsilon = 1e-9);
        assert_eq!(aic(0.0, 0), 0.0);
        assert_abs_diff_eq!(aic(5690.7, 7067), 19824.7, epsilon = 1e-9);
    }

    #[test]
    fn text_rule_shifts_aic_by_two_s() {
        for s in 1..4 {
            let p = pub_npar(ModelKind::Unsupervised, 100, 6, s);
            let t = npar(ModelKind::Unsupervised, 100, 6, s, OffsetVariant::PerItem, 100, NparRule::Text).unwrap();
            assert_eq!(p - t, s as i64);
            let p = pub_npar(ModelKind::Supervised, 5, 8, s);
            let t = npar(ModelKind::Supervised, 5, 8, s, OffsetVariant::PerItem, 100, NparRule::Text).unwrap();
            assert_eq!(t - p, s as i64);
        }
    }

    #[test]
    fn offset_variants_change_the_offset_term() {
        let base = pub_npar(ModelKind::Unsupervised, 50, 6, 2);
        let shared = npar(ModelKind::Unsupervised, 50, 6, 2, OffsetVariant::Shared, 50, NparRule::Published).unwrap();
        let person =
            npar(ModelKind::Unsupervised, 50, 6, 2, OffsetVariant::PerPerson, 50, NparRule::Published).unwrap();
        assert_eq!(base - shared, 5);
        assert_eq!(person - base, 44);
    }
}
