//! Comparing an estimated configuration with a reference one, and scoring
//! probability predictions.

use ndarray::{Array1, Array2, Axis};

use crate::error::{LmduError, Result};
use crate::linalg::svd;

fn same_shape(z: &Array2<f64>, zhat: &Array2<f64>) -> Result<()> {
    if z.dim() != zhat.dim() {
        return Err(LmduError::DimensionMismatch(format!("configurations {:?} and {:?}", z.dim(), zhat.dim())));
    }
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(LmduError::EmptyInput("empty configuration".into()));
    }
    Ok(())
}

/// Congruence of all pairwise distances:
/// `sum d(Z) d(Zhat) / sqrt(sum d(Z)^2 sum d(Zhat)^2)` over `i < j`.
pub fn congruence(z: &Array2<f64>, zhat: &Array2<f64>) -> Result<f64> {
    same_shape(z, zhat)?;
    let n = z.nrows();
    let (mut cross, mut a2, mut b2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = (&z.row(i) - &z.row(j)).mapv(|e| e * e).sum().sqrt();
            let b = (&zhat.row(i) - &zhat.row(j)).mapv(|e| e * e).sum().sqrt();
            cross += a * b;
            a2 += a * a;
            b2 += b * b;
        }
    }
    if !(a2 > 0.0 && b2 > 0.0) {
        return Err(LmduError::Degenerate("all points coincide".into()));
    }
    Ok(cross / (a2.sqrt() * b2.sqrt()))
}

/// Orthogonal `T` maximizing `tr(Z' Zhat T)`, from the SVD of `Zhat' Z`.
pub fn procrustes_rotation(z: &Array2<f64>, zhat: &Array2<f64>) -> Result<Array2<f64>> {
    same_shape(z, zhat)?;
    let (p, _, q) = svd(&zhat.t().dot(z));
    Ok(p.dot(&q.t()))
}

fn centered(z: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mean = z.mean_axis(Axis(0)).expect("non-empty configuration");
    (z - &mean.view().insert_axis(Axis(0)), mean)
}

/// Procrustes correlation `tr(Z' Zhat T) / sqrt(tr(Z Z') tr(Zhat Zhat'))`,
/// computed on column-centered configurations.
pub fn config_correlation(z: &Array2<f64>, zhat: &Array2<f64>) -> Result<f64> {
    same_shape(z, zhat)?;
    let (zc, _) = centered(z);
    let (hc, _) = centered(zhat);
    let a = zc.mapv(|e| e * e).sum();
    let b = hc.mapv(|e| e * e).sum();
    if !(a > 0.0 && b > 0.0) {
        return Err(LmduError::Degenerate("zero configuration".into()));
    }
    let t = procrustes_rotation(&zc, &hc)?;
    let num = (&zc * &hc.dot(&t)).sum();
    Ok(num / (a * b).sqrt())
}

/// Similarity transformation `c Zhat T + 1 t'` closest to `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityFit {
    pub rotation: Array2<f64>,
    pub dilation: f64,
    pub translation: Array1<f64>,
    pub aligned: Array2<f64>,
    /// `||Z - aligned||^2`.
    pub residual: f64,
}

pub fn procrustes_similarity(z: &Array2<f64>, zhat: &Array2<f64>) -> Result<SimilarityFit> {
    same_shape(z, zhat)?;
    let (zc, zm) = centered(z);
    let (hc, hm) = centered(zhat);
    let ss = hc.mapv(|e| e * e).sum();
    if !(ss > 0.0) {
        return Err(LmduError::Degenerate("estimated configuration is a single point".into()));
    }
    let t = procrustes_rotation(&zc, &hc)?;
    let c = (&zc * &hc.dot(&t)).sum() / ss;
    let translation = &zm - &(hm.dot(&t) * c);
    let aligned = zhat.dot(&t) * c + &translation.view().insert_axis(Axis(0));
    let residual = (z - &aligned).mapv(|e| e * e).sum();
    Ok(SimilarityFit { rotation: t, dilation: c, translation, aligned, residual })
}

/// `||Z - Zhat T||^2` for the orthogonal Procrustes rotation, no centering or dilation.
pub fn rotation_residual(z: &Array2<f64>, zhat: &Array2<f64>) -> Result<f64> {
    let t = procrustes_rotation(z, zhat)?;
    Ok((z - &zhat.dot(&t)).mapv(|e| e * e).sum())
}

/// `sqrt(1 - phi^2)`.
pub fn alienation(phi: f64) -> f64 {
    (1.0 - phi * phi).max(0.0).sqrt()
}

/// Mean squared difference over all cells.
pub fn brier(y: &Array2<f64>, pi: &Array2<f64>) -> Result<f64> {
    if y.dim() != pi.dim() {
        return Err(LmduError::DimensionMismatch("outcomes and predictions differ in shape".into()));
    }
    if y.is_empty() {
        return Err(LmduError::EmptyInput("no cells to score".into()));
    }
    Ok((y - pi).mapv(|e| e * e).sum() / y.len() as f64)
}

/// Stacks person and item coordinates into one configuration `[U; V]`.
pub fn stack(u: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>> {
    ndarray::concatenate(Axis(0), &[u.view(), v.view()]).map_err(|e| LmduError::DimensionMismatch(e.to_string()))
}
