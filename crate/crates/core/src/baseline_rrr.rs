//! Logistic reduced-rank regression, `theta_ir = m_r + <B'x_i, v_r>`.
//!
//! Uses the same quadratic majorization of the logistic loss as the distance
//! model. The surrogate is a weighted reduced-rank least-squares problem in
//! `(m, BV')` with a closed-form minimizer, so each outer iteration solves
//! it exactly: weighted OLS on centered data, then truncation of the fitted
//! values to rank `S`.

use ndarray::{Array1, Array2, Axis};

use crate::dataset::{BinaryDataset, PredictorSet};
use crate::error::{LmduError, Result};
use crate::estimator::{FitOptions, FitReport};
use crate::geometry::logistic;
use crate::linalg::{solve_spd, sym_eigen_desc};
use crate::majorization::{deviance, OffsetVariant};
use crate::selection::{aic, npar, ModelKind};

/// Offsets `m`, regression weights `B` (P x S) and item vectors `V` (R x S).
/// `V` has orthonormal columns and the columns of `XB` are orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedRankMap {
    pub offsets: Array1<f64>,
    pub b: Array2<f64>,
    pub v: Array2<f64>,
}

impl ReducedRankMap {
    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn theta(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.b.nrows() {
            return Err(LmduError::DimensionMismatch(format!(
                "X has {} columns, B has {} rows",
                x.ncols(),
                self.b.nrows()
            )));
        }
        let mut theta = x.dot(&self.b).dot(&self.v.t());
        theta += &self.offsets.view().insert_axis(Axis(0));
        Ok(theta)
    }

    pub fn probabilities(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.theta(x)?.mapv(logistic))
    }
}

pub fn predict_rrr(map: &ReducedRankMap, x_new: &Array2<f64>) -> Result<Array2<f64>> {
    map.probabilities(x_new)
}

struct Surrogate {
    /// Weighted column means of X.
    xbar: Array1<f64>,
    /// Weighted centered X.
    xc: Array2<f64>,
    /// `Xc' W Xc`.
    gram: Array2<f64>,
}

impl Surrogate {
    fn new(x: &Array2<f64>, weights: &Array1<f64>) -> Result<Self> {
        let total = weights.sum();
        let xbar = weights.dot(x) / total;
        let xc = x - &xbar.view().insert_axis(Axis(0));
        let mut wx = xc.clone();
        for (i, mut row) in wx.axis_iter_mut(Axis(0)).enumerate() {
            row *= weights[i];
        }
        let gram = xc.t().dot(&wx);
        Ok(Self { xbar, xc, gram })
    }

    /// Minimizes `sum_i w_i ||z_i - m - C'x_i||^2` over `m` and rank-`dim` `C = BV'`.
    fn solve(&self, z: &Array2<f64>, weights: &Array1<f64>, dim: usize) -> Result<ReducedRankMap> {
        let total = weights.sum();
        let zbar = weights.dot(z) / total;
        let items = z.ncols();
        let p = self.xc.ncols();
        if dim == 0 || p == 0 {
            return Ok(ReducedRankMap { offsets: zbar, b: Array2::zeros((p, 0)), v: Array2::zeros((items, 0)) });
        }
        let zc = z - &zbar.view().insert_axis(Axis(0));
        let mut wz = zc;
        for (i, mut row) in wz.axis_iter_mut(Axis(0)).enumerate() {
            row *= weights[i];
        }
        let xtwz = self.xc.t().dot(&wz);
        let c_ols = solve_spd(&self.gram, &xtwz)
            .map_err(|_| LmduError::Singular("X'WX is singular (collinear predictors?)".into()))?;
        // right singular vectors of W^1/2 Xc C_ols
        let fitted_cross = c_ols.t().dot(&self.gram).dot(&c_ols);
        let (_, q) = sym_eigen_desc(&fitted_cross);
        let mut v = q.slice(ndarray::s![.., ..dim]).to_owned();
        for mut col in v.axis_iter_mut(Axis(1)) {
            let mut best = 0.0f64;
            for &e in col.iter() {
                if e.abs() > best.abs() {
                    best = e;
                }
            }
            if best < 0.0 {
                col.mapv_inplace(|e| -e);
            }
        }
        let b = c_ols.dot(&v);
        let offsets = &zbar - &self.xbar.dot(&b).dot(&v.t());
        Ok(ReducedRankMap { offsets, b, v })
    }
}

fn zero_map(x: &Array2<f64>, y: &Array2<f64>, weights: &Array1<f64>, dim: usize) -> ReducedRankMap {
    let q = y.mapv(|e| 2.0 * e - 1.0);
    ReducedRankMap {
        offsets: weights.dot(&q) / weights.sum(),
        b: Array2::zeros((x.ncols(), dim)),
        v: Array2::zeros((y.ncols(), dim)),
    }
}

/// Fits the baseline with `opts.dim` as the rank (zero gives intercepts only).
/// Starts from `B = 0` and offsets at the mean of `q = 2y - 1`.
pub fn fit_rrr(data: &BinaryDataset, x: &PredictorSet, opts: &FitOptions) -> Result<(ReducedRankMap, FitReport)> {
    if opts.max_outer == 0 || !(opts.eps_outer > 0.0) {
        return Err(LmduError::InvalidOption("max_outer and eps_outer must be positive".into()));
    }
    if x.n_obs() != data.n_rows() {
        return Err(LmduError::DimensionMismatch(format!(
            "{} predictor rows for {} response rows",
            x.n_obs(),
            data.n_rows()
        )));
    }
    let rank_cap = x.n_predictors().min(data.n_items());
    if opts.dim > rank_cap {
        return Err(LmduError::InvalidOption(format!("rank {} exceeds min(P, R) = {rank_cap}", opts.dim)));
    }
    let y = data.y();
    let weights = data.weights();
    let xm = x.x();
    let sur = Surrogate::new(xm, &weights)?;
    let mut map = zero_map(xm, y, &weights, opts.dim);
    let mut theta = map.theta(xm)?;
    let mut dev = deviance(y, &weights, &theta);
    let mut trace = vec![dev];
    let mut converged = false;
    for iteration in 1..=opts.max_outer {
        let mut z = theta.clone();
        z.zip_mut_with(y, |t, &yy| *t += 4.0 * (yy - logistic(*t)));
        map = sur.solve(&z, &weights, opts.dim)?;
        theta = map.theta(xm)?;
        let new = deviance(y, &weights, &theta);
        if !new.is_finite() {
            return Err(LmduError::NonFinite { iteration });
        }
        trace.push(new);
        let decrease = dev - new;
        dev = new;
        if decrease < opts.eps_outer {
            converged = true;
            break;
        }
    }
    let n = npar(
        ModelKind::ReducedRank,
        x.n_predictors() as u64,
        data.n_items() as u64,
        opts.dim as u64,
        OffsetVariant::PerItem,
        data.total_count(),
        opts.npar_rule,
    )?;
    let report = FitReport {
        deviance: dev,
        converged,
        best_start: 0,
        iterations: trace.len() - 1,
        npar: n,
        aic: aic(dev, n),
        start_deviances: vec![Some(dev)],
        trace,
    };
    Ok((map, report))
}
