//! Residuals, classification statistics, leave-one-out influence and
//! component-plus-residual data for fitted maps.

use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Axis, Zip};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{BinaryDataset, PredictorSet};
use crate::error::{LmduError, Result};
use crate::estimator::{fit_supervised_from, FitOptions};
use crate::evaluation::procrustes_rotation;
use crate::geometry::SupervisedUnfoldingMap;
use crate::majorization::{cell_loss, deviance};
use crate::montecarlo::write_csv;

/// Default span of the component-plus-residual smoother.
pub const DEFAULT_SPAN: f64 = 0.75;

fn same_dim(a: &Array2<f64>, b: &Array2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(LmduError::DimensionMismatch(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `e = y - pi`.
pub fn raw_residuals(y: &Array2<f64>, pi: &Array2<f64>) -> Result<Array2<f64>> {
    same_dim(y, pi, "responses and probabilities")?;
    Ok(y - pi)
}

/// `sign(y - pi) sqrt(2 L)`, so the squares add up to the deviance.
pub fn deviance_residuals(y: &Array2<f64>, weights: &Array1<f64>, theta: &Array2<f64>) -> Result<Array2<f64>> {
    same_dim(y, theta, "responses and linear predictor")?;
    if weights.len() != y.nrows() {
        return Err(LmduError::DimensionMismatch("one weight per row required".into()));
    }
    let mut out = Array2::zeros(y.dim());
    Zip::indexed(&mut out).and(y).and(theta).for_each(|(i, _), o, &yy, &t| {
        let l = cell_loss(yy, weights[i], t);
        let pi = crate::geometry::logistic(t);
        let e = yy - pi;
        let s = if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            0.0
        };
        *o = s * (2.0 * l).sqrt();
    });
    Ok(out)
}

/// Classification statistics for one item. `None` marks a zero denominator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemMetrics {
    pub item: String,
    pub proportion_correct: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub threshold: f64,
    pub items: Vec<ItemMetrics>,
}

impl MetricsTable {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path, &self.items)
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Weighted Mann-Whitney statistic; tied scores count one half.
pub fn weighted_auc(y: &[f64], score: &[f64], weights: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..y.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let (mut pos_total, mut neg_total) = (0.0, 0.0);
    for &i in &order {
        if y[i] > 0.5 {
            pos_total += weights[i];
        } else {
            neg_total += weights[i];
        }
    }
    if !(pos_total > 0.0 && neg_total > 0.0) {
        return None;
    }
    let (mut below, mut acc, mut k) = (0.0, 0.0, 0);
    while k < order.len() {
        let s = score[order[k]];
        let (mut pos, mut neg) = (0.0, 0.0);
        while k < order.len() && score[order[k]] == s {
            let i = order[k];
            if y[i] > 0.5 {
                pos += weights[i];
            } else {
                neg += weights[i];
            }
            k += 1;
        }
        acc += pos * (below + 0.5 * neg);
        below += neg;
    }
    Some(acc / (pos_total * neg_total))
}

/// Confusion-matrix statistics per item at `threshold`, each row weighted by
/// its count.
pub fn classification_metrics(data: &BinaryDataset, pi: &Array2<f64>, threshold: f64) -> Result<MetricsTable> {
    let y = data.y();
    same_dim(y, pi, "responses and probabilities")?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(LmduError::InvalidOption(format!("threshold {threshold} outside (0, 1)")));
    }
    let w: Vec<f64> = data.counts().iter().map(|&c| c as f64).collect();
    let items = (0..y.ncols())
        .map(|r| {
            let (mut tp, mut tn, mut fp, mut fneg) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..y.nrows() {
                let pos = y[[i, r]] > 0.5;
                let pred = pi[[i, r]] > threshold;
                match (pos, pred) {
                    (true, true) => tp += w[i],
                    (false, false) => tn += w[i],
                    (false, true) => fp += w[i],
                    (true, false) => fneg += w[i],
                }
            }
            let sens = ratio(tp, tp + fneg);
            let ppv = ratio(tp, tp + fp);
            let f1 = match (ppv, sens) {
                (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
                _ => None,
            };
            let yc: Vec<f64> = y.column(r).to_vec();
            let pc: Vec<f64> = pi.column(r).to_vec();
            ItemMetrics {
                item: data.item_labels()[r].clone(),
                proportion_correct: ratio(tp + tn, tp + tn + fp + fneg),
                sensitivity: sens,
                specificity: ratio(tn, tn + fp),
                ppv,
                npv: ratio(tn, tn + fneg),
                f1,
                auc: weighted_auc(&yc, &pc, &w),
            }
        })
        .collect();
    Ok(MetricsTable { threshold, items })
}

/// Leave-one-out change for one observation. Failed refits carry `error`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceRecord {
    pub observation: usize,
    /// `dev(full) - dev(leave-one-out)`, both on the full sample; at most
    /// zero when the full fit is the global optimum.
    pub delta_deviance: Option<f64>,
    pub delta_b: Option<f64>,
    pub delta_v: Option<f64>,
    pub error: Option<String>,
}

fn influence_one(
    data: &BinaryDataset,
    x: &PredictorSet,
    opts: &FitOptions,
    fitted: &SupervisedUnfoldingMap,
    full_dev: f64,
    i: usize,
) -> Result<(f64, f64, f64)> {
    let d = data.without_row(i)?;
    let xs = x.without_row(i);
    let (loo, _) = fit_supervised_from(&d, &xs, opts, fitted)?;
    let loo_dev = deviance(data.y(), &data.weights(), &loo.theta(x.x())?);
    let target = concatenate(Axis(0), &[fitted.b.view(), fitted.v.view()])
        .map_err(|e| LmduError::DimensionMismatch(e.to_string()))?;
    let est =
        concatenate(Axis(0), &[loo.b.view(), loo.v.view()]).map_err(|e| LmduError::DimensionMismatch(e.to_string()))?;
    let t = procrustes_rotation(&target, &est)?;
    let db = (&fitted.b - &loo.b.dot(&t)).mapv(|e| e * e).sum();
    let dv = (&fitted.v - &loo.v.dot(&t)).mapv(|e| e * e).sum();
    Ok((full_dev - loo_dev, db, dv))
}

/// Refits without each row in turn, warm-started at `fitted` with a single
/// start. Records come back in row order.
pub fn influence(
    data: &BinaryDataset,
    x: &PredictorSet,
    opts: &FitOptions,
    fitted: &SupervisedUnfoldingMap,
) -> Result<Vec<InfluenceRecord>> {
    if data.n_rows() != x.n_obs() {
        return Err(LmduError::DimensionMismatch("responses and predictors differ in rows".into()));
    }
    let mut opts = opts.clone();
    opts.n_starts = 1;
    opts.dim = fitted.dim();
    opts.offset_variant = fitted.variant;
    let full_dev = deviance(data.y(), &data.weights(), &fitted.theta(x.x())?);
    Ok((0..data.n_rows())
        .into_par_iter()
        .map(|i| match influence_one(data, x, &opts, fitted, full_dev, i) {
            Ok((dd, db, dv)) => InfluenceRecord {
                observation: i,
                delta_deviance: Some(dd),
                delta_b: Some(db),
                delta_v: Some(dv),
                error: None,
            },
            Err(e) => InfluenceRecord {
                observation: i,
                delta_deviance: None,
                delta_b: None,
                delta_v: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

pub fn write_influence_csv(path: impl AsRef<Path>, records: &[InfluenceRecord]) -> Result<()> {
    write_csv(path, records)
}

/// Local-linear regression with tricube weights over the nearest
/// `ceil(span * n)` points, evaluated at `at`.
pub fn local_linear(x: &[f64], y: &[f64], span: f64, at: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.is_empty() {
        return Err(LmduError::DimensionMismatch("smoother needs paired, non-empty data".into()));
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(LmduError::InvalidOption(format!("span {span} outside (0, 1]")));
    }
    let n = x.len();
    let k = ((span * n as f64).ceil() as usize).clamp(2.min(n), n);
    let mut dist = vec![0.0; n];
    at.iter()
        .map(|&x0| {
            for (d, &xi) in dist.iter_mut().zip(x) {
                *d = (xi - x0).abs();
            }
            let mut sorted = dist.clone();
            sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
            let h = sorted[k - 1].max(f64::MIN_POSITIVE);
            let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..n {
                let u = dist[j] / h;
                if u >= 1.0 {
                    continue;
                }
                let w = (1.0 - u * u * u).powi(3);
                let dx = x[j] - x0;
                sw += w;
                sx += w * dx;
                sy += w * y[j];
                sxx += w * dx * dx;
                sxy += w * dx * y[j];
            }
            if !(sw > 0.0) {
                return Err(LmduError::Degenerate(format!("no data near {x0}")));
            }
            let det = sw * sxx - sx * sx;
            Ok(if det > 1e-12 * sw * sxx.max(f64::MIN_POSITIVE) { (sxx * sy - sx * sxy) / det } else { sy / sw })
        })
        .collect()
}

/// Scatter, assumed curve and smoother for one predictor and one item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentResidualData {
    pub predictor: String,
    pub item: String,
    pub x: Vec<f64>,
    /// `m_r - d(x_ip b_p, v_r) + 4 e_ir`.
    pub partial: Vec<f64>,
    pub grid: Vec<f64>,
    /// `m_r - d(x b_p, v_r)` on the grid.
    pub assumed: Vec<f64>,
    pub smooth: Vec<f64>,
}

#[derive(Serialize)]
struct CprRow<'a> {
    kind: &'a str,
    x: f64,
    y: f64,
}

impl ComponentResidualData {
    /// Long format: `kind` is `point`, `assumed` or `smooth`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut rows = Vec::new();
        rows.extend(self.x.iter().zip(&self.partial).map(|(&x, &y)| CprRow { kind: "point", x, y }));
        rows.extend(self.grid.iter().zip(&self.assumed).map(|(&x, &y)| CprRow { kind: "assumed", x, y }));
        rows.extend(self.grid.iter().zip(&self.smooth).map(|(&x, &y)| CprRow { kind: "smooth", x, y }));
        write_csv(path, &rows)
    }
}

const CPR_GRID: usize = 101;

pub fn component_residual_data(
    fitted: &SupervisedUnfoldingMap,
    x: &PredictorSet,
    data: &BinaryDataset,
    predictor: usize,
    item: usize,
    span: f64,
) -> Result<ComponentResidualData> {
    let xm = x.x();
    if xm.nrows() != data.n_rows() {
        return Err(LmduError::DimensionMismatch("responses and predictors differ in rows".into()));
    }
    if predictor >= xm.ncols() || item >= data.n_items() {
        return Err(LmduError::InvalidOption(format!("no predictor {predictor} or item {item}")));
    }
    let pi = fitted.probabilities(xm)?;
    let col: Vec<f64> = xm.column(predictor).to_vec();
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(LmduError::Degenerate(format!("predictor {predictor} is constant")));
    }
    let m = fitted.offsets[item.min(fitted.offsets.len() - 1)];
    let b = fitted.b.row(predictor);
    let v = fitted.v.row(item);
    let curve = |t: f64| m - (&b * t - &v).mapv(|e| e * e).sum().sqrt();
    let partial: Vec<f64> =
        col.iter().enumerate().map(|(i, &t)| curve(t) + 4.0 * (data.y()[[i, item]] - pi[[i, item]])).collect();
    let grid: Vec<f64> = (0..CPR_GRID).map(|k| lo + (hi - lo) * k as f64 / (CPR_GRID - 1) as f64).collect();
    let assumed = grid.iter().map(|&t| curve(t)).collect();
    let smooth = local_linear(&col, &partial, span, &grid)?;
    Ok(ComponentResidualData {
        predictor: x.labels()[predictor].clone(),
        item: data.item_labels()[item].clone(),
        x: col,
        partial,
        grid,
        assumed,
        smooth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::majorization::OffsetVariant;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn raw_residual_examples() {
        let e = raw_residuals(&array![[1.0, 0.0]], &array![[1.0, 0.8]]).unwrap();
        assert_eq!(e, array![[0.0, -0.8]]);
        let e = raw_residuals(&array![[1.0, 0.0]], &array![[0.3, 0.3]]).unwrap();
        assert!(e[[0, 0]] > 0.0 && e[[0, 1]] < 0.0);
    }

    #[test]
    fn deviance_residual_examples() {
        let d = deviance_residuals(&array![[1.0]], &array![1.0], &array![[0.0]]).unwrap();
        assert_abs_diff_eq!(d[[0, 0]], (2.0 * 2f64.ln()).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(d[[0, 0]], 1.17741, epsilon = 1e-5);
        let d = deviance_residuals(&array![[1.0, 0.0]], &array![1.0], &array![[800.0, -800.0]]).unwrap();
        assert!(d.iter().all(|e| e.abs() < 1e-12));
        let y = array![[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
        let w = array![3.0, 2.0];
        let th = array![[0.3, -1.2, 2.0], [0.5, 0.1, -0.7]];
        let d = deviance_residuals(&y, &w, &th).unwrap();
        assert_abs_diff_eq!(d.mapv(|e| e * e).sum(), deviance(&y, &w, &th), epsilon = 1e-9);
    }

    #[test]
    fn hand_confusion_matrix() {
        let data = BinaryDataset::from_matrix(array![[1.0], [1.0], [0.0], [0.0]]).unwrap();
        let pi = array![[0.9], [0.4], [0.6], [0.1]];
        let t = classification_metrics(&data, &pi, 0.5).unwrap();
        let m = &t.items[0];
        for v in [m.proportion_correct, m.sensitivity, m.specificity, m.ppv, m.npv, m.f1] {
            assert_abs_diff_eq!(v.unwrap(), 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(m.auc.unwrap(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn undefined_metrics_stay_undefined() {
        let data = BinaryDataset::from_matrix(array![[1.0], [0.0], [0.0]]).unwrap();
        let pi = array![[0.2], [0.1], [0.3]];
        let m = &classification_metrics(&data, &pi, 0.5).unwrap().items[0];
        assert_eq!(m.ppv, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.sensitivity, Some(0.0));
        let all_pos = BinaryDataset::from_matrix(array![[1.0], [1.0]]).unwrap();
        let m = &classification_metrics(&all_pos, &array![[0.9], [0.2]], 0.5).unwrap().items[0];
        assert_eq!(m.auc, None);
        assert_eq!(m.specificity, None);
    }

    #[test]
    fn auc_properties() {
        assert_eq!(weighted_auc(&[1.0, 1.0, 0.0, 0.0], &[0.9, 0.8, 0.2, 0.1], &[1.0; 4]), Some(1.0));
        assert_eq!(weighted_auc(&[1.0, 0.0], &[0.5, 0.5], &[1.0; 2]), Some(0.5));
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let s = [0.3, 0.35, 0.8, 0.1, 0.35, 0.6];
        let w = [2.0, 1.0, 1.0, 3.0, 1.0, 1.0];
        let a = weighted_auc(&y, &s, &w).unwrap();
        let st: Vec<f64> = s.iter().map(|&p: &f64| (p / (1.0 - p)).ln() * 3.0 + 1.0).collect();
        assert_abs_diff_eq!(weighted_auc(&y, &st, &w).unwrap(), a, epsilon = 1e-15);
        // weights are replication counts
        let mut ye = Vec::new();
        let mut se = Vec::new();
        for i in 0..6 {
            for _ in 0..w[i] as usize {
                ye.push(y[i]);
                se.push(s[i]);
            }
        }
        let mut pairs = 0.0;
        let mut hits = 0.0;
        for i in 0..ye.len() {
            for j in 0..ye.len() {
                if ye[i] > 0.5 && ye[j] < 0.5 {
                    pairs += 1.0;
                    hits += if se[i] > se[j] {
                        1.0
                    } else if se[i] == se[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert_abs_diff_eq!(a, hits / pairs, epsilon = 1e-15);
    }

    #[test]
    fn metric_identities() {
        let y = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0]];
        let counts = vec![3, 1, 2, 5, 4];
        let data = BinaryDataset::with_counts(y.clone(), counts.clone()).unwrap();
        let pi = array![[0.7, 0.2], [0.6, 0.3], [0.4, 0.9], [0.1, 0.6], [0.8, 0.1]];
        let t = classification_metrics(&data, &pi, 0.5).unwrap();
        for (r, m) in t.items.iter().enumerate() {
            let p: f64 = (0..5).map(|i| y[[i, r]] * counts[i] as f64).sum();
            let n: f64 = (0..5).map(|i| (1.0 - y[[i, r]]) * counts[i] as f64).sum();
            let correct = m.proportion_correct.unwrap() * (p + n);
            assert_abs_diff_eq!(m.sensitivity.unwrap() * p + m.specificity.unwrap() * n, correct, epsilon = 1e-12);
            let (ppv, s) = (m.ppv.unwrap(), m.sensitivity.unwrap());
            assert_abs_diff_eq!(m.f1.unwrap(), 2.0 * ppv * s / (ppv + s), epsilon = 1e-12);
        }
    }

    #[test]
    fn smoother_reproduces_lines() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|&t| 2.0 - 0.5 * t).collect();
        let at = [0.0, 3.3, 9.75];
        let s = local_linear(&x, &y, 0.75, &at).unwrap();
        for (a, b) in at.iter().zip(&s) {
            assert_abs_diff_eq!(*b, 2.0 - 0.5 * a, epsilon = 1e-10);
        }
        assert!(local_linear(&x, &y, 0.0, &at).is_err());
    }

    fn small_fit() -> SupervisedUnfoldingMap {
        SupervisedUnfoldingMap {
            offsets: array![0.5, 1.0],
            variant: OffsetVariant::PerItem,
            b: array![[1.0, 0.0], [0.0, 0.0]],
            v: array![[0.5, 0.5], [-1.0, 0.0]],
        }
    }

    #[test]
    fn cpr_on_curve_without_residuals() {
        let fit = small_fit();
        let xm = array![[-1.0, 0.0], [0.0, 0.0], [0.5, 0.0], [2.0, 0.0]];
        let x = PredictorSet::from_matrix(xm.clone()).unwrap();
        let pi = fit.probabilities(&xm).unwrap();
        let data = BinaryDataset::from_matrix(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]]).unwrap();
        let c = component_residual_data(&fit, &x, &data, 0, 0, 0.75).unwrap();
        // removing the residual leaves the assumed form
        for (i, (t, p)) in c.x.iter().zip(&c.partial).enumerate() {
            let d = ((t - 0.5f64).powi(2) + 0.25).sqrt();
            let e = data.y()[[i, 0]] - pi[[i, 0]];
            assert_abs_diff_eq!(p - 4.0 * e, 0.5 - d, epsilon = 1e-12);
        }
        let data = BinaryDataset::from_matrix(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]]).unwrap();
        let c = component_residual_data(&fit, &x, &data, 1, 1, 0.75);
        assert!(c.is_err(), "constant predictor");
        let x2 = PredictorSet::from_matrix(array![[-1.0, 1.0], [0.0, 2.0], [0.5, 3.0], [2.0, 5.0]]).unwrap();
        let c = component_residual_data(&fit, &x2, &data, 1, 1, 0.75).unwrap();
        for a in &c.assumed {
            assert_abs_diff_eq!(*a, 0.0, epsilon = 1e-12);
        }
    }
}
