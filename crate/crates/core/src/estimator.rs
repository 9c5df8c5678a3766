//! Model fitting: random initialization, the outer majorization loop around
//! the unfolding inner loop, multistart, prediction and model files.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BinaryDataset, PredictorSet};
use crate::error::{LmduError, Result};
use crate::geometry::{distances_unchecked, linear_predictor, SupervisedUnfoldingMap, UnfoldingMap};
use crate::majorization::{base_weights, deviance, OffsetVariant, WorkingState};
use crate::selection::{aic, npar, ModelKind, NparRule};
use crate::unfolding::{
    identify_supervised, identify_unsupervised, inner_supervised, inner_unsupervised, InnerOptions, DEFAULT_EPSILON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    #[default]
    Random,
    /// First start taken from a caller-supplied map.
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub dim: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Outer break when the deviance decrease is below this.
    pub eps_outer: f64,
    /// Inner break when the stress decrease is below this.
    pub eps_inner: f64,
    pub epsilon_weight: f64,
    pub offset_variant: OffsetVariant,
    pub n_starts: usize,
    pub seed: u64,
    pub init: Init,
    pub npar_rule: NparRule,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            dim: 2,
            max_outer: 65_536,
            max_inner: 8,
            eps_outer: 1e-6,
            eps_inner: 1e-8,
            epsilon_weight: DEFAULT_EPSILON,
            offset_variant: OffsetVariant::PerItem,
            n_starts: 1,
            seed: 0,
            init: Init::Random,
            npar_rule: NparRule::Published,
        }
    }
}

impl FitOptions {
    pub fn with_dim(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(LmduError::InvalidOption("dimension must be at least 1".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.n_starts == 0 {
            return Err(LmduError::InvalidOption("iteration caps and starts must be at least 1".into()));
        }
        if !(self.eps_outer > 0.0 && self.eps_inner > 0.0 && self.epsilon_weight > 0.0) {
            return Err(LmduError::InvalidOption("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn inner(&self) -> InnerOptions {
        InnerOptions { max_sweeps: self.max_inner, tolerance: self.eps_inner, epsilon: self.epsilon_weight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Deviance at the start and after every outer iteration of the best start.
    pub trace: Vec<f64>,
    pub deviance: f64,
    pub converged: bool,
    pub best_start: usize,
    pub iterations: usize,
    pub npar: i64,
    pub aic: f64,
    /// Final deviance per start; `None` where the start failed numerically.
    pub start_deviances: Vec<Option<f64>>,
}

/// Outcome of one start before model-level bookkeeping.
#[derive(Debug, Clone)]
pub struct StartResult<M> {
    pub map: M,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl<M> StartResult<M> {
    pub fn deviance(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial deviance")
    }
}

/// Random stream for one start (or replication) derived from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Starting values: coordinates `N(0, 1)`, offsets the weighted mean of `q = 2y - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialValues {
    /// `U` (I x S) or `B` (P x S).
    pub coords: Array2<f64>,
    pub v: Array2<f64>,
    pub offsets: Array1<f64>,
}

pub fn init_random(
    rows: usize,
    dim: usize,
    y: &Array2<f64>,
    weights: &Array1<f64>,
    variant: OffsetVariant,
    rng: &mut ChaCha8Rng,
) -> InitialValues {
    let items = y.ncols();
    let coords = Array2::from_shape_simple_fn((rows, dim), || StandardNormal.sample(rng));
    let v = Array2::from_shape_simple_fn((items, dim), || StandardNormal.sample(rng));
    let q = y.mapv(|x| 2.0 * x - 1.0);
    let total = weights.sum();
    let offsets = match variant {
        OffsetVariant::PerItem => weights.dot(&q) / total,
        OffsetVariant::Shared => Array1::from_elem(items, weights.dot(&q).sum() / (total * items as f64)),
        OffsetVariant::PerPerson => q.mean_axis(ndarray::Axis(1)).expect("at least one item"),
    };
    InitialValues { coords, v, offsets }
}

fn check_responses(y: &Array2<f64>, weights: &Array1<f64>) -> Result<()> {
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(LmduError::EmptyInput("no responses".into()));
    }
    if !(weights.sum() > 0.0) {
        return Err(LmduError::ZeroWeight("profile weights".into()));
    }
    Ok(())
}

/// Outer loop from a given start for an unsupervised map; no identification.
pub fn refine_unsupervised(
    y: &Array2<f64>,
    weights: &Array1<f64>,
    start: UnfoldingMap,
    opts: &FitOptions,
) -> Result<StartResult<UnfoldingMap>> {
    let variant = start.variant;
    let w0 = base_weights(weights, y.ncols());
    let UnfoldingMap { mut offsets, mut u, mut v, .. } = start;
    let mut d = distances_unchecked(u.view(), v.view());
    let mut dev = deviance(y, weights, &linear_predictor(offsets.view(), variant, &d));
    if !dev.is_finite() {
        return Err(LmduError::NonFinite { iteration: 0 });
    }
    let mut trace = vec![dev];
    let mut converged = false;
    for iteration in 1..=opts.max_outer {
        let ws = WorkingState::outer_step(y, weights, &offsets, variant, &d)?;
        offsets = ws.offsets;
        let inner = inner_unsupervised(u, v, d, &w0, &ws.delta, opts.inner())?;
        u = inner.coords;
        v = inner.v;
        d = inner.d;
        let new = deviance(y, weights, &linear_predictor(offsets.view(), variant, &d));
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
    Ok(StartResult { map: UnfoldingMap { offsets, variant, u, v }, trace, converged })
}

/// Outer loop from a given start for a supervised map; no identification.
pub fn refine_supervised(
    y: &Array2<f64>,
    weights: &Array1<f64>,
    x: &Array2<f64>,
    start: SupervisedUnfoldingMap,
    opts: &FitOptions,
) -> Result<StartResult<SupervisedUnfoldingMap>> {
    let variant = start.variant;
    if variant == OffsetVariant::PerPerson {
        return Err(LmduError::InvalidOption("per-person offsets are not available for supervised maps".into()));
    }
    let w0 = base_weights(weights, y.ncols());
    let SupervisedUnfoldingMap { mut offsets, mut b, mut v, .. } = start;
    let mut d = distances_unchecked(x.dot(&b).view(), v.view());
    let mut dev = deviance(y, weights, &linear_predictor(offsets.view(), variant, &d));
    if !dev.is_finite() {
        return Err(LmduError::NonFinite { iteration: 0 });
    }
    let mut trace = vec![dev];
    let mut converged = false;
    for iteration in 1..=opts.max_outer {
        let ws = WorkingState::outer_step(y, weights, &offsets, variant, &d)?;
        offsets = ws.offsets;
        let inner = inner_supervised(x, b, v, d, &w0, &ws.delta, opts.inner())?;
        b = inner.coords;
        v = inner.v;
        d = inner.d;
        let new = deviance(y, weights, &linear_predictor(offsets.view(), variant, &d));
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
    Ok(StartResult { map: SupervisedUnfoldingMap { offsets, variant, b, v }, trace, converged })
}

/// Runs `n_starts` independent starts (in parallel) and keeps the lowest
/// final deviance, ties to the lower index. Numerical failures of single
/// starts are tolerated; other errors abort.
pub fn multistart<M, F>(n_starts: usize, run: F) -> Result<(StartResult<M>, usize, Vec<Option<f64>>)>
where
    M: Send,
    F: Fn(usize) -> Result<StartResult<M>> + Sync,
{
    if n_starts == 0 {
        return Err(LmduError::InvalidOption("at least one start is required".into()));
    }
    let results: Vec<Result<StartResult<M>>> = (0..n_starts).into_par_iter().map(&run).collect();
    let mut best: Option<(usize, StartResult<M>)> = None;
    let mut deviances = Vec::with_capacity(n_starts);
    let mut first_error = None;
    for (k, res) in results.into_iter().enumerate() {
        match res {
            Ok(r) => {
                let dev = r.deviance();
                deviances.push(Some(dev));
                let better = match &best {
                    None => true,
                    Some((_, b)) => dev < b.deviance(),
                };
                if better {
                    best = Some((k, r));
                }
            }
            Err(e) if e.is_numerical() => {
                deviances.push(None);
                first_error.get_or_insert(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((k, r)) => Ok((r, k, deviances)),
        None => Err(LmduError::AllStartsFailed(n_starts, first_error.unwrap_or_default())),
    }
}

fn report<M>(best: &StartResult<M>, best_start: usize, deviances: Vec<Option<f64>>, npar_value: i64) -> FitReport {
    let dev = best.deviance();
    FitReport {
        trace: best.trace.clone(),
        deviance: dev,
        converged: best.converged,
        best_start,
        iterations: best.trace.len() - 1,
        npar: npar_value,
        aic: aic(dev, npar_value),
        start_deviances: deviances,
    }
}

fn unsupervised_npar(data: &BinaryDataset, opts: &FitOptions) -> Result<i64> {
    npar(
        ModelKind::Unsupervised,
        data.total_count(),
        data.n_items() as u64,
        opts.dim as u64,
        opts.offset_variant,
        data.total_count(),
        opts.npar_rule,
    )
}

fn supervised_npar(data: &BinaryDataset, p: usize, opts: &FitOptions) -> Result<i64> {
    npar(
        ModelKind::Supervised,
        p as u64,
        data.n_items() as u64,
        opts.dim as u64,
        opts.offset_variant,
        data.total_count(),
        opts.npar_rule,
    )
}

fn random_unsupervised_start(data: &BinaryDataset, opts: &FitOptions, k: usize) -> UnfoldingMap {
    let mut rng = stream_rng(opts.seed, k as u64);
    let init = init_random(data.n_rows(), opts.dim, data.y(), &data.weights(), opts.offset_variant, &mut rng);
    UnfoldingMap { offsets: init.offsets, variant: opts.offset_variant, u: init.coords, v: init.v }
}

fn random_supervised_start(data: &BinaryDataset, p: usize, opts: &FitOptions, k: usize) -> SupervisedUnfoldingMap {
    let mut rng = stream_rng(opts.seed, k as u64);
    let init = init_random(p, opts.dim, data.y(), &data.weights(), opts.offset_variant, &mut rng);
    SupervisedUnfoldingMap { offsets: init.offsets, variant: opts.offset_variant, b: init.coords, v: init.v }
}

fn fit_unsupervised_impl(
    data: &BinaryDataset,
    opts: &FitOptions,
    supplied: Option<&UnfoldingMap>,
) -> Result<(UnfoldingMap, FitReport)> {
    opts.validate()?;
    check_responses(data.y(), &data.weights())?;
    if data.has_all_zero_row() {
        return Err(LmduError::InvalidOption("unsupervised fits need the all-zero profile removed".into()));
    }
    if let Some(s) = supplied {
        check_unsupervised_start(data, opts, s)?;
    }
    let weights = data.weights();
    let (best, k, devs) = multistart(opts.n_starts, |k| {
        let start = match (k, supplied) {
            (0, Some(s)) => s.clone(),
            _ => random_unsupervised_start(data, opts, k),
        };
        refine_unsupervised(data.y(), &weights, start, opts)
    })?;
    let n = unsupervised_npar(data, opts)?;
    let rep = report(&best, k, devs, n);
    let map = identify_unsupervised(&best.map, &weights)?;
    Ok((map, rep))
}

fn check_unsupervised_start(data: &BinaryDataset, opts: &FitOptions, s: &UnfoldingMap) -> Result<()> {
    let offsets = if s.variant == OffsetVariant::PerPerson { data.n_rows() } else { data.n_items() };
    if s.u.nrows() != data.n_rows()
        || s.v.nrows() != data.n_items()
        || s.u.ncols() != opts.dim
        || s.v.ncols() != opts.dim
        || s.offsets.len() != offsets
        || s.variant != opts.offset_variant
    {
        return Err(LmduError::DimensionMismatch("supplied start does not match data/options".into()));
    }
    Ok(())
}

/// Unsupervised fit from `n_starts` random starts.
pub fn fit_unsupervised(data: &BinaryDataset, opts: &FitOptions) -> Result<(UnfoldingMap, FitReport)> {
    if opts.init == Init::Supplied {
        return Err(LmduError::InvalidOption("supplied init needs a start map".into()));
    }
    fit_unsupervised_impl(data, opts, None)
}

/// Unsupervised fit whose first start is `start`; remaining starts are random.
pub fn fit_unsupervised_from(
    data: &BinaryDataset,
    opts: &FitOptions,
    start: &UnfoldingMap,
) -> Result<(UnfoldingMap, FitReport)> {
    fit_unsupervised_impl(data, opts, Some(start))
}

fn fit_supervised_impl(
    data: &BinaryDataset,
    x: &PredictorSet,
    opts: &FitOptions,
    supplied: Option<&SupervisedUnfoldingMap>,
) -> Result<(SupervisedUnfoldingMap, FitReport)> {
    opts.validate()?;
    check_responses(data.y(), &data.weights())?;
    if x.n_obs() != data.n_rows() {
        return Err(LmduError::DimensionMismatch(format!(
            "{} predictor rows for {} response rows",
            x.n_obs(),
            data.n_rows()
        )));
    }
    let p = x.n_predictors();
    if let Some(s) = supplied {
        if s.b.nrows() != p
            || s.v.nrows() != data.n_items()
            || s.b.ncols() != opts.dim
            || s.v.ncols() != opts.dim
            || s.offsets.len() != data.n_items()
            || s.variant != opts.offset_variant
        {
            return Err(LmduError::DimensionMismatch("supplied start does not match data/options".into()));
        }
    }
    let weights = data.weights();
    let (best, k, devs) = multistart(opts.n_starts, |k| {
        let start = match (k, supplied) {
            (0, Some(s)) => s.clone(),
            _ => random_supervised_start(data, p, opts, k),
        };
        refine_supervised(data.y(), &weights, x.x(), start, opts)
    })?;
    let n = supervised_npar(data, p, opts)?;
    let rep = report(&best, k, devs, n);
    let map = identify_supervised(&best.map, &weights, x.x())?;
    Ok((map, rep))
}

/// Supervised fit (`U = XB`) from `n_starts` random starts.
pub fn fit_supervised(
    data: &BinaryDataset,
    x: &PredictorSet,
    opts: &FitOptions,
) -> Result<(SupervisedUnfoldingMap, FitReport)> {
    if opts.init == Init::Supplied {
        return Err(LmduError::InvalidOption("supplied init needs a start map".into()));
    }
    fit_supervised_impl(data, x, opts, None)
}

/// Supervised fit whose first start is `start`; remaining starts are random.
pub fn fit_supervised_from(
    data: &BinaryDataset,
    x: &PredictorSet,
    opts: &FitOptions,
    start: &SupervisedUnfoldingMap,
) -> Result<(SupervisedUnfoldingMap, FitReport)> {
    fit_supervised_impl(data, x, opts, Some(start))
}

/// Endorsement probabilities for new (already centered) predictor rows.
pub fn predict(map: &SupervisedUnfoldingMap, x_new: &Array2<f64>) -> Result<Array2<f64>> {
    map.probabilities(x_new)
}

/// Major version of the model file format.
pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_VERSION: &str = "1.0";

/// Serialized fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: String,
    #[serde(rename = "type")]
    pub kind: ModelKind,
    #[serde(rename = "S")]
    pub dim: usize,
    pub offset_variant: OffsetVariant,
    pub m: Vec<f64>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    pub item_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centering: Option<Vec<f64>>,
    pub deviance: f64,
    #[serde(rename = "AIC")]
    pub aic: f64,
    pub npar: i64,
    pub converged: bool,
    pub iterations: usize,
    pub options: FitOptions,
    pub seed: u64,
}

pub(crate) fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn array_of(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let n = rows.len();
    let s = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != s) {
        return Err(LmduError::Schema(format!("{what} is ragged")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((n, s), flat).map_err(|e| LmduError::Schema(format!("{what}: {e}")))
}

impl ModelFile {
    fn base(
        kind: ModelKind,
        dim: usize,
        offsets: &Array1<f64>,
        v: &Array2<f64>,
        report: &FitReport,
        opts: &FitOptions,
    ) -> Self {
        Self {
            schema: SCHEMA_VERSION.to_string(),
            kind,
            dim,
            offset_variant: opts.offset_variant,
            m: offsets.to_vec(),
            v: rows_of(v),
            u: None,
            b: None,
            item_labels: Vec::new(),
            profile_labels: None,
            predictor_labels: None,
            centering: None,
            deviance: report.deviance,
            aic: report.aic,
            npar: report.npar,
            converged: report.converged,
            iterations: report.iterations,
            options: opts.clone(),
            seed: opts.seed,
        }
    }

    pub fn unsupervised(map: &UnfoldingMap, data: &BinaryDataset, report: &FitReport, opts: &FitOptions) -> Self {
        let mut f = Self::base(ModelKind::Unsupervised, map.dim(), &map.offsets, &map.v, report, opts);
        f.offset_variant = map.variant;
        f.u = Some(rows_of(&map.u));
        f.item_labels = data.item_labels().to_vec();
        f.profile_labels = Some(data.profile_labels().to_vec());
        f
    }

    pub fn supervised(
        map: &SupervisedUnfoldingMap,
        data: &BinaryDataset,
        x: &PredictorSet,
        report: &FitReport,
        opts: &FitOptions,
    ) -> Self {
        let mut f = Self::base(ModelKind::Supervised, map.dim(), &map.offsets, &map.v, report, opts);
        f.offset_variant = map.variant;
        f.b = Some(rows_of(&map.b));
        f.item_labels = data.item_labels().to_vec();
        f.predictor_labels = Some(x.labels().to_vec());
        f.centering = Some(x.centering().to_vec());
        f
    }

    /// Generic constructor used by the reduced-rank baseline.
    pub fn from_parts(
        kind: ModelKind,
        offsets: &Array1<f64>,
        b: &Array2<f64>,
        v: &Array2<f64>,
        data: &BinaryDataset,
        x: &PredictorSet,
        report: &FitReport,
        opts: &FitOptions,
    ) -> Self {
        let mut f = Self::base(kind, v.ncols(), offsets, v, report, opts);
        f.b = Some(rows_of(b));
        f.item_labels = data.item_labels().to_vec();
        f.predictor_labels = Some(x.labels().to_vec());
        f.centering = Some(x.centering().to_vec());
        f
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a model file, refusing unknown major schema versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let schema = value
            .get("schema")
            .and_then(|s| s.as_str())
            .ok_or_else(|| LmduError::Schema("missing schema field".into()))?;
        let major: u32 = schema
            .split('.')
            .next()
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| LmduError::Schema(format!("unreadable schema version {schema:?}")))?;
        if major != SCHEMA_MAJOR {
            return Err(LmduError::Schema(format!("unsupported schema major version {major}")));
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn offsets(&self) -> Array1<f64> {
        Array1::from(self.m.clone())
    }

    pub fn v_matrix(&self) -> Result<Array2<f64>> {
        array_of(&self.v, "V")
    }

    pub fn b_matrix(&self) -> Result<Array2<f64>> {
        let b = self.b.as_ref().ok_or_else(|| LmduError::Schema("model has no B".into()))?;
        array_of(b, "B")
    }

    pub fn to_unsupervised(&self) -> Result<UnfoldingMap> {
        if self.kind != ModelKind::Unsupervised {
            return Err(LmduError::Schema("not an unsupervised model".into()));
        }
        let u = self.u.as_ref().ok_or_else(|| LmduError::Schema("model has no U".into()))?;
        Ok(UnfoldingMap {
            offsets: self.offsets(),
            variant: self.offset_variant,
            u: array_of(u, "U")?,
            v: self.v_matrix()?,
        })
    }

    pub fn to_supervised(&self) -> Result<SupervisedUnfoldingMap> {
        if self.kind != ModelKind::Supervised {
            return Err(LmduError::Schema("not a supervised model".into()));
        }
        Ok(SupervisedUnfoldingMap {
            offsets: self.offsets(),
            variant: self.offset_variant,
            b: self.b_matrix()?,
            v: self.v_matrix()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{distance_matrix, endorse_prob, logistic};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn small_data() -> BinaryDataset {
        let y = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        BinaryDataset::with_counts(y, vec![3, 2, 4, 1, 2]).unwrap()
    }

    #[test]
    fn init_offsets_from_q() {
        let y = array![[1.0, 1.0], [1.0, 0.0]];
        let w = array![1.0, 1.0];
        let mut rng = stream_rng(1, 0);
        let init = init_random(2, 2, &y, &w, OffsetVariant::PerItem, &mut rng);
        assert_eq!(init.offsets, array![1.0, 0.0]);
        let mut rng = stream_rng(1, 0);
        let again = init_random(2, 2, &y, &w, OffsetVariant::PerItem, &mut rng);
        assert_eq!(init, again);
    }

    #[test]
    fn streams_differ() {
        let a: f64 = stream_rng(3, 0).random();
        let b: f64 = stream_rng(3, 1).random();
        assert_ne!(a, b);
    }

    #[test]
    fn trace_is_non_increasing() {
        let data = small_data();
        let opts = FitOptions { dim: 2, n_starts: 3, seed: 11, ..FitOptions::default() };
        let (_, rep) = fit_unsupervised(&data, &opts).unwrap();
        for w in rep.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8 * (1.0 + w[0]));
        }
        assert_eq!(rep.start_deviances.len(), 3);
        let best = rep.start_deviances.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(best, rep.deviance);
    }

    #[test]
    fn seed_determinism() {
        let data = small_data();
        let opts = FitOptions { dim: 1, n_starts: 4, seed: 5, ..FitOptions::default() };
        let a = fit_unsupervised(&data, &opts).unwrap();
        let b = fit_unsupervised(&data, &opts).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn single_start_equals_first_of_many() {
        let data = small_data();
        let one = FitOptions { dim: 1, seed: 9, ..FitOptions::default() };
        let (_, r1) = fit_unsupervised(&data, &one).unwrap();
        let many = FitOptions { n_starts: 5, ..one };
        let (_, r5) = fit_unsupervised(&data, &many).unwrap();
        assert_eq!(r1.start_deviances[0], r5.start_deviances[0]);
        assert!(r5.deviance <= r1.deviance);
    }

    #[test]
    fn identity_predictors_match_unsupervised() {
        let y = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        let data = BinaryDataset::from_matrix(y).unwrap();
        let x = PredictorSet::from_matrix(Array2::eye(4)).unwrap();
        let opts = FitOptions { dim: 2, max_outer: 40, ..FitOptions::default() };
        let mut rng = stream_rng(2, 0);
        let init = init_random(4, 2, data.y(), &data.weights(), OffsetVariant::PerItem, &mut rng);
        let un = refine_unsupervised(
            data.y(),
            &data.weights(),
            UnfoldingMap {
                offsets: init.offsets.clone(),
                variant: OffsetVariant::PerItem,
                u: init.coords.clone(),
                v: init.v.clone(),
            },
            &opts,
        )
        .unwrap();
        let sup = refine_supervised(
            data.y(),
            &data.weights(),
            x.x(),
            SupervisedUnfoldingMap {
                offsets: init.offsets,
                variant: OffsetVariant::PerItem,
                b: init.coords,
                v: init.v,
            },
            &opts,
        )
        .unwrap();
        assert_eq!(un.trace.len(), sup.trace.len());
        for (a, b) in un.trace.iter().zip(&sup.trace) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn all_zero_profile_rejected() {
        let data = BinaryDataset::from_matrix(array![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(matches!(fit_unsupervised(&data, &FitOptions::with_dim(1)), Err(LmduError::InvalidOption(_))));
    }

    #[test]
    fn predict_examples() {
        let map = SupervisedUnfoldingMap {
            offsets: array![0.5, -0.2],
            variant: OffsetVariant::PerItem,
            b: array![[1.0, 0.5], [-0.3, 0.2]],
            v: array![[0.4, 0.3], [-1.0, 2.0]],
        };
        let p0 = predict(&map, &array![[0.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(p0[[0, 0]], logistic(0.5 - 0.5), epsilon = 1e-14);
        assert_abs_diff_eq!(p0[[0, 1]], logistic(-0.2 - 5f64.sqrt()), epsilon = 1e-14);
        let mut rng = stream_rng(7, 0);
        let xn = Array2::from_shape_simple_fn((6, 2), || rng.random_range(-2.0..2.0));
        let oracle = endorse_prob(&map.offsets, &distance_matrix(&xn.dot(&map.b), &map.v).unwrap()).unwrap();
        let got = predict(&map, &xn).unwrap();
        assert!((&got - &oracle).iter().all(|e| e.abs() < 1e-14));
        assert!(predict(&map, &array![[1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn model_file_round_trip_and_schema_check() {
        let data = small_data();
        let opts = FitOptions::with_dim(2);
        let (map, rep) = fit_unsupervised(&data, &opts).unwrap();
        let file = ModelFile::unsupervised(&map, &data, &rep, &opts);
        let text = file.to_json().unwrap();
        let back = ModelFile::from_json(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_unsupervised().unwrap(), map);
        let bad = text.replacen("\"schema\": \"1.0\"", "\"schema\": \"2.0\"", 1);
        assert!(matches!(ModelFile::from_json(&bad), Err(LmduError::Schema(_))));
    }

    #[test]
    fn per_person_offsets_refused_in_supervised_mode() {
        let data = small_data();
        let x = PredictorSet::from_matrix(array![[1.0], [2.0], [0.5], [-1.0], [0.0]]).unwrap();
        let opts = FitOptions { dim: 1, offset_variant: OffsetVariant::PerPerson, ..FitOptions::default() };
        assert!(matches!(fit_supervised(&data, &x, &opts), Err(LmduError::InvalidOption(_))));
    }

    #[test]
    fn offset_variants_fit() {
        let data = small_data();
        for variant in [OffsetVariant::Shared, OffsetVariant::PerPerson] {
            let opts = FitOptions { dim: 1, offset_variant: variant, n_starts: 2, ..FitOptions::default() };
            let (map, rep) = fit_unsupervised(&data, &opts).unwrap();
            for w in rep.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-8 * (1.0 + w[0]));
            }
            if variant == OffsetVariant::Shared {
                assert!(map.offsets.iter().all(|&m| (m - map.offsets[0]).abs() < 1e-12));
            } else {
                assert_eq!(map.offsets.len(), data.n_rows());
            }
        }
    }
}
