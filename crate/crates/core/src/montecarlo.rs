//! Simulation studies: recovery of a population configuration from samples,
//! and out-of-sample prediction of the distance model against the
//! reduced-rank baseline.
//!
//! All randomness comes from the design seed. Each replication draws from its
//! own stream, so results do not depend on thread scheduling.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline_rrr::{fit_rrr, predict_rrr};
use crate::dataset::{compress_profiles, pattern_label, BinaryDataset, PredictorSet};
use crate::error::{LmduError, Result};
use crate::estimator::{fit_supervised_from, fit_unsupervised_from, predict, stream_rng, FitOptions, Init};
use crate::evaluation::{brier, config_correlation, congruence, stack};
use crate::geometry::{distances_unchecked, logistic, SupervisedUnfoldingMap, UnfoldingMap};
use crate::linalg::sym_eigen_desc;
use crate::majorization::OffsetVariant;

pub const SUPERVISED_RECOVERY: &str = include_str!("../fixtures/recovery_supervised.toml");
pub const UNSUPERVISED_RECOVERY: &str = include_str!("../fixtures/recovery_unsupervised.toml");
pub const PREDICTIVE: &str = include_str!("../fixtures/predictive.toml");

/// Stream reserved for drawing a population.
const POPULATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMode {
    Unsupervised,
    Supervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorFamily {
    Distance,
    InnerProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationParameters {
    pub m: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub x_cov: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub u_mean: Option<Vec<f64>>,
    #[serde(default)]
    pub u_cov: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryDesign {
    pub mode: StudyMode,
    #[serde(default = "default_population_size")]
    pub population_size: usize,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Random starts in addition to the start at the population values.
    #[serde(default)]
    pub random_starts: usize,
    pub population: PopulationParameters,
    #[serde(default)]
    pub fit: Option<FitOptions>,
}

fn default_population_size() -> usize {
    100_000
}

fn default_sample_sizes() -> Vec<usize> {
    vec![100, 200, 500, 1000]
}

fn default_replications() -> usize {
    100
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    crate::estimator::array_of(rows, what).map_err(|e| LmduError::InvalidOption(format!("design: {e}")))
}

/// Draws `n` rows from `N(mean, cov)`. `cov` may be singular but must be PSD.
pub fn multivariate_normal(
    n: usize,
    mean: &Array1<f64>,
    cov: &Array2<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    let k = mean.len();
    if cov.dim() != (k, k) {
        return Err(LmduError::DimensionMismatch("covariance does not match mean".into()));
    }
    let (vals, vecs) = sym_eigen_desc(cov);
    let scale = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if vals.iter().any(|&l| l < -1e-10 * scale.max(1.0)) {
        return Err(LmduError::InvalidOption("covariance is not positive semidefinite".into()));
    }
    let mut root = vecs;
    for (j, mut col) in root.axis_iter_mut(Axis(1)).enumerate() {
        col *= vals[j].max(0.0).sqrt();
    }
    let z = Array2::from_shape_simple_fn((n, k), || StandardNormal.sample(rng));
    Ok(z.dot(&root.t()) + &mean.view().insert_axis(Axis(0)))
}

/// Independent Bernoulli draws.
pub fn sample_responses(pi: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    pi.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// Population persons and their endorsement probabilities.
#[derive(Debug, Clone)]
pub struct Population {
    pub x: Option<Array2<f64>>,
    pub u: Array2<f64>,
    pub pi: Array2<f64>,
}

impl RecoveryDesign {
    pub fn from_toml(text: &str) -> Result<Self> {
        let design: Self = toml::from_str(text)?;
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        let max = self.sample_sizes.iter().copied().max().unwrap_or(0);
        if self.sample_sizes.is_empty() || self.replications == 0 {
            return Err(LmduError::InvalidOption("design needs sample sizes and replications".into()));
        }
        if self.population_size < max {
            return Err(LmduError::InvalidOption("population smaller than the largest sample".into()));
        }
        let v = self.v()?;
        if v.nrows() != self.population.m.len() {
            return Err(LmduError::InvalidOption("m and V disagree on the number of items".into()));
        }
        match self.mode {
            StudyMode::Supervised => {
                let b = self.b()?;
                let cov = self.cov()?;
                if b.ncols() != v.ncols() || cov.nrows() != b.nrows() {
                    return Err(LmduError::InvalidOption("B, V and x_cov shapes disagree".into()));
                }
            }
            StudyMode::Unsupervised => {
                let mean = self
                    .population
                    .u_mean
                    .as_ref()
                    .ok_or_else(|| LmduError::InvalidOption("unsupervised design needs u_mean".into()))?;
                if mean.len() != v.ncols() || self.cov()?.nrows() != v.ncols() {
                    return Err(LmduError::InvalidOption("u_mean/u_cov do not match V".into()));
                }
            }
        }
        Ok(())
    }

    fn v(&self) -> Result<Array2<f64>> {
        matrix(&self.population.v, "v")
    }

    fn b(&self) -> Result<Array2<f64>> {
        let b =
            self.population.b.as_ref().ok_or_else(|| LmduError::InvalidOption("supervised design needs b".into()))?;
        matrix(b, "b")
    }

    fn cov(&self) -> Result<Array2<f64>> {
        let (field, name) = match self.mode {
            StudyMode::Supervised => (&self.population.x_cov, "x_cov"),
            StudyMode::Unsupervised => (&self.population.u_cov, "u_cov"),
        };
        let c = field.as_ref().ok_or_else(|| LmduError::InvalidOption(format!("design needs {name}")))?;
        matrix(c, name)
    }

    fn fit_options(&self) -> FitOptions {
        let mut opts = self.fit.clone().unwrap_or_default();
        opts.dim = self.population.v.first().map_or(0, Vec::len);
        opts.offset_variant = OffsetVariant::PerItem;
        opts.n_starts = 1 + self.random_starts;
        opts.init = Init::Supplied;
        opts
    }
}

pub fn gen_population(design: &RecoveryDesign) -> Result<Population> {
    design.validate()?;
    let mut rng = stream_rng(design.seed, POPULATION_STREAM);
    let v = design.v()?;
    let m = Array1::from(design.population.m.clone());
    let (x, u) = match design.mode {
        StudyMode::Supervised => {
            let b = design.b()?;
            let x = multivariate_normal(design.population_size, &Array1::zeros(b.nrows()), &design.cov()?, &mut rng)?;
            let u = x.dot(&b);
            (Some(x), u)
        }
        StudyMode::Unsupervised => {
            let mean = Array1::from(design.population.u_mean.clone().unwrap_or_default());
            (None, multivariate_normal(design.population_size, &mean, &design.cov()?, &mut rng)?)
        }
    };
    let mut pi = distances_unchecked(u.view(), v.view());
    for mut row in pi.axis_iter_mut(Axis(0)) {
        for (r, p) in row.iter_mut().enumerate() {
            *p = logistic(m[r] - *p);
        }
    }
    Ok(Population { x, u, pi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub sample_size: usize,
    pub replication: usize,
    pub phi_uv: Option<f64>,
    pub phi_v: Option<f64>,
    pub r_uv: Option<f64>,
    pub r_v: Option<f64>,
    pub deviance: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub sample_size: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub phi_uv: Option<MeanStd>,
    pub phi_v: Option<MeanStd>,
    pub r_uv: Option<MeanStd>,
    pub r_v: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub rows: Vec<RecoveryRow>,
    pub summary: Vec<RecoverySummary>,
}

/// Mean and sample standard deviation; `None` when empty.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std })
}

struct Coefficients {
    phi_uv: f64,
    phi_v: f64,
    r_uv: f64,
    r_v: f64,
    deviance: f64,
    iterations: usize,
}

fn coefficients(u: &Array2<f64>, v: &Array2<f64>, uh: &Array2<f64>, vh: &Array2<f64>) -> Result<(f64, f64, f64, f64)> {
    let z = stack(u, v)?;
    let zh = stack(uh, vh)?;
    Ok((congruence(&z, &zh)?, congruence(v, vh)?, config_correlation(&z, &zh)?, config_correlation(v, vh)?))
}

fn recovery_replication(
    design: &RecoveryDesign,
    pop: &Population,
    v: &Array2<f64>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Coefficients> {
    let idx = sample(rng, design.population_size, n).into_vec();
    let u_true = pop.u.select(Axis(0), &idx);
    let pi = pop.pi.select(Axis(0), &idx);
    let y = sample_responses(&pi, rng);
    let m = Array1::from(design.population.m.clone());
    let opts = design.fit_options();
    match design.mode {
        StudyMode::Supervised => {
            let x = pop.x.as_ref().expect("supervised population has X").select(Axis(0), &idx);
            let data = BinaryDataset::from_matrix(y)?;
            let xs = PredictorSet::from_matrix(x)?;
            let start =
                SupervisedUnfoldingMap { offsets: m, variant: OffsetVariant::PerItem, b: design.b()?, v: v.clone() };
            let (map, rep) = fit_supervised_from(&data, &xs, &opts, &start)?;
            let uh = xs.x().dot(&map.b);
            let (phi_uv, phi_v, r_uv, r_v) = coefficients(&u_true, v, &uh, &map.v)?;
            Ok(Coefficients { phi_uv, phi_v, r_uv, r_v, deviance: rep.deviance, iterations: rep.iterations })
        }
        StudyMode::Unsupervised => {
            let keep: Vec<usize> = (0..n).filter(|&i| y.row(i).iter().any(|&e| e == 1.0)).collect();
            let raw = BinaryDataset::from_matrix(y.select(Axis(0), &keep))?;
            let data = compress_profiles(&raw, true)?;
            let u_kept = u_true.select(Axis(0), &keep);
            let lookup: HashMap<&str, usize> =
                data.profile_labels().iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
            let profile_of: Vec<usize> =
                (0..keep.len()).map(|i| lookup[pattern_label(raw.y().row(i).iter()).as_str()]).collect();
            // start: each profile at the mean of its members' true positions
            let s = v.ncols();
            let mut u0 = Array2::<f64>::zeros((data.n_rows(), s));
            let mut count = vec![0.0; data.n_rows()];
            for (i, &k) in profile_of.iter().enumerate() {
                u0.row_mut(k).scaled_add(1.0, &u_kept.row(i));
                count[k] += 1.0;
            }
            for (k, mut row) in u0.axis_iter_mut(Axis(0)).enumerate() {
                row /= count[k];
            }
            let start = UnfoldingMap { offsets: m, variant: OffsetVariant::PerItem, u: u0, v: v.clone() };
            let (map, rep) = fit_unsupervised_from(&data, &opts, &start)?;
            let uh = map.u.select(Axis(0), &profile_of);
            let (phi_uv, phi_v, r_uv, r_v) = coefficients(&u_kept, v, &uh, &map.v)?;
            Ok(Coefficients { phi_uv, phi_v, r_uv, r_v, deviance: rep.deviance, iterations: rep.iterations })
        }
    }
}

/// Runs every (sample size, replication) cell. Failed fits are recorded with
/// their error and left out of the summary.
pub fn run_recovery(design: &RecoveryDesign) -> Result<RecoveryResult> {
    let pop = gen_population(design)?;
    let v = design.v()?;
    let jobs: Vec<(usize, usize, usize)> = design
        .sample_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| (0..design.replications).map(move |r| (c, n, r)))
        .collect();
    let rows: Vec<RecoveryRow> = jobs
        .par_iter()
        .map(|&(c, n, r)| {
            let mut rng = stream_rng(design.seed, ((c as u64) << 32) | r as u64);
            match recovery_replication(design, &pop, &v, n, &mut rng) {
                Ok(k) => RecoveryRow {
                    sample_size: n,
                    replication: r,
                    phi_uv: Some(k.phi_uv),
                    phi_v: Some(k.phi_v),
                    r_uv: Some(k.r_uv),
                    r_v: Some(k.r_v),
                    deviance: Some(k.deviance),
                    iterations: Some(k.iterations),
                    error: None,
                },
                Err(e) => RecoveryRow {
                    sample_size: n,
                    replication: r,
                    phi_uv: None,
                    phi_v: None,
                    r_uv: None,
                    r_v: None,
                    deviance: None,
                    iterations: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let summary = design
        .sample_sizes
        .iter()
        .map(|&n| {
            let cell: Vec<&RecoveryRow> = rows.iter().filter(|r| r.sample_size == n).collect();
            let pick = |f: fn(&RecoveryRow) -> Option<f64>| -> Option<MeanStd> {
                mean_std(&cell.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let failed = cell.iter().filter(|r| r.error.is_some()).count();
            RecoverySummary {
                sample_size: n,
                succeeded: cell.len() - failed,
                failed,
                phi_uv: pick(|r| r.phi_uv),
                phi_v: pick(|r| r.phi_v),
                r_uv: pick(|r| r.r_uv),
                r_v: pick(|r| r.r_v),
            }
        })
        .collect();
    Ok(RecoveryResult { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictiveDesign {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_train_sizes")]
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_families")]
    pub families: Vec<GeneratorFamily>,
    #[serde(default = "default_offset_ranges")]
    pub offset_ranges: Vec<[f64; 2]>,
    /// Random starts added to the population start for inner-product data.
    #[serde(default = "default_random_starts")]
    pub random_starts: usize,
    #[serde(default = "default_b")]
    pub b: Vec<Vec<f64>>,
    #[serde(default = "default_v")]
    pub v: Vec<Vec<f64>>,
    #[serde(default)]
    pub fit: Option<FitOptions>,
}

fn default_train_sizes() -> Vec<usize> {
    vec![200, 500, 1000]
}

fn default_test_size() -> usize {
    1000
}

fn default_families() -> Vec<GeneratorFamily> {
    vec![GeneratorFamily::Distance, GeneratorFamily::InnerProduct]
}

fn default_offset_ranges() -> Vec<[f64; 2]> {
    vec![[-1.0, 0.0], [-0.5, 0.5], [0.0, 1.0]]
}

fn default_random_starts() -> usize {
    25
}

/// Regression weights of the three predictors.
pub fn default_b() -> Vec<Vec<f64>> {
    let r2 = std::f64::consts::SQRT_2;
    vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![r2, r2]]
}

/// The 13 item points on a cross-and-diamond pattern.
pub fn default_v() -> Vec<Vec<f64>> {
    [
        [1.0, 0.0],
        [0.5, 0.5],
        [0.5, 0.0],
        [0.5, -0.5],
        [0.0, 1.0],
        [0.0, 0.5],
        [0.0, 0.0],
        [0.0, -0.5],
        [0.0, -1.0],
        [-0.5, 0.5],
        [-0.5, 0.0],
        [-0.5, -0.5],
        [-1.0, 0.0],
    ]
    .iter()
    .map(|r| r.to_vec())
    .collect()
}

/// One generated training/test split with its true parameters.
#[derive(Debug, Clone)]
pub struct PredictiveData {
    pub x_train: Array2<f64>,
    pub y_train: Array2<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array2<f64>,
    pub m: Array1<f64>,
    pub b: Array2<f64>,
    pub v: Array2<f64>,
}

impl PredictiveDesign {
    pub fn from_toml(text: &str) -> Result<Self> {
        let design: Self = toml::from_str(text)?;
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.train_sizes.is_empty() || self.test_size == 0 {
            return Err(LmduError::InvalidOption("design needs replications, train sizes and a test size".into()));
        }
        if self.families.is_empty() || self.offset_ranges.is_empty() {
            return Err(LmduError::InvalidOption("design needs families and offset ranges".into()));
        }
        if self.offset_ranges.iter().any(|r| !(r[0] < r[1])) {
            return Err(LmduError::InvalidOption("offset ranges need lo < hi".into()));
        }
        let b = matrix(&self.b, "b")?;
        let v = matrix(&self.v, "v")?;
        if b.ncols() != v.ncols() || b.ncols() == 0 {
            return Err(LmduError::InvalidOption("b and v need the same positive dimension".into()));
        }
        Ok(())
    }

    fn fit_options(&self, starts: usize) -> FitOptions {
        let mut opts = self.fit.clone().unwrap_or_default();
        opts.dim = self.v.first().map_or(0, Vec::len);
        opts.offset_variant = OffsetVariant::PerItem;
        opts.n_starts = starts;
        opts.init = Init::Supplied;
        opts
    }
}

/// True probabilities under the chosen generator.
pub fn generator_probabilities(
    family: GeneratorFamily,
    x: &Array2<f64>,
    m: &Array1<f64>,
    b: &Array2<f64>,
    v: &Array2<f64>,
) -> Array2<f64> {
    let u = x.dot(b);
    let mut theta = match family {
        GeneratorFamily::Distance => distances_unchecked(u.view(), v.view()).mapv(|d| -d),
        GeneratorFamily::InnerProduct => u.dot(&v.t()),
    };
    theta += &m.view().insert_axis(Axis(0));
    theta.mapv(logistic)
}

pub fn gen_predictive_data(
    design: &PredictiveDesign,
    family: GeneratorFamily,
    offset_range: [f64; 2],
    train_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PredictiveData> {
    let b = matrix(&design.b, "b")?;
    let v = matrix(&design.v, "v")?;
    let m = Array1::from_shape_simple_fn(v.nrows(), || rng.random_range(offset_range[0]..offset_range[1]));
    let p = b.nrows();
    let x_train = Array2::from_shape_simple_fn((train_size, p), || StandardNormal.sample(rng));
    let x_test = Array2::from_shape_simple_fn((design.test_size, p), || StandardNormal.sample(rng));
    let y_train = sample_responses(&generator_probabilities(family, &x_train, &m, &b, &v), rng);
    let y_test = sample_responses(&generator_probabilities(family, &x_test, &m, &b, &v), rng);
    Ok(PredictiveData { x_train, y_train, x_test, y_test, m, b, v })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveRow {
    pub family: GeneratorFamily,
    pub offset_lo: f64,
    pub offset_hi: f64,
    pub train_size: usize,
    pub replication: usize,
    pub brier_distance: Option<f64>,
    pub brier_rrr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub family: GeneratorFamily,
    pub offset_lo: f64,
    pub offset_hi: f64,
    pub train_size: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub brier_distance: Option<MeanStd>,
    pub brier_rrr: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveResult {
    pub rows: Vec<PredictiveRow>,
    pub summary: Vec<PredictiveSummary>,
}

fn predictive_replication(
    design: &PredictiveDesign,
    family: GeneratorFamily,
    range: [f64; 2],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let data = gen_predictive_data(design, family, range, n, rng)?;
    let train = BinaryDataset::from_matrix(data.y_train.clone())?;
    let x = PredictorSet::from_matrix(data.x_train.clone())?;
    let starts = match family {
        GeneratorFamily::Distance => 1,
        GeneratorFamily::InnerProduct => 1 + design.random_starts,
    };
    let mut opts = design.fit_options(starts);
    opts.seed = rng.random();
    let start = SupervisedUnfoldingMap {
        offsets: data.m.clone(),
        variant: OffsetVariant::PerItem,
        b: data.b.clone(),
        v: data.v.clone(),
    };
    let (map, _) = fit_supervised_from(&train, &x, &opts, &start)?;
    let bd = brier(&data.y_test, &predict(&map, &data.x_test)?)?;
    let (rrr, _) = fit_rrr(&train, &x, &opts)?;
    let br = brier(&data.y_test, &predict_rrr(&rrr, &data.x_test)?)?;
    Ok((bd, br))
}

/// Runs every (family, offset range, train size, replication) cell.
pub fn run_predictive(design: &PredictiveDesign) -> Result<PredictiveResult> {
    design.validate()?;
    let mut cells = Vec::new();
    for &family in &design.families {
        for &range in &design.offset_ranges {
            for &n in &design.train_sizes {
                cells.push((family, range, n));
            }
        }
    }
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..design.replications).map(move |r| (c, r))).collect();
    let rows: Vec<PredictiveRow> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (family, range, n) = cells[c];
            let mut rng = stream_rng(design.seed, ((c as u64) << 32) | r as u64);
            let (bd, br, error) = match predictive_replication(design, family, range, n, &mut rng) {
                Ok((bd, br)) => (Some(bd), Some(br), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            PredictiveRow {
                family,
                offset_lo: range[0],
                offset_hi: range[1],
                train_size: n,
                replication: r,
                brier_distance: bd,
                brier_rrr: br,
                error,
            }
        })
        .collect();
    let summary = cells
        .iter()
        .map(|&(family, range, n)| {
            let cell: Vec<&PredictiveRow> = rows
                .iter()
                .filter(|r| {
                    r.family == family && r.offset_lo == range[0] && r.offset_hi == range[1] && r.train_size == n
                })
                .collect();
            let failed = cell.iter().filter(|r| r.error.is_some()).count();
            PredictiveSummary {
                family,
                offset_lo: range[0],
                offset_hi: range[1],
                train_size: n,
                succeeded: cell.len() - failed,
                failed,
                brier_distance: mean_std(&cell.iter().filter_map(|r| r.brier_distance).collect::<Vec<_>>()),
                brier_rrr: mean_std(&cell.iter().filter_map(|r| r.brier_rrr).collect::<Vec<_>>()),
            }
        })
        .collect();
    Ok(PredictiveResult { rows, summary })
}

/// Writes one CSV row per record.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}
