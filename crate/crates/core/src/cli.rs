//! Command-line front end: `fit`, `diagnose` and `simulate`.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::dataset::{compress_profiles, load_predictors, load_responses, BinaryDataset, PredictorSet};
use crate::diagnostics::{
    classification_metrics, component_residual_data, deviance_residuals, influence, raw_residuals, write_influence_csv,
    DEFAULT_SPAN,
};
use crate::error::{LmduError, Result};
use crate::estimator::{fit_supervised, fit_unsupervised, FitOptions, FitReport, ModelFile};
use crate::geometry::{SupervisedUnfoldingMap, UnfoldingMap};
use crate::majorization::OffsetVariant;
use crate::montecarlo::{
    run_predictive, run_recovery, write_csv, write_json, PredictiveDesign, PredictiveResult, RecoveryDesign,
    RecoveryResult,
};
use crate::render::{render_map, render_panels, BoxGroup, MapOptions, MapView, PanelData};
use crate::selection::{ModelKind, NparRule};

#[derive(Debug, Parser)]
#[command(name = "lmdu", version, about = "Logistic multidimensional unfolding for binary data")]
pub struct Cli {
    /// Worker threads for starts, replications and refits (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a map; supervised when predictors are given.
    Fit(FitArgs),
    /// Residuals, classification statistics, influence and component plots for a fitted model.
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo design.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Binary response CSV; an `n` column holds row frequencies.
    #[arg(long)]
    pub responses: PathBuf,
    /// Numeric predictor CSV, one row per response row.
    #[arg(long)]
    pub predictors: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "per-item")]
    pub offset: OffsetVariant,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long, value_enum, default_value_t = RuleArg::Published)]
    pub npar_rule: RuleArg,
    /// Subtract column means from the predictors before fitting.
    #[arg(long)]
    pub center: bool,
    /// Also fit every dimension in `a..b` (inclusive) and print one row each.
    #[arg(long, value_parser = parse_range)]
    pub scan_dim: Option<(usize, usize)>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Strip plot of the final deviance of every start.
    #[arg(long)]
    pub starts_svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Published,
    Text,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub predictors: Option<PathBuf>,
    /// Classification statistics per item (CSV).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Raw and deviance residuals per cell (CSV).
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// Leave-one-out influence (CSV); supervised models only.
    #[arg(long)]
    pub influence: Option<PathBuf>,
    #[arg(long)]
    pub influence_svg: Option<PathBuf>,
    /// Component-plus-residual panels for every predictor and item (SVG).
    #[arg(long)]
    pub cpr: Option<PathBuf>,
    #[arg(long)]
    pub cpr_csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SPAN)]
    pub span: f64,
    /// Iteration cap for the influence refits (default: the model's own).
    #[arg(long)]
    pub max_outer: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    Recovery,
    Predictive,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML design file.
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, value_enum)]
    pub kind: StudyKind,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if a == 0 || b < a {
        return Err(format!("need 1 <= a <= b, got {a}..{b}"));
    }
    Ok((a, b))
}

/// Failure with its exit code: 1 numerical, 2 usage or I/O.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<LmduError> for CliError {
    fn from(e: LmduError) -> Self {
        CliError { code: if e.is_numerical() { 1 } else { 2 }, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: 2, message: message.into() }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    match cli.command {
        Command::Fit(a) => fit(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone)]
struct FitRow {
    dim: usize,
    report: FitReport,
}

fn print_table(rows: &[FitRow]) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{:>3} {:>14} {:>6} {:>14} {:>9} {:>10}",
        "S", "deviance", "npar", "AIC", "converged", "iterations"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>3} {:>14.4} {:>6} {:>14.4} {:>9} {:>10}",
            r.dim, r.report.deviance, r.report.npar, r.report.aic, r.report.converged, r.report.iterations
        );
    }
}

enum Fitted {
    Unsupervised(UnfoldingMap, BinaryDataset),
    Supervised(SupervisedUnfoldingMap, BinaryDataset, PredictorSet),
}

fn fit_options(a: &FitArgs, dim: usize) -> FitOptions {
    let mut opts = FitOptions::with_dim(dim);
    opts.n_starts = a.starts;
    opts.seed = a.seed;
    opts.offset_variant = a.offset;
    opts.npar_rule = match a.npar_rule {
        RuleArg::Published => NparRule::Published,
        RuleArg::Text => NparRule::Text,
    };
    if let Some(m) = a.max_outer {
        opts.max_outer = m;
    }
    opts
}

fn fit_once(raw: &BinaryDataset, x: Option<&PredictorSet>, opts: &FitOptions) -> Result<(Fitted, FitReport)> {
    match x {
        Some(x) => {
            let (map, rep) = fit_supervised(raw, x, opts)?;
            Ok((Fitted::Supervised(map, raw.clone(), x.clone()), rep))
        }
        None => {
            let data = compress_profiles(raw, true)?;
            let (map, rep) = fit_unsupervised(&data, opts)?;
            Ok((Fitted::Unsupervised(map, data), rep))
        }
    }
}

fn column_means(x: &PredictorSet) -> Vec<f64> {
    x.x().mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default()
}

fn fit(a: FitArgs) -> std::result::Result<(), CliError> {
    if a.dim == 0 {
        return Err(usage("--dim must be at least 1"));
    }
    if a.starts == 0 {
        return Err(usage("--starts must be at least 1"));
    }
    let raw = load_responses(&a.responses)?;
    let x = match &a.predictors {
        Some(p) => {
            let mut x = load_predictors(p)?;
            if a.center {
                let means = column_means(&x);
                x.center(&means)?;
            }
            Some(x)
        }
        None => None,
    };
    if x.is_none() && raw.has_all_zero_row() {
        eprintln!("note: all-zero response profiles are left out of unsupervised fits");
    }

    let mut rows = Vec::new();
    let mut main: Option<(Fitted, FitReport)> = None;
    let dims: Vec<usize> = match a.scan_dim {
        Some((lo, hi)) => {
            let mut d: Vec<usize> = (lo..=hi).collect();
            if !d.contains(&a.dim) {
                d.push(a.dim);
            }
            d
        }
        None => vec![a.dim],
    };
    for &dim in &dims {
        let opts = fit_options(&a, dim);
        let (fitted, rep) = fit_once(&raw, x.as_ref(), &opts)?;
        rows.push(FitRow { dim, report: rep.clone() });
        if dim == a.dim {
            main = Some((fitted, rep));
        }
    }
    print_table(&rows);

    let (fitted, rep) = main.expect("requested dimension is always fitted");
    let opts = fit_options(&a, a.dim);
    if let Some(path) = &a.out {
        let model = match &fitted {
            Fitted::Unsupervised(map, data) => ModelFile::unsupervised(map, data, &rep, &opts),
            Fitted::Supervised(map, data, x) => ModelFile::supervised(map, data, x, &rep, &opts),
        };
        write_text(path, &model.to_json()?)?;
    }
    if let Some(path) = &a.svg {
        let view = match &fitted {
            Fitted::Unsupervised(map, data) => MapView::unsupervised(map, data.item_labels(), data.profile_labels())?,
            Fitted::Supervised(map, data, x) => MapView::supervised(map, x, data.item_labels())?,
        };
        write_text(path, &render_map(&view, &MapOptions::default())?)?;
    }
    if let Some(path) = &a.starts_svg {
        let groups = rows
            .iter()
            .map(|r| {
                let devs = r.report.start_deviances.iter().flatten().copied().collect();
                (format!("S = {}", r.dim), devs)
            })
            .collect();
        let svg = render_panels(&PanelData::LocalOptima { groups, seed: a.seed })?;
        write_text(path, &svg)?;
    }
    Ok(())
}

/// Responses and predictors lined up with a stored model.
enum Prepared {
    Unsupervised(UnfoldingMap, BinaryDataset),
    Supervised(SupervisedUnfoldingMap, BinaryDataset, PredictorSet),
}

fn prepare(model: &ModelFile, a: &DiagnoseArgs) -> std::result::Result<Prepared, CliError> {
    let raw = load_responses(&a.responses)?;
    if raw.item_labels() != model.item_labels.as_slice() {
        return Err(usage("response columns do not match the model's items"));
    }
    match model.kind {
        ModelKind::Unsupervised => {
            if a.predictors.is_some() {
                return Err(usage("unsupervised model takes no predictors"));
            }
            let map = model.to_unsupervised()?;
            let data = compress_profiles(&raw, true)?;
            let labels = model.profile_labels.as_ref().ok_or_else(|| usage("model has no profile labels"))?;
            // reorder the model's person rows to the data's profiles
            let mut u = Array2::zeros((data.n_rows(), map.dim()));
            let mut offsets = map.offsets.clone();
            let per_person = map.variant == OffsetVariant::PerPerson;
            if per_person {
                offsets = Array1::zeros(data.n_rows());
            }
            for (i, l) in data.profile_labels().iter().enumerate() {
                let k = labels
                    .iter()
                    .position(|m| m == l)
                    .ok_or_else(|| usage(format!("profile {l} is not in the model")))?;
                u.row_mut(i).assign(&map.u.row(k));
                if per_person {
                    offsets[i] = map.offsets[k];
                }
            }
            Ok(Prepared::Unsupervised(UnfoldingMap { offsets, variant: map.variant, u, v: map.v }, data))
        }
        ModelKind::Supervised => {
            let path = a.predictors.as_ref().ok_or_else(|| usage("supervised model needs --predictors"))?;
            let mut x = load_predictors(path)?;
            if Some(x.labels()) != model.predictor_labels.as_deref() {
                return Err(usage("predictor columns do not match the model"));
            }
            if let Some(c) = &model.centering {
                x.center(c)?;
            }
            if x.n_obs() != raw.n_rows() {
                return Err(usage("responses and predictors differ in rows"));
            }
            Ok(Prepared::Supervised(model.to_supervised()?, raw, x))
        }
        ModelKind::ReducedRank => Err(usage("reduced-rank models have no diagnostics here")),
    }
}

#[derive(Serialize)]
struct ResidualRow<'a> {
    row: usize,
    profile: &'a str,
    item: &'a str,
    y: f64,
    probability: f64,
    raw: f64,
    deviance: f64,
}

#[derive(Serialize)]
struct CprCsvRow<'a> {
    predictor: &'a str,
    item: &'a str,
    kind: &'a str,
    x: f64,
    y: f64,
}

fn diagnose(a: DiagnoseArgs) -> std::result::Result<(), CliError> {
    let text = fs::read_to_string(&a.model).map_err(LmduError::from)?;
    let model = ModelFile::from_json(&text)?;
    let prepared = prepare(&model, &a)?;
    let (data, theta) = match &prepared {
        Prepared::Unsupervised(map, data) => (data, map.theta()),
        Prepared::Supervised(map, data, x) => (data, map.theta(x.x())?),
    };
    let pi = theta.mapv(crate::geometry::logistic);

    if let Some(path) = &a.metrics {
        classification_metrics(data, &pi, a.threshold)?.write_csv(path)?;
    }
    if let Some(path) = &a.residuals {
        let e = raw_residuals(data.y(), &pi)?;
        let d = deviance_residuals(data.y(), &data.weights(), &theta)?;
        let mut rows = Vec::new();
        for i in 0..data.n_rows() {
            for r in 0..data.n_items() {
                rows.push(ResidualRow {
                    row: i,
                    profile: &data.profile_labels()[i],
                    item: &data.item_labels()[r],
                    y: data.y()[[i, r]],
                    probability: pi[[i, r]],
                    raw: e[[i, r]],
                    deviance: d[[i, r]],
                });
            }
        }
        write_csv(path, &rows)?;
    }
    let wants_influence = a.influence.is_some() || a.influence_svg.is_some();
    let wants_cpr = a.cpr.is_some() || a.cpr_csv.is_some();
    if wants_influence || wants_cpr {
        let Prepared::Supervised(map, data, x) = &prepared else {
            return Err(usage("influence and component plots need a supervised model"));
        };
        if wants_influence {
            let mut opts = model.options.clone();
            if let Some(m) = a.max_outer {
                opts.max_outer = m;
            }
            let records = influence(data, x, &opts, map)?;
            if let Some(path) = &a.influence {
                write_influence_csv(path, &records)?;
            }
            if let Some(path) = &a.influence_svg {
                write_text(path, &render_panels(&PanelData::Influence(records))?)?;
            }
        }
        if wants_cpr {
            let mut panels = Vec::new();
            for p in 0..x.n_predictors() {
                for r in 0..data.n_items() {
                    panels.push(component_residual_data(map, x, data, p, r, a.span)?);
                }
            }
            if let Some(path) = &a.cpr_csv {
                let mut rows = Vec::new();
                for c in &panels {
                    let series =
                        [("point", &c.x, &c.partial), ("assumed", &c.grid, &c.assumed), ("smooth", &c.grid, &c.smooth)];
                    for (kind, xs, ys) in series {
                        rows.extend(xs.iter().zip(ys.iter()).map(|(&x, &y)| CprCsvRow {
                            predictor: &c.predictor,
                            item: &c.item,
                            kind,
                            x,
                            y,
                        }));
                    }
                }
                write_csv(path, &rows)?;
            }
            if let Some(path) = &a.cpr {
                write_text(path, &render_panels(&PanelData::Cpr(panels))?)?;
            }
        }
    }
    Ok(())
}

fn recovery_svg(result: &RecoveryResult) -> Result<String> {
    let mut groups = Vec::new();
    for s in &result.summary {
        let values = result.rows.iter().filter(|r| r.sample_size == s.sample_size).filter_map(|r| r.phi_uv).collect();
        groups.push(BoxGroup { label: format!("n={}", s.sample_size), values });
    }
    render_panels(&PanelData::Boxes {
        title: "Recovery of the joint configuration".into(),
        ylabel: "congruence".into(),
        groups,
    })
}

fn predictive_svg(result: &PredictiveResult) -> Result<String> {
    let mut groups = Vec::new();
    for s in &result.summary {
        let cell: Vec<_> = result
            .rows
            .iter()
            .filter(|r| {
                r.family == s.family
                    && r.offset_lo == s.offset_lo
                    && r.offset_hi == s.offset_hi
                    && r.train_size == s.train_size
            })
            .collect();
        let tag = format!("{:?} ({}, {}) n={}", s.family, s.offset_lo, s.offset_hi, s.train_size);
        groups.push(BoxGroup {
            label: format!("D {tag}"),
            values: cell.iter().filter_map(|r| r.brier_distance).collect(),
        });
        groups.push(BoxGroup { label: format!("R {tag}"), values: cell.iter().filter_map(|r| r.brier_rrr).collect() });
    }
    render_panels(&PanelData::BrierBox(groups))
}

fn simulate(a: SimulateArgs) -> std::result::Result<(), CliError> {
    let text = fs::read_to_string(&a.design).map_err(LmduError::from)?;
    fs::create_dir_all(&a.out).map_err(LmduError::from)?;
    match a.kind {
        StudyKind::Recovery => {
            let design = RecoveryDesign::from_toml(&text)?;
            let result = run_recovery(&design)?;
            write_csv(a.out.join("replications.csv"), &result.rows)?;
            write_json(a.out.join("summary.json"), &result.summary)?;
            write_text(&a.out.join("summary.svg"), &recovery_svg(&result)?)?;
        }
        StudyKind::Predictive => {
            let design = PredictiveDesign::from_toml(&text)?;
            let result = run_predictive(&design)?;
            write_csv(a.out.join("replications.csv"), &result.rows)?;
            write_json(a.out.join("summary.json"), &result.summary)?;
            write_text(&a.out.join("brier.svg"), &predictive_svg(&result)?)?;
        }
    }
    Ok(())
}
