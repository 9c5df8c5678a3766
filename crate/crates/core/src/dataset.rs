//! Binary response data and predictor matrices.
//!
//! Responses are held as an `I x R` matrix of zeros and ones together with a
//! positive integer weight per row. For unsupervised analysis identical rows
//! are collapsed into weighted profiles; supervised analysis keeps one row per
//! participant so that each row can be paired with its predictor values.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::error::{LmduError, Result};

/// Name of the optional frequency column in response files.
pub const FREQUENCY_COLUMN: &str = "n";

/// Multivariate binary responses with per-row occurrence weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    y: Array2<f64>,
    counts: Vec<u64>,
    item_labels: Vec<String>,
    profile_labels: Vec<String>,
}

impl BinaryDataset {
    /// Builds a dataset after checking that responses are binary and every
    /// weight is at least one.
    pub fn new(
        y: Array2<f64>,
        counts: Vec<u64>,
        item_labels: Vec<String>,
        profile_labels: Vec<String>,
    ) -> Result<Self> {
        let (rows, items) = y.dim();
        if rows == 0 || items == 0 {
            return Err(LmduError::EmptyInput("response matrix has no cells".into()));
        }
        if counts.len() != rows {
            return Err(LmduError::DimensionMismatch(format!("{} weights for {} rows", counts.len(), rows)));
        }
        if item_labels.len() != items || profile_labels.len() != rows {
            return Err(LmduError::DimensionMismatch("label count does not match matrix shape".into()));
        }
        for ((i, r), &v) in y.indexed_iter() {
            if v != 0.0 && v != 1.0 {
                return Err(LmduError::NonBinary { row: i + 1, col: r + 1, value: v.to_string() });
            }
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(LmduError::InvalidOption(format!("row {} has zero weight", i + 1)));
        }
        Ok(Self { y, counts, item_labels, profile_labels })
    }

    /// Weighted dataset with generated labels.
    pub fn with_counts(y: Array2<f64>, counts: Vec<u64>) -> Result<Self> {
        let items = (1..=y.ncols()).map(|r| format!("item{r}")).collect();
        let labels = (0..y.nrows()).map(|i| pattern_label(y.row(i).iter())).collect();
        Self::new(y, counts, items, labels)
    }

    /// Unit-weight dataset with generated labels (`item1..`, and the 0/1 pattern per row).
    pub fn from_matrix(y: Array2<f64>) -> Result<Self> {
        let rows = y.nrows();
        let items = (1..=y.ncols()).map(|r| format!("item{r}")).collect();
        let labels = (0..rows).map(|i| pattern_label(y.row(i).iter())).collect();
        Self::new(y, vec![1; rows], items, labels)
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Row weights `n_i` as reals.
    pub fn weights(&self) -> Array1<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// `q_ir = 2 y_ir - 1`.
    pub fn q(&self) -> Array2<f64> {
        self.y.mapv(|v| 2.0 * v - 1.0)
    }

    pub fn item_labels(&self) -> &[String] {
        &self.item_labels
    }

    pub fn profile_labels(&self) -> &[String] {
        &self.profile_labels
    }

    pub fn n_rows(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.y.ncols()
    }

    /// Number of participants, `sum_i n_i`.
    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn has_all_zero_row(&self) -> bool {
        self.y.rows().into_iter().any(|row| row.iter().all(|&v| v == 0.0))
    }

    /// Repeats every row `n_i` times with unit weights.
    pub fn expand(&self) -> BinaryDataset {
        let total = self.total_count() as usize;
        let mut y = Array2::zeros((total, self.n_items()));
        let mut labels = Vec::with_capacity(total);
        let mut k = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            for _ in 0..c {
                y.row_mut(k).assign(&self.y.row(i));
                labels.push(self.profile_labels[i].clone());
                k += 1;
            }
        }
        BinaryDataset { y, counts: vec![1; total], item_labels: self.item_labels.clone(), profile_labels: labels }
    }

    /// Removes one row. Used for leave-one-out refits.
    pub fn without_row(&self, index: usize) -> Result<BinaryDataset> {
        if self.n_rows() < 2 || index >= self.n_rows() {
            return Err(LmduError::InvalidOption(format!("cannot drop row {index} of {}", self.n_rows())));
        }
        let keep: Vec<usize> = (0..self.n_rows()).filter(|&i| i != index).collect();
        Ok(self.select_rows(&keep))
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> BinaryDataset {
        BinaryDataset {
            y: self.y.select(Axis(0), rows),
            counts: rows.iter().map(|&i| self.counts[i]).collect(),
            item_labels: self.item_labels.clone(),
            profile_labels: rows.iter().map(|&i| self.profile_labels[i].clone()).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Wire<'a> {
            #[serde(rename = "Y")]
            y: Vec<Vec<u8>>,
            n: &'a [u64],
            item_labels: &'a [String],
            profile_labels: &'a [String],
        }
        let wire = Wire {
            y: self.y.rows().into_iter().map(|r| r.iter().map(|&v| v as u8).collect()).collect(),
            n: &self.counts,
            item_labels: &self.item_labels,
            profile_labels: &self.profile_labels,
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }
}

/// The 0/1 pattern of a row as a string, e.g. `"101000"`.
pub fn pattern_label<'a>(row: impl Iterator<Item = &'a f64>) -> String {
    row.map(|&v| if v == 1.0 { '1' } else { '0' }).collect()
}

/// Collapses identical rows into weighted profiles.
///
/// Profiles keep the order of their first occurrence and carry the summed
/// weights of the rows they replace. With `drop_all_zero` the all-zero profile
/// is removed, since it carries no information about item locations.
pub fn compress_profiles(raw: &BinaryDataset, drop_all_zero: bool) -> Result<BinaryDataset> {
    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut order: Vec<usize> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for (i, row) in raw.y.rows().into_iter().enumerate() {
        let key: Vec<u8> = row.iter().map(|&v| v as u8).collect();
        if drop_all_zero && key.iter().all(|&b| b == 0) {
            continue;
        }
        match index.get(&key) {
            Some(&k) => counts[k] += raw.counts[i],
            None => {
                index.insert(key, order.len());
                order.push(i);
                counts.push(raw.counts[i]);
            }
        }
    }
    if order.is_empty() {
        return Err(if drop_all_zero {
            LmduError::AllZeroProfiles
        } else {
            LmduError::EmptyInput("no rows to compress".into())
        });
    }
    let y = raw.y.select(Axis(0), &order);
    let labels = order.iter().map(|&i| pattern_label(raw.y.row(i).iter())).collect();
    BinaryDataset::new(y, counts, raw.item_labels.clone(), labels)
}

/// Predictor matrix with its labels and the constants subtracted from each column.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSet {
    x: Array2<f64>,
    labels: Vec<String>,
    centering: Array1<f64>,
}

impl PredictorSet {
    pub fn new(x: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(LmduError::EmptyInput("predictor matrix has no cells".into()));
        }
        if labels.len() != x.ncols() {
            return Err(LmduError::DimensionMismatch(format!("{} labels for {} predictors", labels.len(), x.ncols())));
        }
        if let Some(((i, p), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(LmduError::Parse {
                row: i + 1,
                col: p + 1,
                message: format!("non-finite predictor value {v}"),
            });
        }
        let p = x.ncols();
        Ok(Self { x, labels, centering: Array1::zeros(p) })
    }

    /// Unlabelled predictors (`x1..xP`).
    pub fn from_matrix(x: Array2<f64>) -> Result<Self> {
        let labels = (1..=x.ncols()).map(|p| format!("x{p}")).collect();
        Self::new(x, labels)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn centering(&self) -> &Array1<f64> {
        &self.centering
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_predictors(&self) -> usize {
        self.x.ncols()
    }

    /// Subtracts `constants[p]` from column `p`; the constants accumulate in
    /// [`PredictorSet::centering`].
    pub fn center(&mut self, constants: &[f64]) -> Result<()> {
        if constants.len() != self.n_predictors() {
            return Err(LmduError::DimensionMismatch(format!(
                "{} centering constants for {} predictors",
                constants.len(),
                self.n_predictors()
            )));
        }
        for (p, &c) in constants.iter().enumerate() {
            self.x.column_mut(p).mapv_inplace(|v| v - c);
            self.centering[p] += c;
        }
        Ok(())
    }

    /// Applies this set's centering to raw rows, e.g. new observations for prediction.
    pub fn center_new(&self, raw: &Array2<f64>) -> Result<Array2<f64>> {
        if raw.ncols() != self.n_predictors() {
            return Err(LmduError::DimensionMismatch(format!(
                "{} columns, expected {}",
                raw.ncols(),
                self.n_predictors()
            )));
        }
        Ok(raw - &self.centering.view().insert_axis(Axis(0)))
    }

    /// Rejects predictor columns that are identically zero, unless `allow_zero`.
    pub fn check_columns(&self, allow_zero: bool) -> Result<()> {
        if allow_zero {
            return Ok(());
        }
        for (p, col) in self.x.columns().into_iter().enumerate() {
            if col.iter().all(|&v| v == 0.0) {
                return Err(LmduError::Degenerate(format!(
                    "predictor {} is constant zero after centering",
                    self.labels[p]
                )));
            }
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> PredictorSet {
        PredictorSet { x: self.x.select(Axis(0), rows), labels: self.labels.clone(), centering: self.centering.clone() }
    }

    pub fn without_row(&self, index: usize) -> PredictorSet {
        let keep: Vec<usize> = (0..self.n_obs()).filter(|&i| i != index).collect();
        self.select_rows(&keep)
    }
}

/// Which kind of table a CSV file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvMode {
    Responses,
    Predictors,
}

/// Result of [`load_csv`].
#[derive(Debug, Clone)]
pub enum Loaded {
    Responses(BinaryDataset),
    Predictors(PredictorSet),
}

pub fn load_csv(path: impl AsRef<Path>, mode: CsvMode) -> Result<Loaded> {
    let file = std::fs::File::open(path)?;
    match mode {
        CsvMode::Responses => read_responses(file).map(Loaded::Responses),
        CsvMode::Predictors => read_predictors(file).map(Loaded::Predictors),
    }
}

pub fn load_responses(path: impl AsRef<Path>) -> Result<BinaryDataset> {
    read_responses(std::fs::File::open(path)?)
}

pub fn load_predictors(path: impl AsRef<Path>) -> Result<PredictorSet> {
    read_predictors(std::fs::File::open(path)?)
}

fn read_table<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(LmduError::EmptyInput("missing header row".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(LmduError::Ragged { row: i + 1, expected: header.len(), found: record.len() });
        }
        rows.push(record.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        return Err(LmduError::EmptyInput("no data rows".into()));
    }
    Ok((header, rows))
}

/// Reads a response table. A column named `n` is taken as the row frequency;
/// every other column is a binary item.
pub fn read_responses<R: Read>(reader: R) -> Result<BinaryDataset> {
    let (header, rows) = read_table(reader)?;
    let freq_col = header.iter().position(|h| h == FREQUENCY_COLUMN);
    let item_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != freq_col).collect();
    if item_cols.is_empty() {
        return Err(LmduError::EmptyInput("no item columns".into()));
    }
    let mut y = Array2::zeros((rows.len(), item_cols.len()));
    let mut counts = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        for (r, &c) in item_cols.iter().enumerate() {
            y[[i, r]] = match row[c].as_str() {
                "0" => 0.0,
                "1" => 1.0,
                other => return Err(LmduError::NonBinary { row: i + 1, col: c + 1, value: other.to_owned() }),
            };
        }
        let n = match freq_col {
            Some(c) => row[c].parse::<u64>().map_err(|e| LmduError::Parse {
                row: i + 1,
                col: c + 1,
                message: format!("frequency {:?}: {e}", row[c]),
            })?,
            None => 1,
        };
        counts.push(n);
    }
    // rows with frequency zero (unobserved patterns) are dropped
    let keep: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    let y = y.select(Axis(0), &keep);
    let counts: Vec<u64> = keep.iter().map(|&i| counts[i]).collect();
    if counts.is_empty() {
        return Err(LmduError::EmptyInput("all frequencies are zero".into()));
    }
    let items = item_cols.iter().map(|&c| header[c].clone()).collect();
    let labels = y.rows().into_iter().map(|r| pattern_label(r.iter())).collect();
    BinaryDataset::new(y, counts, items, labels)
}

pub fn read_predictors<R: Read>(reader: R) -> Result<PredictorSet> {
    let (header, rows) = read_table(reader)?;
    let mut x = Array2::zeros((rows.len(), header.len()));
    for (i, row) in rows.iter().enumerate() {
        for (p, cell) in row.iter().enumerate() {
            x[[i, p]] = cell.parse::<f64>().map_err(|e| LmduError::Parse {
                row: i + 1,
                col: p + 1,
                message: format!("{cell:?}: {e}"),
            })?;
        }
    }
    PredictorSet::new(x, header)
}
