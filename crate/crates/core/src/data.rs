//! Tabular datasets with a first-class missingness mask.
//!
//! A [`Dataset`] stores covariates row-major alongside a boolean mask. Cells
//! under the mask keep whatever value was there before masking (simulators
//! use this to retain latent values), but nothing in fitting or prediction
//! ever reads them: all consumer access goes through [`Dataset::get`], which
//! returns `None` for masked cells.
//!
//! [`augment`] appends one binary indicator column per covariate that has at
//! least one missing entry, and [`AugmentedDataset::design`] produces the
//! column-major [`FeatureMatrix`] the sampler works on.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BartError, Result};

/// How a column's numeric values should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ColumnKind {
    Numeric,
    /// Integer-coded levels; the codes index into a [`LevelDictionary`].
    Nominal,
    /// Binary 0/1 column flagging missingness in `source`. Never missing itself.
    MissingIndicator { source: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
    response: Vec<f64>,
    column_names: Vec<String>,
    column_kinds: Vec<ColumnKind>,
}

impl Dataset {
    /// Builds a dataset from rows of optional values (`None` = missing).
    pub fn new(
        rows: Vec<Vec<Option<f64>>>,
        response: Vec<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = column_names.len();
        let mut values = Vec::with_capacity(n_rows * n_cols);
        let mut missing = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(BartError::InvalidData(format!(
                    "row {i} has {} values, expected {n_cols}",
                    row.len()
                )));
            }
            for v in row {
                values.push(v.unwrap_or(0.0));
                missing.push(v.is_none());
            }
        }
        Self::from_parts(
            n_rows,
            n_cols,
            values,
            missing,
            response,
            column_names,
            vec![ColumnKind::Numeric; n_cols],
        )
    }

    /// Builds a fully observed dataset from dense rows.
    pub fn complete(rows: &[Vec<f64>], response: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        Self::new(
            rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect(),
            response,
            column_names,
        )
    }

    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        values: Vec<f64>,
        missing: Vec<bool>,
        response: Vec<f64>,
        column_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(BartError::InvalidData(format!(
                "dataset must have at least one row and one column (got {n_rows}x{n_cols})"
            )));
        }
        if values.len() != n_rows * n_cols || missing.len() != n_rows * n_cols {
            return Err(BartError::InvalidData("covariate/mask size mismatch".into()));
        }
        if response.len() != n_rows {
            return Err(BartError::InvalidData(format!(
                "response has {} entries, expected {n_rows}",
                response.len()
            )));
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(BartError::InvalidData(format!("response at row {i} is not finite")));
        }
        if column_names.len() != n_cols || column_kinds.len() != n_cols {
            return Err(BartError::InvalidData("column metadata size mismatch".into()));
        }
        for (k, (&v, &m)) in values.iter().zip(&missing).enumerate() {
            if !m && !v.is_finite() {
                return Err(BartError::InvalidData(format!(
                    "non-finite covariate at row {}, column '{}'",
                    k / n_cols,
                    column_names[k % n_cols]
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
            missing,
            response,
            column_names,
            column_kinds,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let k = row * self.n_cols + col;
        if self.missing[k] {
            None
        } else {
            Some(self.values[k])
        }
    }

    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.n_cols + col]
    }

    /// The stored value regardless of the mask. For masked cells this is the
    /// value that existed before masking; only simulators and oracles use it.
    pub fn latent(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn set_missing(&mut self, row: usize, col: usize, missing: bool) {
        self.missing[row * self.n_cols + col] = missing;
    }

    pub fn set_value(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.n_cols + col] = value;
    }

    pub fn row(&self, row: usize) -> Vec<Option<f64>> {
        (0..self.n_cols).map(|j| self.get(row, j)).collect()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn response_mut(&mut self) -> &mut [f64] {
        &mut self.response
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn with_column_kinds(mut self, kinds: Vec<ColumnKind>) -> Result<Self> {
        if kinds.len() != self.n_cols {
            return Err(BartError::InvalidData("column kind count mismatch".into()));
        }
        self.column_kinds = kinds;
        Ok(self)
    }

    pub fn column_missing_count(&self, col: usize) -> usize {
        (0..self.n_rows).filter(|&i| self.is_missing(i, col)).count()
    }

    pub fn row_has_missing(&self, row: usize) -> bool {
        self.missing[row * self.n_cols..(row + 1) * self.n_cols]
            .iter()
            .any(|&m| m)
    }

    /// Fraction of rows with at least one missing covariate.
    pub fn row_missing_fraction(&self) -> f64 {
        let count = (0..self.n_rows).filter(|&i| self.row_has_missing(i)).count();
        count as f64 / self.n_rows as f64
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        let mut missing = Vec::with_capacity(rows.len() * self.n_cols);
        let mut response = Vec::with_capacity(rows.len());
        for &i in rows {
            let span = i * self.n_cols..(i + 1) * self.n_cols;
            values.extend_from_slice(&self.values[span.clone()]);
            missing.extend_from_slice(&self.missing[span]);
            response.push(self.response[i]);
        }
        Self::from_parts(
            rows.len(),
            self.n_cols,
            values,
            missing,
            response,
            self.column_names.clone(),
            self.column_kinds.clone(),
        )
    }

    /// Rows with no missing covariate. Errors if there are none.
    pub fn complete_cases(&self) -> Result<Self> {
        let rows: Vec<usize> = (0..self.n_rows).filter(|&i| !self.row_has_missing(i)).collect();
        if rows.is_empty() {
            return Err(BartError::InvalidData("no complete cases".into()));
        }
        self.select_rows(&rows)
    }

    /// Same dataset with the mask cleared, exposing the retained latent values.
    pub fn unmasked(&self) -> Self {
        let mut out = self.clone();
        out.missing.iter_mut().for_each(|m| *m = false);
        out
    }
}

/// Level dictionary for nominal columns: column name -> ordered level labels.
/// The integer code of a level is its position in the list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDictionary {
    pub columns: BTreeMap<String, Vec<String>>,
}

impl LevelDictionary {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| BartError::io(path, e))?;
        Ok(serde_json::from_reader(file)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| BartError::io(path, e))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Response column label. `None` reads covariates only (response set to 0).
    pub response_column: Option<String>,
    /// Cell values treated as missing in addition to the empty string.
    pub missing_tokens: Vec<String>,
    /// Columns to integer-encode as nominal levels.
    pub nominal_columns: Vec<String>,
    /// Existing level dictionary; when present, unseen levels are an error.
    pub levels: Option<LevelDictionary>,
}

impl IngestOptions {
    pub fn new(response_column: impl Into<String>) -> Self {
        Self {
            response_column: Some(response_column.into()),
            ..Self::covariates_only()
        }
    }

    pub fn covariates_only() -> Self {
        Self {
            response_column: None,
            missing_tokens: vec!["NA".to_string()],
            nominal_columns: Vec::new(),
            levels: None,
        }
    }

    fn is_missing(&self, cell: &str) -> bool {
        let cell = cell.trim();
        cell.is_empty() || self.missing_tokens.iter().any(|t| t == cell)
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub levels: LevelDictionary,
    /// Rows dropped because their response was missing.
    pub dropped_rows: usize,
}

pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| BartError::io(path, e))?;
    ingest_reader(file, options)
}

pub fn ingest_reader<R: Read>(reader: R, options: &IngestOptions) -> Result<Ingested> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = csv.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let response_idx = match &options.response_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            BartError::InvalidData(format!("response column '{name}' not found in header"))
        })?),
        None => None,
    };
    for name in &options.nominal_columns {
        if !headers.contains(name) {
            return Err(BartError::InvalidData(format!("nominal column '{name}' not found")));
        }
    }
    let covariate_idx: Vec<usize> = (0..headers.len()).filter(|&j| Some(j) != response_idx).collect();
    if covariate_idx.is_empty() {
        return Err(BartError::InvalidData("no covariate columns".into()));
    }

    // (line, cells) for each record; nominal encoding needs the full column first.
    let mut records: Vec<(u64, Vec<String>)> = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            return Err(BartError::Ingest {
                line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        records.push((line, rec.iter().map(|c| c.to_string()).collect()));
    }

    let mut levels = options.levels.clone().unwrap_or_default();
    let nominal: BTreeSet<&str> = options.nominal_columns.iter().map(String::as_str).collect();
    let mut level_codes: BTreeMap<usize, BTreeMap<String, usize>> = BTreeMap::new();
    for &j in &covariate_idx {
        let name = &headers[j];
        if !nominal.contains(name.as_str()) {
            continue;
        }
        let labels = match levels.columns.get(name) {
            Some(existing) => existing.clone(),
            None => {
                let distinct: BTreeSet<String> = records
                    .iter()
                    .map(|(_, cells)| cells[j].trim().to_string())
                    .filter(|c| !options.is_missing(c))
                    .collect();
                let labels: Vec<String> = distinct.into_iter().collect();
                levels.columns.insert(name.clone(), labels.clone());
                labels
            }
        };
        level_codes.insert(j, labels.into_iter().enumerate().map(|(k, l)| (l, k)).collect());
    }

    let n_cols = covariate_idx.len();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    let mut response = Vec::new();
    let mut dropped = 0usize;
    for (line, cells) in &records {
        let y = match response_idx {
            Some(r) => {
                let cell = cells[r].trim();
                if options.is_missing(cell) {
                    dropped += 1;
                    continue;
                }
                Some(parse_numeric(cell, *line, &headers[r])?)
            }
            None => None,
        };
        for &j in &covariate_idx {
            let cell = cells[j].trim();
            if options.is_missing(cell) {
                values.push(0.0);
                missing.push(true);
                continue;
            }
            let v = match level_codes.get(&j) {
                Some(codes) => *codes.get(cell).ok_or_else(|| BartError::Ingest {
                    line: *line,
                    column: headers[j].clone(),
                    message: format!("'{cell}' is not a declared level"),
                })? as f64,
                None => parse_numeric(cell, *line, &headers[j])?,
            };
            values.push(v);
            missing.push(false);
        }
        response.push(y.unwrap_or(0.0));
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing response");
    }
    let n_rows = response.len();
    if n_rows == 0 {
        return Err(BartError::InvalidData("no usable rows".into()));
    }
    let column_names: Vec<String> = covariate_idx.iter().map(|&j| headers[j].clone()).collect();
    let column_kinds = covariate_idx
        .iter()
        .map(|j| {
            if level_codes.contains_key(j) {
                ColumnKind::Nominal
            } else {
                ColumnKind::Numeric
            }
        })
        .collect();
    let dataset = Dataset::from_parts(n_rows, n_cols, values, missing, response, column_names, column_kinds)?;
    Ok(Ingested {
        dataset,
        levels,
        dropped_rows: dropped,
    })
}

fn parse_numeric(cell: &str, line: u64, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(BartError::Ingest {
            line,
            column: column.to_string(),
            message: format!("cannot parse '{cell}' as a number"),
        }),
    }
}

/// Writes a dataset as CSV, masked cells rendered as `missing_token`.
pub fn write_csv<W: std::io::Write>(
    dataset: &Dataset,
    response_column: &str,
    missing_token: &str,
    writer: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.column_names().iter().map(String::as_str).collect();
    header.push(response_column);
    out.write_record(&header)?;
    for i in 0..dataset.n_rows() {
        let mut rec: Vec<String> = (0..dataset.n_cols())
            .map(|j| match dataset.get(i, j) {
                Some(v) => v.to_string(),
                None => missing_token.to_string(),
            })
            .collect();
        rec.push(dataset.response()[i].to_string());
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| BartError::io("<csv writer>", e))?;
    Ok(())
}

/// Dataset plus one missingness indicator per covariate with missing entries.
#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    pub base: Dataset,
    /// Row-major `n x p_M` indicator values.
    pub dummy_columns: Vec<bool>,
    /// Dummy column k flags missingness in base column `dummy_map[k]`.
    pub dummy_map: Vec<usize>,
}

pub fn augment(d: &Dataset) -> AugmentedDataset {
    let already_flagged: BTreeSet<usize> = d
        .column_kinds()
        .iter()
        .filter_map(|k| match k {
            ColumnKind::MissingIndicator { source } => Some(*source),
            _ => None,
        })
        .collect();
    let dummy_map: Vec<usize> = (0..d.n_cols())
        .filter(|&j| {
            !matches!(d.column_kinds()[j], ColumnKind::MissingIndicator { .. })
                && !already_flagged.contains(&j)
                && d.column_missing_count(j) > 0
        })
        .collect();
    let mut dummy_columns = Vec::with_capacity(d.n_rows() * dummy_map.len());
    for i in 0..d.n_rows() {
        dummy_columns.extend(dummy_map.iter().map(|&j| d.is_missing(i, j)));
    }
    AugmentedDataset {
        base: d.clone(),
        dummy_columns,
        dummy_map,
    }
}

impl AugmentedDataset {
    pub fn n_dummies(&self) -> usize {
        self.dummy_map.len()
    }

    pub fn dummy(&self, row: usize, k: usize) -> bool {
        self.dummy_columns[row * self.dummy_map.len() + k]
    }

    pub fn schema(&self) -> Schema {
        Schema {
            column_names: self.base.column_names().to_vec(),
            column_kinds: self.base.column_kinds().to_vec(),
            dummy_map: self.dummy_map.clone(),
        }
    }

    pub fn design(&self) -> FeatureMatrix {
        self.schema()
            .design_for(&self.base)
            .expect("training data always conforms to its own schema")
    }

    /// Flattens into a plain dataset whose trailing columns are the indicators.
    pub fn as_dataset(&self) -> Dataset {
        let d = &self.base;
        let p = d.n_cols();
        let pm = self.dummy_map.len();
        let mut values = Vec::with_capacity(d.n_rows() * (p + pm));
        let mut missing = Vec::with_capacity(d.n_rows() * (p + pm));
        for i in 0..d.n_rows() {
            for j in 0..p {
                values.push(d.latent(i, j));
                missing.push(d.is_missing(i, j));
            }
            for k in 0..pm {
                values.push(if self.dummy(i, k) { 1.0 } else { 0.0 });
                missing.push(false);
            }
        }
        let mut names = d.column_names().to_vec();
        let mut kinds = d.column_kinds().to_vec();
        for &src in &self.dummy_map {
            names.push(format!("M_{}", d.column_names()[src]));
            kinds.push(ColumnKind::MissingIndicator { source: src });
        }
        Dataset::from_parts(d.n_rows(), p + pm, values, missing, d.response().to_vec(), names, kinds)
            .expect("augmented dimensions are consistent")
    }
}

/// Column layout the trees were trained on: base columns followed by indicators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub column_names: Vec<String>,
    pub column_kinds: Vec<ColumnKind>,
    pub dummy_map: Vec<usize>,
}

impl Schema {
    pub fn n_base(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len() + self.dummy_map.len()
    }

    /// Builds the design matrix for rows in this schema. Indicator values
    /// come from each row's own mask.
    pub fn design_for(&self, d: &Dataset) -> Result<FeatureMatrix> {
        if d.n_cols() != self.n_base() {
            return Err(BartError::Schema(format!(
                "expected {} covariate columns, found {}",
                self.n_base(),
                d.n_cols()
            )));
        }
        if d.column_names() != self.column_names.as_slice() {
            return Err(BartError::Schema(format!(
                "column names {:?} do not match training columns {:?}",
                d.column_names(),
                self.column_names
            )));
        }
        let n = d.n_rows();
        let p = self.n_features();
        let mut values = vec![0.0; n * p];
        let mut missing = vec![false; n * p];
        for j in 0..self.n_base() {
            for i in 0..n {
                match d.get(i, j) {
                    Some(v) => values[j * n + i] = v,
                    None => missing[j * n + i] = true,
                }
            }
        }
        for (k, &src) in self.dummy_map.iter().enumerate() {
            let col = self.n_base() + k;
            for i in 0..n {
                values[col * n + i] = if d.is_missing(i, src) { 1.0 } else { 0.0 };
            }
        }
        Ok(FeatureMatrix::build(n, p, values, missing))
    }
}

/// Column-major covariate matrix after augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
    /// Rank of each observed value among its column's distinct values; `u32::MAX` if missing.
    codes: Vec<u32>,
    /// Distinct observed values per column, ascending.
    levels: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    fn build(n_rows: usize, n_cols: usize, values: Vec<f64>, missing: Vec<bool>) -> Self {
        let mut codes = vec![u32::MAX; n_rows * n_cols];
        let mut levels = Vec::with_capacity(n_cols);
        for j in 0..n_cols {
            let span = j * n_rows..(j + 1) * n_rows;
            let mut distinct: Vec<f64> = span.clone().filter(|&k| !missing[k]).map(|k| values[k]).collect();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            for k in span {
                if !missing[k] {
                    codes[k] = distinct.partition_point(|&l| l < values[k]) as u32;
                }
            }
            levels.push(distinct);
        }
        Self {
            n_rows,
            n_cols,
            values,
            missing,
            codes,
            levels,
        }
    }

    /// From row-major optional values.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows == 0 || n_cols == 0 || rows.iter().any(|r| r.len() != n_cols) {
            return Err(BartError::InvalidData("ragged or empty feature rows".into()));
        }
        let mut values = vec![0.0; n_rows * n_cols];
        let mut missing = vec![false; n_rows * n_cols];
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                match v {
                    Some(v) => values[j * n_rows + i] = *v,
                    None => missing[j * n_rows + i] = true,
                }
            }
        }
        Ok(Self::build(n_rows, n_cols, values, missing))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let k = col * self.n_rows + row;
        if self.missing[k] {
            None
        } else {
            Some(self.values[k])
        }
    }

    pub fn row(&self, row: usize) -> Vec<Option<f64>> {
        (0..self.n_cols).map(|j| self.get(row, j)).collect()
    }

    /// Rank of the value at `(row, col)` among the column's distinct values.
    #[inline]
    pub fn code(&self, row: usize, col: usize) -> Option<u32> {
        let c = self.codes[col * self.n_rows + row];
        (c != u32::MAX).then_some(c)
    }

    /// Distinct observed values of `col`, ascending.
    pub fn levels(&self, col: usize) -> &[f64] {
        &self.levels[col]
    }
}

/// Affine map from `[y_min, y_max]` onto `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTransform {
    pub y_min: f64,
    pub y_max: f64,
}

impl ResponseTransform {
    /// True when the response was constant; scaled values are then all zero.
    pub fn is_degenerate(&self) -> bool {
        self.y_max <= self.y_min
    }

    pub fn range(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn forward(&self, y: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (y - self.y_min) / self.range() - 0.5
        }
    }

    pub fn inverse(&self, s: f64) -> f64 {
        if self.is_degenerate() {
            self.y_min
        } else {
            self.y_min + (s + 0.5) * self.range()
        }
    }

    /// Converts a variance in scaled units back to response units.
    pub fn inverse_variance(&self, var: f64) -> f64 {
        var * self.range() * self.range()
    }
}

pub fn scale_response(y: &[f64]) -> (Vec<f64>, ResponseTransform) {
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t = ResponseTransform { y_min, y_max };
    (y.iter().map(|&v| t.forward(v)).collect(), t)
}
