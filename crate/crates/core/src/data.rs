//! Tabular credit data: typed columns, a binary target, special-value
//! indicator columns and reproducible train/test splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::Monotone;
use crate::error::{Error, Result};

/// Prefix of the indicator columns added by [`derive_special_dummies`].
pub const DUMMY_PREFIX: &str = "NoValid";

/// A single cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    /// Loose equality used for special codes and categorical levels: a
    /// categorical level written as `"1"` matches the number `1`.
    pub fn matches(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a == b,
            (Value::Cat(a), Value::Cat(b)) => a == b,
            (Value::Num(a), Value::Cat(s)) | (Value::Cat(s), Value::Num(a)) => {
                s.trim().parse::<f64>().map(|b| b == *a).unwrap_or(false)
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Cat(s.to_string())
    }
}

pub type Row = Vec<Value>;

/// Named values of one applicant.
pub type Record = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Sentinel values meaning "no information", "no valid information" or
    /// "no bureau record".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub special_codes: Vec<Value>,
    /// Required direction of the default rate along increasing values.
    #[serde(default, skip_serializing_if = "Monotone::is_none")]
    pub monotone: Monotone,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
            special_codes: Vec::new(),
            monotone: Monotone::None,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        ColumnSpec {
            kind: ColumnKind::Categorical,
            ..ColumnSpec::numeric(name)
        }
    }

    pub fn with_special_codes(mut self, codes: &[f64]) -> Self {
        self.special_codes = codes.iter().map(|&c| Value::Num(c)).collect();
        self
    }

    pub fn with_monotone(mut self, monotone: Monotone) -> Self {
        self.monotone = monotone;
        self
    }

    pub fn is_special(&self, value: &Value) -> bool {
        self.special_codes.iter().any(|c| c.matches(value))
    }
}

/// Column declarations plus the target name, as stored in `schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub target: String,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
            for code in &c.special_codes {
                if let (ColumnKind::Numeric, Value::Cat(s)) = (c.kind, code) {
                    return Err(Error::Schema(format!(
                        "numeric column `{}` declares non-numeric special code `{s}`",
                        c.name
                    )));
                }
            }
        }
        if seen.contains(self.target.as_str()) {
            return Err(Error::Schema(format!(
                "target `{}` must not be declared as a feature column",
                self.target
            )));
        }
        Ok(())
    }
}

/// Feature rows plus a binary target (1 = bad/default, 0 = good).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    names: Vec<String>,
    rows: Vec<Row>,
    target: String,
    y: Vec<u8>,
}

impl Dataset {
    pub fn new(columns: Vec<ColumnSpec>, rows: Vec<Row>, target: impl Into<String>, y: Vec<u8>) -> Result<Self> {
        let target = target.into();
        if rows.is_empty() {
            return Err(Error::EmptyInput("dataset has no rows".into()));
        }
        if rows.len() != y.len() {
            return Err(Error::Schema(format!(
                "{} rows but {} target values",
                rows.len(),
                y.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) || c.name == target {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Schema(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            for (c, v) in columns.iter().zip(row) {
                if c.kind == ColumnKind::Numeric && v.as_f64().is_none() {
                    return Err(Error::Parse {
                        row: i,
                        column: c.name.clone(),
                        value: v.to_string(),
                    });
                }
            }
        }
        if let Some((row, v)) = y.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::NonBinaryTarget {
                row,
                value: v.to_string(),
            });
        }
        let names = columns.iter().map(|c| c.name.clone()).collect();
        Ok(Dataset {
            columns,
            names,
            rows,
            target,
            y,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn n_bad(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let bad = self.n_bad();
        bad > 0 && bad < self.n()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_spec(&self, name: &str) -> Result<&ColumnSpec> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |r| &r[idx])
    }

    /// Numeric view of a column; fails on categorical columns.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        self.column(idx)
            .enumerate()
            .map(|(row, v)| {
                v.as_f64().ok_or_else(|| Error::Parse {
                    row,
                    column: name.to_string(),
                    value: v.to_string(),
                })
            })
            .collect()
    }

    pub fn record(&self, i: usize) -> Record {
        self.names.iter().cloned().zip(self.rows[i].iter().cloned()).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let rows = idx.iter().map(|&i| self.rows[i].clone()).collect();
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Dataset::new(self.columns.clone(), rows, self.target.clone(), y)
    }

    /// The named columns only, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Dataset> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>>>()?;
        let columns = idx.iter().map(|&j| self.columns[j].clone()).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&j| r[j].clone()).collect())
            .collect();
        Dataset::new(columns, rows, self.target.clone(), self.y.clone())
    }

    /// Deterministic subsample of at most `cap` rows; the full set when it is
    /// already small enough.
    pub fn sample(&self, cap: usize, seed: u64) -> Result<Dataset> {
        if self.n() <= cap {
            return Ok(self.clone());
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(cap);
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// Replace or append a column.
    pub fn with_column(&self, spec: ColumnSpec, values: Vec<Value>) -> Result<Dataset> {
        if values.len() != self.n() {
            return Err(Error::Schema(format!(
                "column `{}` has {} values for {} rows",
                spec.name,
                values.len(),
                self.n()
            )));
        }
        let mut columns = self.columns.clone();
        let mut rows = self.rows.clone();
        match self.names.iter().position(|n| *n == spec.name) {
            Some(j) => {
                columns[j] = spec;
                for (row, v) in rows.iter_mut().zip(values) {
                    row[j] = v;
                }
            }
            None => {
                columns.push(spec);
                for (row, v) in rows.iter_mut().zip(values) {
                    row.push(v);
                }
            }
        }
        Dataset::new(columns, rows, self.target.clone(), self.y.clone())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        header.push(self.target.clone());
        w.write_record(&header)?;
        for (row, y) in self.rows.iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(Value::to_string).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Parse a comma-separated file with a header row. Column kinds come from
/// `schema`; the header must name exactly the schema columns plus `target`,
/// in any order.
pub fn read_csv<R: Read>(reader: R, schema: &[ColumnSpec], target: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let target_pos = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::MissingTarget(target.to_string()))?;
    let mut positions = Vec::with_capacity(schema.len());
    for spec in schema {
        let pos = header
            .iter()
            .position(|h| *h == spec.name)
            .ok_or_else(|| Error::Schema(format!("column `{}` missing from header", spec.name)))?;
        positions.push(pos);
    }
    if header.len() != schema.len() + 1 {
        let extra: Vec<&str> = header
            .iter()
            .filter(|h| *h != target && !schema.iter().any(|c| &c.name == *h))
            .map(String::as_str)
            .collect();
        return Err(Error::Schema(format!("columns not in schema: {}", extra.join(", "))));
    }

    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t = rec.get(target_pos).unwrap_or("").trim();
        match t {
            "0" => y.push(0),
            "1" => y.push(1),
            other => {
                return Err(Error::NonBinaryTarget {
                    row: i,
                    value: other.to_string(),
                })
            }
        }
        let mut row = Vec::with_capacity(schema.len());
        for (spec, &pos) in schema.iter().zip(&positions) {
            let cell = rec.get(pos).unwrap_or("").trim();
            let value = match spec.kind {
                ColumnKind::Numeric => Value::Num(cell.parse::<f64>().map_err(|_| Error::Parse {
                    row: i,
                    column: spec.name.clone(),
                    value: cell.to_string(),
                })?),
                ColumnKind::Categorical => Value::Cat(cell.to_string()),
            };
            row.push(value);
        }
        rows.push(row);
    }
    let ds = Dataset::new(schema.to_vec(), rows, target, y)?;
    if !ds.has_both_classes() {
        return Err(Error::SingleClass);
    }
    Ok(ds)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSpec], target: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), schema, target)
}

/// Name of the indicator column derived from `column`.
pub fn dummy_name(column: &str) -> String {
    format!("{DUMMY_PREFIX}{column}")
}

/// Append a 0/1 indicator `NoValid<Column>` for every numeric column whose
/// share of special-coded rows exceeds `threshold`. Source values are left in
/// place so binning can still isolate them.
pub fn derive_special_dummies(ds: &Dataset, threshold: f64) -> Result<Dataset> {
    let mut out = ds.clone();
    for (j, spec) in ds.columns().iter().enumerate() {
        if spec.kind != ColumnKind::Numeric || spec.special_codes.is_empty() {
            continue;
        }
        let name = dummy_name(&spec.name);
        if ds.names().contains(&name) {
            continue;
        }
        let flags: Vec<bool> = ds.column(j).map(|v| spec.is_special(v)).collect();
        let hits = flags.iter().filter(|&&f| f).count();
        if hits == 0 || (hits as f64 / ds.n() as f64) <= threshold {
            continue;
        }
        let values = flags
            .into_iter()
            .map(|f| Value::Num(if f { 1.0 } else { 0.0 }))
            .collect();
        out = out.with_column(ColumnSpec::numeric(name), values)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitConfig {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        let cfg = SplitConfig { train_fraction, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// Training partition size: `train_fraction * n` rounded half away from
    /// zero (0.75 * 10459 = 7844.25 gives 7844).
    pub fn train_size(&self, n: usize) -> usize {
        (self.train_fraction * n as f64).round() as usize
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.75,
            seed: 42,
        }
    }
}

/// Shuffled disjoint partition. Each side keeps the original row order.
pub fn split_indices(n: usize, cfg: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    cfg.validate()?;
    let n_train = cfg.train_size(n);
    if n_train == 0 || n_train >= n {
        return Err(Error::EmptyPartition {
            train: n_train,
            test: n - n_train.min(n),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut test = idx.split_off(n_train);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

pub fn split(ds: &Dataset, cfg: &SplitConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.n(), cfg)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}
