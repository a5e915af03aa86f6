//! Models trained elsewhere, supplied as tables of predictions.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{feature_indices, PredictiveModel};
use crate::data::{Row, Value};
use crate::error::{Error, Result};

pub const ROW_ID: &str = "row_id";
pub const PD_COLUMN: &str = "pd";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyPolicy {
    /// Unknown keys are an error.
    #[default]
    Strict,
    /// Unknown keys take the PD of the closest key (Euclidean distance over
    /// numeric key columns; ties go to the earlier entry).
    Nearest,
}

/// Predictions keyed either by `row_id` or by a tuple of feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalModelTable {
    pub name: String,
    /// Key column names: `["row_id"]` or feature names.
    pub key_columns: Vec<String>,
    pub entries: Vec<(Vec<Value>, f64)>,
}

impl ExternalModelTable {
    /// Read a CSV with either `row_id,pd` or feature columns plus `pd`.
    pub fn from_csv<R: Read>(name: impl Into<String>, reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let pd_idx = header
            .iter()
            .position(|h| h == PD_COLUMN)
            .ok_or_else(|| Error::Schema(format!("prediction table has no `{PD_COLUMN}` column")))?;
        let key_columns: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != pd_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let mut entries = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut key = Vec::new();
            let mut pd = f64::NAN;
            for (i, cell) in rec.iter().enumerate() {
                if i == pd_idx {
                    pd = cell.trim().parse().map_err(|_| Error::Parse {
                        row: r + 1,
                        column: PD_COLUMN.to_string(),
                        value: cell.to_string(),
                    })?;
                } else {
                    key.push(match cell.trim().parse::<f64>() {
                        Ok(v) => Value::Num(v),
                        Err(_) => Value::Cat(cell.to_string()),
                    });
                }
            }
            entries.push((key, pd));
        }
        Ok(ExternalModelTable {
            name: name.into(),
            key_columns,
            entries,
        })
    }

    pub fn from_csv_file(name: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(name, f)
    }
}

fn key_string(values: &[Value]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\u{1f}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExternalRepr", into = "ExternalRepr")]
pub struct ExternalModel {
    table: ExternalModelTable,
    policy: KeyPolicy,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct ExternalRepr {
    table: ExternalModelTable,
    #[serde(default)]
    policy: KeyPolicy,
}

impl TryFrom<ExternalRepr> for ExternalModel {
    type Error = Error;

    fn try_from(r: ExternalRepr) -> Result<Self> {
        wrap_external(r.table, r.policy)
    }
}

impl From<ExternalModel> for ExternalRepr {
    fn from(m: ExternalModel) -> Self {
        ExternalRepr {
            table: m.table,
            policy: m.policy,
        }
    }
}

/// Validate a prediction table and expose it as a model.
pub fn wrap_external(table: ExternalModelTable, policy: KeyPolicy) -> Result<ExternalModel> {
    if table.key_columns.is_empty() {
        return Err(Error::Schema("prediction table has no key columns".into()));
    }
    let mut index = HashMap::with_capacity(table.entries.len());
    for (i, (key, pd)) in table.entries.iter().enumerate() {
        if key.len() != table.key_columns.len() {
            return Err(Error::Schema(format!("entry {i} has {} key values", key.len())));
        }
        if !(0.0..=1.0).contains(pd) {
            return Err(Error::InvalidConfig(format!("entry {i} has PD {pd} outside [0, 1]")));
        }
        if index.insert(key_string(key), i).is_some() {
            return Err(Error::Schema(format!("duplicate key `{}`", key_string(key))));
        }
    }
    Ok(ExternalModel { table, policy, index })
}

impl ExternalModel {
    pub fn table(&self) -> &ExternalModelTable {
        &self.table
    }

    fn nearest(&self, key: &[Value]) -> Result<f64> {
        let q: Option<Vec<f64>> = key.iter().map(Value::as_f64).collect();
        let q = q.ok_or_else(|| Error::UnknownKey(key_string(key)))?;
        let mut best: Option<(f64, f64)> = None;
        for (k, pd) in &self.table.entries {
            let Some(d) = k
                .iter()
                .zip(&q)
                .map(|(v, x)| v.as_f64().map(|a| (a - x) * (a - x)))
                .sum::<Option<f64>>()
            else {
                continue;
            };
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, *pd));
            }
        }
        best.map(|(_, pd)| pd).ok_or_else(|| Error::UnknownKey(key_string(key)))
    }
}

impl PredictiveModel for ExternalModel {
    fn name(&self) -> &str {
        &self.table.name
    }

    fn features(&self) -> Vec<String> {
        self.table.key_columns.clone()
    }

    fn predict(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        let idx = feature_indices(&self.table.key_columns, names)?;
        rows.iter()
            .map(|r| {
                let key: Vec<Value> = idx.iter().map(|&i| r[i].clone()).collect();
                match self.index.get(&key_string(&key)) {
                    Some(&i) => Ok(self.table.entries[i].1),
                    None => match self.policy {
                        KeyPolicy::Strict => Err(Error::UnknownKey(key_string(&key))),
                        KeyPolicy::Nearest => self.nearest(&key),
                    },
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ExternalModelTable {
        ExternalModelTable::from_csv("ext", "row_id,pd\nrowA,0.7\nrowB,0.1\n".as_bytes()).unwrap()
    }

    #[test]
    fn lookup_identity() {
        let m = wrap_external(table(), KeyPolicy::Strict).unwrap();
        let p = m
            .predict(&[ROW_ID.to_string()], &[vec![Value::Cat("rowA".into())]])
            .unwrap();
        assert_eq!(p, vec![0.7]);
    }

    #[test]
    fn unknown_key_strict() {
        let m = wrap_external(table(), KeyPolicy::Strict).unwrap();
        let err = m
            .predict(&[ROW_ID.to_string()], &[vec![Value::Cat("rowZ".into())]])
            .unwrap_err();
        assert!(matches!(err, Error::UnknownKey(_)));
    }

    #[test]
    fn out_of_range_pd_rejected() {
        let t = ExternalModelTable::from_csv("ext", "row_id,pd\na,1.2\n".as_bytes()).unwrap();
        assert!(wrap_external(t, KeyPolicy::Strict).is_err());
    }

    #[test]
    fn nearest_key() {
        let t = ExternalModelTable::from_csv("ext", "x,pd\n1,0.2\n5,0.6\n".as_bytes()).unwrap();
        let m = wrap_external(t, KeyPolicy::Nearest).unwrap();
        let p = m.predict(&["x".to_string()], &[vec![Value::Num(4.0)]]).unwrap();
        assert_eq!(p, vec![0.6]);
    }
}
