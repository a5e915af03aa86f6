//! The prediction contract shared by every model, plus the built-in
//! challengers and the JSON artifact format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Record, Row, Value};
use crate::error::{Error, Result};
use crate::scorecard::ScorecardModel;

pub mod external;
pub mod gbm;
pub mod spline;

pub use external::{wrap_external, ExternalModel, ExternalModelTable, KeyPolicy};
pub use gbm::{train_gbm, GbmConfig, GbmModel, Node};
pub use spline::{rcs_basis, train_rcs_logistic, RcsConfig, RcsModel};

/// A model mapping rows to probabilities of default.
///
/// Rows are passed with their column names so a model can pick its own
/// features out of a wider table. Implementations must be pure: the same
/// batch always yields the same output, from any thread.
pub trait PredictiveModel: Send + Sync {
    fn name(&self) -> &str;

    fn features(&self) -> Vec<String>;

    fn predict(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>>;

    fn predict_one(&self, applicant: &Record) -> Result<f64> {
        let names: Vec<String> = applicant.keys().cloned().collect();
        let row: Row = applicant.values().cloned().collect();
        Ok(self.predict(&names, &[row])?[0])
    }
}

/// Positions of `features` within `names`.
pub fn feature_indices(features: &[String], names: &[String]) -> Result<Vec<usize>> {
    features
        .iter()
        .map(|f| {
            names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| Error::UnknownColumn(f.clone()))
        })
        .collect()
}

/// Numeric value of a cell, accepting numbers written as text.
pub(crate) fn numeric_cell(variable: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Num(x) => Ok(*x),
        Value::Cat(s) => s.trim().parse().map_err(|_| Error::UncoveredValue {
            variable: variable.to_string(),
            value: s.clone(),
        }),
    }
}

/// Predicts the same probability for every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub features: Vec<String>,
}

impl ConstantModel {
    pub fn new(name: impl Into<String>, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidConfig(format!("constant PD {value} outside [0, 1]")));
        }
        Ok(ConstantModel {
            name: name.into(),
            value,
            features: Vec::new(),
        })
    }
}

impl PredictiveModel for ConstantModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn features(&self) -> Vec<String> {
        self.features.clone()
    }

    fn predict(&self, _names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        Ok(vec![self.value; rows.len()])
    }
}

pub const ARTIFACT_VERSION: u32 = 1;

/// Any model that can be written to and read back from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelArtifact {
    Scorecard(ScorecardModel),
    Gbm(GbmModel),
    Rcs(RcsModel),
    External(ExternalModel),
    Constant(ConstantModel),
}

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    format_version: u32,
    #[serde(flatten)]
    model: ModelArtifact,
}

impl ModelArtifact {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelArtifact::Scorecard(_) => "scorecard",
            ModelArtifact::Gbm(_) => "gbm",
            ModelArtifact::Rcs(_) => "rcs",
            ModelArtifact::External(_) => "external",
            ModelArtifact::Constant(_) => "constant",
        }
    }

    pub fn as_model(&self) -> &dyn PredictiveModel {
        match self {
            ModelArtifact::Scorecard(m) => m,
            ModelArtifact::Gbm(m) => m,
            ModelArtifact::Rcs(m) => m,
            ModelArtifact::External(m) => m,
            ModelArtifact::Constant(m) => m,
        }
    }

    pub fn as_scorecard(&self) -> Option<&ScorecardModel> {
        match self {
            ModelArtifact::Scorecard(m) => Some(m),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ArtifactFile {
            format_version: ARTIFACT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ArtifactFile = serde_json::from_str(text)?;
        if file.format_version != ARTIFACT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl PredictiveModel for ModelArtifact {
    fn name(&self) -> &str {
        self.as_model().name()
    }

    fn features(&self) -> Vec<String> {
        self.as_model().features()
    }

    fn predict(&self, names: &[String], rows: &[Row]) -> Result<Vec<f64>> {
        self.as_model().predict(names, rows)
    }
}
