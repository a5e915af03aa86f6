//! Credit scorecard development and model-agnostic explanations.
//!
//! The scorecard path runs binning, weight of evidence, MIV forward
//! selection, logistic regression and points scaling. Any model
//! implementing [`PredictiveModel`] can then be compared and explained with
//! permutation importance, partial dependence, ceteris paribus profiles and
//! additive attributions.

pub mod binning;
pub mod data;
pub mod error;
pub mod explain;
pub mod heloc;
pub mod logistic;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod scorecard;
pub mod selection;
pub mod woe;

pub use binning::{BinDef, BinningScheme, Monotone};
pub use data::{ColumnKind, ColumnSpec, Dataset, Record, Row, Schema, SplitConfig, Value};
pub use error::{Error, Result};
pub use explain::Response;
pub use logistic::{fit_logistic, LogisticConfig, LogisticFit};
pub use metrics::{auc, Loss, OneMinusAuc, PerformanceReport};
pub use models::{ConstantModel, ModelArtifact, PredictiveModel};
pub use pipeline::{build_scorecard, ScorecardBuild, ScorecardConfig};
pub use scorecard::{Scaling, Scorecard, ScorecardModel};
pub use woe::WoeTable;
