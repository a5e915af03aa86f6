//! Loading data and model artifacts for the commands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use creditlens_core::data::{derive_special_dummies, load_csv, split};
use creditlens_core::{Dataset, ModelArtifact, PredictiveModel, Schema, Scorecard, ScorecardModel, SplitConfig};
use serde::{Deserialize, Serialize};

use crate::args::InputArgs;
use crate::run::{sha256_hex, Manifest};

pub const DEFAULT_SEED: u64 = 42;
pub const MODEL_FILE: &str = "model.json";
pub const SCHEMA_FILE: &str = "schema.json";
pub const REFERENCE_FILE: &str = "reference.csv";

/// Input settings after defaults are applied; recorded in every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputConfig {
    pub data: PathBuf,
    pub data_sha256: String,
    pub schema: PathBuf,
    pub split: SplitConfig,
    /// `None` when indicators are not derived.
    pub dummy_threshold: Option<f64>,
}

impl InputConfig {
    pub fn seed(&self) -> u64 {
        self.split.seed
    }
}

pub struct Prepared {
    pub config: InputConfig,
    pub full: Dataset,
    pub train: Dataset,
    pub test: Dataset,
}

impl Prepared {
    /// Schema of the prepared table, indicators included.
    pub fn schema(&self) -> Schema {
        Schema {
            target: self.full.target().to_string(),
            columns: self.full.columns().to_vec(),
        }
    }
}

/// Load, add indicators and split. `recorded` supplies defaults from the
/// run that trained the model.
pub fn prepare(args: &InputArgs, recorded: Option<&InputConfig>) -> Result<Prepared> {
    for (flag, path) in [("--data", &args.data), ("--schema", &args.schema)] {
        if !path.is_file() {
            bail!("{flag} {} does not exist", path.display());
        }
    }
    let seed = args.seed.or(recorded.map(|r| r.split.seed)).unwrap_or(DEFAULT_SEED);
    let fraction = args
        .train_fraction
        .or(recorded.map(|r| r.split.train_fraction))
        .unwrap_or(SplitConfig::default().train_fraction);
    let dummy_threshold = if args.no_dummies {
        None
    } else {
        Some(
            args.dummy_threshold
                .or(recorded.and_then(|r| r.dummy_threshold))
                .unwrap_or(0.0),
        )
    };

    let bytes = std::fs::read(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let schema = Schema::from_json_file(&args.schema).context("invalid schema")?;
    let mut full = load_csv(&args.data, &schema.columns, &schema.target).context("invalid data")?;
    if let Some(t) = dummy_threshold {
        full = derive_special_dummies(&full, t)?;
    }
    let split_cfg = SplitConfig::new(fraction, seed)?;
    let (train, test) = split(&full, &split_cfg)?;
    Ok(Prepared {
        config: InputConfig {
            data: args.data.clone(),
            data_sha256: sha256_hex(&bytes),
            schema: args.schema.clone(),
            split: split_cfg,
            dummy_threshold,
        },
        full,
        train,
        test,
    })
}

pub struct LoadedModel {
    /// Unique display name.
    pub label: String,
    pub artifact: ModelArtifact,
    /// Run directory the model came from, if any.
    pub dir: Option<PathBuf>,
    pub input: Option<InputConfig>,
}

impl LoadedModel {
    pub fn model(&self) -> &dyn PredictiveModel {
        self.artifact.as_model()
    }
}

/// Read a model artifact, or a bare scorecard JSON named after its file.
pub fn read_model_file(path: &Path) -> Result<ModelArtifact> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match ModelArtifact::from_json(&text) {
        Ok(a) => Ok(a),
        Err(artifact_err) => match Scorecard::from_json(&text) {
            Ok(card) => {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scorecard");
                Ok(ModelArtifact::Scorecard(ScorecardModel::new(name, card)))
            }
            Err(_) => Err(artifact_err).with_context(|| format!("{} is not a model artifact", path.display())),
        },
    }
}

/// A run directory (with `model.json`) or a model file.
pub fn load_model(path: &Path) -> Result<LoadedModel> {
    if path.is_dir() {
        let artifact = read_model_file(&path.join(MODEL_FILE))?;
        let input = Manifest::load(path)
            .ok()
            .and_then(|m| serde_json::from_value::<TrainRecord>(m.config).ok())
            .map(|r| r.input);
        Ok(LoadedModel {
            label: artifact.name().to_string(),
            artifact,
            dir: Some(path.to_path_buf()),
            input,
        })
    } else if path.is_file() {
        let artifact = read_model_file(path)?;
        Ok(LoadedModel {
            label: artifact.name().to_string(),
            artifact,
            dir: None,
            input: None,
        })
    } else {
        bail!("--model {} does not exist", path.display())
    }
}

/// Load several models, suffixing repeated names with `#2`, `#3`, ...
pub fn load_models(paths: &[PathBuf]) -> Result<Vec<LoadedModel>> {
    let mut out: Vec<LoadedModel> = Vec::with_capacity(paths.len());
    for p in paths {
        let mut m = load_model(p)?;
        let base = m.label.clone();
        let mut k = 1;
        while out.iter().any(|o| o.label == m.label) {
            k += 1;
            m.label = format!("{base}#{k}");
        }
        out.push(m);
    }
    Ok(out)
}

/// The part of a training manifest needed to rebuild its inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub input: InputConfig,
    pub model: String,
    pub name: String,
    pub hyperparameters: serde_json::Value,
    pub reference_cap: usize,
}

/// Check that `ds` carries every feature of `model`.
pub fn require_features(model: &dyn PredictiveModel, ds: &Dataset) -> Result<Vec<String>> {
    let features = model.features();
    let missing: Vec<&String> = features.iter().filter(|f| !ds.names().contains(f)).collect();
    if !missing.is_empty() {
        bail!(
            "model `{}` needs columns missing from the data: {}",
            model.name(),
            missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(features)
}
