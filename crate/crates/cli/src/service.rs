//! HTTP scoring and explanation service.
//!
//! Models are loaded once and never modified; global reports are computed
//! at load time, local explanations per request. Every float in a response
//! body is rounded to 10 significant digits.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use creditlens_core::data::{dummy_name, load_csv};
use creditlens_core::explain::{
    breakdown, cp_profile, default_grid, pd_profile, permutation_importance, points_range_importance, shap_values,
    top_k, Attribution, BreakdownOrder, ImportanceConfig, ImportanceReport, PdProfile, ShapConfig,
};
use creditlens_core::{
    ColumnKind, ColumnSpec, Dataset, Error as CoreError, ModelArtifact, OneMinusAuc, PredictiveModel, Record, Row,
    Schema, Value,
};
use serde::Deserialize;
use serde_json::{json, Map, Value as JsonValue};
use tracing::{info, warn};

use crate::commands::COMPLETENESS_TOLERANCE;
use crate::prep::{read_model_file, MODEL_FILE, REFERENCE_FILE, SCHEMA_FILE};

/// Grid size of `/whatif` when the request has none.
pub const DEFAULT_GRID_POINTS: usize = 101;

pub struct ServedModel {
    pub name: String,
    pub artifact: ModelArtifact,
    /// Fields an applicant must supply: the model's features, with derived
    /// indicators replaced by their source columns.
    pub inputs: Vec<String>,
    /// Indicator columns recomputed from a source column on every call.
    pub indicators: Vec<(String, ColumnSpec)>,
    /// Column declarations used to validate applicants.
    pub schema: Option<Schema>,
    /// Attribution reference and grid source, restricted to the inputs.
    pub reference: Option<Dataset>,
    pub importance: Option<ImportanceReport>,
    pub pdp: BTreeMap<String, PdProfile>,
}

impl ServedModel {
    /// Wrap a model and precompute its global reports.
    pub fn new(
        name: impl Into<String>,
        artifact: ModelArtifact,
        schema: Option<Schema>,
        reference: Option<Dataset>,
    ) -> anyhow::Result<Self> {
        let name = name.into();
        let features = artifact.as_model().features();
        let mut indicators = Vec::new();
        let mut inputs: Vec<String> = Vec::new();
        for f in &features {
            let source = schema.as_ref().and_then(|s| {
                s.columns
                    .iter()
                    .find(|c| !c.special_codes.is_empty() && dummy_name(&c.name) == *f)
            });
            let input = match source {
                Some(src) => {
                    indicators.push((f.clone(), src.clone()));
                    src.name.clone()
                }
                None => f.clone(),
            };
            if !inputs.contains(&input) {
                inputs.push(input);
            }
        }
        let mut m = ServedModel {
            name,
            artifact,
            inputs,
            indicators,
            schema,
            reference: None,
            importance: None,
            pdp: BTreeMap::new(),
        };
        if let Some(r) = reference {
            let r = r.select(&m.inputs)?;
            match permutation_importance(&m, &r, &OneMinusAuc, &ImportanceConfig::default()) {
                Ok(fi) => m.importance = Some(fi),
                Err(e) => warn!(model = %m.name, error = %e, "no importance report"),
            }
            for v in &m.inputs {
                let grid = default_grid(&r, v, DEFAULT_GRID_POINTS)?;
                let p = pd_profile(&m, &r, v, &grid)?;
                m.pdp.insert(v.clone(), p);
            }
            m.reference = Some(r);
        }
        Ok(m)
    }

    fn kind_of(&self, variable: &str) -> Option<ColumnKind> {
        self.schema
            .as_ref()?
            .columns
            .iter()
            .find(|c| c.name == variable)
            .map(|c| c.kind)
    }

    /// `x` plus its derived indicators.
    pub fn complete(&self, x: &Record) -> Record {
        let mut out = x.clone();
        for (dummy, src) in &self.indicators {
            if let Some(v) = x.get(&src.name) {
                out.insert(dummy.clone(), Value::Num(f64::from(u8::from(src.is_special(v)))));
            }
        }
        out
    }
}

impl PredictiveModel for ServedModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn features(&self) -> Vec<String> {
        self.inputs.clone()
    }

    fn predict(&self, names: &[String], rows: &[Row]) -> creditlens_core::Result<Vec<f64>> {
        if self.indicators.is_empty() {
            return self.artifact.predict(names, rows);
        }
        let mut names = names.to_vec();
        let mut slots = Vec::with_capacity(self.indicators.len());
        for (dummy, src) in &self.indicators {
            let Some(from) = names.iter().position(|n| *n == src.name) else {
                continue;
            };
            let to = match names.iter().position(|n| n == dummy) {
                Some(j) => Some(j),
                None => {
                    names.push(dummy.clone());
                    None
                }
            };
            slots.push((from, to, src));
        }
        let rows: Vec<Row> = rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                for &(from, to, src) in &slots {
                    let v = Value::Num(f64::from(u8::from(src.is_special(&r[from]))));
                    match to {
                        Some(j) => r[j] = v,
                        None => r.push(v),
                    }
                }
                r
            })
            .collect();
        self.artifact.predict(&names, &rows)
    }
}

#[derive(Default)]
pub struct ServiceState {
    pub models: BTreeMap<String, ServedModel>,
}

impl ServiceState {
    pub fn insert(&mut self, model: ServedModel) -> anyhow::Result<()> {
        if self.models.contains_key(&model.name) {
            bail!("two models named `{}`", model.name);
        }
        self.models.insert(model.name.clone(), model);
        Ok(())
    }

    /// Every run directory (holding `model.json`) and every `*.json` model
    /// file directly inside `dir`. Run directories also provide the schema
    /// and reference sample.
    pub fn load_dir(dir: &Path) -> anyhow::Result<Self> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .with_context(|| format!("reading model directory {}", dir.display()))?
            .collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        let mut state = ServiceState::default();
        for e in entries {
            let path = e.path();
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            if path.is_dir() && path.join(MODEL_FILE).is_file() {
                let artifact = read_model_file(&path.join(MODEL_FILE))?;
                let schema_path = path.join(SCHEMA_FILE);
                let schema = schema_path
                    .is_file()
                    .then(|| Schema::from_json_file(&schema_path))
                    .transpose()?;
                let reference = match (&schema, path.join(REFERENCE_FILE)) {
                    (Some(s), r) if r.is_file() => Some(load_csv(&r, &s.columns, &s.target)?),
                    _ => None,
                };
                info!(model = %stem, kind = artifact.kind(), "loading run directory");
                state.insert(ServedModel::new(stem, artifact, schema, reference)?)?;
            } else if path.is_file() && path.extension().is_some_and(|x| x == "json") {
                let artifact = read_model_file(&path)?;
                info!(model = %stem, kind = artifact.kind(), "loading model file");
                state.insert(ServedModel::new(stem, artifact, None, None)?)?;
            }
        }
        if state.models.is_empty() {
            bail!("no models found in {}", dir.display());
        }
        Ok(state)
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/models", get(list_models))
        .route("/models/{name}/score", post(score))
        .route("/models/{name}/explain/local", post(explain_local))
        .route("/models/{name}/whatif", post(whatif))
        .route("/models/{name}/global", get(global))
        .with_state(state)
}

/// Round every non-integer number to 10 significant digits.
pub fn round_numbers(v: JsonValue) -> JsonValue {
    match v {
        JsonValue::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            let r: f64 = format!("{x:.9e}").parse().unwrap_or(x);
            serde_json::Number::from_f64(r)
                .map(JsonValue::Number)
                .unwrap_or(JsonValue::Null)
        }
        JsonValue::Array(a) => JsonValue::Array(a.into_iter().map(round_numbers).collect()),
        JsonValue::Object(o) => JsonValue::Object(o.into_iter().map(|(k, v)| (k, round_numbers(v))).collect()),
        other => other,
    }
}

fn reply(body: JsonValue) -> Response {
    (StatusCode::OK, Json(round_numbers(body))).into_response()
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: JsonValue,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn missing(fields: Vec<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": format!("missing fields: {}", fields.join(", ")), "missing": fields }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = if e.is_numeric() {
            StatusCode::INTERNAL_SERVER_ERROR
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult = Result<Response, ApiError>;

fn lookup<'a>(state: &'a ServiceState, name: &str) -> Result<&'a ServedModel, ApiError> {
    state
        .models
        .get(name)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown model `{name}`")))
}

fn reference(m: &ServedModel) -> Result<&Dataset, ApiError> {
    m.reference.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            format!("model `{}` has no reference sample", m.name),
        )
    })
}

fn parse_object(body: &Bytes) -> Result<Map<String, JsonValue>, ApiError> {
    match serde_json::from_slice::<JsonValue>(body) {
        Ok(JsonValue::Object(o)) => Ok(o),
        Ok(_) => Err(ApiError::bad_request("request body must be a JSON object")),
        Err(e) => Err(ApiError::bad_request(format!("invalid JSON: {e}"))),
    }
}

fn to_value(m: &ServedModel, variable: &str, v: &JsonValue) -> Option<Value> {
    let kind = m.kind_of(variable);
    match v {
        JsonValue::Number(n) => Some(Value::Num(n.as_f64()?)),
        JsonValue::String(s) if kind == Some(ColumnKind::Numeric) => s.trim().parse().ok().map(Value::Num),
        JsonValue::String(s) => Some(Value::Cat(s.clone())),
        _ => None,
    }
}

/// The applicant under `applicant`, or the whole body when `flat` is set
/// and there is no such key. Only the model's inputs are kept.
fn applicant(m: &ServedModel, body: &Map<String, JsonValue>, flat: bool) -> Result<Record, ApiError> {
    let obj = match body.get("applicant") {
        Some(JsonValue::Object(o)) => o,
        Some(_) => return Err(ApiError::bad_request("`applicant` must be an object")),
        None if flat => body,
        None => return Err(ApiError::missing(vec!["applicant".into()])),
    };
    let mut missing = Vec::new();
    let mut invalid = Vec::new();
    let mut record = Record::new();
    for f in &m.inputs {
        match obj.get(f) {
            None | Some(JsonValue::Null) => missing.push(f.clone()),
            Some(v) => match to_value(m, f, v) {
                Some(v) => {
                    record.insert(f.clone(), v);
                }
                None => invalid.push(f.clone()),
            },
        }
    }
    if !missing.is_empty() {
        let mut err = ApiError::missing(missing);
        if !invalid.is_empty() {
            err.body["invalid"] = json!(invalid);
        }
        return Err(err);
    }
    if !invalid.is_empty() {
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": format!("invalid values for: {}", invalid.join(", ")), "invalid": invalid }),
        });
    }
    Ok(record)
}

async fn healthz(State(state): State<Arc<ServiceState>>) -> Response {
    reply(json!({ "status": "ok", "models": state.models.len() }))
}

async fn list_models(State(state): State<Arc<ServiceState>>) -> Response {
    let models: Vec<JsonValue> = state
        .models
        .values()
        .map(|m| {
            json!({
                "name": m.name,
                "kind": m.artifact.kind(),
                "inputs": m.inputs,
                "has_reference": m.reference.is_some(),
            })
        })
        .collect();
    reply(json!({ "models": models }))
}

async fn score(State(state): State<Arc<ServiceState>>, UrlPath(name): UrlPath<String>, body: Bytes) -> ApiResult {
    let m = lookup(&state, &name)?;
    let body = parse_object(&body)?;
    let x = applicant(m, &body, true)?;
    let pd = m.predict_one(&x)?;
    let mut out = json!({ "model": m.name, "pd": pd });
    if let Some(card) = m.artifact.as_scorecard() {
        let s = card.card.score(&m.complete(&x))?;
        out["points"] = json!(s.total);
        out["per_variable_points"] = s
            .per_variable
            .iter()
            .map(|(v, p)| json!({ "variable": v, "points": p }))
            .collect();
    }
    Ok(reply(out))
}

#[derive(Deserialize)]
struct ExplainOptions {
    method: String,
    #[serde(default)]
    top_k: Option<usize>,
    #[serde(default)]
    n_paths: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    /// Explicit breakdown order.
    #[serde(default)]
    order: Option<Vec<String>>,
}

fn attribution_body(m: &ServedModel, attr: &Attribution, k: Option<usize>) -> JsonValue {
    let mut out = json!({
        "model": m.name,
        "method": attr.method,
        "scale": attr.scale,
        "baseline": attr.baseline,
        "prediction": attr.prediction,
        "contributions": attr.contributions,
        "order": attr.order,
        "residual": attr.residual(),
    });
    if let Some(n) = attr.n_paths {
        out["n_paths"] = json!(n);
    }
    if let Some(k) = k {
        out["top_k"] = json!(k);
        out["segments"] = json!(top_k(attr, k));
    }
    out
}

async fn explain_local(
    State(state): State<Arc<ServiceState>>,
    UrlPath(name): UrlPath<String>,
    body: Bytes,
) -> ApiResult {
    let m = lookup(&state, &name)?;
    let body = parse_object(&body)?;
    if !body.contains_key("method") {
        return Err(ApiError::missing(vec!["method".into()]));
    }
    let opts: ExplainOptions = serde_json::from_value(JsonValue::Object(body.clone()))
        .map_err(|e| ApiError::bad_request(format!("invalid explain request: {e}")))?;
    let x = applicant(m, &body, false)?;
    reference(m)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let m = lookup(&state, &name)?;
        let r = reference(m)?;
        let attr = match opts.method.as_str() {
            "breakdown" => {
                let order = match opts.order {
                    Some(o) => BreakdownOrder::Explicit(o),
                    None => BreakdownOrder::Greedy,
                };
                breakdown(m, &x, r, &order, None)?
            }
            "shap" => {
                let defaults = ShapConfig::default();
                let cfg = ShapConfig {
                    n_paths: opts.n_paths.unwrap_or(defaults.n_paths),
                    seed: opts.seed.unwrap_or(defaults.seed),
                    exhaustive: false,
                };
                shap_values(m, &x, r, &cfg, None)?
            }
            other => {
                return Err(ApiError::bad_request(format!(
                    "unknown method `{other}`; expected breakdown or shap"
                )))
            }
        };
        let residual = attr.residual();
        if residual.is_nan() || residual.abs() > COMPLETENESS_TOLERANCE {
            return Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                format!("attribution misses the prediction by {residual:e}"),
            ));
        }
        Ok(reply(attribution_body(m, &attr, opts.top_k)))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn whatif(State(state): State<Arc<ServiceState>>, UrlPath(name): UrlPath<String>, body: Bytes) -> ApiResult {
    let m = lookup(&state, &name)?;
    let body = parse_object(&body)?;
    let variable = match body.get("variable") {
        Some(JsonValue::String(v)) => v.clone(),
        Some(_) => return Err(ApiError::bad_request("`variable` must be a string")),
        None => return Err(ApiError::missing(vec!["variable".into()])),
    };
    if !m.inputs.contains(&variable) {
        return Err(ApiError::bad_request(format!(
            "`{variable}` is not a feature of model `{}`",
            m.name
        )));
    }
    let x = applicant(m, &body, false)?;
    let grid = match body.get("grid") {
        None | Some(JsonValue::Null) => default_grid(reference(m)?, &variable, DEFAULT_GRID_POINTS)?,
        Some(JsonValue::Array(a)) if !a.is_empty() => a
            .iter()
            .map(|v| to_value(m, &variable, v))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ApiError::bad_request("`grid` holds invalid values"))?,
        Some(_) => return Err(ApiError::bad_request("`grid` must be a non-empty array")),
    };
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let m = lookup(&state, &name)?;
        let p = cp_profile(m, &x, &variable, &grid)?;
        Ok(reply(json!({
            "model": m.name,
            "variable": p.variable,
            "scale": p.scale,
            "grid": p.grid,
            "responses": p.responses,
            "anchor": { "value": p.anchor.0, "response": p.anchor.1 },
        })))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Deserialize)]
struct GlobalQuery {
    kind: Option<String>,
    variable: Option<String>,
}

async fn global(
    State(state): State<Arc<ServiceState>>,
    UrlPath(name): UrlPath<String>,
    Query(q): Query<GlobalQuery>,
) -> ApiResult {
    let m = lookup(&state, &name)?;
    let kind = q.kind.ok_or_else(|| ApiError::missing(vec!["kind".into()]))?;
    match kind.as_str() {
        "importance" => {
            reference(m)?;
            let fi = m.importance.as_ref().ok_or_else(|| {
                ApiError::new(
                    StatusCode::CONFLICT,
                    "importance is unavailable for this reference sample",
                )
            })?;
            let mut out = json!({
                "model": m.name,
                "kind": "importance",
                "measure": fi.measure,
                "baseline_loss": fi.baseline_loss,
                "repeats": fi.repeats,
                "seed": fi.seed,
                "entries": fi.entries,
            });
            if let Some(card) = m.artifact.as_scorecard() {
                out["points_range"] = points_range_importance(&card.card)
                    .into_iter()
                    .map(|(v, r)| json!({ "variable": v, "points_range": r }))
                    .collect();
            }
            Ok(reply(out))
        }
        "pdp" => {
            let variable = q.variable.ok_or_else(|| ApiError::missing(vec!["variable".into()]))?;
            reference(m)?;
            let p = m.pdp.get(&variable).ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    format!("no profile for `{variable}` in model `{}`", m.name),
                )
            })?;
            Ok(reply(json!({
                "model": m.name,
                "kind": "pdp",
                "variable": p.variable,
                "scale": p.scale,
                "grid": p.grid,
                "values": p.values,
                "n_rows": p.n_rows,
            })))
        }
        other => Err(ApiError::bad_request(format!(
            "unknown kind `{other}`; expected importance or pdp"
        ))),
    }
}

/// Bind and serve until the process is stopped.
pub async fn serve(state: ServiceState, host: &str, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    info!(address = %listener.local_addr()?, models = state.models.len(), "listening");
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_ten_digits() {
        let v = round_numbers(json!({ "a": [0.123456789012345, 7], "b": { "c": 2.0 / 3.0 } }));
        assert_eq!(v["a"][0], json!(0.123456789));
        assert_eq!(v["a"][1], json!(7));
        assert_eq!(v["b"]["c"], json!(0.6666666667));
    }
}
