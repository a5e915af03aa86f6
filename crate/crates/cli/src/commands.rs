use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use creditlens_core::explain::global::write_profiles_csv;
use creditlens_core::explain::{
    breakdown, cp_profile, default_grid, pd_profile, permutation_importance, points_range_importance, shap_values,
    top_k, Attribution, BreakdownOrder, CpProfile, ImportanceConfig, ImportanceReport, PdConfig, PdProfile, Segment,
    ShapConfig,
};
use creditlens_core::metrics::{evaluate, write_scatter_csv};
use creditlens_core::models::{train_gbm, train_rcs_logistic, GbmConfig, RcsConfig};
use creditlens_core::scorecard::scorecard_attribution;
use creditlens_core::{
    build_scorecard, heloc, Dataset, ModelArtifact, OneMinusAuc, PerformanceReport, PredictiveModel, Record,
    ScorecardConfig, ScorecardModel, Value,
};
use serde::Serialize;
use serde_json::json;
use tracing::{info, warn};

use crate::args::{CompareArgs, EvaluateArgs, ExplainArgs, Level, ModelKind, SynthArgs, TrainArgs};
use crate::prep::{
    load_model, load_models, prepare, require_features, TrainRecord, MODEL_FILE, REFERENCE_FILE, SCHEMA_FILE,
};
use crate::run::RunDir;
use crate::NumericFailure;

/// Largest tolerated `|baseline + sum(delta) - prediction|` in emitted
/// attributions.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-8;

pub fn train(args: &TrainArgs) -> Result<PathBuf> {
    let prep = prepare(&args.input, None)?;
    let seed = prep.config.seed();
    let name = args.name.clone().unwrap_or_else(|| args.model.as_str().to_string());
    info!(
        rows = prep.full.n(),
        train = prep.train.n(),
        test = prep.test.n(),
        "data loaded"
    );
    let mut run = RunDir::create(&args.out)?;

    let (artifact, hyperparameters) = match args.model {
        ModelKind::Scorecard => {
            let mut cfg = ScorecardConfig::default();
            if let Some(m) = args.min_miv {
                cfg.min_miv = m;
            }
            let build = build_scorecard(&prep.train, &cfg)?;
            info!(selected = build.selection.selected.len(), "scorecard built");
            run.write_bytes("scorecard.json", build.card.to_json()?.as_bytes())?;
            run.write_json("bins.json", &build.schemes)?;
            run.write_json(
                "fit_log.json",
                &json!({
                    "selected": build.selection.selected,
                    "miv_trace": build.selection.trace,
                    "stopping_miv": build.selection.stopping_miv,
                    "fit": build.selection.fit,
                }),
            )?;
            let model = ScorecardModel::new(&name, build.card);
            (ModelArtifact::Scorecard(model), serde_json::to_value(&cfg)?)
        }
        ModelKind::Gbm => {
            let mut cfg = match &args.preset {
                Some(p) => GbmConfig::preset(p).ok_or_else(|| anyhow!("unknown preset `{p}`"))?,
                None => GbmConfig::default(),
            };
            cfg.n_trees = args.n_trees.unwrap_or(cfg.n_trees);
            cfg.interaction_depth = args.depth.unwrap_or(cfg.interaction_depth);
            cfg.learning_rate = args.eta.unwrap_or(cfg.learning_rate);
            cfg.min_leaf = args.min_leaf.unwrap_or(cfg.min_leaf);
            cfg.subsample = args.bag_fraction.unwrap_or(cfg.subsample);
            cfg.seed = seed;
            cfg.validate()?;
            let mut model = train_gbm(&prep.train, &cfg)?;
            model.name = name.clone();
            run.write_json(
                "fit_log.json",
                &json!({ "config": cfg, "train_loss": model.train_loss }),
            )?;
            (ModelArtifact::Gbm(model), serde_json::to_value(cfg)?)
        }
        ModelKind::Rcs => {
            let cfg = RcsConfig {
                spline: args.spline.clone(),
                ..RcsConfig::default()
            };
            let mut model = train_rcs_logistic(&prep.train, &cfg)?;
            model.name = name.clone();
            if !model.aliased.is_empty() {
                warn!(terms = ?model.aliased, "dropped aliased terms");
            }
            run.write_json(
                "fit_log.json",
                &json!({
                    "fit": model.fit,
                    "linear_fallback": model.linear_fallback,
                    "aliased": model.aliased,
                }),
            )?;
            (ModelArtifact::Rcs(model), serde_json::to_value(&cfg)?)
        }
    };

    let report = evaluate(&name, &artifact, &prep.train, &prep.test, &OneMinusAuc)?;
    info!(
        train_auc = report.train_performance,
        test_auc = report.test_performance,
        "model trained"
    );
    run.write_bytes(MODEL_FILE, artifact.to_json()?.as_bytes())?;
    run.write_json(SCHEMA_FILE, &prep.schema())?;
    let reference = prep.train.sample(args.reference_cap, seed)?;
    run.write_with(REFERENCE_FILE, |w| reference.write_csv(w))?;

    let record = TrainRecord {
        input: prep.config,
        model: args.model.as_str().to_string(),
        name,
        hyperparameters,
        reference_cap: args.reference_cap,
    };
    run.finish("train", seed, &record, args.frozen_clock)
}

#[derive(Serialize)]
struct EvaluateConfig<'a> {
    input: &'a crate::prep::InputConfig,
    models: Vec<String>,
}

fn model_paths(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

pub fn evaluate_models(args: &EvaluateArgs) -> Result<PathBuf> {
    let models = load_models(&args.model)?;
    let prep = prepare(&args.input, models[0].input.as_ref())?;
    let reports = models
        .iter()
        .map(|m| {
            require_features(m.model(), &prep.full)?;
            Ok(evaluate(&m.label, m.model(), &prep.train, &prep.test, &OneMinusAuc)?)
        })
        .collect::<Result<Vec<PerformanceReport>>>()?;
    let mut run = RunDir::create(&args.out)?;
    run.write_json("performance.json", &reports)?;
    run.write_with("scatter.csv", |w| write_scatter_csv(&reports, w))?;
    let cfg = EvaluateConfig {
        input: &prep.config,
        models: model_paths(&args.model),
    };
    run.finish("evaluate", prep.config.seed(), &cfg, args.frozen_clock)
}

#[derive(Serialize)]
struct ExplainConfig<'a> {
    input: &'a crate::prep::InputConfig,
    model: String,
    level: Level,
    obs: Option<usize>,
    top_k: usize,
    variables: &'a [String],
    repeats: usize,
    n_paths: usize,
    grid_points: usize,
    reference_cap: usize,
}

pub fn explain(args: &ExplainArgs) -> Result<PathBuf> {
    if args.level == Level::Local && args.obs.is_none() {
        bail!("--level local requires --obs");
    }
    let loaded = load_model(&args.model)?;
    let prep = prepare(&args.input, loaded.input.as_ref())?;
    let model = loaded.model();
    let features = require_features(model, &prep.full)?;
    for v in &args.variable {
        if !features.contains(v) {
            bail!("--variable `{v}` is not a feature of model `{}`", model.name());
        }
    }
    if let Some(obs) = args.obs.filter(|_| args.level == Level::Local) {
        if obs >= prep.full.n() {
            bail!("unknown observation id {obs}: the data has {} rows", prep.full.n());
        }
    }
    let seed = prep.config.seed();
    let mut run = RunDir::create(&args.out)?;
    let top = match args.level {
        Level::Global => {
            let k = args.top_k.unwrap_or(5);
            explain_global(
                &mut run,
                args,
                &loaded.artifact,
                &features,
                &prep.train,
                &prep.test,
                k,
                seed,
            )?;
            k
        }
        Level::Local => {
            let obs = args.obs.expect("checked above");
            let k = args.top_k.unwrap_or(3);
            explain_local(
                &mut run,
                args,
                &loaded.artifact,
                &features,
                &prep.full,
                &prep.train,
                obs,
                k,
                seed,
            )?;
            k
        }
    };
    let cfg = ExplainConfig {
        input: &prep.config,
        model: args.model.display().to_string(),
        level: args.level,
        obs: args.obs,
        top_k: top,
        variables: &args.variable,
        repeats: args.repeats,
        n_paths: args.n_paths,
        grid_points: args.grid_points,
        reference_cap: args.reference_cap,
    };
    run.finish("explain", seed, &cfg, args.frozen_clock)
}

#[allow(clippy::too_many_arguments)]
fn explain_global(
    run: &mut RunDir,
    args: &ExplainArgs,
    artifact: &ModelArtifact,
    features: &[String],
    train: &Dataset,
    test: &Dataset,
    k: usize,
    seed: u64,
) -> Result<()> {
    let model = artifact.as_model();
    let importance = permutation_importance(
        model,
        &test.select(features)?,
        &OneMinusAuc,
        &ImportanceConfig {
            repeats: args.repeats,
            seed,
            variables: None,
        },
    )?;
    run.write_json("importance.json", &importance)?;
    if let Some(card) = artifact.as_scorecard() {
        let ranges: Vec<_> = points_range_importance(&card.card)
            .into_iter()
            .map(|(variable, points_range)| json!({ "variable": variable, "points_range": points_range }))
            .collect();
        run.write_json("points_range.json", &ranges)?;
    }
    let variables = if args.variable.is_empty() {
        importance.top(k)
    } else {
        args.variable.clone()
    };
    let profiles = pd_profiles(model, train, &variables, args.grid_points, seed)?;
    run.write_json("pd_profiles.json", &profiles)?;
    run.write_with("pd_profiles.csv", |w| write_profiles_csv(&profiles, w))?;
    Ok(())
}

/// PD profiles over a fixed-seed training sample.
pub fn pd_profiles<M: PredictiveModel + ?Sized>(
    model: &M,
    train: &Dataset,
    variables: &[String],
    grid_points: usize,
    seed: u64,
) -> Result<Vec<PdProfile>> {
    let cfg = PdConfig {
        seed,
        grid_points,
        ..PdConfig::default()
    };
    let sample = match cfg.sample_cap {
        Some(cap) => train.sample(cap, seed)?,
        None => train.clone(),
    };
    variables
        .iter()
        .map(|v| {
            let grid = default_grid(train, v, grid_points)?;
            Ok(pd_profile(model, &sample, v, &grid)?)
        })
        .collect()
}

/// Reject attributions whose contributions do not add up to the prediction.
pub fn check_completeness(attr: &Attribution) -> Result<()> {
    let r = attr.residual();
    if r.is_nan() || r.abs() > COMPLETENESS_TOLERANCE {
        return Err(NumericFailure(format!("{} attribution misses the prediction by {r:e}", attr.method)).into());
    }
    Ok(())
}

/// Waterfall rows: baseline, segments, prediction, with running totals.
fn waterfall_csv(attributions: &[(&Attribution, Vec<Segment>)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "step", "label", "value", "delta", "cumulative"])?;
    for (attr, segments) in attributions {
        let method = attr.method.as_str();
        let mut cum = attr.baseline;
        w.write_record([method, "0", "baseline", "", "", &cum.to_string()])?;
        for (i, s) in segments.iter().enumerate() {
            cum += s.delta;
            let value = s.value.as_ref().map(Value::to_string).unwrap_or_default();
            w.write_record([
                method,
                &(i + 1).to_string(),
                &s.label,
                &value,
                &s.delta.to_string(),
                &cum.to_string(),
            ])?;
        }
        let last = (segments.len() + 1).to_string();
        w.write_record([method, &last, "prediction", "", "", &attr.prediction.to_string()])?;
    }
    Ok(w.into_inner()?)
}

fn cp_csv(profiles: &[CpProfile]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["observation", "variable", "z", "response"])?;
    for p in profiles {
        let obs = p.observation.clone().unwrap_or_default();
        for (z, r) in p.grid.iter().zip(&p.responses) {
            w.write_record([&obs, &p.variable, &z.to_string(), &r.to_string()])?;
        }
    }
    Ok(w.into_inner()?)
}

#[allow(clippy::too_many_arguments)]
fn explain_local(
    run: &mut RunDir,
    args: &ExplainArgs,
    artifact: &ModelArtifact,
    features: &[String],
    full: &Dataset,
    train: &Dataset,
    obs: usize,
    k: usize,
    seed: u64,
) -> Result<()> {
    let model = artifact.as_model();
    let x: Record = full.select(features)?.record(obs);
    let reference = train.select(features)?.sample(args.reference_cap, seed)?;
    let id = obs.to_string();

    let pd = model.predict_one(&x)?;
    let mut prediction = json!({
        "observation": id,
        "model": model.name(),
        "pd": pd,
        "applicant": x,
    });
    if let Some(card) = artifact.as_scorecard() {
        let score = card.card.score(&x)?;
        prediction["points"] = json!(score.total);
        prediction["per_variable_points"] = json!(score.per_variable);
        let deltas = scorecard_attribution(&card.card, &x, &card.card.mean_points())?;
        run.write_json(
            "scorecard_attribution.json",
            &json!({
                "observation": id,
                "scale": "points",
                "baseline": card.card.mean_total(),
                "total": score.total,
                "contributions": deltas
                    .iter()
                    .map(|(v, d)| json!({ "variable": v, "delta": d }))
                    .collect::<Vec<_>>(),
            }),
        )?;
    }
    run.write_json("prediction.json", &prediction)?;

    let mut bd = breakdown(model, &x, &reference, &BreakdownOrder::Greedy, None)?;
    bd.observation = Some(id.clone());
    let shap_cfg = ShapConfig {
        n_paths: args.n_paths,
        seed,
        exhaustive: false,
    };
    let mut shap = shap_values(model, &x, &reference, &shap_cfg, None)?;
    shap.observation = Some(id.clone());
    check_completeness(&bd)?;
    check_completeness(&shap)?;
    run.write_json("breakdown.json", &bd)?;
    run.write_json("shap.json", &shap)?;
    let wf = [(&bd, top_k(&bd, k)), (&shap, top_k(&shap, k))];
    run.write_bytes("waterfall.csv", &waterfall_csv(&wf)?)?;

    let variables: Vec<String> = if args.variable.is_empty() {
        shap.contributions.iter().take(k).map(|c| c.variable.clone()).collect()
    } else {
        args.variable.clone()
    };
    let profiles = variables
        .iter()
        .map(|v| {
            let grid = default_grid(train, v, args.grid_points)?;
            let mut p = cp_profile(model, &x, v, &grid)?;
            p.observation = Some(id.clone());
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    run.write_json("cp_profiles.json", &profiles)?;
    run.write_bytes("cp_profiles.csv", &cp_csv(&profiles)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overlap {
    pub a: String,
    pub b: String,
    pub k: usize,
    pub top_a: Vec<String>,
    pub top_b: Vec<String>,
    pub shared: Vec<String>,
    /// `|A ∩ B| / k`.
    pub overlap: f64,
}

pub fn top_k_overlap(a: (&str, &ImportanceReport), b: (&str, &ImportanceReport), k: usize) -> Overlap {
    let top_a = a.1.top(k);
    let top_b = b.1.top(k);
    let shared: Vec<String> = top_a.iter().filter(|v| top_b.contains(v)).cloned().collect();
    Overlap {
        a: a.0.to_string(),
        b: b.0.to_string(),
        k,
        overlap: if k == 0 { 0.0 } else { shared.len() as f64 / k as f64 },
        top_a,
        top_b,
        shared,
    }
}

#[derive(Serialize)]
struct CompareConfig<'a> {
    input: &'a crate::prep::InputConfig,
    models: Vec<String>,
    top_k: usize,
    variables: Vec<String>,
    repeats: usize,
    grid_points: usize,
}

#[derive(Serialize)]
struct Overlay {
    variable: String,
    grid: Vec<Value>,
    profiles: BTreeMap<String, Vec<f64>>,
}

pub fn compare(args: &CompareArgs) -> Result<PathBuf> {
    if args.model.len() < 2 {
        bail!("compare needs at least two --model values");
    }
    let models = load_models(&args.model)?;
    let prep = prepare(&args.input, models[0].input.as_ref())?;
    let seed = prep.config.seed();
    let feature_sets = models
        .iter()
        .map(|m| require_features(m.model(), &prep.full))
        .collect::<Result<Vec<_>>>()?;
    let shared: Vec<String> = feature_sets[0]
        .iter()
        .filter(|f| feature_sets.iter().all(|s| s.contains(f)))
        .cloned()
        .collect();
    if shared.is_empty() {
        warn!("the models share no variables; only performance is compared");
    } else if feature_sets.iter().any(|s| s.len() != shared.len()) {
        warn!(
            shared = shared.len(),
            "feature sets differ; comparing on the shared variables"
        );
    }

    let mut run = RunDir::create(&args.out)?;
    let reports = models
        .iter()
        .map(|m| Ok(evaluate(&m.label, m.model(), &prep.train, &prep.test, &OneMinusAuc)?))
        .collect::<Result<Vec<PerformanceReport>>>()?;
    run.write_json("performance.json", &reports)?;
    run.write_with("scatter.csv", |w| write_scatter_csv(&reports, w))?;

    let k = args.top_k.min(shared.len());
    let mut variables = Vec::new();
    if !shared.is_empty() {
        let fi_cfg = ImportanceConfig {
            repeats: args.repeats,
            seed,
            variables: Some(shared.clone()),
        };
        let importance = models
            .iter()
            .map(|m| {
                Ok((
                    m.label.clone(),
                    permutation_importance(m.model(), &prep.test, &OneMinusAuc, &fi_cfg)?,
                ))
            })
            .collect::<Result<Vec<(String, ImportanceReport)>>>()?;
        let mut overlaps = Vec::new();
        for i in 0..importance.len() {
            for j in i + 1..importance.len() {
                let (a, b) = (&importance[i], &importance[j]);
                overlaps.push(top_k_overlap((&a.0, &a.1), (&b.0, &b.1), k));
            }
        }
        let by_model: BTreeMap<&str, &ImportanceReport> = importance.iter().map(|(l, r)| (l.as_str(), r)).collect();
        run.write_json("importance.json", &by_model)?;
        run.write_json("overlap.json", &overlaps)?;

        variables = if args.variable.is_empty() {
            importance[0].1.top(k)
        } else {
            args.variable.clone()
        };
        for v in &variables {
            if !shared.contains(v) {
                bail!("--variable `{v}` is not used by every model");
            }
        }
        let per_model = models
            .iter()
            .map(|m| pd_profiles(m.model(), &prep.train, &variables, args.grid_points, seed))
            .collect::<Result<Vec<_>>>()?;
        let overlays: Vec<Overlay> = variables
            .iter()
            .enumerate()
            .map(|(i, v)| Overlay {
                variable: v.clone(),
                grid: per_model[0][i].grid.clone(),
                profiles: models
                    .iter()
                    .zip(&per_model)
                    .map(|(m, p)| (m.label.clone(), p[i].values.clone()))
                    .collect(),
            })
            .collect();
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(["variable", "z", "model", "value"])?;
        for o in &overlays {
            for (model, values) in &o.profiles {
                for (z, val) in o.grid.iter().zip(values) {
                    csv.write_record([&o.variable, &z.to_string(), model, &val.to_string()])?;
                }
            }
        }
        run.write_json("pd_overlay.json", &overlays)?;
        run.write_bytes("pd_overlay.csv", &csv.into_inner()?)?;
    }

    let cfg = CompareConfig {
        input: &prep.config,
        models: model_paths(&args.model),
        top_k: k,
        variables,
        repeats: args.repeats,
        grid_points: args.grid_points,
    };
    run.finish("compare", seed, &cfg, args.frozen_clock)
}

pub fn synth(args: &SynthArgs) -> Result<PathBuf> {
    let ds = heloc::generate(args.rows, args.seed)?;
    let mut run = RunDir::create(&args.out)?;
    run.write_with("heloc.csv", |w| ds.write_csv(w))?;
    run.write_json(SCHEMA_FILE, &heloc::schema())?;
    let cfg = json!({ "rows": args.rows, "seed": args.seed });
    run.finish("synth", args.seed, &cfg, args.frozen_clock)
}
