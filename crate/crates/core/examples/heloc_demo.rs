//! Build a scorecard and a boosted challenger on synthetic HELOC data and
//! print their train/test AUC and the top permutation importances.

use std::time::Instant;

use creditlens_core::data::{derive_special_dummies, split, SplitConfig};
use creditlens_core::explain::{permutation_importance, ImportanceConfig};
use creditlens_core::metrics::{evaluate, OneMinusAuc};
use creditlens_core::models::{train_gbm, GbmConfig};
use creditlens_core::{build_scorecard, heloc, ScorecardConfig, ScorecardModel};

fn main() -> creditlens_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let t = Instant::now();
    let ds = derive_special_dummies(&heloc::generate(heloc::HELOC_ROWS, seed)?, 0.0)?;
    let (train, test) = split(&ds, &SplitConfig::default())?;
    println!("rows {} / {}, columns {}", train.n(), test.n(), ds.names().len());

    let build = build_scorecard(&train, &ScorecardConfig::default())?;
    println!(
        "selected {}: {:?}",
        build.selection.selected.len(),
        build.selection.selected
    );
    let card = ScorecardModel::new("scorecard", build.card.clone());
    let r = evaluate("scorecard", &card, &train, &test, &OneMinusAuc)?;
    println!(
        "scorecard {:?} {:?} gap {:.4}",
        r.train_performance, r.test_performance, r.overfitting_gap
    );
    println!("  intercept {}", build.card.intercept_points);

    let mut gbm = train_gbm(&train, &GbmConfig::default())?;
    gbm.name = "gbm".into();
    let r = evaluate("gbm", &gbm, &train, &test, &OneMinusAuc)?;
    println!(
        "gbm {:?} {:?} gap {:.4}",
        r.train_performance, r.test_performance, r.overfitting_gap
    );

    let heavy = train_gbm(
        &train,
        &GbmConfig {
            n_trees: 300,
            interaction_depth: 8,
            learning_rate: 0.3,
            min_leaf: 1,
            ..GbmConfig::default()
        },
    )?;
    let r = evaluate("heavy", &heavy, &train, &test, &OneMinusAuc)?;
    println!(
        "heavy {:?} {:?} gap {:.4}",
        r.train_performance, r.test_performance, r.overfitting_gap
    );

    let imp = permutation_importance(&gbm, &test, &OneMinusAuc, &ImportanceConfig::default())?;
    for e in imp.entries.iter().take(5) {
        println!("  {:40} {:.4}", e.variable, e.importance);
    }
    println!("elapsed {:?}", t.elapsed());
    Ok(())
}
