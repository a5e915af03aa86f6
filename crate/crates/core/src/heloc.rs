//! Synthetic home-equity credit data with the column layout of the public
//! FICO HELOC file (23 bureau covariates, special codes -9/-8/-7).
//!
//! Rows are driven by two latent factors, creditworthiness and credit-file
//! age. The default logit is a fixed combination of the generated columns,
//! with the intercept calibrated so the bad rate is about 52%.
//! `ExternalRiskEstimate` is the dominant predictor; a few columns are
//! redundant copies of others and a few carry no signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::binning::Monotone;
use crate::data::{ColumnSpec, Dataset, Row, Schema, Value};
use crate::error::Result;
use crate::logistic::sigmoid;

pub const TARGET: &str = "RiskPerformance";
/// Size of the public file.
pub const HELOC_ROWS: usize = 10_459;
pub const SPECIAL_CODES: [f64; 3] = [-9.0, -8.0, -7.0];
pub const DEFAULT_RATE: f64 = 0.52;
/// Multiplier on the default logit; sets the achievable AUC.
const SIGNAL: f64 = 0.6;

/// The 23 covariates in file order with the direction of their default
/// rate.
pub const COLUMNS: [(&str, Monotone); 23] = [
    ("ExternalRiskEstimate", Monotone::Decreasing),
    ("MSinceOldestTradeOpen", Monotone::Decreasing),
    ("MSinceMostRecentTradeOpen", Monotone::None),
    ("AverageMInFile", Monotone::Decreasing),
    ("NumSatisfactoryTrades", Monotone::Decreasing),
    ("NumTrades60Ever2DerogPubRec", Monotone::Increasing),
    ("NumTrades90Ever2DerogPubRec", Monotone::Increasing),
    ("PercentTradesNeverDelq", Monotone::Decreasing),
    ("MSinceMostRecentDelq", Monotone::Decreasing),
    ("MaxDelq2PublicRecLast12M", Monotone::Decreasing),
    ("MaxDelqEver", Monotone::Decreasing),
    ("NumTotalTrades", Monotone::None),
    ("NumTradesOpeninLast12M", Monotone::None),
    ("PercentInstallTrades", Monotone::Increasing),
    ("MSinceMostRecentInqexcl7days", Monotone::Decreasing),
    ("NumInqLast6M", Monotone::Increasing),
    ("NumInqLast6Mexcl7days", Monotone::Increasing),
    ("NetFractionRevolvingBurden", Monotone::Increasing),
    ("NetFractionInstallBurden", Monotone::None),
    ("NumRevolvingTradesWBalance", Monotone::None),
    ("NumInstallTradesWBalance", Monotone::None),
    ("NumBank2NatlTradesWHighUtilization", Monotone::Increasing),
    ("PercentTradesWBalance", Monotone::Increasing),
];

/// Numeric columns with special codes {-9, -8, -7} and monotone
/// constraints; target `RiskPerformance` (1 = bad).
pub fn schema() -> Schema {
    Schema {
        target: TARGET.to_string(),
        columns: COLUMNS
            .iter()
            .map(|&(name, m)| {
                ColumnSpec::numeric(name)
                    .with_special_codes(&SPECIAL_CODES)
                    .with_monotone(m)
            })
            .collect(),
    }
}

struct Draw<'a> {
    rng: &'a mut ChaCha8Rng,
    normal: Normal<f64>,
}

impl Draw<'_> {
    fn n(&mut self) -> f64 {
        self.normal.sample(self.rng)
    }

    fn u(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn poisson(&mut self, lambda: f64) -> f64 {
        Poisson::new(lambda.max(1e-9)).map_or(0.0, |p| p.sample(self.rng))
    }

    fn chance(&mut self, p: f64) -> bool {
        self.u() < p
    }
}

fn clamp_round(v: f64, lo: f64, hi: f64) -> f64 {
    v.round().clamp(lo, hi)
}

/// One applicant's covariates (in [`COLUMNS`] order) and default logit
/// without intercept.
fn applicant(d: &mut Draw<'_>) -> ([f64; 23], f64) {
    let z = d.n(); // creditworthiness
    let a = 0.4 * z + (1.0 - 0.16f64).sqrt() * d.n(); // file age
    let no_record = d.chance(0.03);

    let ere = if no_record {
        -9.0
    } else {
        clamp_round(72.0 + 8.0 * z + 3.0 * d.n(), 33.0, 94.0)
    };
    let oldest = if d.chance(0.025) {
        -8.0
    } else {
        clamp_round(200.0 + 90.0 * a + 20.0 * d.n(), 2.0, 800.0)
    };
    let recent_open = clamp_round(d.poisson(8.0) + 2.0 * d.n().abs(), 0.0, 380.0);
    let avg_file = if no_record {
        -9.0
    } else {
        clamp_round(78.0 + 28.0 * a + 8.0 * d.n(), 4.0, 380.0)
    };
    let satisfactory = clamp_round(20.0 + 9.0 * a + 2.0 * z + 3.0 * d.n(), 0.0, 80.0);
    let derog60 = d.poisson((-1.3 - 0.9 * z).exp());
    let derog90 = (0..derog60 as usize).filter(|_| d.chance(0.7)).count() as f64;
    let never_delq = clamp_round(93.0 + 6.0 * z + 5.0 * d.n(), 0.0, 100.0);
    let has_delq = d.chance(sigmoid(-0.4 - 1.1 * z));
    let since_delq = if !has_delq {
        -7.0
    } else if d.chance(0.04) {
        -8.0
    } else {
        clamp_round(20.0 + 12.0 * z + 18.0 * d.n(), 0.0, 83.0)
    };
    let maxdelq12 = if has_delq {
        clamp_round(4.5 + 1.8 * z + 1.2 * d.n(), 0.0, 7.0)
    } else {
        clamp_round(6.5 + 0.8 * d.n(), 0.0, 7.0)
    };
    let maxdelq_ever = clamp_round(maxdelq12 + 0.5 + 0.8 * d.n(), 2.0, 8.0);
    let total = satisfactory + derog60 + d.poisson(2.0);
    let opened12 = d.poisson(1.8);
    let pct_install = clamp_round(33.0 - 3.0 * z + 15.0 * d.n(), 0.0, 100.0);
    let inq_lambda = (0.2 - 0.5 * z).exp();
    let inq6 = d.poisson(inq_lambda);
    let inq6_excl = (inq6 - d.poisson(0.2)).max(0.0);
    let since_inq = if d.chance(0.05) {
        -8.0
    } else if inq6 == 0.0 && d.chance(0.3) {
        -7.0
    } else {
        clamp_round(d.poisson(1.0 + 2.0 * (0.6 * z).exp()) + 0.5 * d.n(), 0.0, 24.0)
    };
    let revolving_burden = if d.chance(0.02) {
        -8.0
    } else {
        clamp_round(35.0 - 18.0 * z + 15.0 * d.n(), 0.0, 150.0)
    };
    let install_burden = if d.chance(0.3) {
        -8.0
    } else {
        clamp_round(66.0 + 20.0 * d.n(), 0.0, 180.0)
    };
    let revolving_bal = if d.chance(0.015) {
        -8.0
    } else {
        clamp_round(4.0 + 2.0 * a.max(-1.5) + 2.0 * d.n() - 0.6 * z, 0.0, 30.0)
    };
    let install_bal = if d.chance(0.08) {
        -8.0
    } else {
        clamp_round(2.5 + 1.5 * d.n(), 1.0, 20.0)
    };
    let high_util = if d.chance(0.06) {
        -8.0
    } else {
        d.poisson((0.1 - 0.6 * z).exp())
    };
    let pct_bal = if d.chance(0.01) {
        -8.0
    } else {
        clamp_round(66.0 - 10.0 * z + 18.0 * d.n(), 0.0, 100.0)
    };

    let x = [
        ere,
        oldest,
        recent_open,
        avg_file,
        satisfactory,
        derog60,
        derog90,
        never_delq,
        since_delq,
        maxdelq12,
        maxdelq_ever,
        total,
        opened12,
        pct_install,
        since_inq,
        inq6,
        inq6_excl,
        revolving_burden,
        install_burden,
        revolving_bal,
        install_bal,
        high_util,
        pct_bal,
    ];

    let regular = |v: f64, centre: f64, missing: f64| if v < 0.0 { missing } else { v - centre };
    let mut eta = 0.0;
    eta += if no_record { 0.3 } else { -0.09 * (ere - 72.0) };
    eta += -0.004 * regular(oldest, 200.0, -100.0);
    eta += -0.008 * regular(avg_file, 78.0, 0.0);
    eta += -0.02 * (satisfactory - 20.0);
    eta += 0.15 * derog60;
    eta += -0.025 * (never_delq - 93.0);
    eta += match since_delq {
        -7.0 => -0.25,
        -8.0 => 0.0,
        v => -0.012 * (v - 20.0),
    };
    eta += -0.12 * (maxdelq12 - 6.0);
    eta += 0.012 * (pct_install - 33.0);
    eta += match since_inq {
        -8.0 => -1.3,
        -7.0 => -0.2,
        v => -0.06 * (v.min(24.0) - 3.0),
    };
    eta += 0.12 * inq6;
    eta += 0.018 * regular(revolving_burden, 35.0, 0.0);
    eta += 0.06 * regular(revolving_bal, 4.0, 0.0);
    eta += 0.15 * regular(high_util, 1.0, 0.0);
    eta += 0.008 * regular(pct_bal, 66.0, 0.0);
    (x, SIGNAL * eta)
}

/// Intercept making the mean predicted default rate equal to `target`.
fn calibrate(etas: &[f64], target: f64) -> f64 {
    let rate = |b: f64| etas.iter().map(|&e| sigmoid(b + e)).sum::<f64>() / etas.len() as f64;
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..100 {
        let mid = (lo + hi) / 2.0;
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

/// `n` synthetic applicants, reproducible from `seed`.
pub fn generate(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Draw {
        rng: &mut rng,
        normal: Normal::new(0.0, 1.0).expect("unit normal"),
    };
    let draws: Vec<([f64; 23], f64)> = (0..n).map(|_| applicant(&mut d)).collect();
    let etas: Vec<f64> = draws.iter().map(|(_, e)| *e).collect();
    let b0 = calibrate(&etas, DEFAULT_RATE);
    let mut rows: Vec<Row> = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for (x, eta) in draws {
        y.push(u8::from(d.u() < sigmoid(b0 + eta)));
        rows.push(x.iter().map(|&v| Value::Num(v)).collect());
    }
    Dataset::new(schema().columns, rows, TARGET, y)
}
