//! Coarse classing.
//!
//! Numeric variables are split recursively at the observed midpoint that
//! maximises the information value of the whole variable; a split is kept
//! only when it raises the IV by at least a relative `min_rel_iv_gain`.
//! Special codes are isolated into their own bins before any split is
//! considered. Categorical variables pool rare levels into `rest`, sort the
//! remaining levels by default rate and merge neighbours whose default rates
//! a 2x2 chi-square test cannot tell apart.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{ColumnKind, Dataset, Value};
use crate::error::{Error, Result};
use crate::woe;

/// Name of the pooled level for rare categories.
pub const REST_LEVEL: &str = "rest";

/// Required direction of the default rate along the bin order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotone {
    #[default]
    None,
    Increasing,
    Decreasing,
}

impl Monotone {
    pub fn is_none(&self) -> bool {
        *self == Monotone::None
    }
}

/// Interval edge; infinities serialize as `"-Inf"` / `"Inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge(f64);

impl Serialize for Edge {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("Inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-Inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Edge(v)),
            Raw::Str(s) => match s.trim() {
                "Inf" | "+Inf" | "inf" => Ok(Edge(f64::INFINITY)),
                "-Inf" | "-inf" => Ok(Edge(f64::NEG_INFINITY)),
                other => other
                    .parse()
                    .map(Edge)
                    .map_err(|_| serde::de::Error::custom(format!("bad interval edge `{other}`"))),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BinDefRepr {
    Interval([Edge; 2]),
    Levels(Vec<String>),
    Special(Vec<Value>),
}

/// What a bin covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "BinDefRepr", into = "BinDefRepr")]
pub enum BinDef {
    /// Half-open interval `(lo, hi]`.
    Interval {
        lo: f64,
        hi: f64,
    },
    Levels(Vec<String>),
    /// One or more special codes.
    Special(Vec<Value>),
}

impl From<BinDefRepr> for BinDef {
    fn from(r: BinDefRepr) -> Self {
        match r {
            BinDefRepr::Interval([lo, hi]) => BinDef::Interval { lo: lo.0, hi: hi.0 },
            BinDefRepr::Levels(l) => BinDef::Levels(l),
            BinDefRepr::Special(s) => BinDef::Special(s),
        }
    }
}

impl From<BinDef> for BinDefRepr {
    fn from(d: BinDef) -> Self {
        match d {
            BinDef::Interval { lo, hi } => BinDefRepr::Interval([Edge(lo), Edge(hi)]),
            BinDef::Levels(l) => BinDefRepr::Levels(l),
            BinDef::Special(s) => BinDefRepr::Special(s),
        }
    }
}

impl BinDef {
    pub fn is_special(&self) -> bool {
        matches!(self, BinDef::Special(_))
    }

    pub fn is_rest(&self) -> bool {
        matches!(self, BinDef::Levels(l) if l.iter().any(|s| s == REST_LEVEL))
    }

    /// Direct membership test; unseen levels are not mapped to `rest` here.
    pub fn contains(&self, value: &Value) -> bool {
        match self {
            BinDef::Interval { lo, hi } => match value.as_f64() {
                Some(v) => *lo < v && v <= *hi,
                None => false,
            },
            BinDef::Levels(levels) => levels.iter().any(|l| Value::Cat(l.clone()).matches(value)),
            BinDef::Special(codes) => codes.iter().any(|c| c.matches(value)),
        }
    }
}

impl fmt::Display for BinDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edge = |v: f64| {
            if v == f64::INFINITY {
                "Inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-Inf".to_string()
            } else {
                format!("{v}")
            }
        };
        match self {
            BinDef::Interval { lo, hi } => write!(f, "({},{}]", edge(*lo), edge(*hi)),
            BinDef::Levels(l) => write!(f, "{{{}}}", l.join(",")),
            BinDef::Special(c) => {
                let codes: Vec<String> = c.iter().map(Value::to_string).collect();
                write!(f, "special({})", codes.join(","))
            }
        }
    }
}

/// Index of the bin covering `value` among `defs`. Special codes win over
/// intervals; an unseen categorical level falls into `rest` when present.
pub fn locate_in<'a>(defs: impl IntoIterator<Item = &'a BinDef> + Clone, value: &Value) -> Option<usize> {
    let pass = |want_special: bool| {
        defs.clone()
            .into_iter()
            .position(|d| d.is_special() == want_special && d.contains(value))
    };
    pass(true).or_else(|| pass(false)).or_else(|| match value {
        Value::Cat(_) => defs.clone().into_iter().position(BinDef::is_rest),
        Value::Num(_) => None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub definition: BinDef,
    pub n_total: u64,
    pub n_bad: u64,
    pub pop_share: f64,
    pub default_rate: f64,
    pub woe: f64,
    /// Set when the zero-cell guard was needed for this bin's WOE.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_cell_adjusted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<i64>,
}

impl Bin {
    pub fn n_good(&self) -> u64 {
        self.n_total - self.n_bad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEntry {
    pub action: String,
    pub bins: [usize; 2],
    pub result: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub variable: String,
    pub kind: ColumnKind,
    pub bins: Vec<Bin>,
    pub iv: f64,
    #[serde(default)]
    pub monotone_constraint: Monotone,
    #[serde(default)]
    pub edit_log: Vec<EditEntry>,
}

impl BinningScheme {
    /// Build a finalized scheme from `(definition, n_total, n_bad)` triples.
    pub fn from_counts(
        variable: impl Into<String>,
        kind: ColumnKind,
        counts: Vec<(BinDef, u64, u64)>,
        monotone_constraint: Monotone,
    ) -> Self {
        let bins = counts
            .into_iter()
            .map(|(definition, n_total, n_bad)| Bin {
                definition,
                n_total,
                n_bad,
                pop_share: 0.0,
                default_rate: 0.0,
                woe: 0.0,
                zero_cell_adjusted: false,
                points: None,
            })
            .collect();
        let mut scheme = BinningScheme {
            variable: variable.into(),
            kind,
            bins,
            iv: 0.0,
            monotone_constraint,
            edit_log: Vec::new(),
        };
        scheme.refresh();
        scheme
    }

    /// Count the rows of `ds` falling in each of `definitions` and finalize.
    pub fn tabulate(
        ds: &Dataset,
        variable: &str,
        definitions: Vec<BinDef>,
        monotone_constraint: Monotone,
    ) -> Result<Self> {
        let idx = ds.column_index(variable)?;
        let mut counts: Vec<(BinDef, u64, u64)> = definitions.into_iter().map(|d| (d, 0, 0)).collect();
        for (v, &t) in ds.column(idx).zip(ds.y()) {
            let b = locate_in(counts.iter().map(|c| &c.0), v).ok_or_else(|| Error::UncoveredValue {
                variable: variable.to_string(),
                value: v.to_string(),
            })?;
            counts[b].1 += 1;
            counts[b].2 += u64::from(t);
        }
        Ok(Self::from_counts(
            variable,
            ds.columns()[idx].kind,
            counts,
            monotone_constraint,
        ))
    }

    /// Recompute shares, default rates, WOE and IV from the bin counts.
    pub fn refresh(&mut self) {
        let n: u64 = self.bins.iter().map(|b| b.n_total).sum();
        let (tb, tg) = self.class_totals();
        for b in &mut self.bins {
            b.pop_share = if n == 0 { 0.0 } else { b.n_total as f64 / n as f64 };
            b.default_rate = if b.n_total == 0 {
                0.0
            } else {
                b.n_bad as f64 / b.n_total as f64
            };
            let (w, adj) = woe::woe(b.n_bad, b.n_good(), tb, tg);
            b.woe = w;
            b.zero_cell_adjusted = adj;
        }
        self.iv = woe::information_value(self);
    }

    /// `(total bads, total goods)`.
    pub fn class_totals(&self) -> (u64, u64) {
        let bad: u64 = self.bins.iter().map(|b| b.n_bad).sum();
        let good: u64 = self.bins.iter().map(|b| b.n_good()).sum();
        (bad, good)
    }

    pub fn n_total(&self) -> u64 {
        self.bins.iter().map(|b| b.n_total).sum()
    }

    pub fn locate(&self, value: &Value) -> Option<usize> {
        locate_in(self.bins.iter().map(|b| &b.definition), value)
    }

    /// Indices of the non-special bins in their natural order: intervals by
    /// lower edge, level sets as stored.
    pub fn ordered_regular_bins(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.bins.len())
            .filter(|&i| !self.bins[i].definition.is_special())
            .collect();
        idx.sort_by(|&a, &b| {
            let key = |i: usize| match self.bins[i].definition {
                BinDef::Interval { lo, .. } => lo,
                _ => i as f64,
            };
            key(a).total_cmp(&key(b))
        });
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericBinning {
    /// Minimum relative IV improvement for a split to be kept.
    pub min_rel_iv_gain: f64,
    /// Smallest allowed bin as a share of all rows.
    pub min_bin_share: f64,
}

impl Default for NumericBinning {
    fn default() -> Self {
        NumericBinning {
            min_rel_iv_gain: 0.05,
            min_bin_share: 0.01,
        }
    }
}

impl NumericBinning {
    pub fn validate(&self) -> Result<()> {
        if self.min_rel_iv_gain.is_nan() || self.min_rel_iv_gain <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "min_rel_iv_gain must be positive, got {}",
                self.min_rel_iv_gain
            )));
        }
        if !(0.0..0.5).contains(&self.min_bin_share) {
            return Err(Error::InvalidConfig(format!(
                "min_bin_share must lie in [0, 0.5), got {}",
                self.min_bin_share
            )));
        }
        Ok(())
    }

    /// Minimum row count per automatic bin for a variable with `n` rows.
    pub fn min_bin_rows(&self, n: usize) -> u64 {
        ((self.min_bin_share * n as f64).ceil() as u64).max(1)
    }
}

/// Relative-gain stopping rule shared by the splitter and its tests.
pub fn split_accepted(iv_before: f64, iv_after: f64, min_rel_iv_gain: f64) -> bool {
    if iv_before <= 0.0 {
        iv_after > 0.0
    } else {
        (iv_after - iv_before) / iv_before >= min_rel_iv_gain
    }
}

/// True when `candidate` beats `best` by more than rounding noise; ties keep
/// the earlier (smaller) cut.
pub fn improves(candidate: f64, best: f64) -> bool {
    candidate > best + 1e-12 * best.abs().max(1.0)
}

struct Splitter {
    values: Vec<f64>,
    cum_n: Vec<u64>,
    cum_bad: Vec<u64>,
    total_bad: u64,
    total_good: u64,
    min_rows: u64,
    cfg: NumericBinning,
    current_iv: f64,
    cuts: Vec<usize>,
}

impl Splitter {
    fn segment(&self, a: usize, b: usize) -> (u64, u64) {
        let n = self.cum_n[b] - self.cum_n[a];
        let bad = self.cum_bad[b] - self.cum_bad[a];
        (n, bad)
    }

    fn contribution(&self, a: usize, b: usize) -> f64 {
        let (n, bad) = self.segment(a, b);
        woe::iv_contribution(bad, n - bad, self.total_bad, self.total_good)
    }

    fn split(&mut self, a: usize, b: usize) {
        let whole = self.contribution(a, b);
        let mut best: Option<(usize, f64)> = None;
        for t in a + 1..b {
            let (nl, _) = self.segment(a, t);
            let (nr, _) = self.segment(t, b);
            if nl < self.min_rows || nr < self.min_rows {
                continue;
            }
            let after = self.current_iv - whole + self.contribution(a, t) + self.contribution(t, b);
            if best.map_or(true, |(_, iv)| improves(after, iv)) {
                best = Some((t, after));
            }
        }
        let Some((t, after)) = best else { return };
        if !split_accepted(self.current_iv, after, self.cfg.min_rel_iv_gain) {
            return;
        }
        self.current_iv = after;
        self.cuts.push(t);
        self.split(a, t);
        self.split(t, b);
    }
}

/// Recursive IV-maximising binning of a numeric variable.
pub fn auto_bin_numeric(
    ds: &Dataset,
    var: &str,
    cfg: &NumericBinning,
    special_codes: &[Value],
) -> Result<BinningScheme> {
    cfg.validate()?;
    let idx = ds.column_index(var)?;
    let spec = &ds.columns()[idx];
    if spec.kind != ColumnKind::Numeric {
        return Err(Error::InvalidConfig(format!("`{var}` is not numeric")));
    }

    // distinct regular value -> (count, bads); special code -> (count, bads)
    let mut regular: BTreeMap<OrdF64, (u64, u64)> = BTreeMap::new();
    let mut special: BTreeMap<OrdF64, (u64, u64)> = BTreeMap::new();
    for (v, &t) in ds.column(idx).zip(ds.y()) {
        let x = v.as_f64().expect("numeric column");
        let is_special = special_codes.iter().any(|c| c.matches(v));
        let slot = if is_special { &mut special } else { &mut regular }
            .entry(OrdF64(x))
            .or_insert((0, 0));
        slot.0 += 1;
        slot.1 += u64::from(t);
    }

    let total_bad = ds.n_bad() as u64;
    let total_good = ds.n() as u64 - total_bad;

    let mut counts: Vec<(BinDef, u64, u64)> = Vec::new();
    if !regular.is_empty() {
        let values: Vec<f64> = regular.keys().map(|k| k.0).collect();
        let mut cum_n = vec![0u64];
        let mut cum_bad = vec![0u64];
        for &(n, bad) in regular.values() {
            cum_n.push(cum_n.last().unwrap() + n);
            cum_bad.push(cum_bad.last().unwrap() + bad);
        }
        let special_iv: f64 = special
            .values()
            .map(|&(n, bad)| woe::iv_contribution(bad, n - bad, total_bad, total_good))
            .sum();
        let m = values.len();
        let mut splitter = Splitter {
            values,
            cum_n,
            cum_bad,
            total_bad,
            total_good,
            min_rows: cfg.min_bin_rows(ds.n()),
            cfg: *cfg,
            current_iv: 0.0,
            cuts: Vec::new(),
        };
        splitter.current_iv = special_iv + splitter.contribution(0, m);
        splitter.split(0, m);

        let mut cuts = splitter.cuts.clone();
        cuts.sort_unstable();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(m);
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            let lo = if a == 0 {
                f64::NEG_INFINITY
            } else {
                midpoint(splitter.values[a - 1], splitter.values[a])
            };
            let hi = if b == m {
                f64::INFINITY
            } else {
                midpoint(splitter.values[b - 1], splitter.values[b])
            };
            let (n, bad) = splitter.segment(a, b);
            counts.push((BinDef::Interval { lo, hi }, n, bad));
        }
    }
    for (code, (n, bad)) in special {
        counts.push((BinDef::Special(vec![Value::Num(code.0)]), n, bad));
    }
    Ok(BinningScheme::from_counts(
        var,
        ColumnKind::Numeric,
        counts,
        spec.monotone,
    ))
}

pub fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoricalBinning {
    /// Levels covering less than this share of rows are pooled into `rest`.
    pub rare_threshold: f64,
    /// Significance level of the adjacent-level chi-square test.
    pub alpha: f64,
}

impl Default for CategoricalBinning {
    fn default() -> Self {
        CategoricalBinning {
            rare_threshold: 0.02,
            alpha: 0.1,
        }
    }
}

/// Pearson chi-square statistic of the 2x2 table (bad/good x level A/B),
/// without continuity correction. Degenerate margins give 0.
pub fn chi_square_2x2(bad_a: u64, good_a: u64, bad_b: u64, good_b: u64) -> f64 {
    let (a, b, c, d) = (bad_a as f64, good_a as f64, bad_b as f64, good_b as f64);
    let n = a + b + c + d;
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    if denom == 0.0 {
        return 0.0;
    }
    let diff = a * d - b * c;
    n * diff * diff / denom
}

/// Upper `alpha` quantile of chi-square with one degree of freedom.
pub fn chi_square_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let dist = ChiSquared::new(1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}

#[derive(Debug, Clone)]
struct LevelGroup {
    levels: Vec<String>,
    n: u64,
    bad: u64,
}

impl LevelGroup {
    fn rate(&self) -> f64 {
        self.bad as f64 / self.n as f64
    }
}

/// Rare-level pooling followed by chi-square merging of adjacent levels.
pub fn auto_bin_categorical(ds: &Dataset, var: &str, cfg: &CategoricalBinning) -> Result<BinningScheme> {
    let idx = ds.column_index(var)?;
    let spec = &ds.columns()[idx];
    if spec.kind != ColumnKind::Categorical {
        return Err(Error::InvalidConfig(format!("`{var}` is not categorical")));
    }
    if !(0.0..1.0).contains(&cfg.rare_threshold) {
        return Err(Error::InvalidConfig(format!(
            "rare_threshold must lie in [0,1), got {}",
            cfg.rare_threshold
        )));
    }
    let critical = chi_square_critical(cfg.alpha)?;

    let mut levels: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut special: Vec<(Value, u64, u64)> = Vec::new();
    for (v, &t) in ds.column(idx).zip(ds.y()) {
        if let Some(code) = spec.special_codes.iter().find(|c| c.matches(v)) {
            match special.iter_mut().find(|(c, _, _)| c == code) {
                Some(s) => {
                    s.1 += 1;
                    s.2 += u64::from(t);
                }
                None => special.push((code.clone(), 1, u64::from(t))),
            }
            continue;
        }
        let e = levels.entry(v.to_string()).or_insert((0, 0));
        e.0 += 1;
        e.1 += u64::from(t);
    }

    let n = ds.n() as f64;
    let mut groups = Vec::new();
    let mut rest = LevelGroup {
        levels: Vec::new(),
        n: 0,
        bad: 0,
    };
    for (level, (count, bad)) in levels {
        if (count as f64) / n < cfg.rare_threshold {
            rest.levels.push(level);
            rest.n += count;
            rest.bad += bad;
        } else {
            groups.push(LevelGroup {
                levels: vec![level],
                n: count,
                bad,
            });
        }
    }
    groups.sort_by(|a, b| a.rate().total_cmp(&b.rate()).then_with(|| a.levels.cmp(&b.levels)));

    loop {
        let mut merged_any = false;
        let mut i = 0;
        while i + 1 < groups.len() {
            let (a, b) = (&groups[i], &groups[i + 1]);
            let stat = chi_square_2x2(a.bad, a.n - a.bad, b.bad, b.n - b.bad);
            if stat < critical {
                let b = groups.remove(i + 1);
                let a = &mut groups[i];
                a.levels.extend(b.levels);
                a.n += b.n;
                a.bad += b.bad;
                merged_any = true;
            } else {
                i += 1;
            }
        }
        if !merged_any {
            break;
        }
    }

    let mut counts: Vec<(BinDef, u64, u64)> = groups
        .into_iter()
        .map(|g| (BinDef::Levels(g.levels), g.n, g.bad))
        .collect();
    if rest.n > 0 {
        let mut names = vec![REST_LEVEL.to_string()];
        names.extend(rest.levels);
        counts.push((BinDef::Levels(names), rest.n, rest.bad));
    }
    for (code, count, bad) in special {
        counts.push((BinDef::Special(vec![code]), count, bad));
    }
    Ok(BinningScheme::from_counts(
        var,
        ColumnKind::Categorical,
        counts,
        spec.monotone,
    ))
}

fn fuse(a: &BinDef, b: &BinDef) -> Result<BinDef> {
    match (a, b) {
        (BinDef::Interval { lo: l1, hi: h1 }, BinDef::Interval { lo: l2, hi: h2 }) => {
            if h1 == l2 {
                Ok(BinDef::Interval { lo: *l1, hi: *h2 })
            } else if h2 == l1 {
                Ok(BinDef::Interval { lo: *l2, hi: *h1 })
            } else {
                Err(Error::InvalidEdit(format!("intervals {a} and {b} are not contiguous")))
            }
        }
        (BinDef::Levels(x), BinDef::Levels(y)) => {
            let mut l = x.clone();
            l.extend(y.iter().cloned());
            // keep `rest` first so the fused bin still absorbs unseen levels
            l.sort_by_key(|s| s != REST_LEVEL);
            Ok(BinDef::Levels(l))
        }
        (BinDef::Special(x), BinDef::Special(y)) => {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            Ok(BinDef::Special(c))
        }
        _ => Err(Error::InvalidEdit(format!("cannot merge {a} with {b}"))),
    }
}

/// Fuse two adjacent bins. The input scheme is left untouched and the edit is
/// recorded in the new scheme's log.
pub fn merge_bins(scheme: &BinningScheme, i: usize, j: usize) -> Result<BinningScheme> {
    merge_with_reason(scheme, i, j, "manual")
}

fn merge_with_reason(scheme: &BinningScheme, i: usize, j: usize, reason: &str) -> Result<BinningScheme> {
    let len = scheme.bins.len();
    if i >= len || j >= len {
        return Err(Error::InvalidEdit(format!(
            "bin index out of range ({i}, {j}) for {len} bins"
        )));
    }
    if i == j {
        return Err(Error::InvalidEdit(format!("cannot merge bin {i} with itself")));
    }
    let (a, b) = (&scheme.bins[i], &scheme.bins[j]);
    if a.definition.is_special() != b.definition.is_special() {
        return Err(Error::InvalidEdit(
            "special-code bins only merge with special-code bins".into(),
        ));
    }
    let adjacent = if a.definition.is_special() {
        i.abs_diff(j) == 1
    } else {
        let order = scheme.ordered_regular_bins();
        let pi = order.iter().position(|&k| k == i).unwrap();
        let pj = order.iter().position(|&k| k == j).unwrap();
        pi.abs_diff(pj) == 1
    };
    if !adjacent {
        return Err(Error::InvalidEdit(format!("bins {i} and {j} are not adjacent")));
    }
    let (first, second) = if i < j { (a, b) } else { (b, a) };
    let definition = fuse(&first.definition, &second.definition)?;
    let keep = i.min(j);
    let drop = i.max(j);

    let mut out = scheme.clone();
    {
        let k = &mut out.bins[keep];
        k.definition = definition;
        k.n_total = a.n_total + b.n_total;
        k.n_bad = a.n_bad + b.n_bad;
        k.points = None;
    }
    out.bins.remove(drop);
    out.refresh();
    out.edit_log.push(EditEntry {
        action: "merge".into(),
        bins: [i, j],
        result: out.bins[keep].definition.to_string(),
        reason: reason.into(),
    });
    Ok(out)
}

/// Adjacent bin pair (indices into `bins`) whose default rates break the
/// declared direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub left: usize,
    pub right: usize,
}

/// All adjacent pairs of regular bins whose default rates violate the
/// scheme's constraint. Special-code bins are skipped.
pub fn check_monotonicity(scheme: &BinningScheme) -> Result<Vec<Violation>> {
    let dir = scheme.monotone_constraint;
    if dir.is_none() {
        return Err(Error::NoConstraint(scheme.variable.clone()));
    }
    let order = scheme.ordered_regular_bins();
    Ok(order
        .windows(2)
        .filter(|w| {
            let (l, r) = (scheme.bins[w[0]].default_rate, scheme.bins[w[1]].default_rate);
            match dir {
                Monotone::Increasing => r < l,
                Monotone::Decreasing => r > l,
                Monotone::None => false,
            }
        })
        .map(|w| Violation {
            left: w[0],
            right: w[1],
        })
        .collect())
}

/// Merge violating neighbours, first violation first, until the scheme
/// complies. Each merge is logged. Schemes without a constraint pass through.
pub fn repair_monotonicity(scheme: &BinningScheme) -> Result<BinningScheme> {
    if scheme.monotone_constraint.is_none() {
        return Ok(scheme.clone());
    }
    let mut current = scheme.clone();
    while let Some(v) = check_monotonicity(&current)?.first().copied() {
        current = merge_with_reason(&current, v.left, v.right, "monotonicity repair")?;
    }
    Ok(current)
}
