use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tracker::MetricRow;

pub const FACTORS: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];
pub const CONFIG_COUNT: usize = 64;
pub const TERM_COUNT: usize = 63;
pub const DEFAULT_REPLICATES: usize = 4;

pub const ENC_METRICS: [&str; 3] = ["B56", "H56", "P56"];
pub const DEC_METRICS: [&str; 6] = ["B112", "B224", "H112", "H224", "P112", "P224"];
pub const ENC_AVG: &str = "enc_avg";
pub const DEC_AVG: &str = "dec_avg";

/// One cell of the 2⁶ design. Bit k holds the level of factor `FACTORS[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FactorConfig(u8);

impl FactorConfig {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < CONFIG_COUNT).then_some(FactorConfig(index as u8))
    }

    pub fn from_levels(levels: [bool; 6]) -> Self {
        let bits = levels.iter().enumerate().fold(0u8, |acc, (k, &on)| acc | (u8::from(on) << k));
        FactorConfig(bits)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn level(self, factor: usize) -> bool {
        self.0 >> factor & 1 == 1
    }

    pub fn levels(self) -> [bool; 6] {
        std::array::from_fn(|k| self.level(k))
    }
}

impl fmt::Display for FactorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, name) in FACTORS.iter().enumerate() {
            write!(f, "{name}{}", u8::from(self.level(k)))?;
        }
        Ok(())
    }
}

/// Accepts either a label such as `A1B0C1D0E0F0` or a row index.
impl FromStr for FactorConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return FactorConfig::from_index(i).ok_or_else(|| Error::Parse(format!("config row {i} out of range 0..64")));
        }
        let b = s.as_bytes();
        if b.len() != 12 {
            return Err(Error::Parse(format!("bad config label {s:?}")));
        }
        let mut levels = [false; 6];
        for (k, name) in FACTORS.iter().enumerate() {
            if b[2 * k] != *name as u8 {
                return Err(Error::Parse(format!("bad config label {s:?}")));
            }
            levels[k] = match b[2 * k + 1] {
                b'0' => false,
                b'1' => true,
                _ => return Err(Error::Parse(format!("bad config label {s:?}"))),
            };
        }
        Ok(FactorConfig::from_levels(levels))
    }
}

pub fn enumerate_configs() -> Vec<FactorConfig> {
    (0..CONFIG_COUNT).map(|i| FactorConfig(i as u8)).collect()
}

/// A main effect or interaction: a non-empty subset of the six factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Term(u8);

impl Term {
    pub fn from_mask(mask: u8) -> Option<Self> {
        (mask != 0 && mask < 64).then_some(Term(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn order(self) -> u32 {
        self.0.count_ones()
    }

    pub fn contains(self, factor: usize) -> bool {
        self.0 >> factor & 1 == 1
    }

    pub fn name(self) -> String {
        FACTORS.iter().enumerate().filter(|(k, _)| self.contains(*k)).map(|(_, c)| *c).collect()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut mask = 0u8;
        for c in s.trim().chars() {
            let k = FACTORS
                .iter()
                .position(|&f| f == c.to_ascii_uppercase())
                .ok_or_else(|| Error::Parse(format!("unknown factor {c:?} in term {s:?}")))?;
            mask |= 1 << k;
        }
        Term::from_mask(mask).ok_or_else(|| Error::Parse(format!("empty term {s:?}")))
    }
}

/// All 63 terms in mask order: A, B, AB, C, AC, ...
pub fn all_terms() -> Vec<Term> {
    (1..64u8).map(Term).collect()
}

pub fn contrast_sign(config: FactorConfig, term: Term) -> f64 {
    if (config.0 & term.0).count_ones() % 2 == term.order() % 2 {
        1.0
    } else {
        -1.0
    }
}

pub fn contrast_vector(term: Term) -> [f64; CONFIG_COUNT] {
    std::array::from_fn(|i| contrast_sign(FactorConfig(i as u8), term))
}

/// Responses per metric over the 64 × n grid; absent cells stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    replicates: usize,
    cells: BTreeMap<String, Vec<Option<f64>>>,
}

impl ResponseTable {
    pub fn new(replicates: usize) -> Self {
        ResponseTable { replicates, cells: BTreeMap::new() }
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn metrics(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    pub fn has_metric(&self, metric: &str) -> bool {
        self.cells.contains_key(metric)
    }

    pub fn insert(&mut self, config: FactorConfig, replicate: usize, metric: &str, value: f64) -> Result<()> {
        if replicate >= self.replicates {
            return Err(Error::InvalidConfig(format!(
                "replicate {replicate} outside 0..{}",
                self.replicates
            )));
        }
        let n = self.replicates;
        let col = self.cells.entry(metric.to_string()).or_insert_with(|| vec![None; CONFIG_COUNT * n]);
        col[config.index() * n + replicate] = Some(value);
        Ok(())
    }

    pub fn get(&self, config: FactorConfig, replicate: usize, metric: &str) -> Option<f64> {
        self.cells.get(metric)?.get(config.index() * self.replicates + replicate).copied().flatten()
    }

    /// Builds a table from result rows. The replicate count defaults to the largest index seen plus one.
    pub fn from_rows(rows: &[MetricRow], replicates: Option<usize>) -> Result<Self> {
        let n = replicates.unwrap_or_else(|| rows.iter().map(|r| r.replicate + 1).max().unwrap_or(0));
        let mut table = ResponseTable::new(n);
        for r in rows {
            let cfg: FactorConfig = r.config.parse()?;
            table.insert(cfg, r.replicate, &r.metric, r.value)?;
        }
        Ok(table)
    }

    /// Complete response vector for `metric`, ordered by (config, replicate).
    pub fn responses(&self, metric: &str) -> Result<Vec<f64>> {
        let col = self.cells.get(metric).ok_or_else(|| Error::MissingMetric(metric.to_string()))?;
        let missing: Vec<(usize, usize)> = col
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(i, _)| (i / self.replicates, i % self.replicates))
            .collect();
        if !missing.is_empty() || col.is_empty() {
            return Err(Error::MissingCells { metric: metric.to_string(), cells: missing });
        }
        Ok(col.iter().map(|v| v.unwrap_or_default()).collect())
    }

    /// Adds `enc_avg` and `dec_avg` for every run that carries all nine position metrics.
    /// A run with only some of them is an error.
    pub fn with_aggregates(mut self) -> Result<Self> {
        let n = self.replicates;
        for cfg in enumerate_configs() {
            for j in 0..n {
                let run: BTreeMap<String, f64> = ENC_METRICS
                    .iter()
                    .chain(DEC_METRICS.iter())
                    .filter_map(|m| self.get(cfg, j, m).map(|v| (m.to_string(), v)))
                    .collect();
                if run.is_empty() {
                    continue;
                }
                let (enc, dec) = aggregate_responses(&run)?;
                self.insert(cfg, j, ENC_AVG, enc)?;
                self.insert(cfg, j, DEC_AVG, dec)?;
            }
        }
        Ok(self)
    }
}

/// `(enc_avg, dec_avg)` for one run.
pub fn aggregate_responses(run: &BTreeMap<String, f64>) -> Result<(f64, f64)> {
    let mean = |names: &[&str]| -> Result<f64> {
        let mut sum = 0.0;
        for m in names {
            sum += run.get(*m).ok_or_else(|| Error::MissingMetric(m.to_string()))?;
        }
        Ok(sum / names.len() as f64)
    };
    Ok((mean(&ENC_METRICS)?, mean(&DEC_METRICS)?))
}

fn effect_of(y: &[f64], n: usize, term: Term) -> f64 {
    let mut acc = 0.0;
    for (i, chunk) in y.chunks(n).enumerate() {
        let x = contrast_sign(FactorConfig(i as u8), term);
        acc += x * chunk.iter().sum::<f64>();
    }
    acc / (n * CONFIG_COUNT / 2) as f64
}

/// Mean response at the high level of the contrast minus the mean at the low level.
pub fn effect_estimate(responses: &ResponseTable, metric: &str, term: Term) -> Result<f64> {
    let y = responses.responses(metric)?;
    Ok(effect_of(&y, responses.replicates, term))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub term: Term,
    /// Aligned with `EffectTable::metrics`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectTable {
    pub replicates: usize,
    pub metrics: Vec<String>,
    pub estimates: Vec<EffectEstimate>,
}

impl EffectTable {
    pub fn metric_index(&self, metric: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == metric)
    }

    pub fn get(&self, term: Term, metric: &str) -> Option<f64> {
        let j = self.metric_index(metric)?;
        self.estimates.iter().find(|e| e.term == term).map(|e| e.values[j])
    }
}

/// All 63 effects for each requested metric.
pub fn estimate_all(responses: &ResponseTable, metrics: &[&str]) -> Result<EffectTable> {
    let columns = metrics.iter().map(|m| responses.responses(m)).collect::<Result<Vec<_>>>()?;
    let n = responses.replicates;
    let estimates = all_terms()
        .into_par_iter()
        .map(|term| EffectEstimate {
            term,
            values: columns.iter().map(|y| effect_of(y, n, term)).collect(),
        })
        .collect();
    Ok(EffectTable {
        replicates: n,
        metrics: metrics.iter().map(|m| m.to_string()).collect(),
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEffect {
    pub term: Term,
    pub values: Vec<f64>,
    pub average: f64,
}

/// Orders the terms admitted by `keep` by the magnitude of their mean effect over `group`.
pub fn rank_effects(table: &EffectTable, group: &[&str], keep: impl Fn(Term) -> bool) -> Result<Vec<RankedEffect>> {
    let cols = group
        .iter()
        .map(|m| table.metric_index(m).ok_or_else(|| Error::MissingMetric(m.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut ranked: Vec<RankedEffect> = table
        .estimates
        .iter()
        .filter(|e| keep(e.term))
        .map(|e| {
            let values: Vec<f64> = cols.iter().map(|&j| e.values[j]).collect();
            let average = values.iter().sum::<f64>() / values.len() as f64;
            RankedEffect { term: e.term, values, average }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.average
            .abs()
            .total_cmp(&a.average.abs())
            .then_with(|| a.term.name().cmp(&b.term.name()))
    });
    Ok(ranked)
}

/// `term,metric,effect` with shortest round-trip float formatting.
pub fn write_effects_csv<W: Write>(mut w: W, table: &EffectTable) -> Result<()> {
    writeln!(w, "term,metric,effect")?;
    for e in &table.estimates {
        for (m, v) in table.metrics.iter().zip(&e.values) {
            writeln!(w, "{},{},{}", e.term, m, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_effects_csv<R: std::io::Read>(r: R) -> Result<Vec<(Term, String, f64)>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse(format!("short effects row {rec:?}")));
        let term: Term = field(0)?.parse()?;
        let value: f64 = field(2)?.parse().map_err(|e| Error::Parse(format!("effect value: {e}")))?;
        out.push((term, field(1)?.to_string(), value));
    }
    Ok(out)
}

/// A ranked table with one column per metric plus the group average.
pub fn render_ranking(title: &str, group: &[&str], ranked: &[RankedEffect], top: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = write!(s, "{:<8}", "Term");
    for m in group {
        let _ = write!(s, "{m:>10}");
    }
    let _ = writeln!(s, "{:>10}", "Avg");
    for r in ranked.iter().take(top) {
        let _ = write!(s, "{:<8}", r.term.name());
        for v in &r.values {
            let _ = write!(s, "{v:>+10.2}");
        }
        let _ = writeln!(s, "{:>+10.2}", r.average);
    }
    s
}

/// Planted linear model in contrast units: y = intercept + Σ coef · x_term.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub intercept: f64,
    pub coefficients: Vec<(Term, f64)>,
}

impl PlantedModel {
    pub fn reference() -> Self {
        PlantedModel {
            intercept: 3.0,
            coefficients: vec![(Term(0b1), 2.0), (Term(0b110), -1.0)],
        }
    }

    pub fn response(&self, config: FactorConfig) -> f64 {
        self.coefficients
            .iter()
            .fold(self.intercept, |acc, &(t, c)| acc + c * contrast_sign(config, t))
    }

    /// Identical responses for every replicate and each of the nine position metrics.
    pub fn rows(&self, replicates: usize) -> Vec<MetricRow> {
        let mut rows = Vec::with_capacity(CONFIG_COUNT * replicates * 9);
        for cfg in enumerate_configs() {
            let y = self.response(cfg);
            for j in 0..replicates {
                for m in ENC_METRICS.iter().chain(DEC_METRICS.iter()) {
                    rows.push(MetricRow { config: cfg.to_string(), replicate: j, metric: m.to_string(), value: y });
                }
            }
        }
        rows
    }
}

/// How censored cells such as `>20` become numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CensorPolicy {
    /// Middle of the reporting band: >10 → 15, >20 → 35, >50 → 75.
    #[default]
    Midpoint,
    LowerBound,
}

pub fn decode_cell(cell: &str, policy: CensorPolicy) -> Result<f64> {
    let bad = || Error::Parse(format!("bad fixture cell {cell:?}"));
    match cell.strip_prefix('>') {
        None => cell.parse().map_err(|_| bad()),
        Some(b) => {
            let bound: f64 = b.parse().map_err(|_| bad())?;
            Ok(match policy {
                CensorPolicy::LowerBound => bound,
                CensorPolicy::Midpoint => match b {
                    "10" => 15.0,
                    "20" => 35.0,
                    "50" => 75.0,
                    _ => return Err(bad()),
                },
            })
        }
    }
}

const REFERENCE_MEANS: &str = include_str!("../fixtures/factorial_means.csv");

/// Reference per-configuration mean errors of the nine position metrics as one replicate.
pub fn reference_means_rows(policy: CensorPolicy) -> Result<Vec<MetricRow>> {
    let mut rd = csv::Reader::from_reader(REFERENCE_MEANS.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let config = rec.get(0).unwrap_or_default().to_string();
        for (metric, cell) in header.iter().zip(rec.iter()).skip(1) {
            rows.push(MetricRow {
                config: config.clone(),
                replicate: 0,
                metric: metric.clone(),
                value: decode_cell(cell, policy)?,
            });
        }
    }
    Ok(rows)
}
