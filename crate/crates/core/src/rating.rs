//! Baseline-relative rating of benchmarked pipelines and the weighted goal
//! aggregate.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::EvaluationRecord;

const WEIGHT_SUM_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;
/// Below this the baseline value is treated as zero and improvements become absolute.
const ZERO_BASELINE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatingError {
    #[error("no baseline record for instance {instance} at budget {budget}")]
    MissingBaseline { instance: String, budget: usize },
    #[error("weight constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("no records to rate")]
    Empty,
}

/// Weights must be strictly positive and sum to one.
pub fn validate_weights(w: &[f64]) -> Result<(), RatingError> {
    if w.is_empty() {
        return Err(RatingError::ConstraintViolation("no weights".into()));
    }
    if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(RatingError::ConstraintViolation(format!("weight {v} is not positive")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(RatingError::ConstraintViolation(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// Weighted sum of already normalized signals.
pub fn aggregate_goal_value(signals: &[f64], weights: &[f64]) -> Result<f64, RatingError> {
    validate_weights(weights)?;
    if signals.len() != weights.len() {
        return Err(RatingError::ConstraintViolation(format!(
            "{} signals for {} weights",
            signals.len(),
            weights.len()
        )));
    }
    Ok(signals.iter().zip(weights).map(|(s, w)| s * w).sum())
}

/// Per-signal min-max scaling over an observed window. A constant signal maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalNormalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl SignalNormalizer {
    pub fn from_history<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Option<Self> {
        let mut it = rows.into_iter();
        let first = it.next()?;
        let (mut min, mut max) = (first.to_vec(), first.to_vec());
        for r in it {
            for (i, v) in r.iter().enumerate() {
                min[i] = min[i].min(*v);
                max[i] = max[i].max(*v);
            }
        }
        Some(Self { min, max })
    }

    pub fn normalize(&self, signals: &[f64]) -> Vec<f64> {
        signals
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let span = self.max[i] - self.min[i];
                if span > 0.0 {
                    (v - self.min[i]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingWeights {
    pub w_objective: f64,
    pub w_memory: f64,
    pub w_cpu: f64,
}

impl RatingWeights {
    pub const fn new(w_objective: f64, w_memory: f64, w_cpu: f64) -> Self {
        Self { w_objective, w_memory, w_cpu }
    }

    pub fn validate(&self) -> Result<(), RatingError> {
        validate_weights(&[self.w_objective, self.w_memory, self.w_cpu])
    }
}

impl Default for RatingWeights {
    fn default() -> Self {
        Self::new(0.8, 0.1, 0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub pipeline: String,
    pub improvement: f64,
    pub mem_ratio: f64,
    pub cpu_ratio: f64,
    pub norm_obj: f64,
    pub norm_mem: f64,
    pub norm_cpu: f64,
    pub aggregate: f64,
    /// Position among survivors; `None` once eliminated.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingTable {
    pub budget: usize,
    pub baseline: String,
    /// Every rated pipeline (baseline excluded), sorted by id.
    pub rows: Vec<RatingRow>,
    /// Survivors in rank order.
    pub survivors: Vec<String>,
    pub eliminated: Vec<String>,
}

impl RatingTable {
    pub fn row(&self, pipeline: &str) -> Option<&RatingRow> {
        self.rows.iter().find(|r| r.pipeline == pipeline)
    }

    pub fn p_best(&self) -> Option<&str> {
        self.survivors.first().map(String::as_str)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "pipeline",
            "improvement",
            "mem_ratio",
            "cpu_ratio",
            "norm_obj",
            "norm_mem",
            "norm_cpu",
            "aggregate",
            "rank",
            "eliminated",
        ])?;
        let mut ordered: Vec<&RatingRow> = self.survivors.iter().filter_map(|p| self.row(p)).collect();
        ordered.extend(self.rows.iter().filter(|r| r.rank.is_none()));
        for r in ordered {
            w.write_record([
                r.pipeline.clone(),
                r.improvement.to_string(),
                r.mem_ratio.to_string(),
                r.cpu_ratio.to_string(),
                r.norm_obj.to_string(),
                r.norm_mem.to_string(),
                r.norm_cpu.to_string(),
                r.aggregate.to_string(),
                r.rank.map(|v| v.to_string()).unwrap_or_default(),
                r.rank.is_none().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// New values for the three dynamic KB fields of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbUpdate {
    pub algorithm: String,
    pub performance: f64,
    pub computational_effort: f64,
    pub ram_usage: f64,
}

/// The optimizing stage of a pipeline id (`"a > b"` gives `"b"`).
pub fn terminal_of(pipeline: &str) -> &str {
    pipeline.rsplit(" > ").next().unwrap_or(pipeline).trim()
}

fn improvement(base: f64, y: f64) -> f64 {
    if base.abs() < ZERO_BASELINE {
        base - y
    } else {
        (base - y) / base.abs()
    }
}

fn ratio(v: f64, base: f64, floor: f64) -> f64 {
    v / base.max(floor)
}

/// Min-max scaling where the best value maps to 1. Without spread every value maps to 1.
fn normalize(values: &[f64], larger_is_better: bool) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| {
            if span <= 0.0 {
                1.0
            } else if larger_is_better {
                (v - lo) / span
            } else {
                (hi - v) / span
            }
        })
        .collect()
}

/// Rates every non-baseline pipeline at the largest budget in `records`.
/// Improvements and resource ratios are taken per instance against the
/// baseline and averaged over instances; pipelines without a positive mean
/// improvement are eliminated and the rest are normalized and ranked.
pub fn rate_pipelines(
    records: &[EvaluationRecord],
    baseline_id: &str,
    weights: &RatingWeights,
) -> Result<(RatingTable, Option<String>, Vec<KbUpdate>), RatingError> {
    weights.validate()?;
    let budget = records.iter().map(|r| r.budget).max().ok_or(RatingError::Empty)?;
    let at_budget: Vec<&EvaluationRecord> = records.iter().filter(|r| r.budget == budget).collect();

    let mut base: BTreeMap<&str, &EvaluationRecord> = BTreeMap::new();
    for r in at_budget.iter().filter(|r| r.pipeline == baseline_id) {
        base.insert(r.instance.as_str(), r);
    }
    // (sum improvement, sum mem ratio, sum cpu ratio, count)
    let mut acc: BTreeMap<&str, (f64, f64, f64, usize)> = BTreeMap::new();
    for r in at_budget.iter().filter(|r| r.pipeline != baseline_id) {
        let b = base
            .get(r.instance.as_str())
            .ok_or_else(|| RatingError::MissingBaseline { instance: r.instance.clone(), budget })?;
        let e = acc.entry(r.pipeline.as_str()).or_default();
        e.0 += improvement(b.best_y, r.best_y);
        e.1 += ratio(r.memory_bytes as f64, b.memory_bytes as f64, 1.0);
        e.2 += ratio(r.cpu_time, b.cpu_time, 1e-9);
        e.3 += 1;
    }
    if base.is_empty() && acc.is_empty() {
        return Err(RatingError::MissingBaseline { instance: String::new(), budget });
    }

    let mut rows: Vec<RatingRow> = acc
        .into_iter()
        .map(|(p, (i, m, c, n))| {
            let n = n as f64;
            RatingRow {
                pipeline: p.to_string(),
                improvement: i / n,
                mem_ratio: m / n,
                cpu_ratio: c / n,
                norm_obj: 0.0,
                norm_mem: 0.0,
                norm_cpu: 0.0,
                aggregate: 0.0,
                rank: None,
            }
        })
        .collect();

    let surv: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].improvement > 0.0).collect();
    let pick = |f: fn(&RatingRow) -> f64| surv.iter().map(|&i| f(&rows[i])).collect::<Vec<_>>();
    let n_obj = normalize(&pick(|r| r.improvement), true);
    let n_mem = normalize(&pick(|r| r.mem_ratio), false);
    let n_cpu = normalize(&pick(|r| r.cpu_ratio), false);
    for (k, &i) in surv.iter().enumerate() {
        let r = &mut rows[i];
        r.norm_obj = n_obj[k];
        r.norm_mem = n_mem[k];
        r.norm_cpu = n_cpu[k];
        r.aggregate = weights.w_objective * r.norm_obj + weights.w_memory * r.norm_mem + weights.w_cpu * r.norm_cpu;
    }

    let mut order = surv.clone();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&rows[a], &rows[b]);
        let by_agg = if (ra.aggregate - rb.aggregate).abs() <= TIE_TOL {
            Ordering::Equal
        } else {
            rb.aggregate.total_cmp(&ra.aggregate)
        };
        by_agg
            .then(ra.cpu_ratio.total_cmp(&rb.cpu_ratio))
            .then(ra.mem_ratio.total_cmp(&rb.mem_ratio))
            .then(ra.pipeline.cmp(&rb.pipeline))
    });
    for (pos, &i) in order.iter().enumerate() {
        rows[i].rank = Some(pos + 1);
    }
    let survivors: Vec<String> = order.iter().map(|&i| rows[i].pipeline.clone()).collect();
    let eliminated: Vec<String> = rows.iter().filter(|r| r.rank.is_none()).map(|r| r.pipeline.clone()).collect();

    // Pipelines outside the survivor set keep their resource standing relative
    // to the most expensive rated pipeline.
    let max_mem = rows.iter().map(|r| r.mem_ratio).fold(1.0, f64::max);
    let max_cpu = rows.iter().map(|r| r.cpu_ratio).fold(1.0, f64::max);
    let mut updates: Vec<KbUpdate> = rows
        .iter()
        .map(|r| match r.rank {
            Some(_) => KbUpdate {
                algorithm: terminal_of(&r.pipeline).to_string(),
                performance: r.norm_obj,
                computational_effort: 1.0 - r.norm_cpu,
                ram_usage: 1.0 - r.norm_mem,
            },
            None => KbUpdate {
                algorithm: terminal_of(&r.pipeline).to_string(),
                performance: 0.0,
                computational_effort: (r.cpu_ratio / max_cpu).clamp(0.0, 1.0),
                ram_usage: (r.mem_ratio / max_mem).clamp(0.0, 1.0),
            },
        })
        .collect();
    if !base.is_empty() {
        updates.push(KbUpdate {
            algorithm: terminal_of(baseline_id).to_string(),
            performance: 0.0,
            computational_effort: 1.0 / max_cpu,
            ram_usage: 1.0 / max_mem,
        });
    }

    let p_best = survivors.first().cloned();
    let table = RatingTable { budget, baseline: baseline_id.to_string(), rows, survivors, eliminated };
    Ok((table, p_best, updates))
}
