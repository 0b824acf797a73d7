//! Method comparison: per-variant mean values, wall times and relative gaps
//! against a reference method, with CSV and JSON output.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Solution;
use crate::instance::Instance;
use crate::policy::{rollout, DecodeMode, PolicyError, PolicyParams};
use crate::solvers::{exact_oracle, greedy_heuristic, random_policy_rollout, SolverError};
use crate::Rng;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no instances to evaluate")]
    NoInstances,
    #[error("reference method {0} is not among the evaluated methods")]
    UnknownReference(String),
    #[error("oracle requested on an instance with {artificial} artificial and {original} original nodes")]
    InstanceTooLarge { artificial: usize, original: usize },
    #[error("gap table: {0}")]
    Table(String),
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<SolverError> for EvalError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InstanceTooLarge { artificial, original } => {
                EvalError::InstanceTooLarge { artificial, original }
            }
            other => EvalError::Solver(other),
        }
    }
}

/// Relative gap `(y - y_other) / y` of a method against the reference value
/// `y`; undefined unless `y > 0`.
pub fn gap(y: f64, y_other: f64) -> Option<f64> {
    (y > 0.0).then(|| (y - y_other) / y)
}

/// A gap fraction as a percentage with two decimals, ties to even.
pub fn format_gap(g: f64) -> String {
    // Snap away binary noise first so decimal ties round as written.
    let hundredths = (g * 1e4 * 1e6).round() / 1e6;
    let r = hundredths.round_ties_even() / 100.0;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.2}%")
}

#[allow(clippy::large_enum_variant)]
pub enum Method {
    Greedy,
    /// Uniform random rollouts from a fixed seed.
    Random {
        seed: u64,
    },
    /// Exact search; tiny instances only.
    Oracle,
    /// Greedy decoding of a trained policy.
    Neural {
        name: String,
        params: PolicyParams,
    },
}

impl Method {
    pub fn name(&self) -> &str {
        match self {
            Method::Greedy => "greedy",
            Method::Random { .. } => "random",
            Method::Oracle => "oracle",
            Method::Neural { name, .. } => name,
        }
    }

    /// Learned methods report time for the whole batch, the others per
    /// instance.
    pub fn batch_timed(&self) -> bool {
        matches!(self, Method::Neural { .. })
    }

    fn solve_all(&self, set: &[&Instance]) -> Result<Vec<(Solution, f64)>, EvalError> {
        let mut rng = Rng::seed_from_u64(match self {
            Method::Random { seed } => *seed,
            _ => 0,
        });
        set.iter()
            .map(|inst| {
                let t = Instant::now();
                let sol = match self {
                    Method::Greedy => greedy_heuristic(inst)?,
                    Method::Random { .. } => random_policy_rollout(inst, &mut rng)?,
                    Method::Oracle => exact_oracle(inst)?,
                    Method::Neural { params, .. } => {
                        rollout(inst, params, DecodeMode::Greedy, 1, &mut rng)?.remove(0).0
                    }
                };
                Ok((sol, t.elapsed().as_secs_f64()))
            })
            .collect()
    }
}

/// One row of a gap table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub variant: String,
    pub method: String,
    /// Mean value over the variant's instances.
    pub value: f64,
    /// The reference method's mean value on the same instances.
    pub reference: f64,
    pub gap: Option<f64>,
    /// Batch total for learned methods, per-instance mean otherwise.
    pub time_s: f64,
}

/// Per-instance result, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub variant: String,
    pub method: String,
    pub instance: usize,
    pub value: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reference: String,
    pub records: Vec<GapRecord>,
    pub samples: Vec<Sample>,
}

/// Runs every method on every instance and tabulates per-variant means and
/// gaps against `reference`.
pub fn evaluate(instances: &[Instance], methods: &[Method], reference: &str) -> Result<Evaluation, EvalError> {
    if instances.is_empty() {
        return Err(EvalError::NoInstances);
    }
    if !methods.iter().any(|m| m.name() == reference) {
        return Err(EvalError::UnknownReference(reference.into()));
    }
    let mut groups: BTreeMap<String, Vec<(usize, &Instance)>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        groups.entry(inst.attrs.name()).or_default().push((i, inst));
    }
    let mut records = Vec::new();
    let mut samples = Vec::new();
    for (variant, members) in &groups {
        let set: Vec<&Instance> = members.iter().map(|(_, inst)| *inst).collect();
        let n = set.len() as f64;
        let mut rows = Vec::new();
        for m in methods {
            let out = m.solve_all(&set)?;
            let total: f64 = out.iter().map(|(_, t)| t).sum();
            // `+ 0.0` turns an empty sum's -0.0 into 0.0.
            let value = out.iter().map(|(s, _)| s.value).sum::<f64>() / n + 0.0;
            let time_s = if m.batch_timed() { total } else { total / n };
            for ((idx, _), (sol, t)) in members.iter().zip(&out) {
                samples.push(Sample {
                    variant: variant.clone(),
                    method: m.name().into(),
                    instance: *idx,
                    value: sol.value,
                    time_s: *t,
                });
            }
            rows.push((m.name().to_string(), value, time_s));
        }
        let y = rows
            .iter()
            .find(|(name, ..)| name == reference)
            .map(|r| r.1)
            .expect("reference checked");
        for (method, value, time_s) in rows {
            records.push(GapRecord {
                variant: variant.clone(),
                gap: gap(y, value),
                method,
                value,
                reference: y,
                time_s,
            });
        }
    }
    Ok(Evaluation {
        reference: reference.into(),
        records,
        samples,
    })
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    variant: String,
    method: String,
    value: f64,
    gap: Option<f64>,
    time_s: f64,
}

/// Writes the gap table with header `variant,method,value,gap,time_s`; gaps
/// are fractions, empty when undefined.
pub fn write_gap_csv<W: Write>(records: &[GapRecord], w: W) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(CsvRow {
            variant: r.variant.clone(),
            method: r.method.clone(),
            value: r.value,
            gap: r.gap,
            time_s: r.time_s,
        })?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a gap table back; each record's reference value is taken from the
/// `reference` method's row of the same variant.
pub fn read_gap_csv<R: Read>(r: R, reference: &str) -> Result<Vec<GapRecord>, EvalError> {
    let rows: Vec<CsvRow> = csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>()?;
    let refs: BTreeMap<&str, f64> = rows
        .iter()
        .filter(|r| r.method == reference)
        .map(|r| (r.variant.as_str(), r.value))
        .collect();
    rows.iter()
        .map(|r| {
            let y = *refs
                .get(r.variant.as_str())
                .ok_or_else(|| EvalError::Table(format!("variant {} has no {reference} row", r.variant)))?;
            Ok(GapRecord {
                variant: r.variant.clone(),
                method: r.method.clone(),
                value: r.value,
                reference: y,
                gap: r.gap,
                time_s: r.time_s,
            })
        })
        .collect()
}

/// One row per (variant, method, instance) for external plotting.
pub fn write_long_csv<W: Write>(samples: &[Sample], w: W) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    for s in samples {
        out.serialize(s)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_long_csv<R: Read>(r: R) -> Result<Vec<Sample>, EvalError> {
    Ok(csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>()?)
}

/// Fixed-width text rendering with percentage gaps.
pub fn render_table(records: &[GapRecord]) -> String {
    let mut s = format!(
        "{:<12} {:<12} {:>10} {:>9} {:>10}\n",
        "variant", "method", "value", "gap", "time_s"
    );
    for r in records {
        let g = r.gap.map(format_gap).unwrap_or_else(|| "n/a".into());
        s.push_str(&format!(
            "{:<12} {:<12} {:>10.4} {:>9} {:>10.4}\n",
            r.variant, r.method, r.value, g, r.time_s
        ));
    }
    s
}
