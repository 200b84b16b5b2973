//! Per-iteration run records and their CSV serialization.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DVector;

use crate::error::{Result, SekiError};

pub const TRACE_COLUMNS: &str =
    "k,objective,objective_gap,rel_error,lambda_min,lambda_max,spread,forward_evals,wall_time_s";

/// State of the tracked iterate at the start of iteration `k`, with the forward
/// evaluations consumed up to and including iteration `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub objective: f64,
    pub objective_gap: Option<f64>,
    pub rel_error: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub spread: Option<f64>,
    pub forward_evals: u64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    /// Ordered `key=value` metadata written as `#` lines.
    pub header: Vec<(String, String)>,
    pub records: Vec<TraceRecord>,
    /// Iterate after the last update (ensemble mean for SEKI).
    pub final_iterate: DVector<f64>,
    /// Phase-two scale fixed at freeze time, if any.
    pub frozen_scale: Option<f64>,
}

/// 17 significant digits, so values round-trip bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl RunTrace {
    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn total_forward_evals(&self) -> u64 {
        self.records.last().map_or(0, |r| r.forward_evals)
    }

    /// First record whose cumulative forward evaluations reach `budget`, or the last
    /// record when the run is shorter.
    pub fn at_budget(&self, budget: u64) -> Option<&TraceRecord> {
        self.records
            .iter()
            .find(|r| r.forward_evals >= budget)
            .or_else(|| self.records.last())
    }

    pub fn has_non_finite(&self) -> bool {
        self.records.iter().any(|r| {
            !r.objective.is_finite()
                || r.objective_gap.is_some_and(|v| !v.is_finite())
                || r.rel_error.is_some_and(|v| !v.is_finite())
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(TRACE_COLUMNS);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.k,
                fmt_f64(r.objective),
                fmt_opt(r.objective_gap),
                fmt_opt(r.rel_error),
                fmt_opt(r.lambda_min),
                fmt_opt(r.lambda_max),
                fmt_opt(r.spread),
                r.forward_evals,
                fmt_f64(r.wall_time),
            );
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Parse the format written by [`RunTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<RunTrace> {
        let mut trace = RunTrace::default();
        let mut seen_columns = false;
        for (lineno, line) in text.lines().enumerate() {
            if let Some(meta) = line.strip_prefix("# ") {
                let (k, v) = meta.split_once('=').unwrap_or((meta, ""));
                trace.meta(k, v);
                continue;
            }
            if !seen_columns {
                if line != TRACE_COLUMNS {
                    return Err(SekiError::invalid("trace", format!("unexpected header `{line}`")));
                }
                seen_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(SekiError::invalid("trace", format!("line {}: expected 9 fields", lineno + 1)));
            }
            let bad = |what: &str| SekiError::invalid("trace", format!("line {}: bad {what}", lineno + 1));
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let opt = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s, what).map(Some)
                }
            };
            trace.records.push(TraceRecord {
                k: fields[0].parse().map_err(|_| bad("k"))?,
                objective: num(fields[1], "objective")?,
                objective_gap: opt(fields[2], "objective_gap")?,
                rel_error: opt(fields[3], "rel_error")?,
                lambda_min: opt(fields[4], "lambda_min")?,
                lambda_max: opt(fields[5], "lambda_max")?,
                spread: opt(fields[6], "spread")?,
                forward_evals: fields[7].parse().map_err(|_| bad("forward_evals"))?,
                wall_time: num(fields[8], "wall_time_s")?,
            });
        }
        Ok(trace)
    }
}
