//! Run traces and summaries as CSV.
//!
//! A trace file starts with a `# trace-schema: N` line followed by a header
//! and one row per fading block:
//!
//! | column | content |
//! |---|---|
//! | `t` | block index, from 1 |
//! | `phase` | `clustering` or `schedule` |
//! | `action` | on/off bits `a_1…a_K` |
//! | `cluster_arms` | per-cluster sub-action indices joined by `;` (bandits only) |
//! | `sum_se` | instantaneous sum spectral efficiency |
//! | `sum_throughput` | `Σ r_k` over ACKed links, after feedback errors |
//! | `acks` | ACK bits |
//! | `rates` | per-link instantaneous rates joined by `;` |
//! | `regret_optimal` | cumulative regret against the best action (empty when not tracked) |
//! | `regret_quasi` | cumulative regret against the clustered quasi-optimum (empty when not tracked) |
//!
//! Floats are written in shortest round-trip form, so reading a trace back
//! reproduces every value bit for bit.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

const TRACE_HEADER: [&str; 10] = [
    "t",
    "phase",
    "action",
    "cluster_arms",
    "sum_se",
    "sum_throughput",
    "acks",
    "rates",
    "regret_optimal",
    "regret_quasi",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Clustering,
    Schedule,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Clustering => "clustering",
            Phase::Schedule => "schedule",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub phase: Phase,
    pub action: String,
    pub cluster_arms: Option<Vec<usize>>,
    pub sum_se: f64,
    pub sum_throughput: f64,
    pub acks: String,
    pub rates: Vec<f64>,
    pub regret_optimal: Option<f64>,
    pub regret_quasi: Option<f64>,
}

/// Per (scheduler, seed) results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheduler: String,
    pub kind: String,
    pub seed: u64,
    pub blocks: usize,
    /// Blocks excluded from the averages (the longest clustering phase in the run).
    pub excluded_blocks: usize,
    /// Average sum spectral efficiency over the included blocks.
    pub r_avg: f64,
    /// Average observed sum throughput over the included blocks.
    pub mean_throughput: f64,
    pub regret_optimal: Option<f64>,
    pub regret_quasi: Option<f64>,
    /// Cluster partition used, `0 3|1 2` style; empty when unclustered.
    pub partition: String,
    /// Utility evaluations spent by a model-based optimiser.
    pub evaluations: Option<u64>,
}

/// Mean and standard error of the per-seed summaries of one scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scheduler: String,
    pub seeds: usize,
    pub r_avg_mean: f64,
    pub r_avg_stderr: f64,
    pub throughput_mean: f64,
    pub throughput_stderr: f64,
    pub regret_optimal_mean: Option<f64>,
    pub regret_optimal_stderr: Option<f64>,
    pub regret_quasi_mean: Option<f64>,
    pub regret_quasi_stderr: Option<f64>,
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut out = out;
    writeln!(out, "# trace-schema: {TRACE_SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.phase.as_str().to_string(),
            r.action.clone(),
            r.cluster_arms.as_deref().map(join).unwrap_or_default(),
            r.sum_se.to_string(),
            r.sum_throughput.to_string(),
            r.acks.clone(),
            join(&r.rates),
            opt(r.regret_optimal),
            opt(r.regret_quasi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_to_string(rows: &[TraceRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_trace(&mut buf, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

fn parse_f64(field: &str, what: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("trace row {line}: bad {what} `{field}`")))
}

fn parse_opt(field: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, what, line).map(Some)
    }
}

fn is_bits(s: &str) -> bool {
    s.bytes().all(|b| b == b'0' || b == b'1')
}

/// Reads a trace written by [`write_trace`], checking the schema line,
/// the header and every field.
pub fn read_trace<R: BufRead>(mut input: R) -> Result<Vec<TraceRow>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let version = first
        .trim()
        .strip_prefix("# trace-schema:")
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Parse("trace does not start with a `# trace-schema:` line".into()))?;
    if version != TRACE_SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported trace schema {version} (expected {TRACE_SCHEMA_VERSION})"
        )));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Parse("unexpected trace header".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 1;
        if record.len() != TRACE_HEADER.len() {
            return Err(Error::Parse(format!("trace row {line}: wrong field count")));
        }
        let t = record[0]
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("trace row {line}: bad block index")))?;
        let phase = match &record[1] {
            "clustering" => Phase::Clustering,
            "schedule" => Phase::Schedule,
            other => return Err(Error::Parse(format!("trace row {line}: bad phase `{other}`"))),
        };
        let action = record[2].to_string();
        let acks = record[6].to_string();
        if !is_bits(&action) || !is_bits(&acks) || acks.len() != action.len() {
            return Err(Error::Parse(format!("trace row {line}: malformed action or ACK bits")));
        }
        let cluster_arms = if record[3].is_empty() {
            None
        } else {
            Some(
                record[3]
                    .split(';')
                    .map(|a| a.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Parse(format!("trace row {line}: bad cluster arms")))?,
            )
        };
        let rates = if record[7].is_empty() {
            Vec::new()
        } else {
            record[7]
                .split(';')
                .map(|r| parse_f64(r, "rate", line))
                .collect::<Result<Vec<_>>>()?
        };
        if rates.len() != action.len() {
            return Err(Error::Parse(format!("trace row {line}: rate count does not match K")));
        }
        rows.push(TraceRow {
            t,
            phase,
            action,
            cluster_arms,
            sum_se: parse_f64(&record[4], "sum_se", line)?,
            sum_throughput: parse_f64(&record[5], "sum_throughput", line)?,
            acks,
            rates,
            regret_optimal: parse_opt(&record[8], "regret", line)?,
            regret_quasi: parse_opt(&record[9], "regret", line)?,
        });
    }
    Ok(rows)
}

pub fn read_trace_str(text: &str) -> Result<Vec<TraceRow>> {
    read_trace(text.as_bytes())
}

/// Mean sum SE over rows with `t > excluded`; this is how summaries are computed.
pub fn average_sum_se(rows: &[TraceRow], excluded: usize) -> f64 {
    mean(rows.iter().filter(|r| r.t > excluded).map(|r| r.sum_se))
}

pub fn average_throughput(rows: &[TraceRow], excluded: usize) -> f64 {
    mean(rows.iter().filter(|r| r.t > excluded).map(|r| r.sum_throughput))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Writes CSV records with a leading `# <name>-schema: N` line.
pub fn write_records<W: Write, T: Serialize>(mut out: W, name: &str, records: &[T]) -> Result<()> {
    writeln!(out, "# {name}-schema: {SUMMARY_SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_records`].
pub fn read_records<R: BufRead, T: for<'de> Deserialize<'de>>(mut input: R, name: &str) -> Result<Vec<T>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let expected = format!("# {name}-schema: {SUMMARY_SCHEMA_VERSION}");
    if first.trim() != expected {
        return Err(Error::Parse(format!("expected `{expected}` as the first line")));
    }
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Mean and standard error (`s / sqrt(n)`, zero for one sample).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Groups summaries by scheduler (first-seen order) and reduces them.
pub fn aggregate(summaries: &[RunSummary]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    for s in summaries {
        if !order.contains(&s.scheduler.as_str()) {
            order.push(&s.scheduler);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let group: Vec<&RunSummary> = summaries.iter().filter(|s| s.scheduler == name).collect();
            let col = |f: &dyn Fn(&RunSummary) -> f64| group.iter().map(|s| f(s)).collect::<Vec<_>>();
            let optional = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
                let v: Option<Vec<f64>> = group.iter().map(|s| f(s)).collect();
                v.map(|v| mean_stderr(&v))
            };
            let (r_avg_mean, r_avg_stderr) = mean_stderr(&col(&|s| s.r_avg));
            let (throughput_mean, throughput_stderr) = mean_stderr(&col(&|s| s.mean_throughput));
            let ro = optional(&|s| s.regret_optimal);
            let rq = optional(&|s| s.regret_quasi);
            AggregateRow {
                scheduler: name.to_string(),
                seeds: group.len(),
                r_avg_mean,
                r_avg_stderr,
                throughput_mean,
                throughput_stderr,
                regret_optimal_mean: ro.map(|x| x.0),
                regret_optimal_stderr: ro.map(|x| x.1),
                regret_quasi_mean: rq.map(|x| x.0),
                regret_quasi_stderr: rq.map(|x| x.1),
            }
        })
        .collect()
}
