//! Measured resilience from request logs and model-vs-live comparison.
//!
//! Log format: one request per line, `timestamp,outcome[,endpoint]`, where
//! `outcome` is an HTTP status code or the literal `socket_error`. Lines
//! starting with `#` are comments.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::aggregate_rounds;

/// Relative error at or below which the model is considered accurate.
pub const RELATIVE_ERROR_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Status(u16),
    SocketError,
}

impl Outcome {
    /// 5xx responses and socket errors count as failures; 4xx do not.
    pub fn is_failure(self) -> bool {
        match self {
            Outcome::Status(code) => (500..=599).contains(&code),
            Outcome::SocketError => true,
        }
    }

    pub fn is_client_error(self) -> bool {
        matches!(self, Outcome::Status(code) if (400..=499).contains(&code))
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "socket_error" {
            return Ok(Outcome::SocketError);
        }
        match s.parse::<u16>() {
            Ok(code) if (100..=599).contains(&code) => Ok(Outcome::Status(code)),
            _ => Err(format!("invalid outcome {s:?}")),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Status(code) => write!(f, "{code}"),
            Outcome::SocketError => f.write_str("socket_error"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub timestamp: f64,
    pub outcome: Outcome,
    pub endpoint: Option<String>,
}

pub fn parse_request_log(text: &str) -> Result<Vec<RequestRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let loc = format!("line {line}");
        if row.iter().all(str::is_empty) {
            continue;
        }
        if !(2..=3).contains(&row.len()) {
            return Err(Error::parse(
                loc,
                format!("expected 2 or 3 fields, found {}", row.len()),
            ));
        }
        let timestamp: f64 = row[0]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| Error::parse(&loc, format!("invalid timestamp {:?}", &row[0])))?;
        let outcome: Outcome = row[1].parse().map_err(|e| Error::parse(&loc, e))?;
        let endpoint = row.get(2).filter(|e| !e.is_empty()).map(str::to_string);
        out.push(RequestRecord {
            timestamp,
            outcome,
            endpoint,
        });
    }
    Ok(out)
}

pub fn write_request_log<W: Write>(records: &[RequestRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for r in records {
        let ts = r.timestamp.to_string();
        let outcome = r.outcome.to_string();
        let res = match &r.endpoint {
            Some(e) => w.write_record([ts.as_str(), outcome.as_str(), e.as_str()]),
            None => w.write_record([ts.as_str(), outcome.as_str()]),
        };
        res.map_err(|e| Error::parse("log output", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("log output", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiveResilience {
    pub total: u64,
    pub failed: u64,
    pub r_live: f64,
}

impl LiveResilience {
    pub fn from_counts(total: u64, failed: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::Argument("no requests to analyze".into()));
        }
        if failed > total {
            return Err(Error::Argument(format!(
                "{failed} failures out of {total} requests"
            )));
        }
        Ok(LiveResilience {
            total,
            failed,
            r_live: 1.0 - failed as f64 / total as f64,
        })
    }

    /// Combines two disjoint log partitions.
    pub fn merge(&self, other: &LiveResilience) -> Self {
        LiveResilience::from_counts(self.total + other.total, self.failed + other.failed)
            .expect("both sides have requests")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AnalyzeOptions {
    /// Half-open `[start, end)` in log timestamp units.
    pub window: Option<(f64, f64)>,
    /// Leave 4xx responses out of the denominator instead of counting them
    /// as successes.
    pub drop_4xx: bool,
}

pub fn analyze_request_log(records: &[RequestRecord], window: Option<(f64, f64)>) -> Result<LiveResilience> {
    analyze_request_log_with(
        records,
        &AnalyzeOptions {
            window,
            drop_4xx: false,
        },
    )
}

pub fn analyze_request_log_with(records: &[RequestRecord], opts: &AnalyzeOptions) -> Result<LiveResilience> {
    let in_window = |r: &&RequestRecord| match opts.window {
        Some((start, end)) => r.timestamp >= start && r.timestamp < end,
        None => true,
    };
    let (mut total, mut failed) = (0u64, 0u64);
    for r in records.iter().filter(in_window) {
        if opts.drop_4xx && r.outcome.is_client_error() {
            continue;
        }
        total += 1;
        failed += u64::from(r.outcome.is_failure());
    }
    if total == 0 {
        return Err(Error::Argument(
            "no requests fall inside the analysis window".into(),
        ));
    }
    LiveResilience::from_counts(total, failed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Denominator {
    Model,
    #[default]
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub runs: usize,
    pub model_mean: f64,
    pub model_sd: f64,
    pub live_mean: f64,
    pub live_sd: f64,
    /// `live_mean - model_mean`.
    pub delta: f64,
    /// SD of the difference, assuming independent model and live trials.
    pub delta_sd: f64,
    pub denominator: Denominator,
    pub relative_error: Option<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
}

pub fn compare(
    model_rounds: &[f64],
    live_rounds: &[f64],
    scenario: &str,
    denominator: Denominator,
) -> Result<ComparisonRow> {
    let (model_mean, model_sd) =
        aggregate_rounds(model_rounds).map_err(|_| Error::Argument("no model values".into()))?;
    let (live_mean, live_sd) =
        aggregate_rounds(live_rounds).map_err(|_| Error::Argument("no live values".into()))?;
    let delta = live_mean - model_mean;
    let base = match denominator {
        Denominator::Model => model_mean,
        Denominator::Live => live_mean,
    };
    let relative_error = (base != 0.0).then(|| delta.abs() / base.abs());
    let verdict = match relative_error {
        None => Verdict::Indeterminate,
        Some(e) if e <= RELATIVE_ERROR_THRESHOLD => Verdict::Pass,
        Some(_) => Verdict::Fail,
    };
    Ok(ComparisonRow {
        scenario: scenario.to_string(),
        runs: model_rounds.len().max(live_rounds.len()),
        model_mean,
        model_sd,
        live_mean,
        live_sd,
        delta,
        delta_sd: model_sd.hypot(live_sd),
        denominator,
        relative_error,
        threshold: RELATIVE_ERROR_THRESHOLD,
        verdict,
    })
}

/// A comparison row together with the trial values it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrials {
    pub scenario: String,
    pub model: Vec<f64>,
    pub live: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub scenario: String,
    pub trial: usize,
    pub source: String,
    pub value: f64,
}

/// One row per (scenario, trial, source).
pub fn plot_rows(trials: &[ScenarioTrials]) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for t in trials {
        for (source, values) in [("model", &t.model), ("live", &t.live)] {
            rows.extend(values.iter().enumerate().map(|(i, &value)| PlotRow {
                scenario: t.scenario.clone(),
                trial: i + 1,
                source: source.to_string(),
                value,
            }));
        }
    }
    rows
}

/// CSV with header `scenario,trial,source,value`.
pub fn write_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::parse("csv output", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}
