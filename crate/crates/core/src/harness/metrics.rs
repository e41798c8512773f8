use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::StepOutcome;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "epoch,utility,u1,u2,u3,u4,u5,delay,drops,queuing,payment,penalty,loss";

/// One decision epoch as seen by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub utility: f64,
    pub components: [f64; 5],
    /// Execution delay capped at the epoch length (seconds).
    pub delay: f64,
    pub drops: u32,
    pub queuing: u32,
    pub payment: f64,
    pub penalty: u32,
    pub loss: Option<f64>,
}

impl EpochRecord {
    pub fn from_outcome(epoch: u64, outcome: &StepOutcome, loss: Option<f64>) -> Self {
        let d = &outcome.diagnostics;
        Self {
            epoch,
            utility: outcome.utility.total,
            components: outcome.utility.components,
            delay: outcome.utility.raw.delay,
            drops: d.drops,
            queuing: d.queuing,
            payment: d.payment,
            penalty: d.penalty,
            loss,
        }
    }
}

/// Per-epoch quantities that summaries average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Utility,
    Delay,
    Drops,
    Queuing,
    Payment,
    Penalty,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Utility,
        Metric::Delay,
        Metric::Drops,
        Metric::Queuing,
        Metric::Payment,
        Metric::Penalty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Utility => "utility",
            Metric::Delay => "delay",
            Metric::Drops => "drops",
            Metric::Queuing => "queuing",
            Metric::Payment => "payment",
            Metric::Penalty => "penalty",
        }
    }

    pub fn of(self, r: &EpochRecord) -> f64 {
        match self {
            Metric::Utility => r.utility,
            Metric::Delay => r.delay,
            Metric::Drops => f64::from(r.drops),
            Metric::Queuing => f64::from(r.queuing),
            Metric::Payment => r.payment,
            Metric::Penalty => f64::from(r.penalty),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub algorithm: String,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
}

/// Trailing mean over at most `window` entries ending at each position.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl MetricsSeries {
    pub fn new(algorithm: impl Into<String>, seed: u64) -> Self {
        Self {
            algorithm: algorithm.into(),
            seed,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.records.iter().map(|r| metric.of(r)).collect()
    }

    pub fn moving_average(&self, metric: Metric, window: usize) -> Result<Vec<f64>> {
        if window == 0 || window > self.len() {
            return Err(Error::Contract(format!("window {window} outside 1..={}", self.len())));
        }
        Ok(moving_average(&self.values(metric), window))
    }

    /// Mean training loss over the epochs in `(epoch - window, epoch]` that
    /// took a gradient step; `None` when there were none.
    pub fn loss_average_at(&self, epoch: u64, window: u64) -> Option<f64> {
        let lo = epoch.saturating_sub(window);
        let losses = self
            .records
            .iter()
            .filter(|r| r.epoch > lo && r.epoch <= epoch)
            .filter_map(|r| r.loss);
        let m = mean(losses);
        m.is_finite().then_some(m)
    }

    /// Mean of `metric` over the last `tail` epochs (all of them when the
    /// run is shorter).
    pub fn tail_mean(&self, metric: Metric, tail: usize) -> f64 {
        let start = self.len().saturating_sub(tail);
        mean(self.records[start..].iter().map(|r| metric.of(r)))
    }

    pub fn whole_mean(&self, metric: Metric) -> f64 {
        mean(self.records.iter().map(|r| metric.of(r)))
    }

    pub fn summary(&self, tail: usize) -> RunSummary {
        RunSummary {
            algorithm: self.algorithm.clone(),
            seed: self.seed,
            grid_value: None,
            epochs: self.len() as u64,
            tail: Metric::ALL.map(|m| self.tail_mean(m, tail)),
            whole: Metric::ALL.map(|m| self.whole_mean(m)),
        }
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            write!(out, "{},{}", r.epoch, fmt_f64(r.utility))?;
            for c in r.components {
                write!(out, ",{}", fmt_f64(c))?;
            }
            write!(
                out,
                ",{},{},{},{},{},",
                fmt_f64(r.delay),
                r.drops,
                r.queuing,
                fmt_f64(r.payment),
                r.penalty
            )?;
            if let Some(l) = r.loss {
                write!(out, "{}", fmt_f64(l))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Tail-window and whole-run means of [`Metric::ALL`], in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub seed: u64,
    pub grid_value: Option<f64>,
    pub epochs: u64,
    pub tail: [f64; 6],
    pub whole: [f64; 6],
}

impl RunSummary {
    pub fn tail_of(&self, metric: Metric) -> f64 {
        self.tail[Metric::ALL.iter().position(|&m| m == metric).expect("listed")]
    }

    pub fn whole_of(&self, metric: Metric) -> f64 {
        self.whole[Metric::ALL.iter().position(|&m| m == metric).expect("listed")]
    }
}

pub fn summary_header() -> String {
    let mut h = String::from("grid_value,algorithm,seed,epochs");
    for m in Metric::ALL {
        h.push_str(&format!(",tail_{}", m.name()));
    }
    for m in Metric::ALL {
        h.push_str(&format!(",mean_{}", m.name()));
    }
    h
}

pub fn write_summary_csv(rows: &[RunSummary], mut out: impl Write) -> Result<()> {
    writeln!(out, "{}", summary_header())?;
    for r in rows {
        let grid = r.grid_value.map(fmt_f64).unwrap_or_default();
        write!(out, "{grid},{},{},{}", r.algorithm, r.seed, r.epochs)?;
        for v in r.tail.iter().chain(&r.whole) {
            write!(out, ",{}", fmt_f64(*v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

pub fn emit_metrics(series: &MetricsSeries, path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let file = fs::File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);
    match format {
        OutputFormat::Csv => series.write_csv(&mut out)?,
        OutputFormat::Json => serde_json::to_writer(&mut out, series)?,
    }
    out.flush()?;
    Ok(())
}

pub fn load_metrics_json(path: impl AsRef<Path>) -> Result<MetricsSeries> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
