// SPDX-License-Identifier: Apache-2.0
//! Metrics computed from the raw per-transaction log, and their renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::WorkloadSpec;
use crate::canonical;

/// One row of the raw log. Offsets are nanoseconds from the run's start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub index: u64,
    pub submitted_ns: u64,
    /// `None` when the transaction failed or committed invalid.
    pub committed_ns: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TxRecord {
    pub fn latency_ns(&self) -> Option<u64> {
        self.committed_ns.map(|c| c.saturating_sub(self.submitted_ns))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadModel {
    ClosedLoop,
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Submitted transactions per second over the submission window.
    pub send_rate: f64,
    /// Committed transactions per second over the whole run.
    pub throughput: f64,
    /// Seconds.
    pub latency_min: f64,
    pub latency_avg: f64,
    pub latency_max: f64,
    pub failed: u64,
    pub committed: u64,
    pub tx_count: u64,
    /// Seconds from the first submission to the last commit.
    pub duration: f64,
    pub load_model: LoadModel,
    pub config: WorkloadSpec,
}

const NANOS: f64 = 1e9;

impl MetricsReport {
    /// The only place report statistics are computed.
    pub fn from_log(log: &[TxRecord], config: &WorkloadSpec, load_model: LoadModel) -> Self {
        let latencies: Vec<u64> = log.iter().filter_map(TxRecord::latency_ns).collect();
        let committed = latencies.len() as u64;
        let tx_count = log.len() as u64;
        let first_submit = log.iter().map(|r| r.submitted_ns).min().unwrap_or(0);
        let last_submit = log.iter().map(|r| r.submitted_ns).max().unwrap_or(0);
        let last_event = log
            .iter()
            .map(|r| r.committed_ns.unwrap_or(r.submitted_ns))
            .max()
            .unwrap_or(0);
        let duration = (last_event - first_submit) as f64 / NANOS;
        let send_window = (last_submit - first_submit) as f64 / NANOS;
        let send_rate = match (tx_count, send_window > 0.0) {
            (0, _) => 0.0,
            (n, true) => (n - 1) as f64 / send_window,
            (n, false) if duration > 0.0 => n as f64 / duration,
            _ => 0.0,
        };
        let throughput = if duration > 0.0 { committed as f64 / duration } else { 0.0 };
        let (min, max, sum) = latencies
            .iter()
            .fold((u64::MAX, 0u64, 0u128), |(lo, hi, s), &l| (lo.min(l), hi.max(l), s + l as u128));
        let (latency_min, latency_avg, latency_max) = if committed == 0 {
            (0.0, 0.0, 0.0)
        } else {
            (min as f64 / NANOS, (sum as f64 / committed as f64) / NANOS, max as f64 / NANOS)
        };
        Self {
            send_rate,
            throughput,
            latency_min,
            latency_avg,
            latency_max,
            failed: tx_count - committed,
            committed,
            tx_count,
            duration,
            load_model,
            config: config.clone(),
        }
    }
}

/// Figures reported for a two-organisation Fabric 2.2 deployment measured
/// with Caliper. The load model behind them is unknown. Used as a formatting
/// fixture only, never as a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceFigures {
    pub throughput: f64,
    pub latency_min: f64,
    pub latency_avg: f64,
    pub latency_max: f64,
    pub load_model: &'static str,
}

pub const FABRIC_REFERENCE: ReferenceFigures = ReferenceFigures {
    throughput: 91.6,
    latency_min: 0.01,
    latency_avg: 0.20,
    latency_max: 0.65,
    load_model: "unknown load model",
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Human,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" | "table" => Ok(ReportFormat::Human),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format '{other}' (human|json|csv)")),
        }
    }
}

pub const CSV_HEADER: &str = "send_rate,throughput,latency_min,latency_avg,latency_max,failed,committed,tx_count,duration";

pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => canonical::to_string(report).expect("report encodes"),
        ReportFormat::Csv => format!(
            "{CSV_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
            report.send_rate,
            report.throughput,
            report.latency_min,
            report.latency_avg,
            report.latency_max,
            report.failed,
            report.committed,
            report.tx_count,
            report.duration
        ),
        ReportFormat::Human => {
            let mut out = String::new();
            let rows = [
                ("send_rate", format!("{:.2} tx/s", report.send_rate)),
                ("throughput", format!("{:.2} tx/s", report.throughput)),
                ("latency_min", format!("{:.4} s", report.latency_min)),
                ("latency_avg", format!("{:.4} s", report.latency_avg)),
                ("latency_max", format!("{:.4} s", report.latency_max)),
                ("failed", report.failed.to_string()),
                ("committed", format!("{} / {}", report.committed, report.tx_count)),
                ("duration", format!("{:.3} s", report.duration)),
            ];
            let _ = writeln!(out, "{:<12} value", "metric");
            for (name, value) in rows {
                let _ = writeln!(out, "{name:<12} {value}");
            }
            let _ = writeln!(
                out,
                "workload     {} ({} workers, orderer batch {} / {} ms, {:?})",
                report.config.workload.name(),
                report.config.worker_count,
                report.config.orderer.batch_size,
                report.config.orderer.batch_timeout.as_millis(),
                report.load_model
            );
            out
        }
    }
}
