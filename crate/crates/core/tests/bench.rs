// SPDX-License-Identifier: Apache-2.0
use std::time::Duration;

use tips_core::bench::{
    emit_report, run_benchmark, sweep, BenchError, LoadModel, MetricsReport, ReportFormat, TxRecord, Workload, WorkloadSpec,
    FABRIC_REFERENCE,
};
use tips_core::ledger::OrdererConfig;

/// Recomputes the headline statistics from the raw log, independently of
/// the report code.
fn recompute(log: &[TxRecord]) -> (u64, f64, f64, f64, f64) {
    let mut lat: Vec<f64> =
        log.iter().filter_map(|r| r.committed_ns.map(|c| (c - r.submitted_ns) as f64 * 1e-9)).collect();
    lat.sort_by(f64::total_cmp);
    let start = log.iter().map(|r| r.submitted_ns).min().unwrap();
    let end = log.iter().map(|r| r.committed_ns.unwrap_or(r.submitted_ns)).max().unwrap();
    let avg = lat.iter().sum::<f64>() / lat.len() as f64;
    let throughput = lat.len() as f64 / ((end - start) as f64 * 1e-9);
    (lat.len() as u64, lat[0], avg, *lat.last().unwrap(), throughput)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn assert_consistent(report: &MetricsReport, log: &[TxRecord]) {
    let (committed, min, avg, max, throughput) = recompute(log);
    assert_eq!(report.committed, committed);
    assert_eq!(report.failed, log.len() as u64 - committed);
    assert!(close(report.latency_min, min) && close(report.latency_avg, avg) && close(report.latency_max, max));
    assert!(close(report.throughput, throughput));
    assert!(report.latency_min <= report.latency_avg && report.latency_avg <= report.latency_max);
}

#[test]
fn hand_computed_log() {
    let spec = WorkloadSpec::new(Workload::ReadChecksum, 4, 1);
    let log = vec![
        TxRecord { index: 0, submitted_ns: 0, committed_ns: Some(100_000_000), error: None },
        TxRecord { index: 1, submitted_ns: 250_000_000, committed_ns: Some(300_000_000), error: None },
        TxRecord { index: 2, submitted_ns: 500_000_000, committed_ns: None, error: Some("x".into()) },
        TxRecord { index: 3, submitted_ns: 750_000_000, committed_ns: Some(1_000_000_000), error: None },
    ];
    let r = MetricsReport::from_log(&log, &spec, LoadModel::ClosedLoop);
    assert_eq!((r.committed, r.failed, r.tx_count), (3, 1, 4));
    assert!(close(r.send_rate, 4.0)); // 3 intervals over 0.75 s
    assert!(close(r.throughput, 3.0)); // 3 commits over 1 s
    assert!(close(r.latency_min, 0.05) && close(r.latency_max, 0.25));
    assert!(close(r.latency_avg, (0.1 + 0.05 + 0.25) / 3.0));
    assert!(close(r.duration, 1.0));
}

#[test]
fn closed_loop_run_is_consistent_with_its_log() {
    let spec = WorkloadSpec::new(Workload::GetAssetsFromBatch { batch_size: 10 }, 30, 3);
    let run = run_benchmark(&spec).unwrap();
    assert_eq!(run.log.len(), 30);
    assert_eq!(run.report.failed, 0, "{:?}", run.log.iter().find_map(|r| r.error.clone()));
    assert_eq!(run.report.load_model, LoadModel::ClosedLoop);
    assert_consistent(&run.report, &run.log);
}

#[test]
fn open_loop_run_paces_submissions() {
    let mut spec = WorkloadSpec::new(Workload::ReadChecksum, 20, 2);
    spec.target_send_rate = Some(40.0);
    spec.orderer = OrdererConfig { batch_size: 5, batch_timeout: Duration::from_millis(20) };
    let run = run_benchmark(&spec).unwrap();
    assert_eq!(run.report.failed, 0);
    assert_eq!(run.report.load_model, LoadModel::OpenLoop);
    // Submissions cannot run ahead of the schedule.
    for r in &run.log {
        assert!(r.submitted_ns as f64 >= r.index as f64 / 40.0 * 1e9 - 1e6, "{r:?}");
    }
    assert!(run.report.send_rate <= 40.0 * 1.05, "{}", run.report.send_rate);
    assert_consistent(&run.report, &run.log);
}

#[test]
fn round_trip_workload_completes() {
    let spec = WorkloadSpec::new(Workload::SendReceiveRoundtrip, 4, 1);
    let run = run_benchmark(&spec).unwrap();
    assert_eq!(run.report.failed, 0, "{:?}", run.log);
    assert_consistent(&run.report, &run.log);
}

#[test]
fn invalid_specs_and_empty_sweeps_are_refused() {
    assert!(matches!(sweep(&[]), Err(BenchError::EmptySweep)));
    let mut spec = WorkloadSpec::new(Workload::ReadChecksum, 0, 1);
    assert!(matches!(run_benchmark(&spec), Err(BenchError::InvalidWorkload(_))));
    spec.tx_count = 1;
    spec.target_send_rate = Some(-1.0);
    assert!(matches!(run_benchmark(&spec), Err(BenchError::InvalidWorkload(_))));
}

#[test]
fn report_formats() {
    let spec = WorkloadSpec::new(Workload::ReadChecksum, 2, 1);
    let log = vec![
        TxRecord { index: 0, submitted_ns: 0, committed_ns: Some(10_000_000), error: None },
        TxRecord { index: 1, submitted_ns: 5_000_000, committed_ns: Some(20_000_000), error: None },
    ];
    let r = MetricsReport::from_log(&log, &spec, LoadModel::ClosedLoop);
    let json = emit_report(&r, ReportFormat::Json);
    let back: MetricsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    let csv = emit_report(&r, ReportFormat::Csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    let human = emit_report(&r, ReportFormat::Human);
    assert!(human.contains("read_checksum"));
    assert!("csv".parse::<ReportFormat>().is_ok() && "yaml".parse::<ReportFormat>().is_err());
    let r = FABRIC_REFERENCE;
    assert_eq!((r.throughput, r.latency_min, r.latency_avg, r.latency_max), (91.6, 0.01, 0.20, 0.65));
}

#[test]
fn spec_json_defaults_the_orderer() {
    let spec: WorkloadSpec =
        serde_json::from_str(r#"{"workload":{"type":"get_assets_from_batch","batch_size":10},"tx_count":5,"worker_count":2}"#)
            .unwrap();
    assert_eq!(spec.orderer, OrdererConfig::default());
    assert_eq!(spec.workload.name(), "get_assets_from_batch(10)");
    assert_eq!(spec.batching_model_throughput(), None);
}
