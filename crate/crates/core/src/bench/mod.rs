// SPDX-License-Identifier: Apache-2.0
//! Workload driver. Each run builds a fresh two-organisation network with two
//! peers per organisation and a majority endorsement policy, runs the
//! workload from concurrent workers, and derives a [`MetricsReport`] from the
//! raw per-transaction log.
//!
//! Without a target send rate, workers are closed-loop: each waits for its
//! transaction to commit before sending the next. With a rate, submissions
//! follow a fixed-interval open-loop schedule and commits are collected
//! asynchronously. Latency runs from the moment a worker starts building the
//! proposal to commit visibility; for the round-trip workload it runs until
//! the recipient has decrypted the bundle and its read receipt committed.

pub mod report;

use std::sync::mpsc::Receiver;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use report::{emit_report, LoadModel, MetricsReport, ReferenceFigures, ReportFormat, TxRecord, FABRIC_REFERENCE};

use crate::clock::SystemClock;
use crate::contract::{ContractOp, PayloadRef};
use crate::crypto::{self, Entropy};
use crate::error::Error;
use crate::exchange::{self, Agent, ThreatBundle};
use crate::identity::Credentials;
use crate::ledger::{ChannelConfig, EndorsedTransaction, EndorsementPolicy, OrdererConfig};
use crate::network::{CommitNotice, Network, NetworkOptions, OrderingMode};
use crate::policy::AccessPolicy;

pub const BENCH_CHANNEL: &str = "bench";
pub const ORGS: [&str; 2] = ["Org1", "Org2"];
/// Assets preloaded for the read workloads.
pub const ASSET_COUNT: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("benchmark setup failed: {0}")]
    Setup(String),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("a sweep needs at least one workload")]
    EmptySweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Workload {
    ReadChecksum,
    GetAssetsFromBatch { batch_size: u32 },
    SendReceiveRoundtrip,
}

impl Workload {
    pub fn name(&self) -> String {
        match self {
            Workload::ReadChecksum => "read_checksum".into(),
            Workload::GetAssetsFromBatch { batch_size } => format!("get_assets_from_batch({batch_size})"),
            Workload::SendReceiveRoundtrip => "send_receive_roundtrip".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub workload: Workload,
    pub tx_count: u64,
    pub worker_count: u32,
    /// Offered load in tx/s; selects the open-loop model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_send_rate: Option<f64>,
    #[serde(default)]
    pub orderer: OrdererConfig,
}

impl WorkloadSpec {
    pub fn new(workload: Workload, tx_count: u64, worker_count: u32) -> Self {
        Self { workload, tx_count, worker_count, target_send_rate: None, orderer: OrdererConfig::default() }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.tx_count < 1 {
            return Err(BenchError::InvalidWorkload("tx_count must be at least 1".into()));
        }
        if self.worker_count < 1 {
            return Err(BenchError::InvalidWorkload("worker_count must be at least 1".into()));
        }
        if self.orderer.batch_size < 1 || self.orderer.batch_timeout.is_zero() {
            return Err(BenchError::InvalidWorkload("orderer batch size and timeout must be positive".into()));
        }
        if self.target_send_rate.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
            return Err(BenchError::InvalidWorkload("target send rate must be positive".into()));
        }
        Ok(())
    }

    pub fn load_model(&self) -> LoadModel {
        if self.target_send_rate.is_some() {
            LoadModel::OpenLoop
        } else {
            LoadModel::ClosedLoop
        }
    }

    /// Expected committed throughput under the batching model: the offered
    /// rate, capped by one full block per batch timeout.
    pub fn batching_model_throughput(&self) -> Option<f64> {
        self.target_send_rate.map(|r| r.min(self.orderer.timer_capacity()))
    }
}

/// A report together with the raw log it was computed from.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: MetricsReport,
    pub log: Vec<TxRecord>,
}

struct Fixture {
    net: Network,
    clients: Vec<Credentials>,
    recipient: Option<Agent>,
}

fn setup(spec: &WorkloadSpec) -> Result<Fixture, BenchError> {
    let fail = |e: Error| BenchError::Setup(format!("{} ({})", e, e.code()));
    let entropy = Entropy::from_os().map_err(|e| BenchError::Setup(e.to_string()))?;
    let options = NetworkOptions { orderer: spec.orderer, peers_per_org: 2, ordering: OrderingMode::Background };
    let net = Network::new(Arc::new(SystemClock), entropy, options).map_err(fail)?;
    net.create_channel(ChannelConfig::new(BENCH_CHANNEL, ORGS, EndorsementPolicy::MajorityOfOrgs)).map_err(fail)?;
    let clients: Vec<Credentials> = ORGS
        .iter()
        .enumerate()
        .map(|(i, org)| net.register(&format!("client{i}"), org, "agent"))
        .collect::<Result<_, _>>()
        .map_err(fail)?;

    let recipient = match spec.workload {
        Workload::SendReceiveRoundtrip => {
            let creds = net.register("recipient", ORGS[1], "agent").map_err(fail)?;
            let key = net.entropy().with(crypto::generate_keypair_with).map_err(|e| fail(e.into()))?;
            let agent = Agent::new(creds, key, "GB").map_err(fail)?;
            exchange::publish_public_key(&net, &agent, BENCH_CHANNEL).map_err(fail)?;
            Some(agent)
        }
        _ => {
            preload_assets(&net, &clients[0]).map_err(fail)?;
            None
        }
    };
    Ok(Fixture { net, clients, recipient })
}

fn preload_assets(net: &Network, client: &Credentials) -> Result<(), Error> {
    let handle = net.channel(BENCH_CHANNEL)?;
    let threshold = handle.read().config().effective_offchain_threshold();
    let mut receivers = Vec::with_capacity(ASSET_COUNT);
    for i in 0..ASSET_COUNT {
        let mut payload = vec![0u8; 64];
        net.entropy().fill(&mut payload);
        let payload = PayloadRef::stage(&payload, threshold, handle.offchain())?;
        let proposal = net.propose(BENCH_CHANNEL, client, ContractOp::PutObject { key: asset_key(i), payload });
        let (endorsements, _) = net.endorse_all(&proposal)?;
        receivers.push(net.submit_with_notice(EndorsedTransaction { proposal, endorsements })?);
    }
    for rx in receivers {
        let notice = rx.recv().map_err(|_| Error::other(crate::ErrorCode::SetupFailure, "preload not committed"))?;
        if !notice.validity.is_valid() {
            return Err(Error::other(crate::ErrorCode::SetupFailure, format!("preload {:?}", notice.validity)));
        }
    }
    Ok(())
}

pub fn asset_key(i: usize) -> String {
    format!("asset-{:03}", i % ASSET_COUNT)
}

fn op_for(workload: Workload, index: u64) -> ContractOp {
    match workload {
        Workload::ReadChecksum => ContractOp::GetChecksum { key: asset_key(index as usize) },
        Workload::GetAssetsFromBatch { batch_size } => ContractOp::GetAssetsFromBatch {
            keys: (0..batch_size as usize).map(|j| asset_key(index as usize * batch_size as usize + j)).collect(),
        },
        Workload::SendReceiveRoundtrip => unreachable!("round trips are not single operations"),
    }
}

enum Outcome {
    Done { submitted: Instant, committed: Instant },
    Pending { submitted: Instant, rx: Receiver<CommitNotice> },
    Failed { submitted: Instant, error: String },
}

fn submit_one(fx: &Fixture, spec: &WorkloadSpec, index: u64, wait: bool) -> Outcome {
    let client = &fx.clients[index as usize % fx.clients.len()];
    let submitted = Instant::now();
    if let (Workload::SendReceiveRoundtrip, Some(recipient)) = (spec.workload, &fx.recipient) {
        let bundle = ThreatBundle::synthetic(&client.certificate.subject.common_name, 1, fx.net.now(), fx.net.entropy());
        let result = exchange::send_bundle(&fx.net, client, BENCH_CHANNEL, recipient.serial(), &bundle, &AccessPolicy::allow_all())
            .and_then(|env| exchange::receive_bundle(&fx.net, recipient, BENCH_CHANNEL, env.envelope_id));
        return match result {
            Ok(got) if got == bundle => Outcome::Done { submitted, committed: Instant::now() },
            Ok(_) => Outcome::Failed { submitted, error: "bundle mismatch".into() },
            Err(e) => Outcome::Failed { submitted, error: format!("{}: {e}", e.code()) },
        };
    }
    let proposal = fx.net.propose(BENCH_CHANNEL, client, op_for(spec.workload, index));
    let rx = fx
        .net
        .endorse_all(&proposal)
        .and_then(|(endorsements, _)| fx.net.submit_with_notice(EndorsedTransaction { proposal, endorsements }));
    match rx {
        Ok(rx) if wait => resolve(submitted, rx),
        Ok(rx) => Outcome::Pending { submitted, rx },
        Err(e) => Outcome::Failed { submitted, error: format!("{}: {e}", e.code()) },
    }
}

fn resolve(submitted: Instant, rx: Receiver<CommitNotice>) -> Outcome {
    match rx.recv() {
        Ok(n) if n.validity.is_valid() => Outcome::Done { submitted, committed: n.committed_at },
        Ok(n) => Outcome::Failed { submitted, error: format!("committed {:?}", n.validity) },
        Err(_) => Outcome::Failed { submitted, error: "ordering service stopped".into() },
    }
}

/// Runs one workload on a fresh network.
pub fn run_benchmark(spec: &WorkloadSpec) -> Result<BenchRun, BenchError> {
    spec.validate()?;
    let fx = setup(spec)?;
    let workers = spec.worker_count as u64;
    let outcomes: Mutex<Vec<(u64, Outcome)>> = Mutex::new(Vec::with_capacity(spec.tx_count as usize));
    let start = Instant::now();
    thread::scope(|s| {
        for w in 0..workers {
            let (fx, outcomes) = (&fx, &outcomes);
            s.spawn(move || {
                for index in (w..spec.tx_count).step_by(workers as usize) {
                    let outcome = match spec.target_send_rate {
                        Some(rate) => {
                            let due = start + Duration::from_secs_f64(index as f64 / rate);
                            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                                thread::sleep(wait);
                            }
                            submit_one(fx, spec, index, false)
                        }
                        None => submit_one(fx, spec, index, true),
                    };
                    outcomes.lock().unwrap().push((index, outcome));
                }
            });
        }
    });
    let ns = |t: Instant| t.saturating_duration_since(start).as_nanos() as u64;
    let mut log: Vec<TxRecord> = outcomes
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|(index, outcome)| {
            let outcome = match outcome {
                Outcome::Pending { submitted, rx } => resolve(submitted, rx),
                other => other,
            };
            match outcome {
                Outcome::Done { submitted, committed } => {
                    TxRecord { index, submitted_ns: ns(submitted), committed_ns: Some(ns(committed)), error: None }
                }
                Outcome::Failed { submitted, error } => {
                    TxRecord { index, submitted_ns: ns(submitted), committed_ns: None, error: Some(error) }
                }
                Outcome::Pending { .. } => unreachable!("resolved above"),
            }
        })
        .collect();
    log.sort_by_key(|r| r.index);
    fx.net.shutdown();
    let report = MetricsReport::from_log(&log, spec, spec.load_model());
    Ok(BenchRun { report, log })
}

/// Sequential runs, each on a fresh network; failures are reported in place.
pub fn sweep(specs: &[WorkloadSpec]) -> Result<Vec<Result<BenchRun, BenchError>>, BenchError> {
    if specs.is_empty() {
        return Err(BenchError::EmptySweep);
    }
    Ok(specs.iter().map(run_benchmark).collect())
}
