// SPDX-License-Identifier: Apache-2.0
//! One handler per subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::{json, Value};
use tips_core::bench::{self, emit_report, ReportFormat, Workload, WorkloadSpec};
use tips_core::clock::Timestamp;
use tips_core::contract::{ContractOp, ContractResponse, PayloadRef};
use tips_core::crypto::{self, Digest};
use tips_core::exchange::{self, InboxFilter, ThreatBundle};
use tips_core::identity::{AttributeMap, Subject};
use tips_core::ledger::{AuditFilter, ChainReport, ChannelConfig, ChannelMode};
use tips_core::network::Network;
use tips_core::policy::{self, AccessPolicy};
use tips_core::{canonical, Error, ErrorCode, Result};

use crate::cli::*;
use crate::context::{self, exchange_key_path, identity_key_path, store_key, Workspace};
use crate::demo;
use crate::output::Output;

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("value encodes")
}

fn fmt_time(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn invalid(message: impl Into<String>) -> Error {
    Error::other(ErrorCode::InvalidInput, message)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn parse_time(s: &str) -> Result<Timestamp> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| invalid(format!("bad timestamp '{s}': {e}")))
}

pub fn dispatch(cli: Cli) -> Result<Output> {
    let dir = context::resolve_data_dir(cli.data_dir.as_deref());
    match cli.command {
        Command::Bench(cmd) => bench_command(cmd),
        Command::Demo => {
            let transcript = demo::run(&dir)?;
            Ok(Output::new(transcript.lines.join("\n"), json!({ "transcript": transcript.lines })))
        }
        Command::Ca(CaCommand::Init) => ca_init(&dir),
        command => {
            let mut ws = Workspace::open(dir, false)?;
            let net = ws.network()?;
            let out = run_command(&mut ws, &net, cli.as_serial, command);
            net.shutdown();
            out
        }
    }
}

fn ca_init(dir: &Path) -> Result<Output> {
    if Network::exists(dir) {
        return Err(Error::other(ErrorCode::DataDirNotEmpty, format!("{} already holds a network", dir.display())));
    }
    let ws = Workspace::open(dir.to_path_buf(), true)?;
    let net = Network::create(
        &ws.dir,
        std::sync::Arc::new(tips_core::clock::SystemClock),
        crypto::Entropy::from_os()?,
        Default::default(),
    )?;
    ws.save_config()?;
    let key_id = net.ca_public_key().key_id();
    Ok(Output::new(
        format!("initialised {} in {} (CA key {})", tips_core::network::CA_NAME, ws.dir.display(), key_id.short()),
        json!({ "ca": tips_core::network::CA_NAME, "ca_key_id": key_id, "data_dir": ws.dir }),
    ))
}

fn run_command(ws: &mut Workspace, net: &Network, as_serial: Option<u64>, command: Command) -> Result<Output> {
    match command {
        Command::Ca(CaCommand::Init) | Command::Bench(_) | Command::Demo => unreachable!("handled by dispatch"),
        Command::Ca(CaCommand::Issue { cn, org, role, attrs }) => {
            let mut attributes = AttributeMap::from([("role".to_string(), role)]);
            for a in attrs {
                let (k, v) = a.split_once('=').ok_or_else(|| invalid(format!("attribute '{a}' is not KEY=VALUE")))?;
                attributes.insert(k.trim().to_string(), v.trim().to_string());
            }
            let keypair = crypto::generate_keypair(None)?;
            let cert = net.issue_certificate(&keypair, Subject::new(cn, org), attributes)?;
            store_key(&identity_key_path(&ws.dir, cert.serial), &keypair)?;
            Ok(Output::new(
                format!(
                    "issued serial {} to {} ({}, role {}), valid until {}",
                    cert.serial,
                    cert.subject.common_name,
                    cert.org(),
                    cert.role(),
                    fmt_time(&cert.not_after)
                ),
                json!({ "certificate": to_json(&cert) }),
            ))
        }
        Command::Ca(CaCommand::Revoke { serial }) => {
            net.revoke(serial)?;
            Ok(Output::new(format!("revoked serial {serial}"), json!({ "revoked": serial })))
        }
        Command::Enroll { serial } => {
            let cert = net
                .issued_certificate(serial)
                .ok_or_else(|| Error::other(ErrorCode::UnknownSerial, format!("serial {serial} was never issued")))?;
            let record = net.enroll(cert)?;
            ws.config.active_identity = Some(serial);
            ws.save_config()?;
            Ok(Output::new(
                format!("enrolled serial {serial} ({}); now acting as {serial}", record.certificate.subject.common_name),
                json!({ "identity": to_json(&record), "active_identity": serial }),
            ))
        }
        Command::Channel(ChannelCommand::Create { id, orgs, policy, session, offchain_threshold }) => {
            let mut config = ChannelConfig::new(&id, orgs, policy);
            if session {
                config = config.with_mode(ChannelMode::Session);
            }
            if let Some(t) = offchain_threshold {
                config = config.with_offchain_threshold(t);
            }
            net.create_channel(config.clone())?;
            if ws.config.default_channel.is_none() {
                ws.config.default_channel = Some(id.clone());
                ws.save_config()?;
            }
            Ok(Output::new(
                format!(
                    "created channel {id}: orgs {}, {} endorsement(s) required",
                    config.member_orgs.iter().cloned().collect::<Vec<_>>().join(","),
                    config.required_endorsements()
                ),
                json!({ "channel": to_json(&config) }),
            ))
        }
        Command::Channel(ChannelCommand::List) => {
            let mut human = String::new();
            let mut rows = Vec::new();
            for id in net.channel_ids() {
                let handle = net.channel(&id)?;
                let c = handle.read();
                let _ = writeln!(
                    human,
                    "{id}\torgs={}\tpolicy={:?}\tmode={:?}\theight={}{}",
                    c.config().member_orgs.iter().cloned().collect::<Vec<_>>().join(","),
                    c.config().endorsement_policy,
                    c.config().mode,
                    c.next_height() - 1,
                    if c.is_closed() { "\tclosed" } else { "" }
                );
                rows.push(json!({ "config": to_json(c.config()), "height": c.next_height() - 1, "closed": c.is_closed() }));
            }
            Ok(Output::new(human, json!({ "channels": rows })))
        }
        Command::Agent(AgentCommand::Keygen) => {
            let serial = ws.acting(as_serial)?;
            ws.credentials(net, serial)?;
            let keypair = crypto::generate_keypair(None)?;
            store_key(&exchange_key_path(&ws.dir, serial), &keypair)?;
            Ok(Output::new(
                format!("exchange key {} generated for {serial}; publish it with `tips agent publish-key`", keypair.key_id().short()),
                json!({ "serial": serial, "key_id": keypair.key_id() }),
            ))
        }
        Command::Agent(AgentCommand::PublishKey { channel }) => {
            let serial = ws.acting(as_serial)?;
            let channel = ws.channel(channel.id)?;
            let agent = ws.agent(net, serial, Some("GB".into()))?;
            let published = exchange::publish_public_key(net, &agent, &channel)?;
            Ok(Output::new(
                format!("published key {} for {serial} on {channel}", published.public_key.key_id().short()),
                json!({ "published": to_json(&published) }),
            ))
        }
        Command::Agent(AgentCommand::Attest { location }) => {
            let serial = ws.acting(as_serial)?;
            let creds = ws.credentials(net, serial)?;
            let attestation = policy::attest(&creds.certificate, &creds.keypair, net.now(), &location, net.entropy())?;
            ws.config.locations.insert(serial, attestation.claimed_location.as_str().to_string());
            ws.save_config()?;
            Ok(Output::new(
                canonical::to_string(&attestation).expect("attestation encodes"),
                json!({ "attestation": to_json(&attestation) }),
            ))
        }
        Command::Send { channel, to, bundle, policy } => {
            let serial = ws.acting(as_serial)?;
            let channel = ws.channel(channel.id)?;
            let creds = ws.credentials(net, serial)?;
            let bundle = ThreatBundle::from_json(&read_file(&bundle)?).map_err(exchange::ExchangeError::from)?;
            let policy = match policy {
                Some(p) => AccessPolicy::from_json(&read_file(&p)?)?,
                None => AccessPolicy::allow_all(),
            };
            let envelope = exchange::send_bundle(net, &creds, &channel, to, &bundle, &policy)?;
            Ok(Output::new(
                format!("posted envelope {} to {to} on {channel}", envelope.envelope_id),
                json!({ "envelope_id": envelope.envelope_id, "posted_tx": envelope.posted_tx, "recipient": to }),
            ))
        }
        Command::Recv { channel, envelope, location, out } => {
            let serial = ws.acting(as_serial)?;
            let channel = ws.channel(channel.id)?;
            let envelope_id = Digest::from_hex(&envelope).ok_or_else(|| invalid(format!("bad envelope id '{envelope}'")))?;
            let agent = ws.agent(net, serial, location)?;
            let bundle = exchange::receive_bundle(net, &agent, &channel, envelope_id)?;
            let text = bundle.to_canonical();
            match out {
                Some(path) => {
                    write_file(&path, &text)?;
                    Ok(Output::new(
                        format!("wrote {} indicator(s) to {}", bundle.objects.len(), path.display()),
                        json!({ "envelope_id": envelope_id, "written_to": path }),
                    ))
                }
                None => Ok(Output::new(
                    String::from_utf8(text).expect("canonical JSON is UTF-8"),
                    json!({ "envelope_id": envelope_id, "bundle": to_json(&bundle) }),
                )),
            }
        }
        Command::Inbox { channel, unread, from } => {
            let serial = ws.acting(as_serial)?;
            let channel = ws.channel(channel.id)?;
            let creds = ws.credentials(net, serial)?;
            let list = exchange::list_envelopes(net, &creds, &channel, &InboxFilter { unread_only: unread, sender: from })?;
            let mut human = String::new();
            for e in &list {
                let _ = writeln!(
                    human,
                    "{}\tfrom {}\t{}\t{}",
                    e.envelope_id,
                    e.sender,
                    fmt_time(&e.posted_at),
                    if e.read { "read" } else { "unread" }
                );
            }
            Ok(Output::new(human, json!({ "envelopes": to_json(&list) })))
        }
        Command::Object(cmd) => object_command(ws, net, as_serial, cmd),
        Command::Audit { channel, actor, event_type, since, until } => {
            let serial = ws.acting(as_serial)?;
            let channel = ws.channel(channel.id)?;
            let creds = ws.credentials(net, serial)?;
            let filter = AuditFilter {
                actor,
                event_type: event_type.map(|t| t.parse()).transpose().map_err(invalid)?,
                since: since.as_deref().map(parse_time).transpose()?,
                until: until.as_deref().map(parse_time).transpose()?,
            };
            let events = net.audit(&channel, &creds.certificate, &filter)?;
            let mut human = String::new();
            for e in &events {
                let _ = writeln!(
                    human,
                    "{}\t{:>4}\t{:<15}\tactor={}\t{}\ttx={}",
                    fmt_time(&e.wall_time),
                    e.height,
                    e.event_type.as_str(),
                    e.actor,
                    e.subject,
                    e.tx_id.short()
                );
            }
            let chain = match net.verify_chain(&channel)? {
                ChainReport::Ok => Value::String("ok".into()),
                ChainReport::FirstBadHeight(h) => json!({ "first_bad_height": h }),
            };
            Ok(Output::new(human, json!({ "events": to_json(&events), "chain": chain })))
        }
    }
}

fn object_command(ws: &Workspace, net: &Network, as_serial: Option<u64>, cmd: ObjectCommand) -> Result<Output> {
    let serial = ws.acting(as_serial)?;
    let creds = ws.credentials(net, serial)?;
    match cmd {
        ObjectCommand::Put { channel, key, file, value } => {
            let channel = ws.channel(channel.id)?;
            let payload = match (file, value) {
                (Some(path), _) => read_file(&path)?,
                (None, Some(v)) => v.into_bytes(),
                (None, None) => return Err(invalid("pass --file or --value")),
            };
            let handle = net.channel(&channel)?;
            let threshold = handle.read().config().effective_offchain_threshold();
            let payload = PayloadRef::stage(&payload, threshold, handle.offchain())?;
            let (response, _) = net.invoke(&channel, &creds, ContractOp::PutObject { key: key.clone(), payload })?;
            let ContractResponse::Stored(object) = response else { unreachable!("put returns the stored record") };
            Ok(Output::new(
                format!(
                    "stored {key} version {} ({} bytes, {}), checksum {}",
                    object.version,
                    object.size,
                    if object.off_chain_ref.is_some() { "off-chain" } else { "on-chain" },
                    object.checksum
                ),
                json!({ "object": to_json(&object) }),
            ))
        }
        ObjectCommand::Get { channel, key, out } => {
            let channel = ws.channel(channel.id)?;
            let ContractResponse::Object(bytes) = net.query(&channel, &creds, ContractOp::GetObject { key: key.clone() })? else {
                unreachable!("get returns bytes")
            };
            let checksum = crypto::digest(&bytes);
            match out {
                Some(path) => {
                    write_file(&path, &bytes)?;
                    Ok(Output::new(
                        format!("wrote {} bytes to {}", bytes.len(), path.display()),
                        json!({ "key": key, "checksum": checksum, "written_to": path }),
                    ))
                }
                None => {
                    let json = json!({ "key": key, "checksum": checksum, "payload": to_json(&ContractResponse::Object(bytes.clone()))["value"] });
                    Ok(Output::raw(bytes, json))
                }
            }
        }
        ObjectCommand::Lineage { channel, key } => {
            let channel = ws.channel(channel.id)?;
            let ContractResponse::Lineage(entries) = net.query(&channel, &creds, ContractOp::GetLineage { key })? else {
                unreachable!("lineage query returns entries")
            };
            let mut human = String::new();
            for e in &entries {
                let _ = writeln!(human, "v{}\t{:?}\tactor={}\t{}\ttx={}", e.version, e.action, e.actor, fmt_time(&e.timestamp), e.tx_id.short());
            }
            Ok(Output::new(human, json!({ "lineage": to_json(&entries) })))
        }
        ObjectCommand::Erase { channel, key } => {
            let channel = ws.channel(channel.id)?;
            let receipt = net.erase_object(&channel, &creds, &key)?;
            Ok(Output::new(
                format!(
                    "erased {key}: tombstone tx {} at height {} ({}), receipt signed by {}\n{}",
                    receipt.tx_id,
                    receipt.height,
                    fmt_time(&receipt.wall_time),
                    receipt.signer.subject.common_name,
                    canonical::to_string(&receipt).expect("receipt encodes")
                ),
                json!({ "receipt": to_json(&receipt) }),
            ))
        }
    }
}

fn bench_command(cmd: BenchCommand) -> Result<Output> {
    match cmd {
        BenchCommand::Run { workload, tx_count, workers, rate, batch_size, block_size, batch_timeout, format, out } => {
            let workload = match workload {
                WorkloadArg::Read => Workload::ReadChecksum,
                WorkloadArg::Batch => Workload::GetAssetsFromBatch { batch_size },
                WorkloadArg::Roundtrip => Workload::SendReceiveRoundtrip,
            };
            let mut spec = WorkloadSpec::new(workload, tx_count, workers);
            spec.target_send_rate = rate;
            if let Some(b) = block_size {
                spec.orderer.batch_size = b;
            }
            if let Some(ms) = batch_timeout {
                spec.orderer.batch_timeout = Duration::from_millis(ms);
            }
            let run = bench::run_benchmark(&spec)?;
            let format = match format {
                ReportArg::Human => ReportFormat::Human,
                ReportArg::Json => ReportFormat::Json,
                ReportArg::Csv => ReportFormat::Csv,
            };
            if let Some(path) = out {
                let file_format = if format == ReportFormat::Csv { ReportFormat::Csv } else { ReportFormat::Json };
                write_file(&path, emit_report(&run.report, file_format).as_bytes())?;
            }
            Ok(Output::new(emit_report(&run.report, format), json!({ "report": to_json(&run.report) })))
        }
        BenchCommand::Sweep { config, out } => {
            let specs: Vec<WorkloadSpec> = serde_json::from_slice(&read_file(&config)?)
                .map_err(|e| Error::from(bench::BenchError::InvalidWorkload(e.to_string())))?;
            let results = bench::sweep(&specs)?;
            let mut human = String::new();
            let mut rows = Vec::new();
            for (i, r) in results.iter().enumerate() {
                match r {
                    Ok(run) => {
                        let _ = writeln!(human, "[{}] {}", i + 1, emit_report(&run.report, ReportFormat::Human).trim_end());
                        rows.push(json!({ "report": to_json(&run.report) }));
                    }
                    Err(e) => {
                        let e = Error::from(clone_bench_error(e));
                        let _ = writeln!(human, "[{}] ERROR {}: {}", i + 1, e.code(), e);
                        rows.push(json!({ "error": { "code": e.code().as_str(), "message": e.to_string() } }));
                    }
                }
            }
            let json = json!({ "results": rows });
            if let Some(path) = out {
                write_file(&path, &canonical::to_vec(&json).expect("results encode"))?;
            }
            Ok(Output::new(human, json))
        }
    }
}

fn clone_bench_error(e: &bench::BenchError) -> bench::BenchError {
    match e {
        bench::BenchError::Setup(m) => bench::BenchError::Setup(m.clone()),
        bench::BenchError::InvalidWorkload(m) => bench::BenchError::InvalidWorkload(m.clone()),
        bench::BenchError::EmptySweep => bench::BenchError::EmptySweep,
    }
}
