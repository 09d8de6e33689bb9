// SPDX-License-Identifier: Apache-2.0
//! Argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tips_core::ledger::EndorsementPolicy;

#[derive(Debug, Parser)]
#[command(name = "tips", version, about = "Trusted threat-intelligence sharing over a simulated permissioned ledger")]
pub struct Cli {
    /// State directory. TIPS_DATA_DIR, when set, takes precedence.
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Human)]
    pub output: OutputFormat,

    /// Act as this enrolled identity. Defaults to the most recently enrolled one.
    #[arg(long = "as", global = true, value_name = "SERIAL")]
    pub as_serial: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Human,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certificate authority administration.
    #[command(subcommand)]
    Ca(CaCommand),
    /// Enrol an issued certificate with the membership service.
    Enroll {
        #[arg(long)]
        serial: u64,
    },
    #[command(subcommand)]
    Channel(ChannelCommand),
    /// Exchange keys and attestations for the acting identity.
    #[command(subcommand)]
    Agent(AgentCommand),
    /// Seal a STIX bundle for a recipient and post it.
    Send {
        #[command(flatten)]
        channel: ChannelArg,
        /// Recipient certificate serial.
        #[arg(long)]
        to: u64,
        #[arg(long, value_name = "STIX_JSON")]
        bundle: PathBuf,
        #[arg(long, value_name = "POLICY_JSON")]
        policy: Option<PathBuf>,
    },
    /// Release, decrypt and acknowledge an envelope.
    Recv {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long, value_name = "ID")]
        envelope: String,
        /// ISO country code to attest; defaults to the last `agent attest`.
        #[arg(long)]
        location: Option<String>,
        /// Write the bundle here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Envelopes addressed to the acting identity.
    Inbox {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long)]
        unread: bool,
        #[arg(long, value_name = "SERIAL")]
        from: Option<u64>,
    },
    #[command(subcommand)]
    Object(ObjectCommand),
    /// Query the channel audit log.
    Audit {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long, value_name = "SERIAL")]
        actor: Option<u64>,
        #[arg(long = "type", value_name = "EVENT_TYPE")]
        event_type: Option<String>,
        /// RFC 3339, inclusive.
        #[arg(long)]
        since: Option<String>,
        /// RFC 3339, exclusive.
        #[arg(long)]
        until: Option<String>,
    },
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run the scripted Alice and Bob scenario in an empty data directory.
    Demo,
}

#[derive(Debug, Args)]
pub struct ChannelArg {
    /// Defaults to the first channel created.
    #[arg(long = "channel", value_name = "ID")]
    pub id: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum CaCommand {
    /// Create the CA and an empty network.
    Init,
    /// Generate a keypair, build a CSR and issue a certificate for it.
    Issue {
        #[arg(long)]
        cn: String,
        #[arg(long)]
        org: String,
        #[arg(long, default_value = "analyst")]
        role: String,
        /// Extra attribute, repeatable.
        #[arg(long = "attr", value_name = "KEY=VALUE")]
        attrs: Vec<String>,
    },
    Revoke {
        #[arg(long)]
        serial: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ChannelCommand {
    Create {
        #[arg(long)]
        id: String,
        #[arg(long, value_delimiter = ',', required = true)]
        orgs: Vec<String>,
        /// majority, all or any.
        #[arg(long, default_value = "majority")]
        policy: EndorsementPolicy,
        /// Close the channel after the first read receipt.
        #[arg(long)]
        session: bool,
        /// Payloads of at least this many bytes go off-chain (at most 1024).
        #[arg(long, value_name = "BYTES")]
        offchain_threshold: Option<usize>,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum AgentCommand {
    /// Generate the exchange keypair; the private half stays in the data directory.
    Keygen,
    PublishKey {
        #[command(flatten)]
        channel: ChannelArg,
    },
    /// Sign a location and time claim, and remember the location for `recv`.
    Attest {
        #[arg(long)]
        location: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ObjectCommand {
    Put {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long)]
        key: String,
        #[arg(long, conflicts_with = "value", required_unless_present = "value")]
        file: Option<PathBuf>,
        #[arg(long)]
        value: Option<String>,
    },
    Get {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long)]
        key: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Lineage {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long)]
        key: String,
    },
    /// Destroy the payload, tombstone the key and print the signed receipt.
    Erase {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long)]
        key: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WorkloadArg {
    Read,
    Batch,
    Roundtrip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportArg {
    Human,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    Run {
        #[arg(long, value_enum)]
        workload: WorkloadArg,
        #[arg(long = "tx", default_value_t = 1000)]
        tx_count: u64,
        #[arg(long, default_value_t = 4)]
        workers: u32,
        /// Offered load in tx/s; switches to an open-loop arrival process.
        #[arg(long)]
        rate: Option<f64>,
        /// Assets per GetAssetsFromBatch transaction.
        #[arg(long, default_value_t = 10)]
        batch_size: u32,
        /// Orderer: transactions per block.
        #[arg(long)]
        block_size: Option<usize>,
        /// Orderer: milliseconds from the first queued transaction to a cut.
        #[arg(long, value_name = "MS")]
        batch_timeout: Option<u64>,
        #[arg(long, value_enum, default_value_t = ReportArg::Human)]
        format: ReportArg,
        /// Also write the report (JSON, or CSV with --format csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a JSON array of workload specs, each on a fresh network.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
