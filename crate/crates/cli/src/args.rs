use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use epmpd_core::{NetProfile, Variant};

use crate::{Method, TransportKind};

#[derive(Debug, Parser)]
#[command(name = "epmpd", version, about = "Private multi-party deduplication toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic workload.
    Gen(GenArgs),
    /// Deduplicate a workload with one method.
    Dedup(DedupArgs),
    /// Sweep an experiment grid and write one CSV row per run.
    Bench(BenchArgs),
    /// Check methods against the plaintext reference, optionally auditing
    /// what the third party sees.
    Verify(VerifyArgs),
    /// Run one party of a distributed deduplication.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 10)]
    pub clients: u32,
    #[arg(long, default_value_t = 4096)]
    pub set_size: u32,
    /// Share of each set also held by some other client, in percent.
    #[arg(long, default_value_t = 30.0)]
    pub dup_pct: f64,
    /// Defaults to $EPMPD_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON object whose keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// Workload file or directory.
    pub workload: PathBuf,
    /// I, II, III or naive.
    #[arg(long, default_value = "I")]
    pub variant: Method,
    #[arg(long, default_value = "inproc")]
    pub transport: TransportKind,
    /// ideal, lan, wan or custom:<bits/s|inf>:<rtt seconds>.
    #[arg(long, default_value = "ideal")]
    pub net: NetProfile,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop repeated values within a set instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Directory for the final sets and the run report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the message transcript to this file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "I,II")]
    pub variants: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    pub clients: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "16384")]
    pub set_sizes: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "30")]
    pub dup_pcts: Vec<f64>,
    #[arg(long, default_value = "inproc")]
    pub transport: TransportKind,
    #[arg(long, default_value = "ideal")]
    pub net: NetProfile,
    #[arg(long, default_value_t = 1)]
    pub reps: u32,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Workload file or directory. Not needed with --fuzz.
    pub workload: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "I,II,III,naive")]
    pub variants: Vec<Method>,
    /// Also audit third-party transcripts of the I and II runs.
    #[arg(long)]
    pub audit: bool,
    /// Check this many random workloads instead of a file.
    #[arg(long)]
    pub fuzz: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Tee,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum)]
    pub role: Option<Role>,
    /// Client index, from 1.
    #[arg(long)]
    pub index: Option<u32>,
    /// Workload holding this client's set at line `index`.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// JSON file `{"tee": addr, "clients": [addr, ...]}` naming every party.
    #[arg(long)]
    pub directory: Option<PathBuf>,
    /// Third-party address, when no directory file is given.
    #[arg(long)]
    pub connect: Option<SocketAddr>,
    /// Client addresses in index order, when no directory file is given.
    #[arg(long, value_delimiter = ',')]
    pub peers: Vec<SocketAddr>,
    /// Local bind address, if different from this party's directory entry.
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[arg(long, default_value = "I")]
    pub variant: Variant,
    #[arg(long, default_value = "ideal")]
    pub net: NetProfile,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lenient: bool,
    /// Directory for this party's report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seconds to keep retrying connections to peers.
    #[arg(long, default_value_t = 30)]
    pub connect_timeout: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
