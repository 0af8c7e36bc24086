use std::sync::Arc;
use std::time::Instant;

use epmpd_core::netio::{ShapingConfig, TcpTransport};
use epmpd_core::runtime::{CounterReport, TimingReport};
use epmpd_core::{epmpd_run, naive_pairwise_run, ClientSet, DedupOutcome, EpmpdOptions, NetProfile, Runtime, Transcript};
use serde::Serialize;

use crate::{CliError, Method, TransportKind};

#[derive(Clone, Copy, Debug)]
pub struct RunSettings {
    pub method: Method,
    pub transport: TransportKind,
    pub profile: NetProfile,
    pub seed: u64,
    pub strict: bool,
    pub capture_transcript: bool,
}

impl RunSettings {
    pub fn new(method: Method, seed: u64) -> Self {
        RunSettings {
            method,
            transport: TransportKind::Inproc,
            profile: NetProfile::ideal(),
            seed,
            strict: true,
            capture_transcript: false,
        }
    }
}

pub struct RunResult {
    pub outcome: DedupOutcome,
    pub timing: TimingReport,
    pub counters: CounterReport,
    pub transcript: Option<Transcript>,
    /// Real elapsed time of the whole run on this machine.
    pub elapsed_s: f64,
}

/// Runs one deduplication on its own runtime and collects its reports.
pub fn run_dedup(sets: &[ClientSet], settings: &RunSettings) -> Result<RunResult, CliError> {
    let mut builder = Runtime::builder().capture_transcript(settings.capture_transcript);
    if settings.transport == TransportKind::Tcp {
        let shaping = ShapingConfig::from_profile(settings.profile);
        builder = builder.transport(Arc::new(TcpTransport::loopback(shaping)));
    }
    let rt = builder.build();
    let opts = EpmpdOptions {
        seed: settings.seed,
        strict: settings.strict,
        ..Default::default()
    };
    let start = Instant::now();
    let outcome = match settings.method {
        Method::Tree(v) => epmpd_run(sets, v, &rt, &opts)?,
        Method::Naive => naive_pairwise_run(sets, &rt, &opts)?,
    };
    let (timing, counters) = rt.finalize(&settings.profile)?;
    Ok(RunResult {
        outcome,
        timing,
        counters,
        transcript: settings.capture_transcript.then(|| rt.transcript()),
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Machine-readable summary of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub variant: String,
    pub clients: usize,
    pub transport: String,
    pub profile: String,
    pub seed: u64,
    pub total_s: f64,
    pub client_avg_s: f64,
    pub client_max_s: f64,
    pub tee_s: f64,
    pub plan_s: f64,
    pub elapsed_s: f64,
    pub bytes_clients: u64,
    pub bytes_tee: u64,
    pub prp_calls: u64,
    pub oprf_rounds: u64,
    pub invocations: u64,
    pub final_sizes: Vec<usize>,
    pub removed: Vec<usize>,
    pub local_removed: Vec<usize>,
}

impl RunReport {
    pub fn new(settings: &RunSettings, r: &RunResult) -> Self {
        let totals = r.counters.clients_total();
        RunReport {
            variant: settings.method.to_string(),
            clients: r.outcome.final_sets.len(),
            transport: settings.transport.to_string(),
            profile: settings.profile.to_string(),
            seed: settings.seed,
            total_s: r.timing.wall_clock_estimate,
            client_avg_s: r.timing.client_avg_s(),
            client_max_s: r.timing.client_max_s(),
            tee_s: r.timing.tee_s(),
            plan_s: r.outcome.plan_s,
            elapsed_s: r.elapsed_s,
            bytes_clients: r.timing.bytes_clients(),
            bytes_tee: r.timing.bytes_tee(),
            prp_calls: totals.prp_calls,
            oprf_rounds: totals.oprf_rounds,
            invocations: r.outcome.invocations,
            final_sizes: r.outcome.final_sets.iter().map(Vec::len).collect(),
            removed: r.outcome.removals.iter().map(Vec::len).collect(),
            local_removed: r.outcome.local_removed.clone(),
        }
    }
}
