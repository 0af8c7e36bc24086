//! One party of a deduplication run spread over several processes. Every
//! party listens on its directory address and dials the others on first
//! send.

use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use epmpd_core::datagen::read_workload;
use epmpd_core::epmpd::{run_client_party, run_tee_party, ClientPartyOutcome};
use epmpd_core::netio::{Directory, ShapingConfig, TcpTransport};
use epmpd_core::runtime::PartyKind;
use epmpd_core::{build_cluster_plan, EpmpdOptions, NetProfile, PartyId, Runtime, Variant};
use serde::{Deserialize, Serialize};

use crate::args::{Role, ServeArgs};
use crate::commands::write_json;
use crate::config::{overlay, resolve_seed};
use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServeOptions {
    pub role: Option<Role>,
    pub index: Option<u32>,
    pub workload: Option<PathBuf>,
    pub directory: Option<PathBuf>,
    pub connect: Option<SocketAddr>,
    pub peers: Vec<SocketAddr>,
    pub listen: Option<SocketAddr>,
    pub variant: String,
    pub net: String,
    pub seed: u64,
    pub lenient: bool,
    pub out: Option<PathBuf>,
    pub connect_timeout: u64,
}

pub fn serve_options(args: &ServeArgs) -> Result<ServeOptions, CliError> {
    let base = ServeOptions {
        role: args.role,
        index: args.index,
        workload: args.workload.clone(),
        directory: args.directory.clone(),
        connect: args.connect,
        peers: args.peers.clone(),
        listen: args.listen,
        variant: args.variant.to_string(),
        net: args.net.to_string(),
        seed: resolve_seed(args.seed)?,
        lenient: args.lenient,
        out: args.out.clone(),
        connect_timeout: args.connect_timeout,
    };
    overlay(base, args.config.as_deref())
}

/// What a party writes when it stops, whether it finished or not.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartyReport {
    pub party: String,
    pub variant: String,
    pub clients: u32,
    pub status: String,
    pub error: Option<String>,
    pub compute_s: f64,
    pub bytes_sent: u64,
    pub elapsed_s: f64,
    pub outcome: Option<ClientPartyOutcome>,
}

fn directory(opts: &ServeOptions) -> Result<Directory, CliError> {
    if let Some(path) = &opts.directory {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        return serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())));
    }
    match opts.connect {
        Some(tee) if !opts.peers.is_empty() => Ok(Directory {
            tee,
            clients: opts.peers.clone(),
        }),
        _ => Err(CliError::Usage("serve needs --directory, or --connect and --peers".into())),
    }
}

pub fn cmd_serve(opts: &ServeOptions) -> Result<PartyReport, CliError> {
    let role = opts.role.ok_or_else(|| CliError::Usage("serve needs --role".into()))?;
    let variant: Variant = opts.variant.parse().map_err(CliError::Usage)?;
    let profile: NetProfile = opts.net.parse().map_err(CliError::Usage)?;
    let mut dir = directory(opts)?;
    let m = dir.clients.len() as u32;
    let me = match role {
        Role::Tee => PartyId::TEE,
        Role::Client => {
            let i = opts.index.ok_or_else(|| CliError::Usage("a client needs --index".into()))?;
            if i == 0 || i > m {
                return Err(CliError::Usage(format!("client index {i} outside 1..={m}")));
            }
            PartyId::client(i)
        }
    };
    if let Some(listen) = opts.listen {
        match role {
            Role::Tee => dir.tee = listen,
            Role::Client => dir.clients[me.index as usize - 1] = listen,
        }
    }
    let plan = build_cluster_plan(m)?;
    let set = match role {
        Role::Tee => None,
        Role::Client => {
            let path = opts
                .workload
                .as_ref()
                .ok_or_else(|| CliError::Usage("a client needs --workload".into()))?;
            let w = read_workload(path)?;
            if w.sets.len() != m as usize {
                return Err(CliError::Usage(format!(
                    "workload has {} clients, directory has {m}",
                    w.sets.len()
                )));
            }
            Some(w.sets[me.index as usize - 1].clone())
        }
    };

    let transport = TcpTransport::distributed(me, &dir, ShapingConfig::from_profile(profile))
        .with_connect_timeout(Duration::from_secs(opts.connect_timeout));
    let rt = Runtime::builder().transport(Arc::new(transport)).build();
    rt.register_party(PartyKind::Tee, 0)?;
    for c in 1..=m {
        rt.register_party(PartyKind::Client, c)?;
    }

    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let (flag, rt) = (interrupted.clone(), rt.clone());
        // only the first handler per process can be installed
        let _ = ctrlc::set_handler(move || {
            flag.store(true, Ordering::SeqCst);
            rt.abort();
        });
    }

    let eopts = EpmpdOptions {
        seed: opts.seed,
        strict: !opts.lenient,
        ..Default::default()
    };
    let start = Instant::now();
    let result = match &set {
        None => run_tee_party(&rt, &plan, variant, &eopts).map(|()| None),
        Some(s) => run_client_party(&rt, me.index, s, variant, &plan, &eopts).map(Some),
    }
    .map_err(CliError::from);
    let timing = rt.timing(&profile);
    let was_interrupted = interrupted.load(Ordering::SeqCst);
    let (status, error, outcome) = match result {
        Ok(o) => ("completed", None, o),
        Err(_) if was_interrupted => ("interrupted", Some(CliError::Transport("interrupted".into())), None),
        Err(e) => ("failed", Some(e), None),
    };
    let report = PartyReport {
        party: me.to_string(),
        variant: variant.to_string(),
        clients: m,
        status: status.into(),
        error: error.as_ref().map(|e| e.to_string()),
        compute_s: timing.per_party_compute.get(&me).copied().unwrap_or(0.0),
        bytes_sent: timing.per_party_bytes_sent.get(&me).copied().unwrap_or(0),
        elapsed_s: start.elapsed().as_secs_f64(),
        outcome,
    };
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir)?;
        let name = match role {
            Role::Tee => "tee.json".to_string(),
            Role::Client => format!("client_{}.json", me.index),
        };
        write_json(&dir.join(name), &report)?;
    }
    match error {
        None => Ok(report),
        Some(e) => Err(e),
    }
}
