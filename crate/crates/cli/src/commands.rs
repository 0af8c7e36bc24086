use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use epmpd_core::datagen::{format_workload, generate, read_workload, verify, write_workload, Workload, WorkloadSpec};
use epmpd_core::epmpd::local_dedup;
use epmpd_core::oracle::{audit_leakage_type2, audit_tree_type1, check_dedup_invariants};
use epmpd_core::{build_cluster_plan, oracle_dedup, ClientSet, NetProfile, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::args::{BenchArgs, DedupArgs, GenArgs, VerifyArgs};
use crate::bench::{run_grid, ExperimentGrid};
use crate::config::{overlay, resolve_seed};
use crate::run::{run_dedup, RunReport, RunSettings};
use crate::{CliError, Method, TransportKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    pub clients: u32,
    pub set_size: u32,
    pub dup_pct: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn gen_options(args: &GenArgs) -> Result<GenOptions, CliError> {
    let base = GenOptions {
        clients: args.clients,
        set_size: args.set_size,
        dup_pct: args.dup_pct,
        seed: resolve_seed(args.seed)?,
        out: args.out.clone(),
    };
    overlay(base, args.config.as_deref())
}

pub fn cmd_gen(opts: &GenOptions) -> Result<Workload, CliError> {
    let out = opts.out.as_ref().ok_or_else(|| CliError::Usage("gen needs --out".into()))?;
    let w = generate(&WorkloadSpec::new(opts.clients, opts.set_size, opts.dup_pct, opts.seed))?;
    let written = write_workload(out, &w)?;
    println!(
        "wrote {} files to {}: {} clients x {} values, {} shared per pair, {:.2}% duplicated",
        written.len(),
        out.display(),
        opts.clients,
        opts.set_size,
        w.metadata.per_pair_share,
        w.metadata.achieved_dup_pct
    );
    Ok(w)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DedupOptions {
    pub workload: PathBuf,
    pub variant: Method,
    pub transport: TransportKind,
    pub net: String,
    pub seed: u64,
    pub lenient: bool,
    pub out: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
}

pub fn dedup_options(args: &DedupArgs) -> Result<DedupOptions, CliError> {
    let base = DedupOptions {
        workload: args.workload.clone(),
        variant: args.variant,
        transport: args.transport,
        net: args.net.to_string(),
        seed: resolve_seed(args.seed)?,
        lenient: args.lenient,
        out: args.out.clone(),
        transcript: args.transcript.clone(),
    };
    overlay(base, args.config.as_deref())
}

pub fn cmd_dedup(opts: &DedupOptions) -> Result<RunReport, CliError> {
    let workload = read_workload(&opts.workload)?;
    let profile: NetProfile = opts.net.parse().map_err(CliError::Usage)?;
    let settings = RunSettings {
        transport: opts.transport,
        profile,
        strict: !opts.lenient,
        capture_transcript: opts.transcript.is_some(),
        ..RunSettings::new(opts.variant, opts.seed)
    };
    let result = run_dedup(&workload.sets, &settings)?;
    let report = RunReport::new(&settings, &result);
    if let (Some(path), Some(t)) = (&opts.transcript, &result.transcript) {
        t.write_to(BufWriter::new(File::create(path)?))?;
    }
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir)?;
        let finals = Workload {
            sets: result.outcome.final_sets.clone(),
            ..workload
        };
        fs::write(dir.join("final.txt"), format_workload(&finals)?)?;
        write_json(&dir.join("report.json"), &report)?;
        write_json(&dir.join("removals.json"), &result.outcome.removals)?;
    }
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?);
    Ok(report)
}

pub(crate) fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn bench_grid(args: &BenchArgs) -> Result<ExperimentGrid, CliError> {
    let base = ExperimentGrid {
        variants: args.variants.clone(),
        clients: args.clients.clone(),
        set_sizes: args.set_sizes.clone(),
        dup_pcts: args.dup_pcts.clone(),
        transport: args.transport,
        profile: args.net,
        repetitions: args.reps,
        seed: resolve_seed(args.seed)?,
    };
    overlay(base, args.config.as_deref())
}

pub fn cmd_bench(grid: &ExperimentGrid, csv: Option<&std::path::Path>) -> Result<usize, CliError> {
    grid.validate()?;
    let total = grid.row_count();
    let mut done = 0;
    let progress = |r: &crate::bench::CsvRow| {
        done += 1;
        eprintln!(
            "[{done}/{total}] {} m={} n={} p={} rep={}: {:.3}s",
            r.variant, r.clients, r.set_size, r.dup_pct, r.rep, r.total_s
        );
    };
    let rows = match csv {
        Some(path) => run_grid(grid, BufWriter::new(File::create(path)?), progress)?,
        None => run_grid(grid, io::stdout().lock(), progress)?,
    };
    Ok(rows.len())
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub failures: Vec<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs each method on `sets` and compares its final sets with the
/// plaintext reference.
pub fn check_methods(sets: &[ClientSet], methods: &[Method], seed: u64, strict: bool) -> Vec<Check> {
    let prepared: Vec<ClientSet> = if strict {
        sets.to_vec()
    } else {
        sets.iter().map(|s| local_dedup(s).set).collect()
    };
    let truth = oracle_dedup(&prepared);
    methods
        .iter()
        .map(|&method| {
            let settings = RunSettings {
                strict,
                ..RunSettings::new(method, seed)
            };
            let failures = match run_dedup(sets, &settings) {
                Err(e) => vec![e.to_string()],
                Ok(r) => {
                    let mut f = check_dedup_invariants(&prepared, &r.outcome);
                    let differing = (0..sets.len())
                        .filter(|&i| r.outcome.final_sets[i] != truth.final_sets[i])
                        .map(|i| (i + 1).to_string())
                        .collect::<Vec<_>>();
                    if !differing.is_empty() {
                        f.push(format!("final sets differ from the reference at clients {}", differing.join(",")));
                    }
                    f
                }
            };
            Check {
                name: format!("{method} matches reference"),
                failures,
            }
        })
        .collect()
}

/// Audits the third party's view of a variant I and a variant II tree run.
pub fn audit_workload(sets: &[ClientSet], seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    let capture = |v: Variant| {
        let settings = RunSettings {
            capture_transcript: true,
            ..RunSettings::new(Method::Tree(v), seed)
        };
        run_dedup(sets, &settings)
    };
    let plan = match build_cluster_plan(sets.len() as u32) {
        Ok(p) => p,
        Err(e) => {
            return vec![Check {
                name: "audit".into(),
                failures: vec![e.to_string()],
            }]
        }
    };
    let type1 = match capture(Variant::I) {
        Err(e) => vec![e.to_string()],
        Ok(r) => {
            let t = r.transcript.unwrap_or_default();
            audit_tree_type1(&t, &plan, sets)
                .into_iter()
                .flat_map(|(level, c, a)| {
                    a.violations
                        .into_iter()
                        .map(move |v| format!("level {level} {:?}|{:?}: {v}", c.group0, c.group1))
                })
                .collect()
        }
    };
    checks.push(Check {
        name: "type I third-party view".into(),
        failures: type1,
    });
    let type2 = match capture(Variant::II) {
        Err(e) => vec![e.to_string()],
        Ok(r) => audit_leakage_type2(&r.transcript.unwrap_or_default(), sets, &[]).violations,
    };
    checks.push(Check {
        name: "type II third-party view".into(),
        failures: type2,
    });
    checks
}

pub fn random_spec(rng: &mut ChaCha20Rng) -> WorkloadSpec {
    const PCTS: [f64; 5] = [0.0, 10.0, 30.0, 50.0, 90.0];
    WorkloadSpec::new(
        rng.gen_range(2..=9),
        rng.gen_range(1..=64),
        PCTS[rng.gen_range(0..PCTS.len())],
        rng.gen(),
    )
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub workload: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub audit: bool,
    pub fuzz: Option<u32>,
    pub seed: u64,
    pub strict: bool,
}

pub fn verify_options(args: &VerifyArgs) -> Result<VerifyOptions, CliError> {
    Ok(VerifyOptions {
        workload: args.workload.clone(),
        methods: args.variants.clone(),
        audit: args.audit,
        fuzz: args.fuzz,
        seed: resolve_seed(args.seed)?,
        strict: !args.lenient,
    })
}

/// Prints one line per check; fails if any check failed.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let mut add = |prefix: &str, batch: Vec<Check>| {
        for mut c in batch {
            c.name = format!("{prefix}{}", c.name);
            match c.failures.as_slice() {
                [] => println!("pass  {}", c.name),
                fs => println!("FAIL  {}: {}", c.name, fs.join("; ")),
            }
            checks.push(c);
        }
    };
    match (opts.fuzz, &opts.workload) {
        (Some(trials), _) => {
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
            for t in 0..trials {
                let spec = random_spec(&mut rng);
                let w = generate(&spec)?;
                let prefix = format!("trial {t} (m={} n={} p={}): ", spec.clients, spec.set_size, spec.dup_pct);
                add(&prefix, check_methods(&w.sets, &opts.methods, spec.seed, true));
                if opts.audit {
                    add(&prefix, audit_workload(&w.sets, spec.seed));
                }
            }
        }
        (None, Some(path)) => {
            let w = read_workload(path)?;
            let stats = verify(&w);
            println!(
                "workload: {} clients, sizes {:?}, max holders {}",
                w.sets.len(),
                stats.set_sizes,
                stats.max_holders
            );
            add("", check_methods(&w.sets, &opts.methods, opts.seed, opts.strict));
            if opts.audit {
                add("", audit_workload(&w.sets, opts.seed));
            }
        }
        (None, None) => return Err(CliError::Usage("verify needs a workload or --fuzz".into())),
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    io::stdout().flush()?;
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(checks)
}
