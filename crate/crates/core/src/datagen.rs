//! Synthetic benchmark workloads: per-client sets of 32-bit integers where
//! every pair of clients shares the same number of elements and no element
//! is held by more than two clients.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::{ClientSet, Element};

pub const WORKLOAD_FILE: &str = "workload.txt";
pub const METADATA_FILE: &str = "metadata.json";
const HEADER_TAG: &str = "epmpd-workload";
const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("infeasible workload: {0}")]
    InfeasibleSpec(String),
    #[error("malformed workload file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub clients: u32,
    pub set_size: u32,
    pub dup_pct: f64,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(clients: u32, set_size: u32, dup_pct: f64, seed: u64) -> Self {
        WorkloadSpec {
            clients,
            set_size,
            dup_pct,
            seed,
        }
    }

    /// Elements each client shares with the others in total, before the
    /// per-pair split.
    pub fn requested_dups(&self) -> u64 {
        (self.dup_pct * self.set_size as f64 / 100.0).round() as u64
    }

    pub fn per_pair_share(&self) -> u64 {
        self.requested_dups() / (self.clients as u64 - 1).max(1)
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::InfeasibleSpec(m));
        if self.clients < 2 {
            return bad(format!("need at least 2 clients, got {}", self.clients));
        }
        if self.set_size < 1 {
            return bad("set size must be positive".into());
        }
        if !(0.0..=100.0).contains(&self.dup_pct) {
            return bad(format!("duplication percentage {} outside [0, 100]", self.dup_pct));
        }
        if self.clients as u64 * self.set_size as u64 > 1 << 31 {
            return bad(format!(
                "{} clients x {} elements exceeds the 2^31 value budget",
                self.clients, self.set_size
            ));
        }
        let shared = self.per_pair_share() * (self.clients as u64 - 1);
        if shared > self.set_size as u64 {
            return bad(format!("{shared} shared elements per client exceed the set size"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMetadata {
    pub spec: WorkloadSpec,
    pub per_pair_share: u64,
    pub private_per_client: u64,
    /// Elements of each client that some other client also holds.
    pub dup_per_client: u64,
    pub achieved_dup_pct: f64,
}

impl WorkloadMetadata {
    pub fn for_spec(spec: &WorkloadSpec) -> Self {
        let s = spec.per_pair_share();
        let dup = s * (spec.clients as u64 - 1);
        WorkloadMetadata {
            spec: *spec,
            per_pair_share: s,
            private_per_client: spec.set_size as u64 - dup,
            dup_per_client: dup,
            achieved_dup_pct: 100.0 * dup as f64 / spec.set_size as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub spec: WorkloadSpec,
    /// Client `i` holds `sets[i - 1]`.
    pub sets: Vec<ClientSet>,
    pub metadata: WorkloadMetadata,
}

/// Seeded bijection of the 32-bit integers (a four-round Feistel network),
/// used to scatter consecutive counter values.
struct Scatter {
    round_keys: [u64; 4],
}

impl Scatter {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut round_keys = [0u64; 4];
        for k in &mut round_keys {
            *k = rng.next_u64();
        }
        Scatter { round_keys }
    }

    fn round(key: u64, half: u16) -> u16 {
        // splitmix64 finalizer
        let mut z = key ^ half as u64;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        (z ^ (z >> 31)) as u16
    }

    fn apply(&self, x: u32) -> u32 {
        let (mut l, mut r) = ((x >> 16) as u16, x as u16);
        for &k in &self.round_keys {
            let next = l ^ Self::round(k, r);
            l = r;
            r = next;
        }
        ((l as u32) << 16) | r as u32
    }
}

fn client_rng(seed: u64, client: u32) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&client.to_le_bytes());
    key[12..16].copy_from_slice(b"shuf");
    ChaCha20Rng::from_seed(key)
}

/// Builds the workload: a private pool per client and one pool per
/// unordered pair of clients, all drawn from disjoint counter ranges and
/// then scattered over the 32-bit space. Each set is shuffled.
pub fn generate(spec: &WorkloadSpec) -> Result<Workload, DatagenError> {
    spec.validate()?;
    let meta = WorkloadMetadata::for_spec(spec);
    let m = spec.clients;
    let s = meta.per_pair_share as u32;
    let private = meta.private_per_client as u32;
    let scatter = Scatter::new(spec.seed);

    let mut sets: Vec<Vec<u32>> = vec![Vec::with_capacity(spec.set_size as usize); m as usize];
    let mut counter: u32 = 0;
    let mut take = |k: u32| {
        let range = counter..counter + k;
        counter += k;
        range.map(|c| scatter.apply(c))
    };
    for set in &mut sets {
        set.extend(take(private));
    }
    for i in 0..m as usize {
        for j in i + 1..m as usize {
            let shared: Vec<u32> = take(s).collect();
            sets[i].extend_from_slice(&shared);
            sets[j].extend_from_slice(&shared);
        }
    }
    let sets = sets
        .into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            v.shuffle(&mut client_rng(spec.seed, i as u32 + 1));
            v.into_iter().map(Element::from_u32).collect()
        })
        .collect();
    Ok(Workload {
        spec: *spec,
        sets,
        metadata: meta,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadStats {
    /// `(i, j, |S_i ∩ S_j|)` for every pair `i < j`.
    pub pair_intersections: Vec<(u32, u32, usize)>,
    pub set_sizes: Vec<usize>,
    /// Largest number of clients holding one element.
    pub max_holders: usize,
    pub violations: Vec<String>,
}

impl WorkloadStats {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Recomputes pairwise intersections by brute force and checks the
/// workload's invariants.
pub fn verify(workload: &Workload) -> WorkloadStats {
    let mut stats = WorkloadStats::default();
    let sets: Vec<HashSet<&Element>> = workload.sets.iter().map(|s| s.iter().collect()).collect();
    for (i, (raw, set)) in workload.sets.iter().zip(&sets).enumerate() {
        stats.set_sizes.push(raw.len());
        if raw.len() != set.len() {
            stats
                .violations
                .push(format!("client {} holds {} repeated values", i + 1, raw.len() - set.len()));
        }
        if raw.len() as u64 != workload.spec.set_size as u64 {
            stats.violations.push(format!(
                "client {} holds {} values, expected {}",
                i + 1,
                raw.len(),
                workload.spec.set_size
            ));
        }
    }
    let mut holders: HashMap<&Element, usize> = HashMap::new();
    for set in &sets {
        for e in set {
            *holders.entry(e).or_insert(0) += 1;
        }
    }
    stats.max_holders = holders.values().copied().max().unwrap_or(0);
    let multi = holders.values().filter(|&&h| h > 2).count();
    if multi > 0 {
        stats.violations.push(format!("{multi} values are held by more than two clients"));
    }
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let n = sets[i].intersection(&sets[j]).count();
            stats.pair_intersections.push((i as u32 + 1, j as u32 + 1, n));
        }
    }
    let want = workload.metadata.per_pair_share as usize;
    let uneven: Vec<String> = stats
        .pair_intersections
        .iter()
        .filter(|&&(_, _, n)| n != want)
        .map(|(i, j, n)| format!("({i},{j}):{n}"))
        .collect();
    if !uneven.is_empty() {
        stats.violations.push(format!(
            "{} pairs do not share exactly {want} values: {}",
            uneven.len(),
            uneven.into_iter().take(5).collect::<Vec<_>>().join(" ")
        ));
    }
    stats
}

fn set_values(set: &ClientSet) -> io::Result<Vec<u32>> {
    set.iter()
        .map(|e| {
            e.as_u32()
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, format!("{e} is not a 32-bit value")))
        })
        .collect()
}

/// The single-file form: a header line, then one line of values per client.
pub fn format_workload(workload: &Workload) -> io::Result<String> {
    let s = &workload.spec;
    let mut out = format!(
        "{HEADER_TAG} {FORMAT_VERSION} {} {} {} {}\n",
        s.clients, s.set_size, s.dup_pct, s.seed
    );
    for set in &workload.sets {
        let values = set_values(set)?;
        let line: Vec<String> = values.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_workload(text: &str) -> Result<Workload, DatagenError> {
    let bad = |m: String| DatagenError::Malformed(m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != HEADER_TAG || fields[1] != FORMAT_VERSION {
        return Err(bad(format!("bad header {header:?}")));
    }
    let num = |i: usize| fields[i].parse::<u64>().map_err(|_| bad(format!("bad header field {:?}", fields[i])));
    let clients = u32::try_from(num(2)?).map_err(|_| bad("client count too large".into()))?;
    let set_size = u32::try_from(num(3)?).map_err(|_| bad("set size too large".into()))?;
    let dup_pct: f64 = fields[4].parse().map_err(|_| bad(format!("bad percentage {:?}", fields[4])))?;
    let seed = num(5)?;
    let spec = WorkloadSpec::new(clients, set_size, dup_pct, seed);

    let mut sets = Vec::with_capacity(clients as usize);
    for (i, line) in lines.enumerate() {
        if i as u32 >= clients {
            if line.trim().is_empty() {
                continue;
            }
            return Err(bad(format!("more than {clients} client lines")));
        }
        let set = line
            .split_whitespace()
            .map(|v| {
                v.parse::<u32>()
                    .map(Element::from_u32)
                    .map_err(|_| bad(format!("client {}: bad value {v:?}", i + 1)))
            })
            .collect::<Result<ClientSet, _>>()?;
        sets.push(set);
    }
    if sets.len() != clients as usize {
        return Err(bad(format!("{} client lines, header says {clients}", sets.len())));
    }
    Ok(Workload {
        metadata: WorkloadMetadata::for_spec(&WorkloadSpec {
            clients: clients.max(2),
            set_size: set_size.max(1),
            ..spec
        }),
        spec,
        sets,
    })
}

/// Writes `workload.txt`, one `client_<i>.txt` per client (one value per
/// line) and `metadata.json` into `dir`. Returns the paths written.
pub fn write_workload(dir: &Path, workload: &Workload) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let combined = dir.join(WORKLOAD_FILE);
    fs::write(&combined, format_workload(workload)?)?;
    written.push(combined);
    for (i, set) in workload.sets.iter().enumerate() {
        let mut text = String::with_capacity(set.len() * 11);
        for v in set_values(set)? {
            let _ = writeln!(text, "{v}");
        }
        let p = dir.join(format!("client_{}.txt", i + 1));
        fs::write(&p, text)?;
        written.push(p);
    }
    let meta = dir.join(METADATA_FILE);
    let json = serde_json::to_string_pretty(&workload.metadata).map_err(io::Error::other)?;
    fs::write(&meta, json + "\n")?;
    written.push(meta);
    Ok(written)
}

/// Reads a workload from its single-file form, or from a directory that
/// holds one.
pub fn read_workload(path: &Path) -> Result<Workload, DatagenError> {
    let file = if path.is_dir() { path.join(WORKLOAD_FILE) } else { path.to_path_buf() };
    parse_workload(&fs::read_to_string(file)?)
}

/// Pairwise intersection sizes of arbitrary sets, keyed by `(i, j)`, `i < j`.
pub fn pairwise_intersections(sets: &[ClientSet]) -> BTreeMap<(u32, u32), usize> {
    let hashed: Vec<HashSet<&Element>> = sets.iter().map(|s| s.iter().collect()).collect();
    let mut out = BTreeMap::new();
    for i in 0..hashed.len() {
        for j in i + 1..hashed.len() {
            out.insert((i as u32 + 1, j as u32 + 1), hashed[i].intersection(&hashed[j]).count());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_is_a_bijection_on_a_sample() {
        let s = Scatter::new(5);
        let img: HashSet<u32> = (0..200_000u32).map(|x| s.apply(x)).collect();
        assert_eq!(img.len(), 200_000);
    }

    #[test]
    fn two_clients_thirty_percent() {
        let w = generate(&WorkloadSpec::new(2, 10, 30.0, 1)).unwrap();
        assert_eq!(w.metadata.per_pair_share, 3);
        assert_eq!(w.metadata.private_per_client, 7);
        let st = verify(&w);
        assert!(st.is_clean(), "{:?}", st.violations);
        assert_eq!(st.pair_intersections, vec![(1, 2, 3)]);
    }

    #[test]
    fn zero_percent_is_disjoint() {
        let w = generate(&WorkloadSpec::new(5, 100, 0.0, 2)).unwrap();
        assert!(pairwise_intersections(&w.sets).values().all(|&n| n == 0));
    }

    #[test]
    fn ten_clients_4096() {
        let w = generate(&WorkloadSpec::new(10, 4096, 30.0, 123)).unwrap();
        assert_eq!(w.spec.requested_dups(), 1229);
        assert_eq!(w.metadata.per_pair_share, 136);
        assert_eq!(w.metadata.dup_per_client, 1224);
        let st = verify(&w);
        assert!(st.is_clean(), "{:?}", st.violations);
        assert!(st.pair_intersections.iter().all(|&(_, _, n)| n == 136));
        // each client shares exactly 1224 of its values with someone
        let sets: Vec<HashSet<&Element>> = w.sets.iter().map(|s| s.iter().collect()).collect();
        for i in 0..10 {
            let shared = w.sets[i]
                .iter()
                .filter(|e| (0..10).any(|j| j != i && sets[j].contains(e)))
                .count();
            assert_eq!(shared, 1224);
        }
        assert!((w.metadata.achieved_dup_pct - 100.0 * 1224.0 / 4096.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = WorkloadSpec::new(4, 300, 50.0, 77);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&WorkloadSpec { seed: 78, ..spec }).unwrap();
        assert_ne!(generate(&spec).unwrap().sets, other.sets);
    }

    #[test]
    fn corruption_is_flagged() {
        let mut w = generate(&WorkloadSpec::new(4, 50, 30.0, 3)).unwrap();
        // a private value of client 1 cloned into clients 2 and 3
        let shared: HashSet<&Element> = w.sets[1..].iter().flatten().collect();
        let private = w.sets[0].iter().find(|e| !shared.contains(e)).unwrap().clone();
        w.sets[1][0] = private.clone();
        w.sets[2][0] = private;
        let st = verify(&w);
        assert!(!st.is_clean());
        assert_eq!(st.max_holders, 3);
    }

    #[test]
    fn feasibility_sweep() {
        for m in 2..=16 {
            for p in [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0] {
                let spec = WorkloadSpec::new(m, 4096, p, 0);
                spec.validate().unwrap();
                let meta = WorkloadMetadata::for_spec(&spec);
                let err = (meta.achieved_dup_pct - p).abs() / 100.0;
                assert!(err <= (m as f64 - 1.0) / 4096.0, "m={m} p={p} err={err}");
            }
        }
        // the largest setting in the benchmark grids
        assert!(WorkloadSpec::new(50, 1 << 19, 90.0, 0).validate().is_ok());
    }

    #[test]
    fn rejects_bad_specs() {
        for spec in [
            WorkloadSpec::new(1, 10, 10.0, 0),
            WorkloadSpec::new(2, 0, 10.0, 0),
            WorkloadSpec::new(2, 10, 101.0, 0),
            WorkloadSpec::new(1 << 12, 1 << 20, 10.0, 0),
        ] {
            assert!(matches!(generate(&spec), Err(DatagenError::InfeasibleSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let w = generate(&WorkloadSpec::new(3, 20, 30.0, 9)).unwrap();
        let written = write_workload(dir.path(), &w).unwrap();
        assert_eq!(written.len(), 5);
        let back = read_workload(dir.path()).unwrap();
        assert_eq!(back, w);
        let text = fs::read_to_string(dir.path().join(WORKLOAD_FILE)).unwrap();
        assert!(text.starts_with("epmpd-workload v1 3 20 30 9\n"));
        let first = fs::read_to_string(dir.path().join("client_1.txt")).unwrap();
        assert_eq!(first.lines().count(), 20);
    }

    #[test]
    fn malformed_files() {
        assert!(parse_workload("").is_err());
        assert!(parse_workload("epmpd-workload v2 2 1 0 0\n1\n2\n").is_err());
        assert!(parse_workload("epmpd-workload v1 2 1 0 0\n1\n").is_err());
        assert!(parse_workload("epmpd-workload v1 2 1 0 0\n1\nx\n").is_err());
        let w = parse_workload("epmpd-workload v1 2 3 0 0\n1 1 2\n\n").unwrap();
        assert_eq!(w.sets[0].len(), 3);
        assert!(w.sets[1].is_empty());
    }
}
