//! Benchmark sweeps: every combination of the grid's axes, repeated, one
//! CSV row per run.

use std::io::Write;

use epmpd_core::datagen::{generate, WorkloadSpec};
use epmpd_core::NetProfile;
use serde::{Deserialize, Serialize};

use crate::run::{run_dedup, RunReport, RunSettings};
use crate::{CliError, Method, TransportKind};

pub const CSV_COLUMNS: [&str; 17] = [
    "variant",
    "clients",
    "set_size",
    "dup_pct",
    "transport",
    "profile",
    "rep",
    "seed",
    "total_s",
    "client_avg_s",
    "client_max_s",
    "tee_s",
    "bytes_clients",
    "bytes_tee",
    "prp_calls",
    "oprf_rounds",
    "invocations",
];

mod as_string {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub variants: Vec<Method>,
    pub clients: Vec<u32>,
    pub set_sizes: Vec<u32>,
    pub dup_pcts: Vec<f64>,
    pub transport: TransportKind,
    #[serde(with = "as_string")]
    pub profile: NetProfile,
    pub repetitions: u32,
    pub seed: u64,
}

impl Default for ExperimentGrid {
    /// The client-count sweep at a desk-sized set size.
    fn default() -> Self {
        ExperimentGrid {
            variants: vec![Method::Tree(epmpd_core::Variant::I), Method::Tree(epmpd_core::Variant::II)],
            clients: vec![4, 8, 16, 32],
            set_sizes: vec![1 << 14],
            dup_pcts: vec![30.0],
            transport: TransportKind::Inproc,
            profile: NetProfile::ideal(),
            repetitions: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub clients: u32,
    pub set_size: u32,
    pub dup_pct: f64,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<(), CliError> {
        let empty = [
            ("variants", self.variants.is_empty()),
            ("clients", self.clients.is_empty()),
            ("set_sizes", self.set_sizes.is_empty()),
            ("dup_pcts", self.dup_pcts.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(CliError::Usage(format!("grid axis {name} is empty")));
        }
        if self.repetitions == 0 {
            return Err(CliError::Usage("repetitions must be at least 1".into()));
        }
        for cell in self.cells() {
            WorkloadSpec::new(cell.clients, cell.set_size, cell.dup_pct, 0).validate()?;
        }
        Ok(())
    }

    /// Cells in row order: workload axes outermost, method innermost, so
    /// every method of a cell runs on the same workload.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &clients in &self.clients {
            for &set_size in &self.set_sizes {
                for &dup_pct in &self.dup_pcts {
                    for &method in &self.variants {
                        out.push(Cell {
                            method,
                            clients,
                            set_size,
                            dup_pct,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn row_count(&self) -> usize {
        self.cells().len() * self.repetitions as usize
    }

    /// Seed of repetition `rep`, used for both the workload and the run.
    /// Every cell shares it, so methods are compared on identical inputs.
    pub fn row_seed(&self, rep: u32) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub variant: String,
    pub clients: u32,
    pub set_size: u32,
    pub dup_pct: f64,
    pub transport: String,
    pub profile: String,
    pub rep: u32,
    pub seed: u64,
    pub total_s: f64,
    pub client_avg_s: f64,
    pub client_max_s: f64,
    pub tee_s: f64,
    pub bytes_clients: u64,
    pub bytes_tee: u64,
    pub prp_calls: u64,
    pub oprf_rounds: u64,
    pub invocations: u64,
}

/// Runs one cell at one repetition.
pub fn run_cell(grid: &ExperimentGrid, cell: &Cell, rep: u32) -> Result<CsvRow, CliError> {
    let seed = grid.row_seed(rep);
    let workload = generate(&WorkloadSpec::new(cell.clients, cell.set_size, cell.dup_pct, seed))?;
    let settings = RunSettings {
        transport: grid.transport,
        profile: grid.profile,
        ..RunSettings::new(cell.method, seed)
    };
    let result = run_dedup(&workload.sets, &settings)?;
    let r = RunReport::new(&settings, &result);
    Ok(CsvRow {
        variant: r.variant,
        clients: cell.clients,
        set_size: cell.set_size,
        dup_pct: cell.dup_pct,
        transport: r.transport,
        profile: r.profile,
        rep,
        seed,
        total_s: r.total_s,
        client_avg_s: r.client_avg_s,
        client_max_s: r.client_max_s,
        tee_s: r.tee_s,
        bytes_clients: r.bytes_clients,
        bytes_tee: r.bytes_tee,
        prp_calls: r.prp_calls,
        oprf_rounds: r.oprf_rounds,
        invocations: r.invocations,
    })
}

/// Runs the whole grid, writing each row as soon as it is done. `progress`
/// sees every finished row.
pub fn run_grid<W: Write>(
    grid: &ExperimentGrid,
    out: W,
    mut progress: impl FnMut(&CsvRow),
) -> Result<Vec<CsvRow>, CliError> {
    grid.validate()?;
    let mut w = csv::Writer::from_writer(out);
    let mut rows = Vec::with_capacity(grid.row_count());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    for rep in 0..grid.repetitions {
        for cell in grid.cells() {
            let row = run_cell(grid, &cell, rep)?;
            w.serialize(&row).map_err(io)?;
            w.flush()?;
            progress(&row);
            rows.push(row);
        }
    }
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(io)?;
    }
    w.flush()?;
    Ok(rows)
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<CsvRow>, CliError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("bad CSV: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use epmpd_core::Variant;

    fn tiny() -> ExperimentGrid {
        ExperimentGrid {
            variants: vec![Method::Tree(Variant::I), Method::Tree(Variant::III), Method::Naive],
            clients: vec![3],
            set_sizes: vec![32],
            dup_pcts: vec![30.0],
            repetitions: 2,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn rows_and_header() {
        let mut buf = Vec::new();
        let rows = run_grid(&tiny(), &mut buf, |_| {}).unwrap();
        assert_eq!(rows.len(), 6);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 7);
        assert_eq!(read_rows(text.as_bytes()).unwrap(), rows);
        let naive = rows.iter().find(|r| r.variant == "naive").unwrap();
        assert_eq!(naive.invocations, 3);
        assert_eq!(rows.iter().filter(|r| r.seed == 12).count(), 3);
    }

    #[test]
    fn bad_grids() {
        let g = ExperimentGrid {
            clients: vec![],
            ..tiny()
        };
        assert!(matches!(g.validate(), Err(CliError::Usage(_))));
        let g = ExperimentGrid {
            repetitions: 0,
            ..tiny()
        };
        assert!(g.validate().is_err());
        let g = ExperimentGrid {
            clients: vec![1],
            ..tiny()
        };
        assert!(matches!(g.validate(), Err(CliError::Infeasible(_))));
    }

    #[test]
    fn grid_json_uses_profile_names() {
        let v = serde_json::to_value(ExperimentGrid::default()).unwrap();
        assert_eq!(v["profile"], "ideal");
        assert_eq!(v["variants"][1], "II");
    }
}
