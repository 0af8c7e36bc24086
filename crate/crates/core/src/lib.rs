//! Private deduplication across many clients: group private set
//! intersection in three variants, the binary-tree orchestration built on
//! them, and the runtime, network and workload tooling used to measure them.

pub mod crypto;
pub mod datagen;
pub mod egpsi;
pub mod element;
pub mod epmpd;
pub mod netio;
pub mod oracle;
pub mod runtime;

pub use datagen::{generate, Workload, WorkloadSpec};
pub use egpsi::{Cluster, EgpsiOptions, GroupAssignment, IntersectionReport, Variant};
pub use element::{set_from_u32s, ClientSet, Element};
pub use epmpd::{build_cluster_plan, epmpd_run, naive_pairwise_run, ClusterPlan, DedupOutcome, EpmpdOptions, Removal};
pub use oracle::{oracle_dedup, Transcript};
pub use runtime::{NetProfile, PartyId, Phase, Runtime, Step};
