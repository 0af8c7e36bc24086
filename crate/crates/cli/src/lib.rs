//! Library side of the `epmpd` binary, split out so integration tests and
//! the acceptance target can drive the commands directly.

pub mod args;
pub mod bench;
pub mod commands;
pub mod config;
pub mod run;
pub mod serve;

use std::fmt;
use std::process::ExitCode;
use std::str::FromStr;

use epmpd_core::datagen::DatagenError;
use epmpd_core::egpsi::EgpsiError;
use epmpd_core::epmpd::EpmpdError;
use epmpd_core::runtime::RuntimeError;
use epmpd_core::Variant;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Transport(_) => 5,
            CliError::Io(_) => 1,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::InfeasibleSpec(m) => CliError::Infeasible(m),
            DatagenError::Malformed(m) => CliError::Usage(format!("malformed workload: {m}")),
            DatagenError::Io(e) => CliError::Io(e.to_string()),
        }
    }
}

impl From<EpmpdError> for CliError {
    fn from(e: EpmpdError) -> Self {
        match e {
            EpmpdError::TooFewClients(_) => CliError::Usage(e.to_string()),
            EpmpdError::DuplicateWithinSet { .. } | EpmpdError::Invariant(_) => CliError::Verification(e.to_string()),
            EpmpdError::Runtime(r) => r.into(),
            EpmpdError::Protocol(p) => p.into(),
        }
    }
}

impl From<EgpsiError> for CliError {
    fn from(e: EgpsiError) -> Self {
        match e {
            EgpsiError::Runtime(r) => r.into(),
            other => CliError::Transport(other.to_string()),
        }
    }
}

impl From<RuntimeError> for CliError {
    fn from(e: RuntimeError) -> Self {
        CliError::Transport(e.to_string())
    }
}

/// A deduplication method: the tree over one of the group-PSI variants, or
/// the all-pairs baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Tree(Variant),
    Naive,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Tree(Variant::I),
        Method::Tree(Variant::II),
        Method::Tree(Variant::III),
        Method::Naive,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Tree(v) => v.fmt(f),
            Method::Naive => f.write_str("naive"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "naive" | "pairwise" => Ok(Method::Naive),
            _ => s
                .parse::<Variant>()
                .map(Method::Tree)
                .map_err(|_| format!("unknown variant {s:?} (expected I, II, III or naive)")),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Inproc,
    Tcp,
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportKind::Inproc => "inproc",
            TransportKind::Tcp => "tcp",
        })
    }
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "tcp" => Ok(TransportKind::Tcp),
            _ => Err(format!("unknown transport {s:?} (expected inproc or tcp)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("2".parse::<Method>().unwrap(), Method::Tree(Variant::II));
        assert!("iv".parse::<Method>().is_err());
        assert_eq!(serde_json::to_string(&Method::Naive).unwrap(), "\"naive\"");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::from(DatagenError::InfeasibleSpec(String::new())).exit_code(), 3);
        let dup = EpmpdError::DuplicateWithinSet {
            client: 1,
            element: 5u32.into(),
        };
        assert_eq!(CliError::from(dup).exit_code(), 4);
        assert_eq!(CliError::from(RuntimeError::Aborted).exit_code(), 5);
    }
}
