//! Non-neural references: validator, exact search, baselines and the MILP
//! exporter.

use thiserror::Error;

use crate::env::EnvError;
use crate::network::NetworkError;

mod enumerate;
mod heuristics;
pub mod milp;
mod oracle;
mod validate;

pub use enumerate::{enumerate_milp, MilpOutcome, MAX_BINARIES};
pub use heuristics::{greedy_action, greedy_heuristic, random_policy_rollout};
pub use milp::{encode_routes, export_milp, families_for, Family, MilpModel};
pub use oracle::{exact_oracle, exact_oracle_with, OracleLimits};
pub use validate::{validate_solution, Rule, ValidationReport, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("instance too large for exact search ({artificial} artificial, {original} original nodes)")]
    InstanceTooLarge { artificial: usize, original: usize },
    #[error("model has {binaries} binaries, enumeration limit is {}", MAX_BINARIES)]
    ModelTooLarge { binaries: usize },
    #[error("row {0} is not a difference constraint")]
    UnsupportedRow(String),
    #[error("inconsistent attributes: {0}")]
    InconsistentAttributes(String),
    #[error("no feasible action in a non-terminal state")]
    NoFeasibleAction,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}
