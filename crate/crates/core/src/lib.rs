//! Annealed Gibbs samplers for clustering assignment optimization.
//!
//! Two samplers over the same energy models: plain simulated annealing and
//! a ring of coupled replicas obtained from a Suzuki-Trotter expansion of
//! an annealed quantum distribution, with a label-permutation-invariant
//! purity steering the replica interaction. A dense small-instance oracle
//! verifies the expansion and the samplers' stationary distributions
//! numerically, and the CLI runs equal-budget comparisons between the two.

// Parameter guards use `!(v > 0.0)` so NaN is rejected along with the
// out-of-range values; `v <= 0.0` would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod config;
pub mod data;
pub mod energy;
pub mod error;
pub mod io;
pub mod oracle;
pub mod runner;
pub mod sampler;
pub mod schedule;
pub mod synth;

pub use assignment::{
    purity, similarity_s, similarity_strict, Assignment, ContingencyTable, ReplicaChain, Side,
};
pub use data::Dataset;
pub use energy::{ClusterStats, EnergyModel, ModelKind, MogNiwModel, MogNiwPrior, SqLossModel};
pub use error::{Error, Result};
pub use sampler::{
    compare_equal_budget, run, ComparisonReport, Mode, RunResult, SamplerConfig, SeedComparison,
    Termination, TraceRecord,
};
pub use schedule::{classify_path, coupling, ScheduleParams, SchedulePath, ScheduleState};
