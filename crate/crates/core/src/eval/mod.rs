//! Oracles, workloads, q-error reports and the noise-injection variance experiment.

mod oracle;
mod qerror;
pub mod synth;
mod variance;
mod workload;

pub use oracle::{brute_force_cardinality, sort_merge_cardinality, ORACLE_BUDGET};
pub use qerror::{percentile, qerror, QErrorReport, QErrorRow};
pub use variance::{variance_experiment, NoiseModel, VarianceReport, VarianceRow};
pub use workload::{generate_workload, read_jsonl, true_cardinality, write_jsonl, WorkloadConfig};
