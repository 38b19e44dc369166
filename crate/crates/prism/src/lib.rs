//! Regime-aware differentially private synthesis of discrete tabular data:
//! task-derived marginal workloads, closed-form privacy-budget allocation,
//! factored-model sampling, and a train-on-synthetic/test-on-real harness.

pub mod allocation;
pub mod bench;
pub mod core;
pub mod eval;
pub mod par;
pub mod privacy;
pub mod structure;
pub mod synthesis;
pub mod workload;
