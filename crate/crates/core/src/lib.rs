//! Allocation-only core of an instruction-bootstrapping data pipeline.
//!
//! Everything here is pure over its inputs: ROUGE-L similarity, the instruction
//! pool and its admission filter, reward aggregation and KL shaping, a toy
//! PPO loop, prompt templates and completion parsers, benchmark scoring, and
//! dataset diagnostics. Model access goes through the traits in [`backend`];
//! file formats, HTTP clients and the CLI live in the companion `refine` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod analysis;
pub mod backend;
pub mod bootstrap;
pub mod eval;
pub mod hash;
pub mod instancegen;
pub mod mock;
pub mod pool;
pub mod reward;
pub mod rouge;
pub mod toyrl;
pub mod types;

pub use backend::{
    BackendError, Capabilities, GenParams, Generator, HealthStatus, IndicatorScores, LogProber,
    QualityScorer,
};
pub use pool::{Admission, PoolState, Rejection};
pub use rouge::{rouge_l, RougeScore};
pub use types::{IftRecord, Instance, Instruction, Origin};
