//! Simulation of recursive language-model training on generated data.
//!
//! The crate has three layers:
//!
//! * [`vocab`], [`corpus`] and [`stats`]: vocabularies, corpora and the
//!   context counts that define a ground-truth next-token distribution.
//! * [`schedule`] and [`recurrence`]: per-generation error schedules and the
//!   Replace / Accumulate-Subsample output-distribution recurrences, their
//!   closed forms, limit ratios and the convergence scan. [`verify`] runs
//!   the randomized oracle-equivalence suites.
//! * [`lab`]: an additive-smoothing count model trained recursively on its
//!   own samples, with perplexity tracking and empirical error extraction.
//!
//! [`cli`] wires everything into the `lmcollapse` binary.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod lab;
pub mod numfmt;
pub mod recurrence;
pub mod schedule;
pub mod stats;
pub mod sum;
pub mod verify;
pub mod vocab;

pub use corpus::{subsample, Corpus, TokenSequence};
pub use error::{Error, Result};
pub use recurrence::{
    closed_accumulate, closed_replace, convergence_scan, decompose_error, iterate,
    iterate_accumulate, iterate_replace, limit_ratio, min_slack, Decomposition, Paradigm,
    Recurrence, StateVector, Trajectory,
};
pub use schedule::{ErrorSchedule, ScheduleKind};
pub use stats::{count_contexts, ground_truth, ContextCounts, ContextStats, Distribution};
pub use vocab::{TokenId, Vocabulary, BOS};
