//! Recursive training of a count language model on its own samples.

pub mod eval;
pub mod generate;
pub mod model;
pub mod run;

pub use eval::{perplexity, validation_loss};
pub use generate::{derive_seed, generate_corpus, GenerationConfig, SyntheticChain};
pub use model::{train_count_lm, CountLM};
pub use run::{
    default_probes, replace_next_corpus, run_recursive, split_holdout, GenerationMetrics,
    GenerationView, LabInput, Probe, ProbeReport, RunConfig, RunReport,
};
