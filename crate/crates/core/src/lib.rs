//! Execution-based uncertainty scores for sampled candidate programs.
//!
//! Candidates for a task run on a shared fuzzed input set; identical
//! execution signatures form semantic clusters, and the graded distances
//! between clusters give two scores: SDE, a Rao quadratic entropy over all
//! cluster pairs, and DSDE, the probability-weighted distance of the other
//! clusters from the one holding the top-ranked candidate.

pub mod clustering;
pub mod corpus;
pub mod eval;
pub mod executor;
pub mod fuzzgen;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod sampler;
