//! Corpus-to-inference toolkit for conditioned sound change.
//!
//! The pipeline runs in three stages, each usable on its own:
//!
//! 1. [`corpus`] ingests etymon/reflex word pairs from TSV, normalizes
//!    transcriptions into segment sequences, and merges dialect records
//!    into languages with geographic metadata.
//! 2. [`align`] + [`changes`] learn segment-similarity scores by EM,
//!    produce Needleman-Wunsch alignments, and turn them into conditioned
//!    rewrite rules indexed as a ragged collection of reflex distributions.
//! 3. [`priors`] + [`model`] + [`diagnostics`] fit a two-component
//!    mixed-membership dialect model over those rules by stochastic
//!    variational inference, under either a sparse Dirichlet or a
//!    partitioned logistic-normal prior, and criticize the fit
//!    (convergence diagnostics, posterior predictive checks,
//!    randomization tests).

#![allow(clippy::needless_range_loop)]

pub mod align;
pub mod changes;
pub mod corpus;
pub mod diagnostics;
pub mod model;
pub mod priors;
pub mod stats;
