//! Low-entropy arrival orders for free-order secretary problems.
//!
//! The crate builds small multisets of permutations whose uniform
//! distribution preserves the probability of chosen "positive events" (unions
//! of disjoint bucket-and-order constraints), lifts them to large ground sets
//! through a Reed–Solomon dimension-reduction family, and evaluates the online
//! selection algorithms that motivate them.
//!
//! Modules:
//! - [`perm_core`]: permutations, multisets, entropy, seeded sampling.
//! - [`events`]: bucketings, atomic and positive events, exact probabilities.
//! - [`derandomizer`]: the conditional-expectation construction.
//! - [`dimred`]: Reed–Solomon reduction families and lifting.
//! - [`algorithms`]: wait-and-pick and the multiple-threshold algorithm.
//! - [`adversary`]: semitone sequences and hard value assignments.
//! - [`analysis`]: closed-form success probabilities and bounds.
//! - [`harness`]: end-to-end pipelines and Monte-Carlo evaluation.

pub mod adversary;
pub mod algorithms;
pub mod analysis;
pub mod derandomizer;
pub mod dimred;
pub mod error;
pub mod events;
pub mod harness;
pub mod perm_core;

pub use error::{Error, Result};
