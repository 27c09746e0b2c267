//! Difficulty-targeted C-test generation.
//!
//! A C-test gaps the second part of selected words in a passage. This crate
//! picks which words to gap and how many characters to remove so that the
//! mean predicted error rate of the gaps hits a target, by compiling the
//! choice plus a tree-ensemble difficulty model into a mixed-integer program
//! and solving it exactly.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod mip;
pub mod model;
pub mod solver;
pub mod strategies;
pub mod synth;

pub use corpus::{CTest, CandidatePolicy, Document, Gap, GapCandidate, Instance};
pub use error::{Error, Result};
pub use features::{FeatureTable, FeatureVector, PlacementContext};
pub use model::{FeatureBox, TrainConfig, TreeEnsemble};
