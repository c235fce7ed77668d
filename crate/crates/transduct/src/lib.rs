//! Simulation and verification workbench for transductive vs. standard
//! online learning over perfect-binary-tree domains.
//!
//! The crate provides the two game protocols (instances revealed per round,
//! or the whole sequence announced up front), learners (halving, standard
//! optimal, a splitting-experts transductive learner), adversaries (balanced
//! version-space ratio, mistake-tree, scripted), sequence minimalization via
//! rigid adversaries, and exact minimax oracles for desk-scale instances, so
//! that mistake bounds and structural claims can be checked as executable
//! properties.

pub mod adversaries;
pub mod dyadic;
pub mod engine;
pub mod error;
pub mod harness;
pub mod hypotheses;
pub mod learners;
pub mod oracle;
pub mod seqmin;
pub mod treebits;

pub use error::{Error, Result};
