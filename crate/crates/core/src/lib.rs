//! Search for interpretable traffic-signal priority functions.
//!
//! A priority function is a small symbolic expression over eight
//! movement-level traffic features. Every intersection scores each of its
//! phases by summing the priorities of the movements the phase releases and
//! switches to the best one. Priority functions are discovered with Monte
//! Carlo tree search over breadth-first token lists, evaluated in a built-in
//! lane-queue microsimulator.
//!
//! Modules:
//! - [`expr`]: token alphabet, validity, tree decoding and evaluation.
//! - [`sim`]: road networks, scenarios and the simulator.
//! - [`policy`]: features, phase selection and classical baselines.
//! - [`search`]: the tree search.
//! - [`harness`]: scenario generation, experiments and result files.

pub mod error;
pub mod expr;
pub mod harness;
pub mod policy;
pub mod search;
pub mod sim;

pub use error::{Error, Result};
pub use expr::{ExprTree, Feature, Parent, PolicyCost, PriorityFunction, Token};
