//! Building blocks for modular black-box optimization.
//!
//! The crate is organised around four layers:
//!
//! * [`problems`] — a catalog of shifted/rotated continuous test functions with
//!   deterministic instance construction and evaluation counting.
//! * [`registry`] — the typed table of evolutionary operator variants
//!   (mutation, crossover, PSO updates, boundary handling, selection, …),
//!   their configuration spaces and chaining rules, plus the numeric kernels
//!   that execute each variant.
//! * [`structure`] — generation and validation of legal operator chains
//!   ("algorithm structures"), including niching branches and serialization.
//! * [`env`] — an MDP-style environment that runs one optimizer generation per
//!   step on a (structure, problem) pair, exposes per-module state tokens and
//!   returns a normalized improvement reward.

pub mod env;
pub mod error;
pub mod problems;
pub mod registry;
pub mod rng;
pub mod structure;

pub use error::CoreError;
