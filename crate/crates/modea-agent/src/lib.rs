//! Learning stack for configuring modular evolutionary algorithms: a small
//! reverse-mode autodiff core, a Transformer policy over per-module state
//! tokens, a multitask PPO trainer, and an evaluation harness with a pooled
//! min–max-normalized performance metric.

pub mod eval;
pub mod policy;
pub mod tensor;
pub mod trainer;
