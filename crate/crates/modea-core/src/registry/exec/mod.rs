//! Numeric kernels behind every registered sub-module variant.
//!
//! Each sub-module category has one kernel file; the per-variant dispatch
//! takes the variant index (the low 9 bits of the module id), already
//! materialized parameters, and an explicit random stream. The kernels are
//! deliberately free of environment state: populations, archives, and
//! velocity arrays are owned by the caller, which makes every kernel
//! testable against a hand-written oracle under a shared stream.
//!
//! Randomness contracts (exact draw orders) are documented per file so the
//! oracle tests can replay streams bit-for-bit.

pub mod boundary;
pub mod crossover;
pub mod init;
pub mod mutation;
pub mod niching;
pub mod pso;
pub mod reduction;
pub mod restart;
pub mod selection;
pub mod sharing;

pub use boundary::boundary_control;
pub use crossover::{crossover, CrossoverInput};
pub use init::initialize;
pub use mutation::{mutate, MutationInput};
pub use niching::{group_sizes, niche};
pub use pso::{pso_update, ClpsoMemory, PsoView, CLPSO_REFRESH_GAP, VELOCITY_CLAMP_FRACTION};
pub use reduction::scheduled_size;
pub use restart::{restart_triggered, RestartContext};
pub use selection::{select, SelectionOutcome};
pub use sharing::share_best;
