//! Backward dynamic programme on a localized log-price grid.

pub mod advance;
pub mod fft;
pub mod grid;
pub mod kernel;
pub mod policy;
pub mod rebalance;
pub mod solver;

pub use advance::{advance_interval, Advancer, KernelDiagnostics, ValueSurface};
pub use grid::{LogAxis, SolverGrid, WealthGrid};
pub use policy::{ControlPolicy, PolicySlice};
pub use rebalance::{admissible_withdrawals, rebalance_optimize, terminal_condition, Rebalanced};
pub use solver::{solve_policy, DpSolver, DpStats, SolveOutput, SolverConfig};
