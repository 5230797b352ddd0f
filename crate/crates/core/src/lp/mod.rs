//! The transport linear program: assembly, solution and export.

mod problem;
pub mod simplex;
mod solve;

pub use problem::{assemble, LpProblem, RowKind, Variable, VariableLayout};
pub use solve::{
    solve, Backend, Residuals, SolveOptions, SolveStats, TransportSolution, DEFAULT_DENSE_LIMIT,
    MARGINAL_TOLERANCE, NEGATIVE_MASS_FLOOR, PUSHFORWARD_TOLERANCE, TERMINAL_TOLERANCE,
};
