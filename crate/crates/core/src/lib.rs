//! Modeling and exact solving of multistage robust discrete optimization
//! problems as quantified integer programs.
//!
//! The crate provides:
//!
//! - [`model`]: exact rational data model and validation for quantified
//!   integer linear programs, with an optional universal constraint system
//!   restricting the adversary to a polytope.
//! - [`search`]: an alpha-beta game-tree solver computing the optimal
//!   worst-case value and first-stage assignment, plus an independent
//!   exhaustive oracle.
//! - [`relax`]: interval bound propagation used for pruning by both solvers.
//! - [`dep`]: expansion of a quantified instance into its deterministic
//!   equivalent MIP over the scenario tree, with history-indexed variable
//!   copies (nonanticipativity by construction).
//! - [`mip`]: a branch-and-bound solver for the flattened single-player
//!   instances.
//! - [`problems`]: seeded generators for the four multistage robust
//!   families (selection, assignment, lot-sizing, knapsack).
//! - [`qipfile`]: canonical text serialization (`.qlp`).

pub mod dep;
pub mod mip;
pub mod model;
pub mod problems;
pub mod qipfile;
pub mod rational;
pub mod relax;
pub mod search;

pub use model::{
    validate, LinConstraint, ObjSense, QipInstance, QuantBlock, Quantifier, Sense, Side,
    ValidationReport, VarDomain, VarKind, Violation,
};
pub use rational::{rat, ratio, GameValue, Rat};
pub use search::{
    legal_universal_moves, oracle_solve, resolve_trailing, solve, MoveOrdering, SearchConfig,
    SolveResult, SolveStatus,
};
