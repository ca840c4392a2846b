//! Ordered type-and-effect checking of handlers and functions.

mod check;
pub mod solver;

pub use check::{
    check_program, check_program_with, Access, CheckError, CheckOptions, Checked, FunEffectSig,
    OrderError, ParamSig,
};
pub use solver::{solve_constraints, Constraint, StageTerm, Unsatisfiable, VarId};
