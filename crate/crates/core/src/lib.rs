//! Compiler passes, pipeline layout and network interpreter for an
//! event-driven data-plane language.

pub mod diag;
pub mod frontend;
pub mod span;
pub mod memop;
pub mod effects;
pub mod calculus;
pub mod lower;
pub mod driver;
pub mod layout;
pub mod emit;
pub mod interp;
pub mod fuzz;
pub mod capacity;
