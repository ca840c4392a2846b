//! Lowering of checked handlers to atomic statements and the table graph.

mod graph;
mod inline;
pub mod ir;
mod normalize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::resolve::{val_ty, Resolved, ValTy};

pub use graph::{build_table_graph, EdgeLabel, GraphEdge, HandlerMeta, TableGraph, TableNode};
pub use inline::inline_calls;
pub use ir::*;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum LowerError {
    #[error("recursive call to `{function}`")]
    RecursionDetected { function: String },
    #[error("call to unknown function `{function}`")]
    UnknownFunction { function: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowerConfig {
    /// Widest difference a variable-vs-variable comparison may produce
    /// before it is reported.
    pub max_compare_bits: u32,
}

impl Default for LowerConfig {
    fn default() -> Self {
        LowerConfig {
            max_compare_bits: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProgramIr {
    pub handlers: Vec<HandlerIr>,
    /// Global arrays in declaration order.
    pub arrays: Vec<String>,
    pub warnings: Vec<String>,
}

/// Normalizes every handler of an inlined program.
pub fn normalize_program(r: &Resolved, cfg: &LowerConfig) -> ProgramIr {
    let mut handlers = Vec::new();
    let mut warnings = Vec::new();
    for (event, params, body, _) in r.handlers() {
        let mut n = normalize::Normalizer::new(r, cfg, event);
        let mut names = Vec::new();
        for p in params {
            let w = match val_ty(&p.ty) {
                ValTy::Int(w) => w,
                _ => 1,
            };
            names.push(n.declare(&p.name.name, w));
        }
        n.block(body);
        warnings.append(&mut n.warnings);
        let vars = std::mem::take(&mut n.vars);
        handlers.push(HandlerIr {
            event: event.to_string(),
            id: r.event(event).map(|e| e.id).unwrap_or(0),
            params: names,
            vars,
            body: n.finish(),
        });
    }
    ProgramIr {
        handlers,
        arrays: r.globals.iter().map(|g| g.name.clone()).collect(),
        warnings,
    }
}

/// Inlines functions and normalizes every handler.
pub fn lower_program(r: &Resolved, cfg: &LowerConfig) -> Result<ProgramIr, LowerError> {
    let inlined = inline_calls(r)?;
    Ok(normalize_program(&inlined, cfg))
}
