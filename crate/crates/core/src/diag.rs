use std::fmt;

use serde::Serialize;

use crate::span::Span;

/// A structured diagnostic, as printed by `lucidc check --json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: String,
    pub handler: Option<String>,
    pub spans: Vec<Span>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}
