//! Lexing, parsing, name resolution and printing of `.lucid` sources.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod resolve;

use thiserror::Error;

use crate::diag::Diagnostic;
use crate::span::Span;

pub use ast::Program;
pub use lexer::tokenize;
pub use parser::parse_program;
pub use pretty::pretty_print;
pub use resolve::{resolve_names, EventInfo, GlobalInfo, Resolved, ValTy};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{span}: unknown character `{ch}`")]
    UnknownCharacter { ch: char, span: Span },
    #[error("{span}: malformed literal")]
    BadLiteral { span: Span },
    #[error("{span}: syntax error: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        span: Span,
        expected: Vec<String>,
        found: String,
    },
    #[error("{span}: unbound name `{name}`")]
    UnboundName { name: String, span: Span },
    #[error("{span}: duplicate name `{name}`")]
    DuplicateName { name: String, span: Span },
    #[error("{span}: handler for `{event}` does not match the event's parameter list")]
    HandlerSignatureMismatch { event: String, span: Span },
    #[error("{span}: `{name}` is not an integer constant")]
    NonConstantSize { name: String, span: Span },
    #[error("{span}: unknown module `{name}` (only Array globals are supported)")]
    UnknownModule { name: String, span: Span },
    #[error("{span}: integer width {width} outside 1..=32")]
    BadWidth { width: u64, span: Span },
}

impl FrontendError {
    pub fn span(&self) -> &Span {
        match self {
            FrontendError::UnknownCharacter { span, .. }
            | FrontendError::BadLiteral { span }
            | FrontendError::Syntax { span, .. }
            | FrontendError::UnboundName { span, .. }
            | FrontendError::DuplicateName { span, .. }
            | FrontendError::HandlerSignatureMismatch { span, .. }
            | FrontendError::NonConstantSize { span, .. }
            | FrontendError::UnknownModule { span, .. }
            | FrontendError::BadWidth { span, .. } => span,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FrontendError::UnknownCharacter { .. } => "UnknownCharacter",
            FrontendError::BadLiteral { .. } => "BadLiteral",
            FrontendError::Syntax { .. } => "SyntaxError",
            FrontendError::UnboundName { .. } => "UnboundName",
            FrontendError::DuplicateName { .. } => "DuplicateName",
            FrontendError::HandlerSignatureMismatch { .. } => "HandlerSignatureMismatch",
            FrontendError::NonConstantSize { .. } => "NonConstantSize",
            FrontendError::UnknownModule { .. } => "UnknownModule",
            FrontendError::BadWidth { .. } => "BadWidth",
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic {
            kind: self.kind().to_string(),
            handler: None,
            spans: vec![self.span().clone()],
            message: self.to_string(),
        }
    }
}

/// Tokenizes and parses `source`.
pub fn parse_source(file: &str, source: &str) -> Result<Program, FrontendError> {
    parse_program(&tokenize(file, source)?)
}
