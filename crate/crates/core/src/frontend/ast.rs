//! Surface syntax tree.

use std::fmt;

use serde::Serialize;

use crate::span::Span;

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize)]
pub struct Program {
    pub decls: Vec<Decl>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>, span: Span) -> Self {
        Ident {
            name: name.into(),
            span,
        }
    }
}

/// A `<size>`: either a literal bit count or the name of an integer constant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Size {
    Lit(u32),
    Named(String),
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Size::Lit(n) => write!(f, "{n}"),
            Size::Named(n) => f.write_str(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Ty {
    /// `int` (no size) or `int<size>`.
    Int(Option<Size>),
    Bool,
    Void,
    Auto,
    /// `Array` or `Array<<size>>` in parameter position.
    Array(Option<Size>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Param {
    pub ty: Ty,
    pub name: Ident,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decl {
    pub kind: DeclKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DeclKind {
    Const {
        ty: Ty,
        name: Ident,
        value: Expr,
    },
    Group {
        name: Ident,
        members: Vec<u32>,
    },
    Global {
        name: Ident,
        module: Ident,
        cell_width: Size,
        args: Vec<Expr>,
    },
    Event {
        qualifiers: Vec<String>,
        name: Ident,
        params: Vec<Param>,
    },
    Handler {
        event: Ident,
        params: Vec<Param>,
        body: Vec<Stmt>,
    },
    Fun {
        ret: Ty,
        name: Ident,
        params: Vec<Param>,
        body: Vec<Stmt>,
    },
    Memop {
        name: Ident,
        params: Vec<Param>,
        body: Vec<Stmt>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum StmtKind {
    Local {
        ty: Ty,
        name: Ident,
        init: Option<Expr>,
    },
    Assign {
        name: Ident,
        value: Expr,
    },
    Expr(Expr),
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        else_branch: Option<Vec<Stmt>>,
    },
    /// `generate e;` or, with `multicast`, `mgenerate e;`.
    Generate {
        multicast: bool,
        event: Expr,
    },
    Return(Option<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    BitAnd,
    BitOr,
    BitXor,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// C-style binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::BitOr => 3,
            BinOp::BitXor => 4,
            BinOp::BitAnd => 5,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => 7,
            BinOp::Add | BinOp::Sub => 8,
            BinOp::Mul => 9,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

/// Name of a called subroutine: `f` or `Module.f`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Callee {
    pub module: Option<String>,
    pub name: String,
}

impl Callee {
    pub fn builtin(module: &str, name: &str) -> Self {
        Callee {
            module: Some(module.to_string()),
            name: name.to_string(),
        }
    }

    pub fn is(&self, module: &str, name: &str) -> bool {
        self.module.as_deref() == Some(module) && self.name == name
    }
}

impl fmt::Display for Callee {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.module {
            Some(m) => write!(f, "{m}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ExprKind {
    Int {
        value: u64,
        width: Option<u32>,
    },
    Bool(bool),
    Var(String),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        callee: Callee,
        args: Vec<Expr>,
    },
    Hash {
        width: Size,
        args: Vec<Expr>,
    },
    /// Event construction; the parser emits `Call`, name resolution rewrites
    /// calls whose callee is an event into this form.
    EventCtor {
        event: String,
        args: Vec<Expr>,
    },
    /// `Event.delay(event, ns)`
    Delay {
        event: Box<Expr>,
        delay: Box<Expr>,
    },
    /// `Event.locate(event, dest)`; `dest` is a switch id or a group name.
    Locate {
        event: Box<Expr>,
        dest: Box<Expr>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn int(value: u64) -> Self {
        Expr::new(ExprKind::Int { value, width: None }, Span::default())
    }

    pub fn var(name: &str) -> Self {
        Expr::new(ExprKind::Var(name.to_string()), Span::default())
    }
}

impl Program {
    /// Replaces every span with the default span. Two programs are
    /// structurally equal when they compare equal after erasure.
    pub fn erase_spans(&mut self) {
        for d in &mut self.decls {
            d.span = Span::default();
            match &mut d.kind {
                DeclKind::Const { name, value, .. } => {
                    name.span = Span::default();
                    erase_expr(value);
                }
                DeclKind::Group { name, .. } => name.span = Span::default(),
                DeclKind::Global {
                    name, module, args, ..
                } => {
                    name.span = Span::default();
                    module.span = Span::default();
                    args.iter_mut().for_each(erase_expr);
                }
                DeclKind::Event { name, params, .. } => {
                    name.span = Span::default();
                    params.iter_mut().for_each(|p| p.name.span = Span::default());
                }
                DeclKind::Handler {
                    event,
                    params,
                    body,
                } => {
                    event.span = Span::default();
                    params.iter_mut().for_each(|p| p.name.span = Span::default());
                    erase_block(body);
                }
                DeclKind::Fun {
                    name, params, body, ..
                }
                | DeclKind::Memop { name, params, body } => {
                    name.span = Span::default();
                    params.iter_mut().for_each(|p| p.name.span = Span::default());
                    erase_block(body);
                }
            }
        }
    }

    pub fn without_spans(&self) -> Program {
        let mut p = self.clone();
        p.erase_spans();
        p
    }
}

fn erase_block(block: &mut [Stmt]) {
    block.iter_mut().for_each(erase_stmt);
}

fn erase_stmt(s: &mut Stmt) {
    s.span = Span::default();
    match &mut s.kind {
        StmtKind::Local { name, init, .. } => {
            name.span = Span::default();
            if let Some(e) = init {
                erase_expr(e);
            }
        }
        StmtKind::Assign { name, value } => {
            name.span = Span::default();
            erase_expr(value);
        }
        StmtKind::Expr(e) | StmtKind::Generate { event: e, .. } => erase_expr(e),
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            erase_expr(cond);
            erase_block(then_branch);
            if let Some(b) = else_branch {
                erase_block(b);
            }
        }
        StmtKind::Return(e) => {
            if let Some(e) = e {
                erase_expr(e);
            }
        }
    }
}

fn erase_expr(e: &mut Expr) {
    e.span = Span::default();
    match &mut e.kind {
        ExprKind::Int { .. } | ExprKind::Bool(_) | ExprKind::Var(_) => {}
        ExprKind::Binary { lhs, rhs, .. } => {
            erase_expr(lhs);
            erase_expr(rhs);
        }
        ExprKind::Call { args, .. }
        | ExprKind::Hash { args, .. }
        | ExprKind::EventCtor { args, .. } => args.iter_mut().for_each(erase_expr),
        ExprKind::Delay { event, delay: other } | ExprKind::Locate { event, dest: other } => {
            erase_expr(event);
            erase_expr(other);
        }
    }
}
