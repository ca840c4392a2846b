//! Name resolution and constant folding.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use crate::span::Span;

use super::ast::*;
use super::FrontendError;

/// Value types after size folding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ValTy {
    Int(u32),
    Bool,
    Void,
    Auto,
    /// Reference to an array with the given cell width.
    Array(u32),
    Event,
    Group,
    Memop,
}

impl std::fmt::Display for ValTy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValTy::Int(w) => write!(f, "int<{w}>"),
            ValTy::Bool => f.write_str("bool"),
            ValTy::Void => f.write_str("void"),
            ValTy::Auto => f.write_str("auto"),
            ValTy::Array(w) => write!(f, "Array<<{w}>>"),
            ValTy::Event => f.write_str("event"),
            ValTy::Group => f.write_str("group"),
            ValTy::Memop => f.write_str("memop"),
        }
    }
}

pub const DEFAULT_WIDTH: u32 = 32;

/// Converts a folded surface type.
pub fn val_ty(ty: &Ty) -> ValTy {
    let lit = |s: &Option<Size>| match s {
        Some(Size::Lit(w)) => *w,
        _ => DEFAULT_WIDTH,
    };
    match ty {
        Ty::Int(s) => ValTy::Int(lit(s)),
        Ty::Bool => ValTy::Bool,
        Ty::Void => ValTy::Void,
        Ty::Auto => ValTy::Auto,
        Ty::Array(s) => ValTy::Array(lit(s)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstInfo {
    pub value: u64,
    pub ty: ValTy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GlobalInfo {
    pub name: String,
    pub cell_width: u32,
    pub length: u64,
    pub decl_index: usize,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EventInfo {
    pub name: String,
    /// Declaration ordinal; doubles as the wire event id.
    pub id: u16,
    pub params: Vec<(String, ValTy)>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolved {
    pub program: Program,
    pub consts: BTreeMap<String, ConstInfo>,
    pub globals: Vec<GlobalInfo>,
    pub groups: BTreeMap<String, Vec<u32>>,
    pub events: Vec<EventInfo>,
}

pub struct FunRef<'a> {
    pub name: &'a str,
    pub ret: &'a Ty,
    pub params: &'a [Param],
    pub body: &'a [Stmt],
    pub span: &'a Span,
}

impl Resolved {
    pub fn global(&self, name: &str) -> Option<&GlobalInfo> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn event(&self, name: &str) -> Option<&EventInfo> {
        self.events.iter().find(|e| e.name == name)
    }

    /// Handlers in declaration order: (event name, params, body, span).
    pub fn handlers(&self) -> impl Iterator<Item = (&str, &[Param], &[Stmt], &Span)> {
        self.program.decls.iter().filter_map(|d| match &d.kind {
            DeclKind::Handler {
                event,
                params,
                body,
            } => Some((event.name.as_str(), params.as_slice(), body.as_slice(), &d.span)),
            _ => None,
        })
    }

    pub fn handler(&self, event: &str) -> Option<(&[Param], &[Stmt])> {
        self.handlers()
            .find(|(e, ..)| *e == event)
            .map(|(_, p, b, _)| (p, b))
    }

    pub fn fun(&self, name: &str) -> Option<FunRef<'_>> {
        self.program.decls.iter().find_map(|d| match &d.kind {
            DeclKind::Fun {
                ret,
                name: n,
                params,
                body,
            } if n.name == name => Some(FunRef {
                name: &n.name,
                ret,
                params,
                body,
                span: &d.span,
            }),
            _ => None,
        })
    }

    pub fn memop(&self, name: &str) -> Option<&Decl> {
        self.program
            .decls
            .iter()
            .find(|d| matches!(&d.kind, DeclKind::Memop { name: n, .. } if n.name == name))
    }

    pub fn memops(&self) -> impl Iterator<Item = &Decl> {
        self.program
            .decls
            .iter()
            .filter(|d| matches!(d.kind, DeclKind::Memop { .. }))
    }

    pub fn const_value(&self, name: &str) -> Option<u64> {
        self.consts.get(name).map(|c| c.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TopKind {
    Const,
    Group,
    Global,
    Event,
    Fun,
    Memop,
}

const ARRAY_METHODS: &[&str] = &["get", "getm", "set", "setm", "update"];
const SYS_METHODS: &[&str] = &["time", "random"];

pub fn resolve_names(program: &Program) -> Result<Resolved, FrontendError> {
    let mut program = program.clone();
    let mut top: HashMap<String, TopKind> = HashMap::new();
    let mut consts = BTreeMap::new();
    let mut globals = Vec::new();
    let mut groups = BTreeMap::new();
    let mut events = Vec::new();

    let declare = |top: &mut HashMap<String, TopKind>, id: &Ident, kind: TopKind| {
        if top.insert(id.name.clone(), kind).is_some() {
            Err(FrontendError::DuplicateName {
                name: id.name.clone(),
                span: id.span.clone(),
            })
        } else {
            Ok(())
        }
    };

    // Pass 1: top-level names, constants folded in textual order.
    for d in &mut program.decls {
        match &mut d.kind {
            DeclKind::Const { ty, name, value } => {
                declare(&mut top, name, TopKind::Const)?;
                fold_ty(ty, &consts)?;
                let vty = val_ty(ty);
                let v = eval_const(value, &consts)?;
                let v = match vty {
                    ValTy::Int(w) => v & mask(w),
                    ValTy::Bool => (v != 0) as u64,
                    _ => {
                        return Err(FrontendError::NonConstantSize {
                            name: name.name.clone(),
                            span: name.span.clone(),
                        })
                    }
                };
                consts.insert(name.name.clone(), ConstInfo { value: v, ty: vty });
            }
            DeclKind::Group { name, members } => {
                declare(&mut top, name, TopKind::Group)?;
                groups.insert(name.name.clone(), members.clone());
            }
            DeclKind::Global {
                name,
                module,
                cell_width,
                args,
            } => {
                declare(&mut top, name, TopKind::Global)?;
                if module.name != "Array" {
                    return Err(FrontendError::UnknownModule {
                        name: module.name.clone(),
                        span: module.span.clone(),
                    });
                }
                let w = fold_size(cell_width, &consts, &d.span)?;
                let [len] = args.as_slice() else {
                    return Err(FrontendError::Syntax {
                        span: d.span.clone(),
                        expected: vec!["one length argument".into()],
                        found: format!("{} arguments", args.len()),
                    });
                };
                let length = eval_const(len, &consts)?;
                globals.push(GlobalInfo {
                    name: name.name.clone(),
                    cell_width: w,
                    length,
                    decl_index: globals.len(),
                    span: d.span.clone(),
                });
            }
            DeclKind::Event { name, params, .. } => {
                declare(&mut top, name, TopKind::Event)?;
                let mut ps = Vec::new();
                let mut seen = HashSet::new();
                for p in params.iter_mut() {
                    fold_ty(&mut p.ty, &consts)?;
                    if !seen.insert(p.name.name.clone()) {
                        return Err(dup(&p.name));
                    }
                    ps.push((p.name.name.clone(), val_ty(&p.ty)));
                }
                events.push(EventInfo {
                    name: name.name.clone(),
                    id: events.len() as u16,
                    params: ps,
                    span: d.span.clone(),
                });
            }
            DeclKind::Fun { name, .. } => declare(&mut top, name, TopKind::Fun)?,
            DeclKind::Memop { name, .. } => declare(&mut top, name, TopKind::Memop)?,
            DeclKind::Handler { .. } => {}
        }
    }

    // Pass 2: bodies.
    let mut handled = HashSet::new();
    for d in &mut program.decls {
        match &mut d.kind {
            DeclKind::Handler {
                event,
                params,
                body,
            } => {
                let Some(info) = events.iter().find(|e| e.name == event.name) else {
                    return Err(unbound(&event.name, &event.span));
                };
                if !handled.insert(event.name.clone()) {
                    return Err(dup(event));
                }
                for p in params.iter_mut() {
                    fold_ty(&mut p.ty, &consts)?;
                }
                let sig: Vec<_> = params
                    .iter()
                    .map(|p| (p.name.name.clone(), val_ty(&p.ty)))
                    .collect();
                if sig != info.params {
                    return Err(FrontendError::HandlerSignatureMismatch {
                        event: event.name.clone(),
                        span: d.span.clone(),
                    });
                }
                let mut r = BodyResolver::new(&top, &consts);
                r.params(params)?;
                r.block(body)?;
            }
            DeclKind::Fun {
                ret, params, body, ..
            } => {
                fold_ty(ret, &consts)?;
                for p in params.iter_mut() {
                    fold_ty(&mut p.ty, &consts)?;
                }
                let mut r = BodyResolver::new(&top, &consts);
                r.params(params)?;
                r.block(body)?;
            }
            DeclKind::Memop { params, body, .. } => {
                for p in params.iter_mut() {
                    fold_ty(&mut p.ty, &consts)?;
                }
                let mut r = BodyResolver::new(&top, &consts);
                r.params(params)?;
                r.block(body)?;
            }
            _ => {}
        }
    }

    Ok(Resolved {
        program,
        consts,
        globals,
        groups,
        events,
    })
}

pub fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

fn dup(id: &Ident) -> FrontendError {
    FrontendError::DuplicateName {
        name: id.name.clone(),
        span: id.span.clone(),
    }
}

fn unbound(name: &str, span: &Span) -> FrontendError {
    FrontendError::UnboundName {
        name: name.to_string(),
        span: span.clone(),
    }
}

fn fold_size(size: &mut Size, consts: &BTreeMap<String, ConstInfo>, span: &Span) -> Result<u32, FrontendError> {
    let w = match size {
        Size::Lit(w) => *w as u64,
        Size::Named(n) => match consts.get(n.as_str()) {
            Some(ConstInfo {
                value,
                ty: ValTy::Int(_),
            }) => *value,
            _ => {
                return Err(FrontendError::NonConstantSize {
                    name: n.clone(),
                    span: span.clone(),
                })
            }
        },
    };
    if !(1..=32).contains(&w) {
        return Err(FrontendError::BadWidth {
            width: w,
            span: span.clone(),
        });
    }
    *size = Size::Lit(w as u32);
    Ok(w as u32)
}

fn fold_ty(ty: &mut Ty, consts: &BTreeMap<String, ConstInfo>) -> Result<(), FrontendError> {
    match ty {
        Ty::Int(Some(s)) | Ty::Array(Some(s)) => {
            fold_size(s, consts, &Span::default())?;
        }
        _ => {}
    }
    Ok(())
}

/// Evaluates a constant expression over earlier constants.
fn eval_const(e: &Expr, consts: &BTreeMap<String, ConstInfo>) -> Result<u64, FrontendError> {
    Ok(match &e.kind {
        ExprKind::Int { value, width } => value & mask(width.unwrap_or(64)),
        ExprKind::Bool(b) => *b as u64,
        ExprKind::Var(n) => match consts.get(n) {
            Some(c) => c.value,
            None => {
                return Err(FrontendError::NonConstantSize {
                    name: n.clone(),
                    span: e.span.clone(),
                })
            }
        },
        ExprKind::Binary { op, lhs, rhs } => {
            let a = eval_const(lhs, consts)?;
            let b = eval_const(rhs, consts)?;
            match op {
                BinOp::Add => a.wrapping_add(b),
                BinOp::Sub => a.wrapping_sub(b),
                BinOp::Mul => a.wrapping_mul(b),
                BinOp::BitAnd => a & b,
                BinOp::BitOr => a | b,
                BinOp::BitXor => a ^ b,
                BinOp::Eq => (a == b) as u64,
                BinOp::Ne => (a != b) as u64,
                BinOp::Lt => (a < b) as u64,
                BinOp::Gt => (a > b) as u64,
                BinOp::Le => (a <= b) as u64,
                BinOp::Ge => (a >= b) as u64,
                BinOp::And => (a != 0 && b != 0) as u64,
                BinOp::Or => (a != 0 || b != 0) as u64,
            }
        }
        _ => {
            return Err(FrontendError::NonConstantSize {
                name: "<expression>".into(),
                span: e.span.clone(),
            })
        }
    })
}

struct BodyResolver<'a> {
    top: &'a HashMap<String, TopKind>,
    consts: &'a BTreeMap<String, ConstInfo>,
    scopes: Vec<HashSet<String>>,
}

impl<'a> BodyResolver<'a> {
    fn new(top: &'a HashMap<String, TopKind>, consts: &'a BTreeMap<String, ConstInfo>) -> Self {
        BodyResolver {
            top,
            consts,
            scopes: vec![HashSet::new()],
        }
    }

    fn in_scope(&self, name: &str) -> bool {
        self.scopes.iter().any(|s| s.contains(name))
    }

    /// Locals may not shadow anything already visible in the body.
    fn bind(&mut self, id: &Ident) -> Result<(), FrontendError> {
        if self.in_scope(&id.name) {
            return Err(dup(id));
        }
        self.scopes.last_mut().unwrap().insert(id.name.clone());
        Ok(())
    }

    fn params(&mut self, params: &[Param]) -> Result<(), FrontendError> {
        params.iter().try_for_each(|p| self.bind(&p.name))
    }

    fn block(&mut self, stmts: &mut [Stmt]) -> Result<(), FrontendError> {
        self.scopes.push(HashSet::new());
        for s in stmts.iter_mut() {
            self.stmt(s)?;
        }
        self.scopes.pop();
        Ok(())
    }

    fn stmt(&mut self, s: &mut Stmt) -> Result<(), FrontendError> {
        match &mut s.kind {
            StmtKind::Local { ty, name, init } => {
                fold_ty(ty, self.consts)?;
                if let Some(e) = init {
                    self.expr(e)?;
                }
                self.bind(name)?;
            }
            StmtKind::Assign { name, value } => {
                if !self.in_scope(&name.name) {
                    return Err(unbound(&name.name, &name.span));
                }
                self.expr(value)?;
            }
            StmtKind::Expr(e) | StmtKind::Generate { event: e, .. } => self.expr(e)?,
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.expr(cond)?;
                self.block(then_branch)?;
                if let Some(b) = else_branch {
                    self.block(b)?;
                }
            }
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    self.expr(e)?;
                }
            }
        }
        Ok(())
    }

    fn expr(&mut self, e: &mut Expr) -> Result<(), FrontendError> {
        match &mut e.kind {
            ExprKind::Int { .. } | ExprKind::Bool(_) => {}
            ExprKind::Var(n) => {
                if !self.in_scope(n) {
                    match self.top.get(n.as_str()) {
                        Some(TopKind::Const | TopKind::Global | TopKind::Group | TopKind::Memop) => {}
                        _ => return Err(unbound(n, &e.span)),
                    }
                }
            }
            ExprKind::Binary { lhs, rhs, .. } => {
                self.expr(lhs)?;
                self.expr(rhs)?;
            }
            ExprKind::Hash { width, args } => {
                fold_size(width, self.consts, &e.span)?;
                for a in args {
                    self.expr(a)?;
                }
            }
            ExprKind::EventCtor { args, .. } => {
                for a in args {
                    self.expr(a)?;
                }
            }
            ExprKind::Call { callee, args } => {
                for a in args.iter_mut() {
                    self.expr(a)?;
                }
                match &callee.module {
                    Some(m) if m == "Array" => {
                        if !ARRAY_METHODS.contains(&callee.name.as_str()) {
                            return Err(unbound(&callee.to_string(), &e.span));
                        }
                    }
                    Some(m) if m == "Sys" => {
                        if !SYS_METHODS.contains(&callee.name.as_str()) {
                            return Err(unbound(&callee.to_string(), &e.span));
                        }
                    }
                    Some(m) => {
                        return Err(FrontendError::UnknownModule {
                            name: m.clone(),
                            span: e.span.clone(),
                        })
                    }
                    None => match self.top.get(callee.name.as_str()) {
                        Some(TopKind::Fun) if !self.in_scope(&callee.name) => {}
                        Some(TopKind::Event) if !self.in_scope(&callee.name) => {
                            let args = std::mem::take(args);
                            let event = callee.name.clone();
                            e.kind = ExprKind::EventCtor { event, args };
                        }
                        _ => return Err(unbound(&callee.name, &e.span)),
                    },
                }
            }
            ExprKind::Delay { event, delay: other } | ExprKind::Locate { event, dest: other } => {
                self.expr(event)?;
                self.expr(other)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    fn resolve(src: &str) -> Result<Resolved, FrontendError> {
        resolve_names(&parse_source("t.lucid", src)?)
    }

    #[test]
    fn globals_numbered_in_declaration_order() {
        let r = resolve(
            "global a = new Array<<32>>(16);
             global b = new Array<<8>>(4);",
        )
        .unwrap();
        assert_eq!(r.global("a").unwrap().decl_index, 0);
        assert_eq!(r.global("b").unwrap().decl_index, 1);
        assert_eq!(r.global("b").unwrap().cell_width, 8);
    }

    #[test]
    fn generate_of_undeclared_event_is_unbound() {
        let err = resolve("event a(); handle a() { generate nope(); }").unwrap_err();
        assert!(matches!(err, FrontendError::UnboundName { ref name, .. } if name == "nope"));
    }

    #[test]
    fn sizes_and_lengths_fold() {
        let r = resolve(
            "const int SZ = 16; const int W = 8;
             global a = new Array<<W>>(SZ);
             event e(int<W> x);",
        )
        .unwrap();
        let a = r.global("a").unwrap();
        assert_eq!((a.cell_width, a.length), (8, 16));
        assert_eq!(r.events[0].params, vec![("x".to_string(), ValTy::Int(8))]);
    }

    #[test]
    fn call_to_event_becomes_constructor() {
        let r = resolve("event a(int x); event b(); handle b() { generate a(1); }").unwrap();
        let (_, body) = r.handler("b").unwrap();
        let StmtKind::Generate { event, .. } = &body[0].kind else {
            panic!()
        };
        assert!(matches!(&event.kind, ExprKind::EventCtor { event, .. } if event == "a"));
    }

    #[test]
    fn duplicate_top_level_names() {
        assert!(matches!(
            resolve("event a(); event a();"),
            Err(FrontendError::DuplicateName { .. })
        ));
        assert!(matches!(
            resolve("event a(); handle a() {} handle a() {}"),
            Err(FrontendError::DuplicateName { .. })
        ));
    }

    #[test]
    fn handler_must_match_event() {
        assert!(matches!(
            resolve("event a(int x); handle a(int y) {}"),
            Err(FrontendError::HandlerSignatureMismatch { .. })
        ));
        assert!(matches!(
            resolve("event a(int<8> x); handle a(int x) {}"),
            Err(FrontendError::HandlerSignatureMismatch { .. })
        ));
    }

    #[test]
    fn sizes_must_be_constant() {
        assert!(matches!(
            resolve("global a = new Array<<Q>>(4);"),
            Err(FrontendError::NonConstantSize { .. })
        ));
        assert!(matches!(
            resolve("global a = new Array<<33>>(4);"),
            Err(FrontendError::BadWidth { .. })
        ));
    }

    #[test]
    fn only_array_globals() {
        assert!(matches!(
            resolve("global c = new Counter<<32>>(4);"),
            Err(FrontendError::UnknownModule { .. })
        ));
    }

    #[test]
    fn locals_are_scoped() {
        assert!(resolve("event a(); handle a() { if (true) { int x = 1; } x = 2; }").is_err());
        assert!(resolve("event a(); handle a() { int x = 1; int x = 2; }").is_err());
        assert!(resolve("event a(); handle a() { if (true) { int x = 1; } else { int x = 2; } }").is_ok());
    }
}
