use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::diag::Diagnostic;
use crate::frontend::ast::*;
use crate::frontend::resolve::{mask, val_ty, Resolved, ValTy, DEFAULT_WIDTH};
use crate::span::Span;

use super::solver::{solve_constraints, Constraint, StageTerm, VarId};

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    /// When false, out-of-order accesses are not reported. Used only to build
    /// negative controls for the runtime access monitor.
    pub enforce_order: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            enforce_order: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Access {
    pub global: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderError {
    pub handler: String,
    pub earlier: Access,
    pub later: Access,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckError {
    Type {
        handler: Option<String>,
        span: Span,
        message: String,
    },
    Order(OrderError),
    ReAccess {
        handler: String,
        global: String,
        first: Span,
        second: Span,
    },
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckError::Type { span, message, .. } => write!(f, "{span}: {message}"),
            CheckError::Order(o) => write!(
                f,
                "{}: handler `{}` accesses `{}` and `{}` in the opposite order of their declarations (first access at {})",
                o.later.span, o.handler, o.earlier.global, o.later.global, o.earlier.span
            ),
            CheckError::ReAccess {
                handler,
                global,
                first,
                second,
            } => write!(
                f,
                "{second}: `{handler}` accesses `{global}` more than once on one path (first access at {first})"
            ),
        }
    }
}

impl CheckError {
    pub fn kind(&self) -> &'static str {
        match self {
            CheckError::Type { .. } => "TypeError",
            CheckError::Order(_) => "OrderError",
            CheckError::ReAccess { .. } => "ReAccessError",
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        let (handler, spans) = match self {
            CheckError::Type { handler, span, .. } => (handler.clone(), vec![span.clone()]),
            CheckError::Order(o) => (
                Some(o.handler.clone()),
                vec![o.earlier.span.clone(), o.later.span.clone()],
            ),
            CheckError::ReAccess {
                handler,
                first,
                second,
                ..
            } => (Some(handler.clone()), vec![first.clone(), second.clone()]),
        };
        Diagnostic {
            kind: self.kind().to_string(),
            handler,
            spans,
            message: self.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SigTarget {
    Global(usize),
    Param(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SigAccess {
    pub target: SigTarget,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ParamSig {
    Value(ValTy),
    Array { cell_width: u32, stage: VarId },
}

/// Polymorphic stage signature of a function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FunEffectSig {
    pub params: Vec<ParamSig>,
    pub ret: ValTy,
    pub entry: VarId,
    pub exit: StageTerm,
    pub num_vars: usize,
    pub constraints: Vec<Constraint<Vec<SigAccess>>>,
    pub touched: Vec<SigTarget>,
}

#[derive(Clone, Debug)]
pub struct Checked {
    /// The resolved program with `auto` replaced, every integer literal
    /// annotated with its width and `get`/`set` with memops spelled
    /// `getm`/`setm`.
    pub resolved: Resolved,
    pub handler_exit: BTreeMap<String, u32>,
    pub sigs: BTreeMap<String, FunEffectSig>,
}

pub fn check_program(r: &Resolved) -> Result<Checked, Vec<CheckError>> {
    check_program_with(r, CheckOptions::default())
}

pub fn check_program_with(r: &Resolved, opts: CheckOptions) -> Result<Checked, Vec<CheckError>> {
    let mut decls = r.program.decls.clone();
    let mut errors = Vec::new();
    let mut sigs = BTreeMap::new();

    // Functions first, callees before callers.
    let fun_index: HashMap<String, usize> = decls
        .iter()
        .enumerate()
        .filter_map(|(i, d)| match &d.kind {
            DeclKind::Fun { name, .. } => Some((name.name.clone(), i)),
            _ => None,
        })
        .collect();
    let mut state: HashMap<String, u8> = HashMap::new();
    let mut order = Vec::new();
    let mut names: Vec<&String> = fun_index.keys().collect();
    names.sort_by_key(|n| fun_index[*n]);
    for n in names {
        visit_fun(n, &decls, &fun_index, &mut state, &mut order, &mut errors);
    }
    for name in order {
        let i = fun_index[&name];
        let span = decls[i].span.clone();
        let DeclKind::Fun {
            ret, params, body, ..
        } = &mut decls[i].kind
        else {
            unreachable!()
        };
        let mut cx = Ctx::new(r, &sigs, opts, name.clone(), true);
        let sig = cx.function(ret, params, body, &span);
        errors.append(&mut cx.errors);
        if let Some(sig) = sig {
            sigs.insert(name.clone(), sig);
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut handler_exit = BTreeMap::new();
    for d in decls.iter_mut() {
        if let DeclKind::Handler {
            event,
            params,
            body,
        } = &mut d.kind
        {
            let mut cx = Ctx::new(r, &sigs, opts, event.name.clone(), false);
            let exit = cx.handler(params, body);
            errors.append(&mut cx.errors);
            if let Some(e) = exit {
                handler_exit.insert(event.name.clone(), e);
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut resolved = r.clone();
    resolved.program.decls = decls;
    Ok(Checked {
        resolved,
        handler_exit,
        sigs,
    })
}

fn visit_fun(
    name: &str,
    decls: &[Decl],
    index: &HashMap<String, usize>,
    state: &mut HashMap<String, u8>,
    order: &mut Vec<String>,
    errors: &mut Vec<CheckError>,
) {
    match state.get(name) {
        Some(2) => return,
        Some(1) => {
            errors.push(CheckError::Type {
                handler: Some(name.to_string()),
                span: decls[index[name]].span.clone(),
                message: format!("recursive call to `{name}`"),
            });
            return;
        }
        _ => {}
    }
    state.insert(name.to_string(), 1);
    let mut callees = Vec::new();
    if let DeclKind::Fun { body, .. } = &decls[index[name]].kind {
        calls_in_block(body, &mut callees);
    }
    for c in callees {
        if index.contains_key(&c) {
            visit_fun(&c, decls, index, state, order, errors);
        }
    }
    state.insert(name.to_string(), 2);
    order.push(name.to_string());
}

fn calls_in_block(b: &[Stmt], out: &mut Vec<String>) {
    for s in b {
        match &s.kind {
            StmtKind::Local { init: Some(e), .. }
            | StmtKind::Assign { value: e, .. }
            | StmtKind::Expr(e)
            | StmtKind::Generate { event: e, .. }
            | StmtKind::Return(Some(e)) => calls_in_expr(e, out),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                calls_in_expr(cond, out);
                calls_in_block(then_branch, out);
                if let Some(b) = else_branch {
                    calls_in_block(b, out);
                }
            }
            _ => {}
        }
    }
}

fn calls_in_expr(e: &Expr, out: &mut Vec<String>) {
    match &e.kind {
        ExprKind::Call { callee, args } => {
            if callee.module.is_none() {
                out.push(callee.name.clone());
            }
            args.iter().for_each(|a| calls_in_expr(a, out));
        }
        ExprKind::Binary { lhs, rhs, .. } => {
            calls_in_expr(lhs, out);
            calls_in_expr(rhs, out);
        }
        ExprKind::Hash { args, .. } | ExprKind::EventCtor { args, .. } => {
            args.iter().for_each(|a| calls_in_expr(a, out))
        }
        ExprKind::Delay { event, delay: o } | ExprKind::Locate { event, dest: o } => {
            calls_in_expr(event, out);
            calls_in_expr(o, out);
        }
        _ => {}
    }
}

#[derive(Clone, Debug)]
struct Local {
    ty: ValTy,
    /// For array parameters: parameter position and its stage variable.
    array: Option<(usize, VarId)>,
}

#[derive(Clone, Debug)]
struct PathState {
    /// `None` once the path has returned.
    cur: Option<StageTerm>,
    touched: Vec<SigAccess>,
    last: Option<SigAccess>,
}

/// Width 0 marks an integer literal whose width is still open.
const FLEX: ValTy = ValTy::Int(0);

struct Ctx<'a> {
    r: &'a Resolved,
    sigs: &'a BTreeMap<String, FunEffectSig>,
    opts: CheckOptions,
    owner: String,
    symbolic: bool,
    ret: Option<ValTy>,
    scopes: Vec<HashMap<String, Local>>,
    num_vars: usize,
    constraints: Vec<Constraint<Vec<SigAccess>>>,
    errors: Vec<CheckError>,
    st: PathState,
    returns: Vec<PathState>,
}

impl<'a> Ctx<'a> {
    fn new(
        r: &'a Resolved,
        sigs: &'a BTreeMap<String, FunEffectSig>,
        opts: CheckOptions,
        owner: String,
        symbolic: bool,
    ) -> Self {
        Ctx {
            r,
            sigs,
            opts,
            owner,
            symbolic,
            ret: None,
            scopes: vec![HashMap::new()],
            num_vars: 0,
            constraints: Vec::new(),
            errors: Vec::new(),
            st: PathState {
                cur: Some(StageTerm::Const(0)),
                touched: Vec::new(),
                last: None,
            },
            returns: Vec::new(),
        }
    }

    fn fresh(&mut self) -> VarId {
        self.num_vars += 1;
        self.num_vars - 1
    }

    fn type_error(&mut self, span: &Span, message: impl Into<String>) {
        self.errors.push(CheckError::Type {
            handler: Some(self.owner.clone()),
            span: span.clone(),
            message: message.into(),
        });
    }

    fn lookup(&self, name: &str) -> Option<&Local> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn bind(&mut self, name: &str, local: Local) {
        self.scopes.last_mut().unwrap().insert(name.to_string(), local);
    }

    fn target_name(&self, t: SigTarget) -> String {
        match t {
            SigTarget::Global(k) => self.r.globals[k].name.clone(),
            SigTarget::Param(i) => format!("parameter #{i}"),
        }
    }

    // ------------------------------------------------------------ bodies

    fn handler(&mut self, params: &mut [Param], body: &mut [Stmt]) -> Option<u32> {
        for p in params.iter() {
            let ty = val_ty(&p.ty);
            if !matches!(ty, ValTy::Int(_) | ValTy::Bool) {
                self.type_error(&p.name.span, "event parameters must be int or bool");
            }
            self.bind(&p.name.name, Local { ty, array: None });
        }
        let errs = self.errors.len();
        self.block(body);
        if self.errors.len() > errs {
            return None;
        }
        self.st.cur.and_then(StageTerm::as_const)
    }

    fn function(
        &mut self,
        ret: &mut Ty,
        params: &mut [Param],
        body: &mut [Stmt],
        span: &Span,
    ) -> Option<FunEffectSig> {
        if matches!(ret, Ty::Int(None)) {
            *ret = Ty::Int(Some(Size::Lit(DEFAULT_WIDTH)));
        }
        let ret_ty = val_ty(ret);
        if !matches!(ret_ty, ValTy::Int(_) | ValTy::Bool | ValTy::Void) {
            self.type_error(span, "functions return int, bool or void");
        }
        self.ret = Some(ret_ty);
        let entry = self.fresh();
        self.st.cur = Some(StageTerm::var(entry));
        let mut sig_params = Vec::new();
        for (i, p) in params.iter().enumerate() {
            let ty = val_ty(&p.ty);
            match ty {
                ValTy::Array(w) => {
                    let stage = self.fresh();
                    sig_params.push(ParamSig::Array {
                        cell_width: w,
                        stage,
                    });
                    self.bind(
                        &p.name.name,
                        Local {
                            ty,
                            array: Some((i, stage)),
                        },
                    );
                }
                ValTy::Int(_) | ValTy::Bool => {
                    sig_params.push(ParamSig::Value(ty));
                    self.bind(&p.name.name, Local { ty, array: None });
                }
                _ => {
                    self.type_error(&p.name.span, "function parameters must be int, bool or Array");
                    sig_params.push(ParamSig::Value(ty));
                }
            }
        }
        let errs = self.errors.len();
        self.block(body);
        if self.st.cur.is_some() && ret_ty != ValTy::Void {
            self.type_error(span, "missing return on some path");
        }
        let mut ends = std::mem::take(&mut self.returns);
        ends.push(self.st.clone());
        let mut exit = ends.pop().unwrap();
        for e in ends {
            exit = self.join(e, exit);
        }
        if self.errors.len() > errs {
            return None;
        }
        let exit_term = exit.cur.unwrap_or(StageTerm::var(entry));
        if let Err(u) = solve_constraints(self.num_vars, &self.constraints) {
            let accesses: Vec<SigAccess> = u
                .cycle
                .iter()
                .flat_map(|&i| self.constraints[i].origin.clone())
                .collect();
            self.report_cycle(accesses);
            return None;
        }
        let mut touched: Vec<SigTarget> = Vec::new();
        for t in exit.touched.iter().map(|a| a.target) {
            if !touched.contains(&t) {
                touched.push(t);
            }
        }
        Some(FunEffectSig {
            params: sig_params,
            ret: ret_ty,
            entry,
            exit: exit_term,
            num_vars: self.num_vars,
            constraints: self.constraints.clone(),
            touched,
        })
    }

    fn report_cycle(&mut self, accesses: Vec<SigAccess>) {
        if !self.opts.enforce_order {
            return;
        }
        if accesses.is_empty() {
            let span = Span::default();
            self.type_error(&span, "unsatisfiable stage constraints");
            return;
        }
        let all_global = accesses
            .iter()
            .all(|a| matches!(a.target, SigTarget::Global(_)));
        let rank = |a: &SigAccess| match a.target {
            SigTarget::Global(k) => (k, a.span.clone()),
            SigTarget::Param(_) => (0, a.span.clone()),
        };
        let (earlier, later) = if all_global {
            let e = accesses.iter().max_by_key(|a| rank(a)).unwrap();
            let l = accesses.iter().min_by_key(|a| rank(a)).unwrap();
            (e.clone(), l.clone())
        } else {
            let e = accesses.iter().min_by_key(|a| a.span.clone()).unwrap();
            let l = accesses.iter().max_by_key(|a| a.span.clone()).unwrap();
            (e.clone(), l.clone())
        };
        if earlier.target == later.target {
            self.errors.push(CheckError::ReAccess {
                handler: self.owner.clone(),
                global: self.target_name(earlier.target),
                first: earlier.span,
                second: later.span,
            });
            return;
        }
        self.errors.push(CheckError::Order(OrderError {
            handler: self.owner.clone(),
            earlier: Access {
                global: self.target_name(earlier.target),
                span: earlier.span,
            },
            later: Access {
                global: self.target_name(later.target),
                span: later.span,
            },
        }));
    }

    fn join(&mut self, a: PathState, b: PathState) -> PathState {
        let (cur, last) = match (a.cur, b.cur) {
            (None, _) => (b.cur, b.last.clone()),
            (_, None) => (a.cur, a.last.clone()),
            (Some(StageTerm::Const(x)), Some(StageTerm::Const(y))) => {
                if x >= y {
                    (a.cur, a.last.clone())
                } else {
                    (b.cur, b.last.clone())
                }
            }
            (Some(x), Some(y)) if x == y => (a.cur, a.last.clone()),
            (Some(x), Some(y)) => {
                let j = StageTerm::var(self.fresh());
                self.constraints.push(Constraint::new(x, j, Vec::new()));
                self.constraints.push(Constraint::new(y, j, Vec::new()));
                (Some(j), a.last.clone().or(b.last.clone()))
            }
        };
        let mut touched = a.touched;
        for t in b.touched {
            if !touched.iter().any(|u| u.target == t.target) {
                touched.push(t);
            }
        }
        PathState { cur, touched, last }
    }

    /// One access to `target` on the current path.
    fn access(&mut self, target: SigTarget, span: &Span) {
        let Some(cur) = self.st.cur else { return };
        if let Some(prev) = self.st.touched.iter().find(|a| a.target == target) {
            let first = prev.span.clone();
            self.errors.push(CheckError::ReAccess {
                handler: self.owner.clone(),
                global: self.target_name(target),
                first,
                second: span.clone(),
            });
            return;
        }
        let bound = match target {
            SigTarget::Global(k) => StageTerm::Const(k as u32),
            SigTarget::Param(i) => {
                let var = self
                    .scopes
                    .iter()
                    .flat_map(|s| s.values())
                    .find_map(|l| l.array.filter(|(p, _)| *p == i).map(|(_, v)| v))
                    .expect("array parameter has a stage variable");
                StageTerm::var(var)
            }
        };
        let this = SigAccess {
            target,
            span: span.clone(),
        };
        let next = match (cur, bound) {
            (StageTerm::Const(c), StageTerm::Const(k)) => {
                if c > k && self.opts.enforce_order {
                    let earlier = self.st.last.clone().expect("stage advanced by an access");
                    self.errors.push(CheckError::Order(OrderError {
                        handler: self.owner.clone(),
                        earlier: Access {
                            global: self.target_name(earlier.target),
                            span: earlier.span,
                        },
                        later: Access {
                            global: self.target_name(target),
                            span: span.clone(),
                        },
                    }));
                }
                StageTerm::Const(c.max(k + 1))
            }
            _ => {
                let origin = self.st.last.iter().cloned().chain([this.clone()]).collect();
                self.constraints.push(Constraint::new(cur, bound, origin));
                bound.plus(1)
            }
        };
        self.st.cur = Some(next);
        self.st.touched.push(this.clone());
        self.st.last = Some(this);
    }

    fn call_function(&mut self, name: &str, args: &mut [Expr], span: &Span) -> ValTy {
        let Some(sig) = self.sigs.get(name) else {
            self.type_error(span, format!("`{name}` could not be checked"));
            return ValTy::Void;
        };
        let sig = sig.clone();
        if sig.params.len() != args.len() {
            self.type_error(
                span,
                format!("`{name}` takes {} arguments, {} given", sig.params.len(), args.len()),
            );
            return sig.ret;
        }
        let mut bindings: HashMap<VarId, (StageTerm, SigTarget, Span)> = HashMap::new();
        for (p, a) in sig.params.iter().zip(args.iter_mut()) {
            match p {
                ParamSig::Value(t) => {
                    let got = self.expr(a);
                    self.coerce(a, got, *t);
                }
                ParamSig::Array { cell_width, stage } => match self.array_target(a) {
                    Some((target, w)) => {
                        if w != *cell_width {
                            self.type_error(&a.span, format!("expected Array<<{cell_width}>>, found Array<<{w}>>"));
                        }
                        let term = match target {
                            SigTarget::Global(k) => StageTerm::Const(k as u32),
                            SigTarget::Param(i) => {
                                let var = self
                                    .scopes
                                    .iter()
                                    .flat_map(|s| s.values())
                                    .find_map(|l| l.array.filter(|(p, _)| *p == i).map(|(_, v)| v))
                                    .unwrap();
                                StageTerm::var(var)
                            }
                        };
                        bindings.insert(*stage, (term, target, a.span.clone()));
                    }
                    None => self.type_error(&a.span, "expected an array"),
                },
            }
        }
        let Some(cur) = self.st.cur else {
            return sig.ret;
        };
        let mut map: HashMap<VarId, StageTerm> = HashMap::new();
        for v in 0..sig.num_vars {
            let t = match bindings.get(&v) {
                Some((t, ..)) => *t,
                None => StageTerm::var(self.fresh()),
            };
            map.insert(v, t);
        }
        let subst = |t: StageTerm| t.subst(&|v| map[&v]);
        let map_access = |a: &SigAccess| -> SigAccess {
            match a.target {
                SigTarget::Param(i) => {
                    let stage = match &sig.params[i] {
                        ParamSig::Array { stage, .. } => *stage,
                        ParamSig::Value(_) => unreachable!(),
                    };
                    match bindings.get(&stage) {
                        Some((_, target, aspan)) => SigAccess {
                            target: *target,
                            span: aspan.clone(),
                        },
                        None => a.clone(),
                    }
                }
                SigTarget::Global(_) => SigAccess {
                    target: a.target,
                    span: span.clone(),
                },
            }
        };
        let mark = self.constraints.len();
        self.constraints.push(Constraint::new(
            cur,
            subst(StageTerm::var(sig.entry)),
            self.st.last.iter().cloned().collect(),
        ));
        for c in &sig.constraints {
            self.constraints.push(Constraint::new(
                subst(c.lhs),
                subst(c.rhs),
                c.origin.iter().map(map_access).collect(),
            ));
        }
        let mut exit = subst(sig.exit);

        let touched: Vec<SigAccess> = sig
            .touched
            .iter()
            .map(|t| {
                map_access(&SigAccess {
                    target: *t,
                    span: span.clone(),
                })
            })
            .collect();
        for t in &touched {
            if let Some(prev) = self.st.touched.iter().find(|a| a.target == t.target) {
                let first = prev.span.clone();
                self.errors.push(CheckError::ReAccess {
                    handler: self.owner.clone(),
                    global: self.target_name(t.target),
                    first,
                    second: t.span.clone(),
                });
                return sig.ret;
            }
        }

        if !self.symbolic {
            match solve_constraints(self.num_vars, &self.constraints) {
                Ok(a) => exit = StageTerm::Const(exit.eval(&a)),
                Err(u) => {
                    let accesses: Vec<SigAccess> = u
                        .cycle
                        .iter()
                        .flat_map(|&i| self.constraints[i].origin.clone())
                        .collect();
                    self.report_cycle(accesses);
                    self.constraints.truncate(mark);
                    let top = touched
                        .iter()
                        .filter_map(|t| match t.target {
                            SigTarget::Global(k) => Some(k as u32 + 1),
                            SigTarget::Param(_) => None,
                        })
                        .max()
                        .unwrap_or(0);
                    exit = StageTerm::Const(cur.as_const().unwrap_or(0).max(top));
                }
            }
            self.constraints.truncate(mark);
        }
        let last = if self.symbolic {
            touched.last().cloned()
        } else {
            touched
                .iter()
                .max_by_key(|t| match t.target {
                    SigTarget::Global(k) => k,
                    SigTarget::Param(_) => 0,
                })
                .cloned()
        };
        self.st.cur = Some(exit);
        self.st.touched.extend(touched);
        if last.is_some() {
            self.st.last = last;
        }
        sig.ret
    }

    // -------------------------------------------------------- statements

    fn block(&mut self, stmts: &mut [Stmt]) {
        self.scopes.push(HashMap::new());
        for s in stmts {
            self.stmt(s);
        }
        self.scopes.pop();
    }

    fn stmt(&mut self, s: &mut Stmt) {
        match &mut s.kind {
            StmtKind::Local { ty, name, init } => {
                let declared = val_ty(ty);
                let resolved = match (declared, init.as_mut()) {
                    (ValTy::Auto, None) => {
                        self.type_error(&s.span, "`auto` local needs an initializer");
                        ValTy::Int(DEFAULT_WIDTH)
                    }
                    (ValTy::Auto, Some(e)) => {
                        let t = self.expr(e);
                        if t == FLEX {
                            self.fix_literal(e, DEFAULT_WIDTH);
                            ValTy::Int(DEFAULT_WIDTH)
                        } else {
                            t
                        }
                    }
                    (t, Some(e)) => {
                        let got = self.expr(e);
                        self.coerce(e, got, t);
                        t
                    }
                    (t, None) => t,
                };
                match resolved {
                    ValTy::Int(w) => *ty = Ty::Int(Some(Size::Lit(w))),
                    ValTy::Bool => *ty = Ty::Bool,
                    other => self.type_error(&s.span, format!("locals must be int or bool, not {other}")),
                }
                self.bind(
                    &name.name,
                    Local {
                        ty: resolved,
                        array: None,
                    },
                );
            }
            StmtKind::Assign { name, value } => {
                let target = self.lookup(&name.name).cloned();
                let got = self.expr(value);
                match target {
                    Some(Local { ty, array: None }) => self.coerce(value, got, ty),
                    _ => self.type_error(&name.span, format!("cannot assign to `{}`", name.name)),
                }
            }
            StmtKind::Expr(e) => {
                self.expr(e);
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let t = self.expr(cond);
                if t != ValTy::Bool {
                    self.type_error(&cond.span, format!("condition must be bool, found {t}"));
                }
                let before = self.st.clone();
                self.block(then_branch);
                let after_then = std::mem::replace(&mut self.st, before);
                if let Some(b) = else_branch {
                    self.block(b);
                }
                let after_else = self.st.clone();
                self.st = self.join(after_then, after_else);
            }
            StmtKind::Generate { event, .. } => {
                let t = self.expr(event);
                if t != ValTy::Event {
                    self.type_error(&event.span, format!("generate expects an event, found {t}"));
                }
            }
            StmtKind::Return(value) => {
                let Some(ret) = self.ret else {
                    self.type_error(&s.span, "`return` outside a function");
                    return;
                };
                match value {
                    None if ret == ValTy::Void => {}
                    None => self.type_error(&s.span, format!("expected a {ret} return value")),
                    Some(e) => {
                        let got = self.expr(e);
                        self.coerce(e, got, ret);
                    }
                }
                self.returns.push(self.st.clone());
                self.st.cur = None;
            }
        }
    }

    // ------------------------------------------------------- expressions

    fn coerce(&mut self, e: &mut Expr, got: ValTy, want: ValTy) {
        match (got, want) {
            (g, w) if g == w => {}
            (FLEX, ValTy::Int(w)) => self.fix_literal(e, w),
            _ => self.type_error(&e.span, format!("expected {want}, found {got}")),
        }
    }

    /// Assigns width `w` to every open literal in an arithmetic tree.
    fn fix_literal(&mut self, e: &mut Expr, w: u32) {
        match &mut e.kind {
            ExprKind::Int { value, width } if width.is_none() => {
                if *value > mask(w) {
                    let msg = format!("literal {value} does not fit in {w} bits");
                    self.type_error(&e.span, msg);
                }
                *width = Some(w);
            }
            ExprKind::Binary { op, lhs, rhs } if !op.is_comparison() && !op.is_logical() => {
                self.fix_literal(lhs, w);
                self.fix_literal(rhs, w);
            }
            _ => {}
        }
    }

    fn array_target(&self, e: &Expr) -> Option<(SigTarget, u32)> {
        let ExprKind::Var(n) = &e.kind else {
            return None;
        };
        if let Some(l) = self.lookup(n) {
            return l.array.map(|(i, _)| {
                let ValTy::Array(w) = l.ty else { unreachable!() };
                (SigTarget::Param(i), w)
            });
        }
        self.r
            .global(n)
            .map(|g| (SigTarget::Global(g.decl_index), g.cell_width))
    }

    fn is_memop(&self, e: &Expr) -> bool {
        matches!(&e.kind, ExprKind::Var(n) if self.lookup(n).is_none() && self.r.memop(n).is_some())
    }

    fn expr(&mut self, e: &mut Expr) -> ValTy {
        let span = e.span.clone();
        match &mut e.kind {
            ExprKind::Int { value, width } => match width {
                None => FLEX,
                Some(w) => {
                    if *w == 0 || *w > 32 || *value > mask(*w) {
                        self.type_error(&span, "sized literal out of range");
                    }
                    ValTy::Int(*w)
                }
            },
            ExprKind::Bool(_) => ValTy::Bool,
            ExprKind::Var(n) => {
                if let Some(l) = self.lookup(n) {
                    return l.ty;
                }
                if let Some(c) = self.r.consts.get(n.as_str()) {
                    return c.ty;
                }
                if let Some(g) = self.r.global(n) {
                    return ValTy::Array(g.cell_width);
                }
                if self.r.groups.contains_key(n.as_str()) {
                    return ValTy::Group;
                }
                ValTy::Memop
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let op = *op;
                let lt = self.expr(lhs);
                let rt = self.expr(rhs);
                if op == BinOp::Mul {
                    self.type_error(&span, "operator `*` is not supported");
                    return lt;
                }
                if op.is_logical() {
                    if lt != ValTy::Bool || rt != ValTy::Bool {
                        self.type_error(&span, format!("`{}` expects bool operands", op.symbol()));
                    }
                    return ValTy::Bool;
                }
                if op.is_comparison() && lt == ValTy::Bool && rt == ValTy::Bool {
                    if !matches!(op, BinOp::Eq | BinOp::Ne) {
                        self.type_error(&span, "bools are only compared with == and !=");
                    }
                    return ValTy::Bool;
                }
                let t = match (lt, rt) {
                    (ValTy::Int(a), ValTy::Int(b)) => {
                        if a == 0 && b != 0 {
                            self.fix_literal(lhs, b);
                            ValTy::Int(b)
                        } else if b == 0 && a != 0 {
                            self.fix_literal(rhs, a);
                            ValTy::Int(a)
                        } else if a != b {
                            self.type_error(&span, format!("width mismatch: int<{a}> vs int<{b}>"));
                            ValTy::Int(a)
                        } else {
                            ValTy::Int(a)
                        }
                    }
                    _ => {
                        self.type_error(
                            &span,
                            format!("`{}` expects int operands, found {lt} and {rt}", op.symbol()),
                        );
                        ValTy::Int(DEFAULT_WIDTH)
                    }
                };
                if op.is_comparison() {
                    if t == FLEX {
                        self.fix_literal(lhs, DEFAULT_WIDTH);
                        self.fix_literal(rhs, DEFAULT_WIDTH);
                    }
                    ValTy::Bool
                } else {
                    t
                }
            }
            ExprKind::Hash { width, args } => {
                let w = match width {
                    Size::Lit(w) => *w,
                    Size::Named(_) => DEFAULT_WIDTH,
                };
                if args.is_empty() {
                    self.type_error(&span, "hash needs a polynomial argument");
                }
                if let Some(poly) = args.first() {
                    let constant = match &poly.kind {
                        ExprKind::Int { .. } => true,
                        ExprKind::Var(n) => self.lookup(n).is_none() && self.r.consts.contains_key(n.as_str()),
                        _ => false,
                    };
                    if !constant {
                        self.type_error(&poly.span, "hash polynomial must be a constant");
                    }
                }
                for a in args.iter_mut() {
                    let t = self.expr(a);
                    match t {
                        FLEX => self.fix_literal(a, DEFAULT_WIDTH),
                        ValTy::Int(_) | ValTy::Bool => {}
                        other => self.type_error(&a.span, format!("cannot hash a {other}")),
                    }
                }
                ValTy::Int(w)
            }
            ExprKind::EventCtor { event, args } => {
                let Some(info) = self.r.event(event) else {
                    self.type_error(&span, format!("unknown event `{event}`"));
                    return ValTy::Event;
                };
                if info.params.len() != args.len() {
                    let msg = format!(
                        "event `{event}` takes {} arguments, {} given",
                        info.params.len(),
                        args.len()
                    );
                    self.type_error(&span, msg);
                    return ValTy::Event;
                }
                let tys: Vec<ValTy> = info.params.iter().map(|p| p.1).collect();
                for (a, t) in args.iter_mut().zip(tys) {
                    let got = self.expr(a);
                    self.coerce(a, got, t);
                }
                ValTy::Event
            }
            ExprKind::Delay { event, delay } => {
                let t = self.expr(event);
                if t != ValTy::Event {
                    self.type_error(&event.span, "Event.delay expects an event");
                }
                let d = self.expr(delay);
                match d {
                    FLEX => self.fix_literal(delay, DEFAULT_WIDTH),
                    ValTy::Int(_) => {}
                    _ => self.type_error(&delay.span, "delay must be an integer"),
                }
                ValTy::Event
            }
            ExprKind::Locate { event, dest } => {
                let t = self.expr(event);
                if t != ValTy::Event {
                    self.type_error(&event.span, "Event.locate expects an event");
                }
                let d = self.expr(dest);
                match d {
                    FLEX => self.fix_literal(dest, DEFAULT_WIDTH),
                    ValTy::Int(_) | ValTy::Group => {}
                    _ => self.type_error(&dest.span, "location must be a switch id or a group"),
                }
                ValTy::Event
            }
            ExprKind::Call { callee, args } => {
                if callee.module.is_none() {
                    let name = callee.name.clone();
                    return self.call_function(&name, args, &span);
                }
                if callee.is("Sys", "time") {
                    if !args.is_empty() {
                        self.type_error(&span, "Sys.time takes no arguments");
                    }
                    return ValTy::Int(DEFAULT_WIDTH);
                }
                if callee.is("Sys", "random") {
                    self.type_error(&span, "Sys.random is not supported");
                    return ValTy::Int(DEFAULT_WIDTH);
                }
                // Array methods, canonicalized to the memop-taking forms.
                let method = match (callee.name.as_str(), args.len()) {
                    ("get", 2) => "get",
                    ("get", 4) | ("getm", 4) => "getm",
                    ("set", 3) => "set",
                    ("set", 4) | ("setm", 4) => "setm",
                    ("update", 6) => "update",
                    (m, n) => {
                        self.type_error(&span, format!("Array.{m} does not take {n} arguments"));
                        return ValTy::Void;
                    }
                };
                callee.name = method.to_string();
                let Some((target, w)) = self.array_target(&args[0]) else {
                    let s = args[0].span.clone();
                    self.type_error(&s, "first argument must be an array");
                    return ValTy::Void;
                };
                let idx_ty = self.expr(&mut args[1]);
                match idx_ty {
                    FLEX => self.fix_literal(&mut args[1], DEFAULT_WIDTH),
                    ValTy::Int(_) => {}
                    other => {
                        let s = args[1].span.clone();
                        self.type_error(&s, format!("index must be an integer, found {other}"));
                    }
                }
                let memop_slots: &[usize] = match method {
                    "getm" | "setm" => &[2],
                    "update" => &[2, 4],
                    _ => &[],
                };
                for (i, a) in args.iter_mut().enumerate().skip(2) {
                    if memop_slots.contains(&i) {
                        if !self.is_memop(a) {
                            let s = a.span.clone();
                            self.type_error(&s, "expected a memop name");
                        }
                    } else {
                        let got = self.expr(a);
                        self.coerce(a, got, ValTy::Int(w));
                    }
                }
                self.access(target, &span);
                match method {
                    "set" | "setm" => ValTy::Void,
                    _ => ValTy::Int(w),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, resolve_names};

    fn check(src: &str) -> Result<Checked, Vec<CheckError>> {
        check_program(&resolve_names(&parse_source("t.lucid", src).unwrap()).unwrap())
    }

    const BADORDER: &str = "const int SIZE = 16;
global arr1 = new Array<<32>>(SIZE);
global arr2 = new Array<<32>>(SIZE);
event setArr1(int idx, int data);
event setArr2(int idx, int data);
handle setArr1(int idx, int data) {
    int x = Array.get(arr2, idx);
    Array.set(arr1, idx, x);
}
handle setArr2(int idx, int data) {
    int x = Array.get(arr1, idx);
    Array.set(arr2, idx, x);
}";

    #[test]
    fn disordered_program_has_one_error() {
        let errs = check(BADORDER).unwrap_err();
        assert_eq!(errs.len(), 1);
        let CheckError::Order(o) = &errs[0] else {
            panic!("{errs:?}")
        };
        assert_eq!(o.handler, "setArr1");
        assert_eq!(o.earlier.global, "arr2");
        assert_eq!(o.later.global, "arr1");
        assert_eq!(o.earlier.span.start_line, 7);
        assert_eq!(o.later.span.start_line, 8);
    }

    #[test]
    fn single_access_exits_at_stage_one() {
        let c = check(
            "global a = new Array<<32>>(4); event h(int i);
             handle h(int i) { Array.set(a, i, 0); }",
        )
        .unwrap();
        assert_eq!(c.handler_exit["h"], 1);
    }

    #[test]
    fn polymorphic_function_instantiation() {
        let prelude = "global a = new Array<<32>>(4); global b = new Array<<32>>(4);
            fun int f(Array x, Array y) { Array.get(x, 0); return Array.get(y, 0); }
            event h();";
        let ok = check(&format!("{prelude} handle h() {{ int v = f(a, b); }}")).unwrap();
        assert_eq!(ok.handler_exit["h"], 2);
        let sig = &ok.sigs["f"];
        let a = solve_constraints(sig.num_vars, &sig.constraints).unwrap();
        let stage = |p: &ParamSig| match p {
            ParamSig::Array { stage, .. } => a[*stage],
            _ => unreachable!(),
        };
        assert!(stage(&sig.params[0]) < stage(&sig.params[1]));

        let errs = check(&format!("{prelude} handle h() {{ int v = f(b, a); }}")).unwrap_err();
        assert!(matches!(&errs[..], [CheckError::Order(o)] if o.earlier.global == "b" && o.later.global == "a"));
    }

    #[test]
    fn call_after_later_access_is_rejected() {
        let errs = check(
            "global a = new Array<<32>>(4); global b = new Array<<32>>(4);
             fun void g(Array x) { Array.set(x, 0, 1); }
             event h();
             handle h() { Array.set(b, 0, 1); g(a); }",
        )
        .unwrap_err();
        assert!(matches!(&errs[..], [CheckError::Order(o)] if o.earlier.global == "b" && o.later.global == "a"));
    }

    #[test]
    fn reaccess_on_one_path() {
        let errs = check(
            "global a = new Array<<32>>(4); event h();
             handle h() { Array.set(a, 0, 1); Array.set(a, 1, 1); }",
        )
        .unwrap_err();
        assert!(matches!(errs[0], CheckError::ReAccess { .. }));
        // Different branches are different paths.
        check(
            "global a = new Array<<32>>(4); event h(int p);
             handle h(int p) { if (p == 1) { Array.set(a, 0, 1); } else { Array.set(a, 1, 1); } }",
        )
        .unwrap();
    }

    #[test]
    fn branch_join_takes_max() {
        let c = check(
            "global a = new Array<<32>>(4); global b = new Array<<32>>(4); global c = new Array<<32>>(4);
             event h(int p);
             handle h(int p) { if (p == 1) { Array.set(b, 0, 1); } else { Array.set(a, 1, 1); } Array.set(c, 0, 1); }",
        )
        .unwrap();
        assert_eq!(c.handler_exit["h"], 3);
        assert!(check(
            "global a = new Array<<32>>(4); global b = new Array<<32>>(4);
             event h(int p);
             handle h(int p) { if (p == 1) { Array.set(b, 0, 1); } Array.set(a, 0, 1); }",
        )
        .is_err());
    }

    #[test]
    fn literal_widths_are_filled() {
        let c = check("event h(int<8> x); handle h(int<8> x) { auto y = x + 1; int z = 3; }").unwrap();
        let (_, body) = c.resolved.handler("h").unwrap();
        let StmtKind::Local { ty, init: Some(e), .. } = &body[0].kind else {
            panic!()
        };
        assert_eq!(*ty, Ty::Int(Some(Size::Lit(8))));
        let ExprKind::Binary { rhs, .. } = &e.kind else { panic!() };
        assert!(matches!(rhs.kind, ExprKind::Int { value: 1, width: Some(8) }));
        let StmtKind::Local { ty, .. } = &body[1].kind else { panic!() };
        assert_eq!(*ty, Ty::Int(Some(Size::Lit(32))));
    }

    #[test]
    fn type_errors() {
        for bad in [
            "event h(int<8> x); handle h(int<8> x) { int<16> y = x; }",
            "event h(int x); handle h(int x) { int y = x * 2; }",
            "event h(int x); handle h(int x) { if (x) { x = 1; } }",
            "event h(int x); handle h(int x) { int y = Sys.random(); }",
            "event h(int x); handle h(int x) { generate h(1, 2); }",
            "event h(int x); handle h(int x) { return; }",
            "event h(int<4> x); handle h(int<4> x) { x = 99; }",
        ] {
            let errs = check(bad).unwrap_err();
            assert!(matches!(errs[0], CheckError::Type { .. }), "{bad}: {errs:?}");
        }
    }

    #[test]
    fn recursion_is_rejected() {
        let errs = check("fun int f(int x) { return f(x); } event h(); handle h() {}").unwrap_err();
        assert!(matches!(errs[0], CheckError::Type { .. }));
    }

    #[test]
    fn function_without_accesses_may_be_called_late() {
        let c = check(
            "global a = new Array<<32>>(4); global b = new Array<<32>>(4);
             fun int inc(int x) { return x + 1; }
             event h();
             handle h() { int v = Array.get(b, 0); v = inc(v); }",
        )
        .unwrap();
        assert_eq!(c.handler_exit["h"], 2);
    }

    fn permutations(v: Vec<usize>) -> Vec<Vec<usize>> {
        if v.len() <= 1 {
            return vec![v];
        }
        let mut out = Vec::new();
        for i in 0..v.len() {
            let mut rest = v.clone();
            let x = rest.remove(i);
            for mut p in permutations(rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn acceptance_matches_brute_force_over_declaration_orders() {
        // Handler access sequences over globals g0..g2; a declaration order
        // is accepted iff every sequence is strictly increasing in it.
        let handlers: [&[usize]; 2] = [&[0, 1], &[1, 2]];
        for perm in permutations(vec![0, 1, 2]) {
            let mut src = String::new();
            for g in &perm {
                src.push_str(&format!("global g{g} = new Array<<32>>(4);\n"));
            }
            for (h, seq) in handlers.iter().enumerate() {
                src.push_str(&format!("event h{h}();\nhandle h{h}() {{\n"));
                for g in seq.iter() {
                    src.push_str(&format!("Array.set(g{g}, 0, 1);\n"));
                }
                src.push_str("}\n");
            }
            let pos = |g: usize| perm.iter().position(|x| *x == g).unwrap();
            let expected_failures = handlers
                .iter()
                .filter(|seq| seq.windows(2).any(|w| pos(w[0]) > pos(w[1])))
                .count();
            let got = match check(&src) {
                Ok(_) => 0,
                Err(e) => e.len(),
            };
            assert_eq!(got, expected_failures, "order {perm:?}");
        }
    }
}
