//! Function inlining on the checked surface program.

use std::collections::{HashMap, HashSet};

use crate::frontend::ast::*;
use crate::frontend::resolve::{val_ty, Resolved, ValTy, DEFAULT_WIDTH};
use crate::span::Span;

use super::LowerError;

/// Replaces every function call in handler bodies by a renamed copy of the
/// function body. Function declarations are kept but no longer referenced.
pub fn inline_calls(r: &Resolved) -> Result<Resolved, LowerError> {
    let mut out = r.clone();
    let mut inl = Inliner {
        r,
        calls: 0,
        temps: 0,
        stack: Vec::new(),
        scopes: Vec::new(),
    };
    for d in out.program.decls.iter_mut() {
        if let DeclKind::Handler { params, body, .. } = &mut d.kind {
            inl.scopes = vec![params
                .iter()
                .map(|p| (p.name.name.clone(), val_ty(&p.ty)))
                .collect()];
            let mut new_body = Vec::new();
            for s in body.iter() {
                inl.stmt(s, &mut new_body)?;
            }
            *body = new_body;
        }
    }
    Ok(out)
}

pub(crate) fn concrete_ty(t: ValTy) -> Ty {
    match t {
        ValTy::Bool => Ty::Bool,
        ValTy::Int(w) => Ty::Int(Some(Size::Lit(w))),
        _ => Ty::Int(Some(Size::Lit(DEFAULT_WIDTH))),
    }
}

fn contains(e: &Expr, pred: &impl Fn(&Callee) -> bool) -> bool {
    match &e.kind {
        ExprKind::Int { .. } | ExprKind::Bool(_) | ExprKind::Var(_) => false,
        ExprKind::Binary { lhs, rhs, .. } => contains(lhs, pred) || contains(rhs, pred),
        ExprKind::Call { callee, args } => pred(callee) || args.iter().any(|a| contains(a, pred)),
        ExprKind::Hash { args, .. } | ExprKind::EventCtor { args, .. } => {
            args.iter().any(|a| contains(a, pred))
        }
        ExprKind::Delay { event, delay: o } | ExprKind::Locate { event, dest: o } => {
            contains(event, pred) || contains(o, pred)
        }
    }
}

fn has_fun_call(e: &Expr) -> bool {
    contains(e, &|c: &Callee| c.module.is_none())
}

fn has_effect(e: &Expr) -> bool {
    contains(e, &|c: &Callee| c.module.is_none() || c.module.as_deref() == Some("Array"))
}

fn mk(kind: StmtKind, span: &Span) -> Stmt {
    Stmt {
        kind,
        span: span.clone(),
    }
}

fn var(name: &str, span: &Span) -> Expr {
    Expr::new(ExprKind::Var(name.to_string()), span.clone())
}

struct Inliner<'a> {
    r: &'a Resolved,
    calls: usize,
    temps: usize,
    stack: Vec<String>,
    scopes: Vec<HashMap<String, ValTy>>,
}

impl Inliner<'_> {
    fn declare(&mut self, name: &str, t: ValTy) {
        self.scopes
            .last_mut()
            .expect("scope")
            .insert(name.to_string(), t);
    }

    fn lookup(&self, name: &str) -> Option<ValTy> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn temp(&mut self) -> String {
        self.temps += 1;
        format!("%c{}", self.temps - 1)
    }

    fn expr_ty(&self, e: &Expr) -> ValTy {
        match &e.kind {
            ExprKind::Int { width, .. } => ValTy::Int(width.unwrap_or(DEFAULT_WIDTH)),
            ExprKind::Bool(_) => ValTy::Bool,
            ExprKind::Var(n) => self
                .lookup(n)
                .or_else(|| self.r.consts.get(n).map(|c| c.ty))
                .unwrap_or(ValTy::Int(DEFAULT_WIDTH)),
            ExprKind::Binary { op, lhs, .. } => {
                if op.is_comparison() || op.is_logical() {
                    ValTy::Bool
                } else {
                    self.expr_ty(lhs)
                }
            }
            ExprKind::Call { callee, args } => match callee.module.as_deref() {
                None => self
                    .r
                    .fun(&callee.name)
                    .map(|f| val_ty(f.ret))
                    .unwrap_or(ValTy::Void),
                Some("Array") => match (&callee.name[..], args.first().map(|a| &a.kind)) {
                    ("set" | "setm", _) => ValTy::Void,
                    (_, Some(ExprKind::Var(g))) => self
                        .r
                        .global(g)
                        .map(|g| ValTy::Int(g.cell_width))
                        .unwrap_or(ValTy::Int(DEFAULT_WIDTH)),
                    _ => ValTy::Int(DEFAULT_WIDTH),
                },
                _ => ValTy::Int(DEFAULT_WIDTH),
            },
            ExprKind::Hash { width, .. } => match width {
                Size::Lit(w) => ValTy::Int(*w),
                Size::Named(_) => ValTy::Int(DEFAULT_WIDTH),
            },
            ExprKind::EventCtor { .. } | ExprKind::Delay { .. } | ExprKind::Locate { .. } => ValTy::Event,
        }
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Vec<Stmt>, LowerError> {
        self.scopes.push(HashMap::new());
        let mut out = Vec::new();
        for s in stmts {
            self.stmt(s, &mut out)?;
        }
        self.scopes.pop();
        Ok(out)
    }

    fn top(&mut self, e: &Expr, pre: &mut Vec<Stmt>) -> Result<Expr, LowerError> {
        if has_fun_call(e) {
            self.hoist(e, pre)
        } else {
            Ok(e.clone())
        }
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<Stmt>) -> Result<(), LowerError> {
        match &s.kind {
            StmtKind::Local { ty, name, init } => {
                let init = match init {
                    Some(e) => Some(self.top(e, out)?),
                    None => None,
                };
                self.declare(&name.name, val_ty(ty));
                out.push(mk(
                    StmtKind::Local {
                        ty: ty.clone(),
                        name: name.clone(),
                        init,
                    },
                    &s.span,
                ));
            }
            StmtKind::Assign { name, value } => {
                let value = self.top(value, out)?;
                out.push(mk(
                    StmtKind::Assign {
                        name: name.clone(),
                        value,
                    },
                    &s.span,
                ));
            }
            StmtKind::Expr(e) => match &e.kind {
                ExprKind::Call { callee, args } if callee.module.is_none() => {
                    self.inline_call(&callee.name, args, &e.span, out, false)?;
                }
                ExprKind::Call { callee, args } if has_fun_call(e) => {
                    let mut new_args = Vec::new();
                    for a in args {
                        new_args.push(self.hoist(a, out)?);
                    }
                    out.push(mk(
                        StmtKind::Expr(Expr::new(
                            ExprKind::Call {
                                callee: callee.clone(),
                                args: new_args,
                            },
                            e.span.clone(),
                        )),
                        &s.span,
                    ));
                }
                _ => {
                    let e = self.top(e, out)?;
                    out.push(mk(StmtKind::Expr(e), &s.span));
                }
            },
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let cond = self.top(cond, out)?;
                let then_branch = self.block(then_branch)?;
                let else_branch = match else_branch {
                    Some(b) => Some(self.block(b)?),
                    None => None,
                };
                out.push(mk(
                    StmtKind::If {
                        cond,
                        then_branch,
                        else_branch,
                    },
                    &s.span,
                ));
            }
            StmtKind::Generate { multicast, event } => {
                let event = self.top(event, out)?;
                out.push(mk(
                    StmtKind::Generate {
                        multicast: *multicast,
                        event,
                    },
                    &s.span,
                ));
            }
            StmtKind::Return(_) => out.push(s.clone()),
        }
        Ok(())
    }

    /// Moves every effectful call of `e` into `pre`, in evaluation order.
    fn hoist(&mut self, e: &Expr, pre: &mut Vec<Stmt>) -> Result<Expr, LowerError> {
        let span = &e.span;
        let kind = match &e.kind {
            ExprKind::Int { .. } | ExprKind::Bool(_) | ExprKind::Var(_) => return Ok(e.clone()),
            ExprKind::Binary { op, lhs, rhs } if op.is_logical() && has_effect(rhs) => {
                let l = self.hoist(lhs, pre)?;
                let flag = self.temp();
                self.declare(&flag, ValTy::Bool);
                pre.push(mk(
                    StmtKind::Local {
                        ty: Ty::Bool,
                        name: Ident::new(flag.clone(), span.clone()),
                        init: Some(l),
                    },
                    span,
                ));
                self.scopes.push(HashMap::new());
                let mut inner = Vec::new();
                let r = self.hoist(rhs, &mut inner)?;
                self.scopes.pop();
                inner.push(mk(
                    StmtKind::Assign {
                        name: Ident::new(flag.clone(), span.clone()),
                        value: r,
                    },
                    span,
                ));
                let (then_branch, else_branch) = if *op == BinOp::And {
                    (inner, None)
                } else {
                    (Vec::new(), Some(inner))
                };
                pre.push(mk(
                    StmtKind::If {
                        cond: var(&flag, span),
                        then_branch,
                        else_branch,
                    },
                    span,
                ));
                return Ok(var(&flag, span));
            }
            ExprKind::Binary { op, lhs, rhs } => ExprKind::Binary {
                op: *op,
                lhs: Box::new(self.hoist(lhs, pre)?),
                rhs: Box::new(self.hoist(rhs, pre)?),
            },
            ExprKind::Call { callee, args } if callee.module.is_none() => {
                return Ok(self
                    .inline_call(&callee.name, args, span, pre, true)?
                    .expect("value-returning call"));
            }
            ExprKind::Call { callee, args } => {
                let mut new_args = Vec::new();
                for a in args {
                    new_args.push(self.hoist(a, pre)?);
                }
                let call = Expr::new(
                    ExprKind::Call {
                        callee: callee.clone(),
                        args: new_args,
                    },
                    span.clone(),
                );
                if callee.module.as_deref() != Some("Array") {
                    return Ok(call);
                }
                let t = self.expr_ty(&call);
                let tmp = self.temp();
                self.declare(&tmp, t);
                pre.push(mk(
                    StmtKind::Local {
                        ty: concrete_ty(t),
                        name: Ident::new(tmp.clone(), span.clone()),
                        init: Some(call),
                    },
                    span,
                ));
                return Ok(var(&tmp, span));
            }
            ExprKind::Hash { width, args } => ExprKind::Hash {
                width: width.clone(),
                args: args
                    .iter()
                    .map(|a| self.hoist(a, pre))
                    .collect::<Result<_, _>>()?,
            },
            ExprKind::EventCtor { event, args } => ExprKind::EventCtor {
                event: event.clone(),
                args: args
                    .iter()
                    .map(|a| self.hoist(a, pre))
                    .collect::<Result<_, _>>()?,
            },
            ExprKind::Delay { event, delay } => ExprKind::Delay {
                event: Box::new(self.hoist(event, pre)?),
                delay: Box::new(self.hoist(delay, pre)?),
            },
            ExprKind::Locate { event, dest } => ExprKind::Locate {
                event: Box::new(self.hoist(event, pre)?),
                dest: Box::new(self.hoist(dest, pre)?),
            },
        };
        Ok(Expr::new(kind, span.clone()))
    }

    fn inline_call(
        &mut self,
        name: &str,
        args: &[Expr],
        span: &Span,
        pre: &mut Vec<Stmt>,
        want_result: bool,
    ) -> Result<Option<Expr>, LowerError> {
        if self.stack.iter().any(|f| f == name) {
            return Err(LowerError::RecursionDetected {
                function: name.to_string(),
            });
        }
        let f = self.r.fun(name).ok_or_else(|| LowerError::UnknownFunction {
            function: name.to_string(),
        })?;
        let prefix = format!("%{name}{}_", self.calls);
        self.calls += 1;
        let mut map: HashMap<String, String> = HashMap::new();
        for (p, a) in f.params.iter().zip(args) {
            let t = val_ty(&p.ty);
            if let ValTy::Array(_) = t {
                let ExprKind::Var(g) = &a.kind else {
                    unreachable!("checked array argument")
                };
                map.insert(p.name.name.clone(), g.clone());
                continue;
            }
            let a = self.hoist(a, pre)?;
            let local = format!("{prefix}{}", p.name.name);
            self.declare(&local, t);
            pre.push(mk(
                StmtKind::Local {
                    ty: concrete_ty(t),
                    name: Ident::new(local.clone(), span.clone()),
                    init: Some(a),
                },
                span,
            ));
            map.insert(p.name.name.clone(), local);
        }
        let mut locals = HashSet::new();
        collect_locals(f.body, &mut locals);
        for l in locals {
            map.insert(l.clone(), format!("{prefix}{l}"));
        }
        let body = rename_block(f.body, &map);
        let ret_ty = val_ty(f.ret);
        let ret_name = format!("{prefix}ret");
        let returns = count_returns(&body);

        let body = match body.split_last() {
            Some((last, init)) if returns == 1 && matches!(last.kind, StmtKind::Return(_)) => {
                let mut b = init.to_vec();
                if let StmtKind::Return(Some(e)) = &last.kind {
                    b.push(mk(
                        StmtKind::Local {
                            ty: concrete_ty(ret_ty),
                            name: Ident::new(ret_name.clone(), last.span.clone()),
                            init: Some(e.clone()),
                        },
                        &last.span,
                    ));
                }
                b
            }
            _ if returns == 0 => body,
            _ => {
                let done = format!("{prefix}done");
                if ret_ty != ValTy::Void {
                    self.declare(&ret_name, ret_ty);
                    pre.push(mk(
                        StmtKind::Local {
                            ty: concrete_ty(ret_ty),
                            name: Ident::new(ret_name.clone(), span.clone()),
                            init: None,
                        },
                        span,
                    ));
                }
                self.declare(&done, ValTy::Bool);
                pre.push(mk(
                    StmtKind::Local {
                        ty: Ty::Bool,
                        name: Ident::new(done.clone(), span.clone()),
                        init: Some(Expr::new(ExprKind::Bool(false), span.clone())),
                    },
                    span,
                ));
                let ret = (ret_ty != ValTy::Void).then_some(ret_name.as_str());
                transform_returns(&body, ret, &done).0
            }
        };

        self.stack.push(name.to_string());
        for s in &body {
            self.stmt(s, pre)?;
        }
        self.stack.pop();
        Ok((want_result && ret_ty != ValTy::Void).then(|| var(&ret_name, span)))
    }
}

fn collect_locals(b: &[Stmt], out: &mut HashSet<String>) {
    for s in b {
        match &s.kind {
            StmtKind::Local { name, .. } => {
                out.insert(name.name.clone());
            }
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                collect_locals(then_branch, out);
                if let Some(e) = else_branch {
                    collect_locals(e, out);
                }
            }
            _ => {}
        }
    }
}

fn count_returns(b: &[Stmt]) -> usize {
    b.iter()
        .map(|s| match &s.kind {
            StmtKind::Return(_) => 1,
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => count_returns(then_branch) + else_branch.as_deref().map_or(0, count_returns),
            _ => 0,
        })
        .sum()
}

/// Rewrites returns into flag assignments; statements that may follow a
/// taken return are wrapped in a test of the flag.
/// Returns (block, may return, always returns).
fn transform_returns(b: &[Stmt], ret: Option<&str>, done: &str) -> (Vec<Stmt>, bool, bool) {
    let mut out = Vec::new();
    let mut may = false;
    for (i, s) in b.iter().enumerate() {
        match &s.kind {
            StmtKind::Return(v) => {
                if let (Some(e), Some(r)) = (v, ret) {
                    out.push(mk(
                        StmtKind::Assign {
                            name: Ident::new(r, s.span.clone()),
                            value: e.clone(),
                        },
                        &s.span,
                    ));
                }
                out.push(mk(
                    StmtKind::Assign {
                        name: Ident::new(done, s.span.clone()),
                        value: Expr::new(ExprKind::Bool(true), s.span.clone()),
                    },
                    &s.span,
                ));
                return (out, true, true);
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let (t, tm, ta) = transform_returns(then_branch, ret, done);
                let (e, em, ea) = match else_branch {
                    Some(e) => transform_returns(e, ret, done),
                    None => (Vec::new(), false, false),
                };
                out.push(mk(
                    StmtKind::If {
                        cond: cond.clone(),
                        then_branch: t,
                        else_branch: else_branch.as_ref().map(|_| e),
                    },
                    &s.span,
                ));
                if ta && ea {
                    return (out, true, true);
                }
                if tm || em {
                    let (rest, _, _) = transform_returns(&b[i + 1..], ret, done);
                    if !rest.is_empty() {
                        let test = Expr::new(
                            ExprKind::Binary {
                                op: BinOp::Eq,
                                lhs: Box::new(var(done, &s.span)),
                                rhs: Box::new(Expr::new(ExprKind::Bool(false), s.span.clone())),
                            },
                            s.span.clone(),
                        );
                        out.push(mk(
                            StmtKind::If {
                                cond: test,
                                then_branch: rest,
                                else_branch: None,
                            },
                            &s.span,
                        ));
                    }
                    return (out, true, false);
                }
                may |= tm || em;
            }
            _ => out.push(s.clone()),
        }
    }
    (out, may, false)
}

fn rename_block(b: &[Stmt], map: &HashMap<String, String>) -> Vec<Stmt> {
    b.iter().map(|s| rename_stmt(s, map)).collect()
}

fn rename_ident(id: &Ident, map: &HashMap<String, String>) -> Ident {
    Ident::new(
        map.get(&id.name).cloned().unwrap_or_else(|| id.name.clone()),
        id.span.clone(),
    )
}

fn rename_stmt(s: &Stmt, map: &HashMap<String, String>) -> Stmt {
    let kind = match &s.kind {
        StmtKind::Local { ty, name, init } => StmtKind::Local {
            ty: ty.clone(),
            name: rename_ident(name, map),
            init: init.as_ref().map(|e| rename_expr(e, map)),
        },
        StmtKind::Assign { name, value } => StmtKind::Assign {
            name: rename_ident(name, map),
            value: rename_expr(value, map),
        },
        StmtKind::Expr(e) => StmtKind::Expr(rename_expr(e, map)),
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => StmtKind::If {
            cond: rename_expr(cond, map),
            then_branch: rename_block(then_branch, map),
            else_branch: else_branch.as_ref().map(|b| rename_block(b, map)),
        },
        StmtKind::Generate { multicast, event } => StmtKind::Generate {
            multicast: *multicast,
            event: rename_expr(event, map),
        },
        StmtKind::Return(e) => StmtKind::Return(e.as_ref().map(|e| rename_expr(e, map))),
    };
    mk(kind, &s.span)
}

fn rename_expr(e: &Expr, map: &HashMap<String, String>) -> Expr {
    let kind = match &e.kind {
        ExprKind::Var(n) => ExprKind::Var(map.get(n).cloned().unwrap_or_else(|| n.clone())),
        ExprKind::Int { .. } | ExprKind::Bool(_) => e.kind.clone(),
        ExprKind::Binary { op, lhs, rhs } => ExprKind::Binary {
            op: *op,
            lhs: Box::new(rename_expr(lhs, map)),
            rhs: Box::new(rename_expr(rhs, map)),
        },
        ExprKind::Call { callee, args } => ExprKind::Call {
            callee: callee.clone(),
            args: args.iter().map(|a| rename_expr(a, map)).collect(),
        },
        ExprKind::Hash { width, args } => ExprKind::Hash {
            width: width.clone(),
            args: args.iter().map(|a| rename_expr(a, map)).collect(),
        },
        ExprKind::EventCtor { event, args } => ExprKind::EventCtor {
            event: event.clone(),
            args: args.iter().map(|a| rename_expr(a, map)).collect(),
        },
        ExprKind::Delay { event, delay } => ExprKind::Delay {
            event: Box::new(rename_expr(event, map)),
            delay: Box::new(rename_expr(delay, map)),
        },
        ExprKind::Locate { event, dest } => ExprKind::Locate {
            event: Box::new(rename_expr(event, map)),
            dest: Box::new(rename_expr(dest, map)),
        },
    };
    Expr::new(kind, e.span.clone())
}
