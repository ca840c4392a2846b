//! Direct interpretation of the checked syntax tree. Functions are called,
//! not inlined, and memop bodies are evaluated as written.

use std::collections::HashMap;

use crate::frontend::ast::*;
use crate::frontend::resolve::{mask, val_ty, Resolved, ValTy, DEFAULT_WIDTH};

use super::{crc_hash, ArrayStore, CellWrite, ExecResult, Fault, GenDest, GenSet, Generated};

enum Flow {
    Normal,
    Return(Option<u64>),
}

#[derive(Clone, Copy)]
struct Val {
    v: u64,
    w: u32,
}

struct Frame {
    scopes: Vec<HashMap<String, Val>>,
    /// Array parameters bound to global names.
    arrays: HashMap<String, String>,
}

struct Machine<'a> {
    r: &'a Resolved,
    store: &'a mut ArrayStore,
    now: u64,
    out: ExecResult,
    gens: GenSet,
}

fn width_of(t: ValTy) -> u32 {
    match t {
        ValTy::Int(w) => w,
        ValTy::Bool => 1,
        _ => DEFAULT_WIDTH,
    }
}

pub fn exec_surface(r: &Resolved, store: &mut ArrayStore, event: &str, args: &[u64], now: u64) -> ExecResult {
    let Some((params, body)) = r.handler(event) else {
        return ExecResult {
            fault: Some(Fault::NoHandler {
                event: event.to_string(),
            }),
            ..ExecResult::default()
        };
    };
    let mut frame = Frame {
        scopes: vec![params
            .iter()
            .zip(args)
            .map(|(p, &a)| {
                let w = width_of(val_ty(&p.ty));
                (p.name.name.clone(), Val { v: a & mask(w), w })
            })
            .collect()],
        arrays: HashMap::new(),
    };
    let mut m = Machine {
        r,
        store,
        now,
        out: ExecResult::default(),
        gens: GenSet::default(),
    };
    if let Err(f) = m.block(&mut frame, body) {
        m.out.fault = Some(f);
    }
    m.out
}

impl Frame {
    fn lookup(&self, n: &str) -> Option<Val> {
        self.scopes.iter().rev().find_map(|s| s.get(n).copied())
    }

    fn set(&mut self, n: &str, v: u64) {
        for s in self.scopes.iter_mut().rev() {
            if let Some(x) = s.get_mut(n) {
                x.v = v & mask(x.w);
                return;
            }
        }
        panic!("assignment to unbound `{n}`");
    }

    fn array(&self, e: &Expr) -> String {
        match &e.kind {
            ExprKind::Var(n) => self.arrays.get(n).cloned().unwrap_or_else(|| n.clone()),
            _ => panic!("array argument is not a name"),
        }
    }
}

impl Machine<'_> {
    fn block(&mut self, f: &mut Frame, stmts: &[Stmt]) -> Result<Flow, Fault> {
        f.scopes.push(HashMap::new());
        let mut flow = Flow::Normal;
        for s in stmts {
            flow = self.stmt(f, s)?;
            if matches!(flow, Flow::Return(_)) {
                break;
            }
        }
        f.scopes.pop();
        Ok(flow)
    }

    fn stmt(&mut self, f: &mut Frame, s: &Stmt) -> Result<Flow, Fault> {
        match &s.kind {
            StmtKind::Local { ty, name, init } => {
                let w = width_of(val_ty(ty));
                let v = match init {
                    Some(e) => self.expr(f, e)?.v & mask(w),
                    None => 0,
                };
                f.scopes.last_mut().unwrap().insert(name.name.clone(), Val { v, w });
            }
            StmtKind::Assign { name, value } => {
                let v = self.expr(f, value)?.v;
                f.set(&name.name, v);
            }
            StmtKind::Expr(e) => {
                self.expr(f, e)?;
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if self.expr(f, cond)?.v != 0 {
                    return self.block(f, then_branch);
                } else if let Some(b) = else_branch {
                    return self.block(f, b);
                }
            }
            StmtKind::Generate { multicast, event } => {
                let mut g = Generated {
                    event: String::new(),
                    args: Vec::new(),
                    delay: 0,
                    dest: GenDest::Local,
                    multicast: *multicast,
                };
                self.event(f, event, &mut g)?;
                self.gens.add(&g)?;
                self.out.generated.push(g);
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => Some(self.expr(f, e)?.v),
                    None => None,
                };
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn event(&mut self, f: &mut Frame, e: &Expr, g: &mut Generated) -> Result<(), Fault> {
        match &e.kind {
            ExprKind::EventCtor { event, args } => {
                g.event = event.clone();
                for a in args {
                    let v = self.expr(f, a)?;
                    g.args.push(v.v);
                }
            }
            ExprKind::Delay { event, delay } => {
                self.event(f, event, g)?;
                g.delay = self.expr(f, delay)?.v;
            }
            ExprKind::Locate { event, dest } => {
                self.event(f, event, g)?;
                g.dest = match &dest.kind {
                    ExprKind::Var(n) if f.lookup(n).is_none() && self.r.groups.contains_key(n) => {
                        GenDest::Group(n.clone())
                    }
                    _ => GenDest::Switch(self.expr(f, dest)?.v),
                };
            }
            _ => panic!("not an event expression"),
        }
        Ok(())
    }

    fn expr(&mut self, f: &mut Frame, e: &Expr) -> Result<Val, Fault> {
        Ok(match &e.kind {
            ExprKind::Int { value, width } => {
                let w = width.unwrap_or(DEFAULT_WIDTH);
                Val { v: value & mask(w), w }
            }
            ExprKind::Bool(b) => Val { v: *b as u64, w: 1 },
            ExprKind::Var(n) => match f.lookup(n) {
                Some(v) => v,
                None => {
                    let c = &self.r.consts[n];
                    let w = width_of(c.ty);
                    Val { v: c.value & mask(w), w }
                }
            },
            ExprKind::Binary { op, lhs, rhs } => match op {
                BinOp::And => {
                    if self.expr(f, lhs)?.v == 0 {
                        Val { v: 0, w: 1 }
                    } else {
                        Val {
                            v: (self.expr(f, rhs)?.v != 0) as u64,
                            w: 1,
                        }
                    }
                }
                BinOp::Or => {
                    if self.expr(f, lhs)?.v != 0 {
                        Val { v: 1, w: 1 }
                    } else {
                        Val {
                            v: (self.expr(f, rhs)?.v != 0) as u64,
                            w: 1,
                        }
                    }
                }
                _ => {
                    let a = self.expr(f, lhs)?;
                    let b = self.expr(f, rhs)?;
                    binop(*op, a, b)
                }
            },
            ExprKind::Hash { width, args } => {
                let w = match width {
                    Size::Lit(w) => *w,
                    Size::Named(n) => self.r.const_value(n).unwrap_or(DEFAULT_WIDTH as u64) as u32,
                };
                let poly = self.expr(f, &args[0])?.v;
                let mut vals = Vec::new();
                for a in &args[1..] {
                    let v = self.expr(f, a)?;
                    vals.push((v.v, v.w));
                }
                Val {
                    v: crc_hash(poly, w, &vals),
                    w,
                }
            }
            ExprKind::Call { callee, args } => return self.call(f, callee, args),
            ExprKind::EventCtor { .. } | ExprKind::Delay { .. } | ExprKind::Locate { .. } => {
                panic!("event value outside generate")
            }
        })
    }

    fn call(&mut self, f: &mut Frame, callee: &Callee, args: &[Expr]) -> Result<Val, Fault> {
        match callee.module.as_deref() {
            Some("Sys") => Ok(Val {
                v: self.now & mask(32),
                w: 32,
            }),
            Some("Array") => self.array_call(f, &callee.name, args),
            Some(m) => panic!("unknown module {m}"),
            None => {
                let fun = self.r.fun(&callee.name).expect("checked function");
                let mut inner = Frame {
                    scopes: vec![HashMap::new()],
                    arrays: HashMap::new(),
                };
                for (p, a) in fun.params.iter().zip(args) {
                    match val_ty(&p.ty) {
                        ValTy::Array(_) => {
                            inner.arrays.insert(p.name.name.clone(), f.array(a));
                        }
                        t => {
                            let w = width_of(t);
                            let v = self.expr(f, a)?.v & mask(w);
                            inner.scopes[0].insert(p.name.name.clone(), Val { v, w });
                        }
                    }
                }
                let w = width_of(val_ty(fun.ret));
                match self.block(&mut inner, fun.body)? {
                    Flow::Return(Some(v)) => Ok(Val { v: v & mask(w), w }),
                    _ => Ok(Val { v: 0, w }),
                }
            }
        }
    }

    fn memop(&self, name: &str, stored: u64, arg: u64, w: u32) -> u64 {
        let d = self.r.memop(name).expect("checked memop");
        let DeclKind::Memop { params, body, .. } = &d.kind else {
            unreachable!()
        };
        let env = [
            (params[0].name.name.as_str(), stored & mask(w)),
            (params[1].name.name.as_str(), arg & mask(w)),
        ];
        let ev = |e: &Expr| memop_expr(self.r, &env, e, w);
        let ret = |b: &[Stmt]| match &b[0].kind {
            StmtKind::Return(Some(e)) => ev(e),
            _ => unreachable!("validated memop"),
        };
        match &body[0].kind {
            StmtKind::Return(Some(e)) => ev(e),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if ev(cond) != 0 {
                    ret(then_branch)
                } else {
                    ret(else_branch.as_deref().expect("validated memop"))
                }
            }
            _ => unreachable!("validated memop"),
        }
    }

    fn array_call(&mut self, f: &mut Frame, method: &str, args: &[Expr]) -> Result<Val, Fault> {
        let array = f.array(&args[0]);
        let idx = self.expr(f, &args[1])?.v;
        let name = |e: &Expr| match &e.kind {
            ExprKind::Var(n) => n.clone(),
            _ => panic!("memop argument is not a name"),
        };
        let mut vals = Vec::new();
        for (k, a) in args.iter().enumerate().skip(2) {
            let is_memop_slot = matches!((method, k), ("getm" | "setm", 2) | ("update", 2 | 4));
            if !is_memop_slot {
                vals.push(self.expr(f, a)?.v);
            }
        }
        let d = self.store.decl_index(&array);
        self.out.accesses.push(d);
        let w = self.store.get(&array).width;
        let (_, cell, _) = self.store.cell(&array, idx)?;
        let old = *cell;
        let (ret, new) = match method {
            "get" => (old, None),
            "getm" => (self.memop(&name(&args[2]), old, vals[0], w), None),
            "set" => (0, Some(vals[0] & mask(w))),
            "setm" => (0, Some(self.memop(&name(&args[2]), old, vals[0], w))),
            "update" => (
                self.memop(&name(&args[2]), old, vals[0], w),
                Some(self.memop(&name(&args[4]), old, vals[1], w)),
            ),
            m => panic!("unknown array method {m}"),
        };
        if let Some(new) = new {
            *self.store.cell(&array, idx)?.1 = new;
            self.out.writes.push(CellWrite {
                array,
                index: idx,
                old,
                new,
            });
        }
        Ok(Val { v: ret, w })
    }
}

fn binop(op: BinOp, a: Val, b: Val) -> Val {
    let w = a.w.max(b.w);
    let v = match op {
        BinOp::Add => a.v.wrapping_add(b.v) & mask(w),
        BinOp::Sub => a.v.wrapping_sub(b.v) & mask(w),
        BinOp::Mul => a.v.wrapping_mul(b.v) & mask(w),
        BinOp::BitAnd => a.v & b.v,
        BinOp::BitOr => a.v | b.v,
        BinOp::BitXor => a.v ^ b.v,
        BinOp::Eq => return bool_val(a.v == b.v),
        BinOp::Ne => return bool_val(a.v != b.v),
        BinOp::Lt => return bool_val(a.v < b.v),
        BinOp::Gt => return bool_val(a.v > b.v),
        BinOp::Le => return bool_val(a.v <= b.v),
        BinOp::Ge => return bool_val(a.v >= b.v),
        BinOp::And | BinOp::Or => unreachable!(),
    };
    Val { v, w }
}

fn bool_val(b: bool) -> Val {
    Val { v: b as u64, w: 1 }
}

fn memop_expr(r: &Resolved, env: &[(&str, u64); 2], e: &Expr, w: u32) -> u64 {
    match &e.kind {
        ExprKind::Int { value, .. } => value & mask(w),
        ExprKind::Bool(b) => *b as u64,
        ExprKind::Var(n) => env
            .iter()
            .find(|(p, _)| p == n)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| r.const_value(n).expect("memop constant") & mask(w)),
        ExprKind::Binary { op, lhs, rhs } => {
            let a = Val {
                v: memop_expr(r, env, lhs, w),
                w,
            };
            let b = Val {
                v: memop_expr(r, env, rhs, w),
                w,
            };
            binop(*op, a, b).v
        }
        _ => unreachable!("validated memop"),
    }
}
