//! Three-address form: compound expressions split through temporaries,
//! conditions reduced to single-variable tests.

use std::collections::{BTreeMap, HashMap};

use crate::frontend::ast::*;
use crate::frontend::resolve::{val_ty, Resolved, ValTy, DEFAULT_WIDTH};
use crate::memop::{AluOp, CmpOp};

use super::ir::*;
use super::LowerConfig;

pub(crate) struct Normalizer<'a> {
    r: &'a Resolved,
    cfg: &'a LowerConfig,
    pub(crate) vars: BTreeMap<String, u32>,
    scopes: Vec<HashMap<String, String>>,
    temps: usize,
    cur: Vec<IrStmt>,
    pub(crate) warnings: Vec<String>,
    event: String,
}

fn ty_width(t: ValTy) -> u32 {
    match t {
        ValTy::Int(w) => w,
        ValTy::Bool => 1,
        _ => DEFAULT_WIDTH,
    }
}

fn flip(c: CmpOp) -> CmpOp {
    match c {
        CmpOp::Lt => CmpOp::Gt,
        CmpOp::Gt => CmpOp::Lt,
        CmpOp::Le => CmpOp::Ge,
        CmpOp::Ge => CmpOp::Le,
        other => other,
    }
}

fn writes_in(b: &[IrStmt], v: &str) -> bool {
    b.iter().any(|s| match s {
        IrStmt::Atomic(a) => a.writes() == Some(v),
        IrStmt::Branch {
            then_branch,
            else_branch,
            ..
        } => writes_in(then_branch, v) || writes_in(else_branch, v),
    })
}

impl<'a> Normalizer<'a> {
    pub(crate) fn new(r: &'a Resolved, cfg: &'a LowerConfig, event: &str) -> Self {
        Normalizer {
            r,
            cfg,
            vars: BTreeMap::new(),
            scopes: vec![HashMap::new()],
            temps: 0,
            cur: Vec::new(),
            warnings: Vec::new(),
            event: event.to_string(),
        }
    }

    pub(crate) fn declare(&mut self, name: &str, width: u32) -> String {
        let mut ir = name.to_string();
        let mut k = 0;
        while self.vars.contains_key(&ir) {
            k += 1;
            ir = format!("{name}%{k}");
        }
        self.vars.insert(ir.clone(), width);
        self.scopes
            .last_mut()
            .unwrap()
            .insert(name.to_string(), ir.clone());
        ir
    }

    fn lookup(&self, name: &str) -> Option<&String> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn temp(&mut self, width: u32) -> String {
        let t = format!("%t{}", self.temps);
        self.temps += 1;
        self.vars.insert(t.clone(), width);
        t
    }

    fn emit(&mut self, a: AtomicStmt) {
        self.cur.push(IrStmt::Atomic(a));
    }

    fn capture(&mut self, f: impl FnOnce(&mut Self)) -> Vec<IrStmt> {
        let saved = std::mem::take(&mut self.cur);
        f(self);
        std::mem::replace(&mut self.cur, saved)
    }

    pub(crate) fn finish(self) -> Vec<IrStmt> {
        self.cur
    }

    fn width(&self, e: &Expr) -> u32 {
        match &e.kind {
            ExprKind::Int { width, .. } => width.unwrap_or(DEFAULT_WIDTH),
            ExprKind::Bool(_) => 1,
            ExprKind::Var(n) => match self.lookup(n) {
                Some(ir) => self.vars[ir],
                None => self
                    .r
                    .consts
                    .get(n)
                    .map(|c| ty_width(c.ty))
                    .unwrap_or(DEFAULT_WIDTH),
            },
            ExprKind::Binary { op, lhs, .. } => {
                if op.is_comparison() || op.is_logical() {
                    1
                } else {
                    self.width(lhs)
                }
            }
            ExprKind::Call { callee, args } => {
                if callee.module.as_deref() == Some("Array") {
                    if let Some(ExprKind::Var(g)) = args.first().map(|a| &a.kind) {
                        if let Some(g) = self.r.global(g) {
                            return g.cell_width;
                        }
                    }
                }
                DEFAULT_WIDTH
            }
            ExprKind::Hash { width, .. } => match width {
                Size::Lit(w) => *w,
                Size::Named(_) => DEFAULT_WIDTH,
            },
            _ => DEFAULT_WIDTH,
        }
    }

    fn is_bool(&self, e: &Expr) -> bool {
        match &e.kind {
            ExprKind::Bool(_) => true,
            ExprKind::Binary { op, .. } => op.is_comparison() || op.is_logical(),
            ExprKind::Var(n) => match self.lookup(n) {
                Some(_) => false,
                None => self.r.consts.get(n).map(|c| c.ty == ValTy::Bool).unwrap_or(false),
            },
            _ => false,
        }
    }

    // ----------------------------------------------------------- blocks

    pub(crate) fn block(&mut self, stmts: &[Stmt]) {
        self.scopes.push(HashMap::new());
        for s in stmts {
            self.stmt(s);
        }
        self.scopes.pop();
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Local { ty, name, init } => {
                let w = ty_width(val_ty(ty));
                // The initializer sees the enclosing binding, not the new one.
                match init {
                    Some(e) => {
                        let value = self.rhs(e, w);
                        let ir = self.declare(&name.name, w);
                        self.finish_assign(&ir, value);
                    }
                    None => {
                        let ir = self.declare(&name.name, w);
                        self.emit(AtomicStmt::Op {
                            dst: ir,
                            op: OpKind::Copy(Operand::Const(0)),
                        });
                    }
                }
            }
            StmtKind::Assign { name, value } => {
                let ir = self.lookup(&name.name).cloned().expect("checked local");
                let w = self.vars[&ir];
                let v = self.rhs(value, w);
                self.finish_assign(&ir, v);
            }
            StmtKind::Expr(e) => {
                if let ExprKind::Call { callee, args } = &e.kind {
                    if callee.module.as_deref() == Some("Array") {
                        self.memop(callee, args, None);
                    }
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let t = self.capture(|s| s.block(then_branch));
                let e = self.capture(|s| {
                    if let Some(b) = else_branch {
                        s.block(b)
                    }
                });
                self.cond(cond, t, e);
            }
            StmtKind::Generate { multicast, event } => self.generate(event, *multicast),
            StmtKind::Return(_) => {}
        }
    }

    // ------------------------------------------------------ expressions

    /// Lowers the right-hand side of an assignment of width `w`. Anything
    /// that is not a single atomic computation is evaluated into operands
    /// first; the final computation is returned to be stored.
    fn rhs(&mut self, e: &Expr, w: u32) -> Rhs {
        match &e.kind {
            ExprKind::Binary { op, lhs, rhs } if !op.is_comparison() && !op.is_logical() => {
                let a = self.operand(lhs);
                let b = self.operand(rhs);
                Rhs::Op(OpKind::Alu(AluOp::from_binop(*op).expect("checked operator"), a, b))
            }
            _ if self.is_bool(e) && !matches!(e.kind, ExprKind::Var(_) | ExprKind::Bool(_)) => {
                Rhs::Bool(e.clone())
            }
            ExprKind::Call { callee, args } if callee.module.as_deref() == Some("Array") => {
                Rhs::Mem(callee.clone(), args.clone())
            }
            ExprKind::Call { callee, .. } if callee.is("Sys", "time") => Rhs::Op(OpKind::Time),
            ExprKind::Hash { args, .. } => Rhs::Op(self.hash(args)),
            _ => {
                let _ = w;
                Rhs::Op(OpKind::Copy(self.operand(e)))
            }
        }
    }

    fn finish_assign(&mut self, dst: &str, v: Rhs) {
        match v {
            Rhs::Op(op) => self.emit(AtomicStmt::Op {
                dst: dst.to_string(),
                op,
            }),
            Rhs::Mem(callee, args) => self.memop(&callee, &args, Some(dst.to_string())),
            Rhs::Bool(e) => {
                let set = |v: u64| {
                    vec![IrStmt::Atomic(AtomicStmt::Op {
                        dst: dst.to_string(),
                        op: OpKind::Copy(Operand::Const(v)),
                    })]
                };
                self.cond(&e, set(1), set(0));
            }
        }
    }

    fn hash(&mut self, args: &[Expr]) -> OpKind {
        let poly = self
            .operand(&args[0])
            .const_value()
            .expect("checked constant polynomial");
        let args = args[1..]
            .iter()
            .map(|a| {
                let w = self.width(a);
                (self.operand(a), w)
            })
            .collect();
        OpKind::Hash { poly, args }
    }

    fn operand(&mut self, e: &Expr) -> Operand {
        match &e.kind {
            ExprKind::Int { value, .. } => Operand::Const(*value),
            ExprKind::Bool(b) => Operand::Const(*b as u64),
            ExprKind::Var(n) => match self.lookup(n) {
                Some(ir) => Operand::Var(ir.clone()),
                None => Operand::Named(n.clone(), self.r.const_value(n).expect("checked constant")),
            },
            _ => {
                let w = self.width(e);
                let t = self.temp(w);
                let v = self.rhs(e, w);
                self.finish_assign(&t, v);
                Operand::Var(t)
            }
        }
    }

    fn memop(&mut self, callee: &Callee, args: &[Expr], result: Option<String>) {
        let index = self.operand(&args[1]);
        let name = |e: &Expr| match &e.kind {
            ExprKind::Var(n) => n.clone(),
            _ => unreachable!("checked memop argument"),
        };
        let (read, write) = match callee.name.as_str() {
            "get" => (Some(MemRead::Stored), None),
            "getm" => (
                Some(MemRead::Memop {
                    name: name(&args[2]),
                    arg: self.operand(&args[3]),
                }),
                None,
            ),
            "set" => (None, Some(MemWrite::Value(self.operand(&args[2])))),
            "setm" => (
                None,
                Some(MemWrite::Memop {
                    name: name(&args[2]),
                    arg: self.operand(&args[3]),
                }),
            ),
            "update" => {
                let r = MemRead::Memop {
                    name: name(&args[2]),
                    arg: self.operand(&args[3]),
                };
                let w = MemWrite::Memop {
                    name: name(&args[4]),
                    arg: self.operand(&args[5]),
                };
                (Some(r), Some(w))
            }
            m => unreachable!("unknown array method {m}"),
        };
        let array = name(&args[0]);
        self.emit(AtomicStmt::MemOp(MemAccess {
            array,
            method: callee.name.clone(),
            index,
            read,
            write,
            result,
        }));
    }

    fn generate(&mut self, e: &Expr, multicast: bool) {
        let mut rec = GenerateRec {
            event: String::new(),
            args: Vec::new(),
            delay: Operand::Const(0),
            dest: Dest::Local,
            multicast,
        };
        self.event_parts(e, &mut rec);
        self.emit(AtomicStmt::Generate(rec));
    }

    fn event_parts(&mut self, e: &Expr, rec: &mut GenerateRec) {
        match &e.kind {
            ExprKind::EventCtor { event, args } => {
                rec.event = event.clone();
                rec.args = args.iter().map(|a| self.operand(a)).collect();
            }
            ExprKind::Delay { event, delay } => {
                self.event_parts(event, rec);
                rec.delay = self.operand(delay);
            }
            ExprKind::Locate { event, dest } => {
                self.event_parts(event, rec);
                rec.dest = match &dest.kind {
                    ExprKind::Var(n) if self.lookup(n).is_none() && self.r.groups.contains_key(n) => {
                        Dest::Group(n.clone())
                    }
                    _ => Dest::Switch(self.operand(dest)),
                };
            }
            _ => unreachable!("checked event expression"),
        }
    }

    // ------------------------------------------------------- conditions

    fn emit_all(&mut self, b: Vec<IrStmt>) {
        self.cur.extend(b);
    }

    fn set_flag(flag: &str, v: u64) -> Vec<IrStmt> {
        vec![IrStmt::Atomic(AtomicStmt::Op {
            dst: flag.to_string(),
            op: OpKind::Copy(Operand::Const(v)),
        })]
    }

    fn cond(&mut self, c: &Expr, then_b: Vec<IrStmt>, else_b: Vec<IrStmt>) {
        match &c.kind {
            ExprKind::Bool(b) => self.emit_all(if *b { then_b } else { else_b }),
            ExprKind::Binary {
                op: BinOp::And,
                lhs,
                rhs,
            } => {
                if else_b.is_empty() {
                    let inner = self.capture(|s| s.cond(rhs, then_b, Vec::new()));
                    self.cond(lhs, inner, Vec::new());
                } else {
                    let f = self.temp(1);
                    self.emit_all(Self::set_flag(&f, 0));
                    let inner = self.capture(|s| s.cond(rhs, Self::set_flag(&f, 1), Vec::new()));
                    self.cond(lhs, inner, Vec::new());
                    self.branch(Test::flag(&f), then_b, else_b);
                }
            }
            ExprKind::Binary {
                op: BinOp::Or,
                lhs,
                rhs,
            } => {
                if then_b.is_empty() {
                    let inner = self.capture(|s| s.cond(rhs, Vec::new(), else_b));
                    self.cond(lhs, Vec::new(), inner);
                } else {
                    let f = self.temp(1);
                    self.emit_all(Self::set_flag(&f, 0));
                    let inner = self.capture(|s| s.cond(rhs, Self::set_flag(&f, 1), Vec::new()));
                    self.cond(lhs, Self::set_flag(&f, 1), inner);
                    self.branch(Test::flag(&f), then_b, else_b);
                }
            }
            ExprKind::Binary { op, lhs, rhs } if op.is_comparison() => {
                let cmp = CmpOp::from_binop(*op).unwrap();
                let w = self.width(lhs).max(self.width(rhs));
                let a = self.operand(lhs);
                let b = self.operand(rhs);
                match (a, b) {
                    (a, b) if a.const_value().is_some() && b.const_value().is_some() => {
                        let (x, y) = (a.const_value().unwrap(), b.const_value().unwrap());
                        self.emit_all(if cmp.eval(x, y) { then_b } else { else_b })
                    }
                    (Operand::Var(x), k) if k.const_value().is_some() => self.branch(
                        Test {
                            var: x,
                            cmp,
                            value: k.const_value().unwrap(),
                            signed: false,
                            label: k.name().map(str::to_string),
                        },
                        then_b,
                        else_b,
                    ),
                    (k, Operand::Var(x)) if k.const_value().is_some() => self.branch(
                        Test {
                            var: x,
                            cmp: flip(cmp),
                            value: k.const_value().unwrap(),
                            signed: false,
                            label: k.name().map(str::to_string),
                        },
                        then_b,
                        else_b,
                    ),
                    (x, y) => {
                        let t = self.temp(w + 1);
                        if w + 1 > self.cfg.max_compare_bits {
                            self.warnings.push(format!(
                                "{}: comparison `{}` needs a {}-bit difference, wider than the {}-bit comparison limit",
                                self.event,
                                crate::frontend::pretty::expr(c),
                                w + 1,
                                self.cfg.max_compare_bits
                            ));
                        }
                        self.emit(AtomicStmt::Op {
                            dst: t.clone(),
                            op: OpKind::Alu(AluOp::Sub, x, y),
                        });
                        self.branch(
                            Test {
                                var: t,
                                cmp,
                                value: 0,
                                signed: true,
                                label: None,
                            },
                            then_b,
                            else_b,
                        );
                    }
                }
            }
            _ => match self.operand(c) {
                Operand::Var(v) => self.branch(Test::flag(&v), then_b, else_b),
                k => {
                    let v = k.const_value().unwrap();
                    self.emit_all(if v != 0 { then_b } else { else_b })
                }
            },
        }
    }

    fn branch(&mut self, mut test: Test, then_b: Vec<IrStmt>, else_b: Vec<IrStmt>) {
        if then_b.is_empty() && else_b.is_empty() {
            return;
        }
        if writes_in(&then_b, &test.var) || writes_in(&else_b, &test.var) {
            let w = self.vars[&test.var];
            let snap = self.temp(w);
            self.emit(AtomicStmt::Op {
                dst: snap.clone(),
                op: OpKind::Copy(Operand::Var(test.var.clone())),
            });
            test.var = snap;
        }
        self.cur.push(IrStmt::Branch {
            test,
            then_branch: then_b,
            else_branch: else_b,
        });
    }
}

enum Rhs {
    Op(OpKind),
    Mem(Callee, Vec<Expr>),
    Bool(Expr),
}

impl Test {
    pub fn flag(var: &str) -> Test {
        Test {
            var: var.to_string(),
            cmp: CmpOp::Eq,
            value: 1,
            signed: false,
            label: None,
        }
    }
}
