//! Atomic statements: each one fits a single ALU, stateful ALU or
//! match on one variable.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::memop::{AluOp, CmpOp};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Operand {
    Var(String),
    Const(u64),
    /// A named program constant.
    Named(String, u64),
}

impl Operand {
    pub fn var(&self) -> Option<&str> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Const(_) | Operand::Named(..) => None,
        }
    }

    pub fn const_value(&self) -> Option<u64> {
        match self {
            Operand::Var(_) => None,
            Operand::Const(c) | Operand::Named(_, c) => Some(*c),
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Operand::Named(n, _) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Const(c) => write!(f, "{c}"),
            Operand::Named(n, _) => f.write_str(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum OpKind {
    Copy(Operand),
    Alu(AluOp, Operand, Operand),
    /// CRC of the arguments (value, width) with the given polynomial,
    /// truncated to the destination width.
    Hash { poly: u64, args: Vec<(Operand, u32)> },
    Time,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum MemRead {
    Stored,
    Memop { name: String, arg: Operand },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum MemWrite {
    Value(Operand),
    Memop { name: String, arg: Operand },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MemAccess {
    pub array: String,
    pub method: String,
    pub index: Operand,
    /// Both functions see the cell value from before this access.
    pub read: Option<MemRead>,
    pub write: Option<MemWrite>,
    pub result: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Dest {
    Local,
    Switch(Operand),
    Group(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GenerateRec {
    pub event: String,
    pub args: Vec<Operand>,
    pub delay: Operand,
    pub dest: Dest,
    pub multicast: bool,
}

/// `var cmp value`; with `signed`, `var` is read as two's complement.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Test {
    pub var: String,
    pub cmp: CmpOp,
    pub value: u64,
    pub signed: bool,
    /// Constant name `value` was written as.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Test {
    pub fn eval(&self, v: u64, width: u32) -> bool {
        if self.signed {
            let shift = 64 - width;
            let sv = ((v << shift) as i64) >> shift;
            let sc = ((self.value << shift) as i64) >> shift;
            self.cmp.eval(sv, sc)
        } else {
            self.cmp.eval(v, self.value)
        }
    }
}

impl fmt::Display for Test {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{} {} {l}", self.var, self.cmp.symbol())?,
            None => write!(f, "{} {} {}", self.var, self.cmp.symbol(), self.value)?,
        }
        if self.signed {
            f.write_str(" (signed)")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum AtomicStmt {
    Op { dst: String, op: OpKind },
    MemOp(MemAccess),
    Branch(Test),
    Generate(GenerateRec),
    Noop,
}

impl AtomicStmt {
    pub fn kind(&self) -> &'static str {
        match self {
            AtomicStmt::Op { .. } => "op",
            AtomicStmt::MemOp(_) => "memop",
            AtomicStmt::Branch(_) => "branch",
            AtomicStmt::Generate(_) => "generate",
            AtomicStmt::Noop => "noop",
        }
    }

    /// Variables read, in operand order.
    pub fn reads(&self) -> Vec<&str> {
        let mut out = Vec::new();
        match self {
            AtomicStmt::Op { op, .. } => match op {
                OpKind::Copy(a) => out.extend(a.var()),
                OpKind::Alu(_, a, b) => {
                    out.extend(a.var());
                    out.extend(b.var());
                }
                OpKind::Hash { args, .. } => out.extend(args.iter().filter_map(|(a, _)| a.var())),
                OpKind::Time => {}
            },
            AtomicStmt::MemOp(m) => {
                out.extend(m.index.var());
                if let Some(MemRead::Memop { arg, .. }) = &m.read {
                    out.extend(arg.var());
                }
                match &m.write {
                    Some(MemWrite::Value(a)) | Some(MemWrite::Memop { arg: a, .. }) => out.extend(a.var()),
                    None => {}
                }
            }
            AtomicStmt::Branch(t) => out.push(t.var.as_str()),
            AtomicStmt::Generate(g) => {
                out.extend(g.args.iter().filter_map(Operand::var));
                out.extend(g.delay.var());
                if let Dest::Switch(d) = &g.dest {
                    out.extend(d.var());
                }
            }
            AtomicStmt::Noop => {}
        }
        out
    }

    pub fn writes(&self) -> Option<&str> {
        match self {
            AtomicStmt::Op { dst, .. } => Some(dst),
            AtomicStmt::MemOp(m) => m.result.as_deref(),
            _ => None,
        }
    }

    pub fn array(&self) -> Option<&str> {
        match self {
            AtomicStmt::MemOp(m) => Some(&m.array),
            _ => None,
        }
    }
}

impl fmt::Display for AtomicStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomicStmt::Op { dst, op } => match op {
                OpKind::Copy(a) => write!(f, "{dst} = {a}"),
                OpKind::Alu(o, a, b) => write!(f, "{dst} = {a} {} {b}", o.symbol()),
                OpKind::Hash { poly, args } => {
                    let args: Vec<String> = args.iter().map(|(a, _)| a.to_string()).collect();
                    write!(f, "{dst} = hash({poly}, {})", args.join(", "))
                }
                OpKind::Time => write!(f, "{dst} = Sys.time()"),
            },
            AtomicStmt::MemOp(m) => {
                if let Some(r) = &m.result {
                    write!(f, "{r} = ")?;
                }
                write!(f, "Array.{}({}, {}", m.method, m.array, m.index)?;
                match &m.read {
                    Some(MemRead::Memop { name, arg }) => write!(f, ", {name}, {arg}")?,
                    Some(MemRead::Stored) | None => {}
                }
                match &m.write {
                    Some(MemWrite::Value(v)) => write!(f, ", {v}")?,
                    Some(MemWrite::Memop { name, arg }) => write!(f, ", {name}, {arg}")?,
                    None => {}
                }
                f.write_str(")")
            }
            AtomicStmt::Branch(t) => write!(f, "if ({t})"),
            AtomicStmt::Generate(g) => {
                let args: Vec<String> = g.args.iter().map(Operand::to_string).collect();
                write!(f, "generate {}({})", g.event, args.join(", "))?;
                if g.delay.const_value() != Some(0) {
                    write!(f, " delay {}", g.delay)?;
                }
                match &g.dest {
                    Dest::Local => Ok(()),
                    Dest::Switch(s) => write!(f, " at {s}"),
                    Dest::Group(n) => write!(f, " at {n}"),
                }
            }
            AtomicStmt::Noop => f.write_str("noop"),
        }
    }
}

/// Structured form produced by normalization: atomic statements nested
/// under branches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum IrStmt {
    Atomic(AtomicStmt),
    Branch {
        test: Test,
        then_branch: Vec<IrStmt>,
        else_branch: Vec<IrStmt>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HandlerIr {
    pub event: String,
    pub id: u16,
    pub params: Vec<String>,
    /// Width of every variable; bools have width 1.
    pub vars: BTreeMap<String, u32>,
    pub body: Vec<IrStmt>,
}

impl HandlerIr {
    pub fn count_atomic(&self) -> usize {
        fn count(b: &[IrStmt]) -> usize {
            b.iter()
                .map(|s| match s {
                    IrStmt::Atomic(_) => 1,
                    IrStmt::Branch {
                        then_branch,
                        else_branch,
                        ..
                    } => 1 + count(then_branch) + count(else_branch),
                })
                .sum()
        }
        count(&self.body)
    }
}
