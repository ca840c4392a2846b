//! Execution of the atomic table graph by walking control edges.

use std::collections::{BTreeMap, HashMap};

use crate::frontend::resolve::mask;
use crate::lower::{AtomicStmt, Dest, EdgeLabel, MemRead, MemWrite, OpKind, Operand, TableGraph};
use crate::memop::{memop_semantics, MemopShape};

use super::{crc_hash, ArrayStore, CellWrite, ExecResult, Fault, GenDest, GenSet, Generated};

/// Shared state of one execution of atomic statements.
pub(crate) struct Step<'a> {
    pub memops: &'a BTreeMap<String, MemopShape>,
    pub widths: &'a BTreeMap<String, u32>,
    pub now: u64,
    pub out: ExecResult,
    pub gens: GenSet,
}

impl Step<'_> {
    /// Runs one non-branch statement. Reads go through `read`; the variable
    /// written, if any, is returned with its masked value.
    pub(crate) fn run(
        &mut self,
        stmt: &AtomicStmt,
        read: &dyn Fn(&str) -> u64,
        store: &mut ArrayStore,
    ) -> Result<Option<(String, u64)>, Fault> {
        let op = |o: &Operand| match o {
            Operand::Var(v) => read(v),
            Operand::Const(c) | Operand::Named(_, c) => *c,
        };
        match stmt {
            AtomicStmt::Op { dst, op: k } => {
                let w = self.widths[dst];
                let v = match k {
                    OpKind::Copy(a) => op(a),
                    OpKind::Alu(f, a, b) => f.apply(op(a), op(b), w),
                    OpKind::Hash { poly, args } => {
                        let vals: Vec<(u64, u32)> = args.iter().map(|(a, aw)| (op(a), *aw)).collect();
                        crc_hash(*poly, w, &vals)
                    }
                    OpKind::Time => self.now & mask(32),
                };
                Ok(Some((dst.clone(), v & mask(w))))
            }
            AtomicStmt::MemOp(m) => {
                let idx = op(&m.index);
                let (d, cell, cw) = store.cell(&m.array, idx)?;
                self.out.accesses.push(d);
                let old = *cell;
                let apply = |name: &str, arg: &Operand| memop_semantics(&self.memops[name], old, op(arg), cw);
                let ret = match &m.read {
                    Some(MemRead::Stored) => Some(old),
                    Some(MemRead::Memop { name, arg }) => Some(apply(name, arg)),
                    None => None,
                };
                let new = match &m.write {
                    Some(MemWrite::Value(a)) => Some(op(a) & mask(cw)),
                    Some(MemWrite::Memop { name, arg }) => Some(apply(name, arg)),
                    None => None,
                };
                if let Some(new) = new {
                    *store.cell(&m.array, idx)?.1 = new;
                    self.out.writes.push(CellWrite {
                        array: m.array.clone(),
                        index: idx,
                        old,
                        new,
                    });
                }
                Ok(match (&m.result, ret) {
                    (Some(r), Some(v)) => Some((r.clone(), v & mask(self.widths[r]))),
                    _ => None,
                })
            }
            AtomicStmt::Generate(g) => {
                let gen = Generated {
                    event: g.event.clone(),
                    args: g.args.iter().map(op).collect(),
                    delay: op(&g.delay),
                    dest: match &g.dest {
                        Dest::Local => GenDest::Local,
                        Dest::Switch(s) => GenDest::Switch(op(s)),
                        Dest::Group(n) => GenDest::Group(n.clone()),
                    },
                    multicast: g.multicast,
                };
                self.gens.add(&gen)?;
                self.out.generated.push(gen);
                Ok(None)
            }
            AtomicStmt::Branch(_) | AtomicStmt::Noop => Ok(None),
        }
    }
}

pub fn exec_graph(
    g: &TableGraph,
    memops: &BTreeMap<String, MemopShape>,
    store: &mut ArrayStore,
    event: &str,
    args: &[u64],
    now: u64,
) -> ExecResult {
    let Some(h) = g.handler(event) else {
        return ExecResult {
            fault: Some(Fault::NoHandler {
                event: event.to_string(),
            }),
            ..ExecResult::default()
        };
    };
    let mut env: HashMap<String, u64> = h.vars.keys().map(|v| (v.clone(), 0)).collect();
    for (p, a) in h.params.iter().zip(args) {
        env.insert(p.clone(), a & mask(h.vars[p]));
    }
    let mut step = Step {
        memops,
        widths: &h.vars,
        now,
        out: ExecResult::default(),
        gens: GenSet::default(),
    };
    let mut cur = Some(h.entry);
    while let Some(id) = cur {
        let node = &g.nodes[id];
        let label = match &node.stmt {
            AtomicStmt::Branch(t) => {
                if t.eval(env[&t.var], h.vars[&t.var]) {
                    EdgeLabel::True
                } else {
                    EdgeLabel::False
                }
            }
            stmt => {
                match step.run(stmt, &|v| env[v], store) {
                    Ok(Some((v, x))) => {
                        env.insert(v, x);
                    }
                    Ok(None) => {}
                    Err(f) => {
                        step.out.fault = Some(f);
                        break;
                    }
                }
                EdgeLabel::Next
            }
        };
        cur = g.succs(id).find(|e| e.label == label).map(|e| e.to);
    }
    step.out
}
