//! Atomic table graph: one node per atomic statement, rooted at a dispatch
//! node that selects a handler by event id.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;
use serde_json::{json, Value};

use super::ir::*;
use super::ProgramIr;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum EdgeLabel {
    Next,
    True,
    False,
    Dispatch(String),
}

impl EdgeLabel {
    pub fn as_str(&self) -> &str {
        match self {
            EdgeLabel::Next => "next",
            EdgeLabel::True => "true",
            EdgeLabel::False => "false",
            EdgeLabel::Dispatch(e) => e,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub label: EdgeLabel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TableNode {
    pub id: usize,
    /// `None` only for the dispatch root.
    pub handler: Option<String>,
    pub name: String,
    pub stmt: AtomicStmt,
    /// Branch outcomes on the unique control path from the handler entry.
    pub path: Vec<(Test, bool)>,
    /// The same path as (branch node id, outcome).
    pub conds: Vec<(usize, bool)>,
}

impl TableNode {
    /// True when no execution reaches both nodes.
    pub fn exclusive_with(&self, other: &TableNode) -> bool {
        self.conds
            .iter()
            .any(|(b, o)| other.conds.iter().any(|(c, p)| b == c && o != p))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HandlerMeta {
    pub event: String,
    pub id: u16,
    pub params: Vec<String>,
    pub vars: BTreeMap<String, u32>,
    pub entry: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TableGraph {
    pub nodes: Vec<TableNode>,
    pub edges: Vec<GraphEdge>,
    pub root: usize,
    pub handlers: Vec<HandlerMeta>,
    /// Global arrays in declaration order.
    pub arrays: Vec<String>,
}

struct Builder {
    nodes: Vec<TableNode>,
    edges: Vec<GraphEdge>,
    handler: String,
    conds: Vec<(usize, bool)>,
}

impl Builder {
    fn add(&mut self, stmt: AtomicStmt, path: &[(Test, bool)], preds: &[(usize, EdgeLabel)]) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TableNode {
            id,
            handler: Some(self.handler.clone()),
            name: String::new(),
            stmt,
            path: path.to_vec(),
            conds: self.conds.clone(),
        });
        for (p, l) in preds {
            self.edges.push(GraphEdge {
                from: *p,
                to: id,
                label: l.clone(),
            });
        }
        id
    }

    fn block(
        &mut self,
        b: &[IrStmt],
        mut preds: Vec<(usize, EdgeLabel)>,
        path: &mut Vec<(Test, bool)>,
    ) -> Vec<(usize, EdgeLabel)> {
        for s in b {
            match s {
                IrStmt::Atomic(a) => {
                    let id = self.add(a.clone(), path, &preds);
                    preds = vec![(id, EdgeLabel::Next)];
                }
                IrStmt::Branch {
                    test,
                    then_branch,
                    else_branch,
                } => {
                    let id = self.add(AtomicStmt::Branch(test.clone()), path, &preds);
                    path.push((test.clone(), true));
                    self.conds.push((id, true));
                    let mut out = self.block(then_branch, vec![(id, EdgeLabel::True)], path);
                    path.pop();
                    self.conds.pop();
                    path.push((test.clone(), false));
                    self.conds.push((id, false));
                    out.extend(self.block(else_branch, vec![(id, EdgeLabel::False)], path));
                    path.pop();
                    self.conds.pop();
                    preds = out;
                }
            }
        }
        preds
    }
}

fn sanitize(s: &str) -> String {
    let t: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    let t = t.trim_matches('_').to_string();
    if t.is_empty() {
        "t".into()
    } else {
        t
    }
}

fn base_name(n: &TableNode, branch_no: &mut usize) -> String {
    match &n.stmt {
        AtomicStmt::Op { dst, op } => {
            let o = match op {
                OpKind::Copy(_) => "set",
                OpKind::Alu(a, ..) => a.name(),
                OpKind::Hash { .. } => "hash",
                OpKind::Time => "time",
            };
            format!("{}_{o}", sanitize(dst))
        }
        AtomicStmt::MemOp(m) => format!("{}_{}", sanitize(&m.array), m.method),
        AtomicStmt::Branch(_) => {
            let k = *branch_no;
            *branch_no += 1;
            format!("if_{k}")
        }
        AtomicStmt::Generate(g) => format!("generate_{}", sanitize(&g.event)),
        AtomicStmt::Noop => match &n.handler {
            Some(h) => format!("{}_noop", sanitize(h)),
            None => "dispatch".into(),
        },
    }
}

/// Builds the graph. Node ids follow program order, so every edge goes
/// from a smaller to a larger id.
pub fn build_table_graph(ir: &ProgramIr) -> TableGraph {
    let mut b = Builder {
        nodes: vec![TableNode {
            id: 0,
            handler: None,
            name: String::new(),
            stmt: AtomicStmt::Noop,
            path: Vec::new(),
            conds: Vec::new(),
        }],
        edges: Vec::new(),
        handler: String::new(),
        conds: Vec::new(),
    };
    let mut handlers = Vec::new();
    for h in &ir.handlers {
        b.handler = h.event.clone();
        let entry = b.nodes.len();
        let preds = vec![(0, EdgeLabel::Dispatch(h.event.clone()))];
        if h.body.is_empty() {
            b.add(AtomicStmt::Noop, &[], &preds);
        } else {
            b.block(&h.body, preds, &mut Vec::new());
        }
        handlers.push(HandlerMeta {
            event: h.event.clone(),
            id: h.id,
            params: h.params.clone(),
            vars: h.vars.clone(),
            entry,
        });
    }
    let mut used = HashSet::new();
    let mut branch_no = 0;
    for n in b.nodes.iter_mut() {
        let base = base_name(n, &mut branch_no);
        let mut name = base.clone();
        let mut k = 0;
        while !used.insert(name.clone()) {
            k += 1;
            name = format!("{base}_{k}");
        }
        n.name = name;
    }
    TableGraph {
        nodes: b.nodes,
        edges: b.edges,
        root: 0,
        handlers,
        arrays: ir.arrays.clone(),
    }
}

impl TableGraph {
    pub fn handler(&self, event: &str) -> Option<&HandlerMeta> {
        self.handlers.iter().find(|h| h.event == event)
    }

    pub fn preds(&self, id: usize) -> impl Iterator<Item = &GraphEdge> {
        self.edges.iter().filter(move |e| e.to == id)
    }

    pub fn succs(&self, id: usize) -> impl Iterator<Item = &GraphEdge> {
        self.edges.iter().filter(move |e| e.from == id)
    }

    /// Number of tables on the longest control path, per node (the dispatch
    /// root is not counted).
    fn depths(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for n in &self.nodes {
            if n.id == self.root {
                continue;
            }
            let best = self
                .preds(n.id)
                .filter(|e| e.from != self.root)
                .map(|e| d[e.from])
                .max()
                .unwrap_or(0);
            d[n.id] = best + 1;
        }
        d
    }

    /// Depth of each node counted from its handler entry, starting at 0.
    pub fn control_depth(&self) -> Vec<usize> {
        self.depths().into_iter().map(|d| d.saturating_sub(1)).collect()
    }

    pub fn longest_path(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    pub fn longest_path_of(&self, event: &str) -> usize {
        let d = self.depths();
        self.nodes
            .iter()
            .filter(|n| n.handler.as_deref() == Some(event))
            .map(|n| d[n.id])
            .max()
            .unwrap_or(0)
    }

    /// Non-root nodes of one handler, in id order.
    pub fn handler_nodes<'a>(&'a self, event: &'a str) -> impl Iterator<Item = &'a TableNode> + 'a {
        self.nodes
            .iter()
            .filter(move |n| n.handler.as_deref() == Some(event))
    }

    pub fn count_kind(&self, kind: &str) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.id != self.root && n.stmt.kind() == kind)
            .count()
    }

    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                let detail = if n.id == self.root {
                    "dispatch on event id".to_string()
                } else {
                    n.stmt.to_string()
                };
                json!({"id": n.id, "kind": if n.id == self.root { "dispatch" } else { n.stmt.kind() }, "name": n.name, "detail": detail})
            })
            .collect();
        let edges: Vec<Value> = self
            .edges
            .iter()
            .map(|e| json!({"from": e.from, "to": e.to, "label": e.label.as_str()}))
            .collect();
        json!({"nodes": nodes, "edges": edges})
    }
}
