//! P4-like text for atomic tables and merged pipelines.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::frontend::resolve::{Resolved, ValTy};
use crate::layout::{IntervalSet, MergedTable, PipelineLayout};
use crate::lower::*;
use crate::memop::{self, MathExp, MemopShape};

/// Program facts the templates need beyond the statements themselves.
#[derive(Clone, Debug, Default)]
pub struct EmitContext {
    pub memops: BTreeMap<String, MemopShape>,
    /// name -> (cell width, length)
    pub arrays: BTreeMap<String, (u32, u64)>,
    /// (name, id, [(param, width)]) in declaration order.
    pub events: Vec<(String, u16, Vec<(String, u32)>)>,
}

impl EmitContext {
    pub fn new(r: &Resolved, memops: &BTreeMap<String, MemopShape>) -> Self {
        EmitContext {
            memops: memops.clone(),
            arrays: r
                .globals
                .iter()
                .map(|g| (g.name.clone(), (g.cell_width, g.length)))
                .collect(),
            events: r
                .events
                .iter()
                .map(|e| {
                    let ps = e
                        .params
                        .iter()
                        .map(|(n, t)| {
                            let w = match t {
                                ValTy::Int(w) => *w,
                                _ => 1,
                            };
                            (n.clone(), w)
                        })
                        .collect();
                    (e.name.clone(), e.id, ps)
                })
                .collect(),
        }
    }

    fn cell_width(&self, array: &str) -> u32 {
        self.arrays.get(array).map(|a| a.0).unwrap_or(32)
    }
}

fn math(m: &MathExp, arg: &str) -> String {
    let opnd = |o: memop::Operand| match o {
        memop::Operand::Stored => "mem".to_string(),
        memop::Operand::Arg => arg.to_string(),
        memop::Operand::Const(c) => c.to_string(),
    };
    match m.rest {
        None => opnd(m.lhs),
        Some((op, b)) => format!("{} {} {}", opnd(m.lhs), op.symbol(), opnd(b)),
    }
}

/// Statements assigning `target` from a memop applied to `mem` and `arg`.
fn memop_body(shape: &MemopShape, target: &str, arg: &str, indent: &str) -> String {
    match shape {
        MemopShape::ReturnOnly(m) => format!("{indent}{target} = {};\n", math(m, arg)),
        MemopShape::IfElse {
            lhs,
            cmp,
            rhs,
            then_ret,
            else_ret,
        } => format!(
            "{indent}if ({} {} {}) {{\n{indent}  {target} = {};\n{indent}}} else {{\n{indent}  {target} = {};\n{indent}}}\n",
            math(lhs, arg),
            cmp.symbol(),
            math(rhs, arg),
            math(then_ret, arg),
            math(else_ret, arg)
        ),
    }
}

fn register_action(name: &str, m: &MemAccess, cx: &EmitContext) -> String {
    let w = cx.cell_width(&m.array);
    let mut body = String::new();
    if m.result.is_some() {
        match &m.read {
            Some(MemRead::Stored) => body.push_str("    ret = mem;\n"),
            Some(MemRead::Memop { name, arg }) => match cx.memops.get(name) {
                Some(s) => body.push_str(&memop_body(s, "ret", &arg.to_string(), "    ")),
                None => {
                    let _ = writeln!(body, "    ret = {name}(mem, {arg});");
                }
            },
            None => {}
        }
    }
    match &m.write {
        Some(MemWrite::Value(v)) => {
            let _ = writeln!(body, "    mem = {v};");
        }
        Some(MemWrite::Memop { name, arg }) => match cx.memops.get(name) {
            Some(s) => body.push_str(&memop_body(s, "mem", &arg.to_string(), "    ")),
            None => {
                let _ = writeln!(body, "    mem = {name}(mem, {arg});");
            }
        },
        None => {}
    }
    format!(
        "RegisterAction<bit<{w}>,bit<32>,bit<{w}>>({}) {name} = {{\n  void apply(inout bit<{w}> mem, out bit<{w}> ret) {{\n{body}  }}\n}};\n",
        m.array
    )
}

fn ra_name(table: &str) -> String {
    format!("ra_{table}")
}

/// Body statements of a node's action, without the surrounding braces.
fn action_body(table: &str, stmt: &AtomicStmt) -> Vec<String> {
    match stmt {
        AtomicStmt::Op { dst, op } => vec![match op {
            OpKind::Copy(a) => format!("{dst} = {a};"),
            OpKind::Alu(o, a, b) => format!("{dst} = {a} {} {b};", o.symbol()),
            OpKind::Hash { poly, args } => {
                let a: Vec<String> = args.iter().map(|(a, _)| a.to_string()).collect();
                format!("{dst} = hash_{poly}.get({{{}}});", a.join(", "))
            }
            OpKind::Time => format!("{dst} = ingress_tstamp[31:0];"),
        }],
        AtomicStmt::MemOp(m) => {
            let call = format!("{}.execute({});", ra_name(table), m.index);
            vec![match &m.result {
                Some(r) => format!("{r} = {call}"),
                None => call,
            }]
        }
        AtomicStmt::Generate(g) => {
            let mut out = vec![format!("hdr.{}.setValid();", g.event)];
            for (i, a) in g.args.iter().enumerate() {
                out.push(format!("hdr.{}.arg{i} = {a};", g.event));
            }
            out.push(format!("hdr.{}.delay = {};", g.event, g.delay));
            match &g.dest {
                Dest::Local => {}
                Dest::Switch(s) => out.push(format!("hdr.{}.dest = {s};", g.event)),
                Dest::Group(n) => out.push(format!("hdr.{}.mcast_grp = {n};", g.event)),
            }
            out
        }
        AtomicStmt::Branch(_) | AtomicStmt::Noop => Vec::new(),
    }
}

fn single_action_table(name: &str, body: &[String]) -> String {
    let action = if body.is_empty() {
        format!("action do_{name}() {{}}\n")
    } else if body.len() == 1 {
        format!("action do_{name} {{{}}}\n", body[0])
    } else {
        let mut s = format!("action do_{name}() {{\n");
        for l in body {
            let _ = writeln!(s, "  {l}");
        }
        s.push_str("}\n");
        s
    };
    format!(
        "{action}table tbl_{name} {{\n  actions = {{do_{name};}}\n  const default_action = {{do_{name};}}\n}}\n"
    )
}

fn branch_table(name: &str, t: &Test, width: u32) -> String {
    let shown = t.label.clone().unwrap_or_else(|| t.value.to_string());
    let (kind, entries): (&str, Vec<(String, bool)>) = match t.cmp {
        memop::CmpOp::Eq if !t.signed => ("ternary", vec![(shown, true), ("_".into(), false)]),
        memop::CmpOp::Ne if !t.signed => ("ternary", vec![(shown, false), ("_".into(), true)]),
        _ => {
            let set = IntervalSet::from_test(t, width);
            let mut e: Vec<(String, bool)> = set.0.iter().map(|&(a, b)| (format!("{a} .. {b}"), true)).collect();
            e.push(("_".into(), false));
            ("range", e)
        }
    };
    let mut s = format!(
        "action {name}_true(); action {name}_false();\ntable {name} {{\n  keys = {{{} : {kind};}}\n  actions = {{{name}_true; {name}_false;}}\n  entries = {{\n",
        t.var
    );
    let pad = entries.iter().map(|(p, _)| p.len()).max().unwrap_or(0) + 2;
    for (p, outcome) in &entries {
        let pat = format!("({p})");
        let _ = writeln!(s, "    {pat:<pad$} : {name}_{outcome};");
    }
    s.push_str("  }\n}\n");
    s
}

/// Single-statement table for one atomic statement.
pub fn emit_table(name: &str, stmt: &AtomicStmt, vars: &BTreeMap<String, u32>, cx: &EmitContext) -> String {
    match stmt {
        AtomicStmt::Branch(t) => branch_table(name, t, vars.get(&t.var).copied().unwrap_or(32)),
        AtomicStmt::MemOp(m) => {
            let ra = ra_name(name);
            let mut s = register_action(&ra, m, cx);
            s.push_str(&single_action_table(name, &action_body(name, stmt)));
            s
        }
        _ => single_action_table(name, &action_body(name, stmt)),
    }
}

fn wire_comment(cx: &EmitContext) -> String {
    let mut s = String::from(
        "// Event wire layout: id bit<16>, delay bit<32> (ns), destination bit<32>,\n// then the arguments in declaration order, each padded to its width.\n",
    );
    for (name, id, ps) in &cx.events {
        let args: Vec<String> = ps.iter().map(|(p, w)| format!("{p}: bit<{w}>")).collect();
        let _ = writeln!(s, "//   {id} {name}({})", args.join(", "));
    }
    s
}

fn pattern(t: &MergedTable, r: &crate::layout::Rule) -> String {
    let cells: Vec<String> = t
        .keys
        .iter()
        .map(|(k, _)| match r.pattern.get(k) {
            None => "_".to_string(),
            Some(&(a, b)) if a == b => a.to_string(),
            Some(&(a, b)) => format!("{a} .. {b}"),
        })
        .collect();
    format!("({})", cells.join(", "))
}

fn field(v: &str) -> String {
    let s: String = v
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("md.{}", s.trim_start_matches('_'))
}

fn merged_table(t: &MergedTable, g: &TableGraph, cx: &EmitContext, peers: &[&str]) -> String {
    let mut s = String::new();
    for id in &t.members {
        if let AtomicStmt::MemOp(m) = &g.nodes[*id].stmt {
            s.push_str(&register_action(&ra_name(&g.nodes[*id].name), m, cx));
        }
    }
    let mut actions: Vec<&Vec<usize>> = Vec::new();
    for r in &t.rules {
        if !actions.contains(&&r.action) {
            actions.push(&r.action);
        }
    }
    let aname = |k: usize| format!("{}_a{k}", t.name);
    for (k, a) in actions.iter().enumerate() {
        let mut lines = Vec::new();
        for id in a.iter() {
            let n = &g.nodes[*id];
            lines.extend(action_body(&n.name, &n.stmt));
        }
        if lines.is_empty() {
            let _ = writeln!(s, "action {}() {{}}", aname(k));
        } else {
            let _ = writeln!(s, "action {}() {{", aname(k));
            for line in lines {
                let _ = writeln!(s, "  {line}");
            }
            s.push_str("}\n");
        }
    }
    let _ = writeln!(s, "@stage({})", t.stage);
    if !peers.is_empty() {
        let _ = writeln!(s, "@ignore_dependencies(\"{}\")", peers.join("\", \""));
    }
    let _ = writeln!(s, "table {} {{", t.name);
    if !t.keys.is_empty() {
        let keys: Vec<String> = t
            .keys
            .iter()
            .map(|(k, _)| format!("{} : range;", field(k)))
            .collect();
        let _ = writeln!(s, "  key = {{{}}}", keys.join(" "));
    }
    let names: Vec<String> = (0..actions.len()).map(|k| format!("{};", aname(k))).collect();
    let _ = writeln!(s, "  actions = {{{}}}", names.join(" "));
    if t.keys.is_empty() {
        let _ = writeln!(s, "  const default_action = {{{};}}", aname(0));
    } else {
        s.push_str("  const entries = {\n");
        for r in &t.rules {
            let k = actions.iter().position(|a| *a == &r.action).unwrap();
            let _ = writeln!(s, "    {} : {};", pattern(t, r), aname(k));
        }
        s.push_str("  }\n");
    }
    s.push_str("}\n");
    s
}

/// Whole control block: registers, tables in stage order and the apply list.
pub fn emit_pipeline(l: &PipelineLayout, g: &TableGraph, cx: &EmitContext) -> String {
    let mut s = wire_comment(cx);
    s.push('\n');
    for (name, (w, len)) in &cx.arrays {
        let _ = writeln!(s, "Register<bit<{w}>, bit<32>>({len}) {name};");
    }
    if !cx.arrays.is_empty() {
        s.push('\n');
    }
    s.push_str("control Ingress(inout headers hdr, inout metadata md) {\n");
    let mut order = Vec::new();
    for tables in &l.stages {
        for t in tables {
            let peers: Vec<&str> = tables
                .iter()
                .filter(|p| p.name != t.name)
                .map(|p| p.name.as_str())
                .collect();
            let text = if l.optimized {
                merged_table(t, g, cx, &peers)
            } else {
                let n = &g.nodes[t.members[0]];
                let vars = g
                    .handler(n.handler.as_deref().unwrap_or(""))
                    .map(|h| h.vars.clone())
                    .unwrap_or_default();
                let mut x = format!("@stage({})\n", t.stage);
                if !peers.is_empty() {
                    let _ = writeln!(x, "@ignore_dependencies(\"{}\")", peers.join("\", \""));
                }
                x.push_str(&emit_table(&n.name, &n.stmt, &vars, cx));
                x
            };
            for line in text.lines() {
                if line.is_empty() {
                    s.push('\n');
                } else {
                    let _ = writeln!(s, "  {line}");
                }
            }
            s.push('\n');
            let apply_name = if l.optimized || matches!(g.nodes[t.members[0]].stmt, AtomicStmt::Branch(_)) {
                t.name.clone()
            } else {
                format!("tbl_{}", t.name)
            };
            order.push(apply_name);
        }
    }
    s.push_str("  apply {\n");
    for t in &order {
        let _ = writeln!(s, "    {t}.apply();");
    }
    s.push_str("  }\n}\n");
    s
}
