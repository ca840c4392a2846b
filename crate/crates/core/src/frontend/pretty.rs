//! Source printer. `parse(print(p))` reproduces `p` up to spans.

use std::fmt::Write;

use super::ast::*;

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        decl(&mut out, d);
    }
    out
}

fn ty(t: &Ty) -> String {
    match t {
        Ty::Int(None) => "int".into(),
        Ty::Int(Some(s)) => format!("int<{s}>"),
        Ty::Bool => "bool".into(),
        Ty::Void => "void".into(),
        Ty::Auto => "auto".into(),
        Ty::Array(None) => "Array".into(),
        Ty::Array(Some(s)) => format!("Array<<{s}>>"),
    }
}

fn params(ps: &[Param]) -> String {
    ps.iter()
        .map(|p| format!("{} {}", ty(&p.ty), p.name.name))
        .collect::<Vec<_>>()
        .join(", ")
}

fn decl(out: &mut String, d: &Decl) {
    match &d.kind {
        DeclKind::Const { ty: t, name, value } => {
            let _ = writeln!(out, "const {} {} = {};", ty(t), name.name, expr(value));
        }
        DeclKind::Group { name, members } => {
            let ms: Vec<_> = members.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(out, "const group {} = {{{}}};", name.name, ms.join(", "));
        }
        DeclKind::Global {
            name,
            module,
            cell_width,
            args,
        } => {
            let _ = writeln!(
                out,
                "global {} = new {}<<{}>>({});",
                name.name,
                module.name,
                cell_width,
                exprs(args)
            );
        }
        DeclKind::Event {
            qualifiers,
            name,
            params: ps,
        } => {
            for q in qualifiers {
                out.push_str(q);
                out.push(' ');
            }
            let _ = writeln!(out, "event {}({});", name.name, params(ps));
        }
        DeclKind::Handler {
            event,
            params: ps,
            body,
        } => {
            let _ = write!(out, "handle {}({}) ", event.name, params(ps));
            block(out, body, 0);
            out.push('\n');
        }
        DeclKind::Fun {
            ret,
            name,
            params: ps,
            body,
        } => {
            let _ = write!(out, "fun {} {}({}) ", ty(ret), name.name, params(ps));
            block(out, body, 0);
            out.push('\n');
        }
        DeclKind::Memop {
            name,
            params: ps,
            body,
        } => {
            let _ = write!(out, "memop {}({}) ", name.name, params(ps));
            block(out, body, 0);
            out.push('\n');
        }
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn block(out: &mut String, stmts: &[Stmt], level: usize) {
    out.push_str("{\n");
    for s in stmts {
        stmt(out, s, level + 1);
    }
    indent(out, level);
    out.push('}');
}

fn stmt(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    match &s.kind {
        StmtKind::Local { ty: t, name, init } => {
            let _ = write!(out, "{} {}", ty(t), name.name);
            if let Some(e) = init {
                let _ = write!(out, " = {}", expr(e));
            }
            out.push_str(";\n");
        }
        StmtKind::Assign { name, value } => {
            let _ = writeln!(out, "{} = {};", name.name, expr(value));
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{};", expr(e));
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            let _ = write!(out, "if ({}) ", expr(cond));
            block(out, then_branch, level);
            if let Some(b) = else_branch {
                out.push_str(" else ");
                block(out, b, level);
            }
            out.push('\n');
        }
        StmtKind::Generate { multicast, event } => {
            let kw = if *multicast { "mgenerate" } else { "generate" };
            let _ = writeln!(out, "{kw} {};", expr(event));
        }
        StmtKind::Return(None) => out.push_str("return;\n"),
        StmtKind::Return(Some(e)) => {
            let _ = writeln!(out, "return {};", expr(e));
        }
    }
}

fn exprs(es: &[Expr]) -> String {
    es.iter().map(expr).collect::<Vec<_>>().join(", ")
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int { value, width: None } => value.to_string(),
        ExprKind::Int {
            value,
            width: Some(w),
        } => format!("{value}<{w}>"),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Var(n) => n.clone(),
        ExprKind::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let wrap = |child: &Expr, strict: bool| {
                let s = expr(child);
                match &child.kind {
                    ExprKind::Binary { op: c, .. }
                        if c.precedence() < prec || (strict && c.precedence() == prec) =>
                    {
                        format!("({s})")
                    }
                    _ => s,
                }
            };
            format!("{} {} {}", wrap(lhs, false), op.symbol(), wrap(rhs, true))
        }
        ExprKind::Call { callee, args } => format!("{callee}({})", exprs(args)),
        ExprKind::Hash { width, args } => format!("hash<{width}>({})", exprs(args)),
        ExprKind::EventCtor { event, args } => format!("{event}({})", exprs(args)),
        ExprKind::Delay { event, delay } => {
            format!("Event.delay({}, {})", expr(event), expr(delay))
        }
        ExprKind::Locate { event, dest } => {
            format!("Event.locate({}, {})", expr(event), expr(dest))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    fn round_trip(src: &str) {
        let a = parse_source("t.lucid", src).unwrap();
        let printed = pretty_print(&a);
        let b = parse_source("t.lucid", &printed)
            .unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        assert_eq!(a.without_spans(), b.without_spans(), "\n{printed}");
    }

    #[test]
    fn empty_program_prints_nothing() {
        assert_eq!(pretty_print(&Program::default()), "");
    }

    #[test]
    fn event_program_round_trips() {
        round_trip(
            "event a(); event b(); event c(); const group GRP = {2, 3};
handle a() {
	generate b();
	mgenerate Event.delay (Event.locate (c(), GRP), 10ms);
}",
        );
    }

    #[test]
    fn parenthesization_is_minimal_and_faithful() {
        round_trip("const int X = (1 - 2) - 3 + (4 - 5) & (6 | 7) ^ 8<4>;");
        let p = parse_source("t", "const int X = a - (b - c);").unwrap();
        assert!(pretty_print(&p).contains("a - (b - c)"));
        let p = parse_source("t", "const int X = (a - b) - c;").unwrap();
        assert!(pretty_print(&p).contains("= a - b - c;"));
    }

    #[test]
    fn else_if_chains_round_trip() {
        round_trip(
            "event e(int p); handle e(int p) { if (p == 1) p = 2; else if (p == 3) p = 4; else { p = 5; } }",
        );
    }
}
