//! Memop validation: every accepted memop fits one stateful ALU.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::diag::Diagnostic;
use crate::frontend::ast::*;
use crate::frontend::resolve::{mask, ConstInfo};
use crate::span::Span;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Operand {
    /// First parameter: the stored cell value.
    Stored,
    /// Second parameter: the caller-supplied argument.
    Arg,
    Const(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
}

impl AluOp {
    pub fn from_binop(op: BinOp) -> Option<AluOp> {
        Some(match op {
            BinOp::Add => AluOp::Add,
            BinOp::Sub => AluOp::Sub,
            BinOp::BitAnd => AluOp::And,
            BinOp::BitOr => AluOp::Or,
            BinOp::BitXor => AluOp::Xor,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            AluOp::Add => "+",
            AluOp::Sub => "-",
            AluOp::And => "&",
            AluOp::Or => "|",
            AluOp::Xor => "^",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
        }
    }

    pub fn apply(self, a: u64, b: u64, w: u32) -> u64 {
        let r = match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
        };
        r & mask(w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn from_binop(op: BinOp) -> Option<CmpOp> {
        Some(match op {
            BinOp::Eq => CmpOp::Eq,
            BinOp::Ne => CmpOp::Ne,
            BinOp::Lt => CmpOp::Lt,
            BinOp::Gt => CmpOp::Gt,
            BinOp::Le => CmpOp::Le,
            BinOp::Ge => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }

    pub fn eval<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Ge => CmpOp::Lt,
        }
    }
}

/// `simple` or `simple op simple`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MathExp {
    pub lhs: Operand,
    pub rest: Option<(AluOp, Operand)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum MemopShape {
    ReturnOnly(MathExp),
    IfElse {
        lhs: MathExp,
        cmp: CmpOp,
        rhs: MathExp,
        then_ret: MathExp,
        else_ret: MathExp,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum MemopRule {
    TooManyParams,
    LocalDeclInBody,
    BadOperator,
    ParamReuse,
    BadShape,
    MissingElse,
    NestedIf,
    CompoundCondition,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MemopViolation {
    pub memop: String,
    pub rule: MemopRule,
    pub span: Span,
}

impl fmt::Display for MemopViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.rule {
            MemopRule::TooManyParams => "memops take exactly two parameters",
            MemopRule::LocalDeclInBody => "memops may not declare locals",
            MemopRule::BadOperator => "operator not supported by a stateful ALU",
            MemopRule::ParamReuse => "a parameter may appear at most once per expression",
            MemopRule::BadShape => "body must be `return e;` or `if (c) { return e; } else { return e; }`",
            MemopRule::MissingElse => "`if` in a memop needs an `else` branch",
            MemopRule::NestedIf => "nested `if` in a memop",
            MemopRule::CompoundCondition => "compound conditional expression in a memop",
        };
        write!(f, "{}: memop `{}`: {what}", self.span, self.memop)
    }
}

impl MemopViolation {
    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic {
            kind: format!("MemopViolation::{:?}", self.rule),
            handler: None,
            spans: vec![self.span.clone()],
            message: self.to_string(),
        }
    }
}

struct Validator<'a> {
    name: &'a str,
    params: Vec<&'a str>,
    consts: &'a BTreeMap<String, ConstInfo>,
    violations: Vec<MemopViolation>,
}

impl Validator<'_> {
    fn report(&mut self, rule: MemopRule, span: &Span) {
        self.violations.push(MemopViolation {
            memop: self.name.to_string(),
            rule,
            span: span.clone(),
        });
    }

    fn simple(&mut self, e: &Expr, uses: &mut Vec<usize>) -> Option<Operand> {
        match &e.kind {
            ExprKind::Int { value, .. } => Some(Operand::Const(*value)),
            ExprKind::Bool(b) => Some(Operand::Const(*b as u64)),
            ExprKind::Var(n) => {
                if let Some(i) = self.params.iter().position(|p| p == n) {
                    uses.push(i);
                    Some(if i == 0 { Operand::Stored } else { Operand::Arg })
                } else if let Some(c) = self.consts.get(n) {
                    Some(Operand::Const(c.value))
                } else {
                    self.report(MemopRule::BadShape, &e.span);
                    None
                }
            }
            ExprKind::Binary { .. } => {
                if has_bad_operator(e) {
                    self.report(MemopRule::BadOperator, &e.span);
                } else {
                    self.report(MemopRule::BadShape, &e.span);
                }
                None
            }
            _ => {
                self.report(MemopRule::BadShape, &e.span);
                None
            }
        }
    }

    /// `allowed` restricts the binary operator (tests only allow `+`/`-`).
    fn math(&mut self, e: &Expr, allowed: &[AluOp], uses: &mut Vec<usize>) -> Option<MathExp> {
        match &e.kind {
            ExprKind::Binary { op, lhs, rhs } => {
                let alu = AluOp::from_binop(*op).filter(|a| allowed.contains(a));
                if alu.is_none() {
                    self.report(MemopRule::BadOperator, &e.span);
                }
                let l = self.simple(lhs, uses);
                let r = self.simple(rhs, uses);
                Some(MathExp {
                    lhs: l?,
                    rest: Some((alu?, r?)),
                })
            }
            _ => Some(MathExp {
                lhs: self.simple(e, uses)?,
                rest: None,
            }),
        }
    }

    fn check_reuse(&mut self, uses: &[usize], span: &Span) {
        let mut seen = vec![0usize; self.params.len()];
        for &u in uses {
            seen[u] += 1;
        }
        if seen.iter().any(|&c| c > 1) {
            self.report(MemopRule::ParamReuse, span);
        }
    }

    fn ret_exp(&mut self, e: &Expr) -> Option<MathExp> {
        const ALL: &[AluOp] = &[AluOp::Add, AluOp::Sub, AluOp::And, AluOp::Or, AluOp::Xor];
        let mut uses = Vec::new();
        let m = self.math(e, ALL, &mut uses);
        self.check_reuse(&uses, &e.span);
        m
    }

    fn branch_ret(&mut self, stmts: &[Stmt], span: &Span) -> Option<MathExp> {
        let mut found = None;
        let mut ok = true;
        for s in stmts {
            match &s.kind {
                StmtKind::Local { .. } => self.report(MemopRule::LocalDeclInBody, &s.span),
                StmtKind::If { .. } => {
                    self.report(MemopRule::NestedIf, &s.span);
                    ok = false;
                }
                StmtKind::Return(Some(e)) if found.is_none() => found = Some(e),
                _ => {
                    self.report(MemopRule::BadShape, &s.span);
                    ok = false;
                }
            }
        }
        match found {
            Some(e) if ok => self.ret_exp(e),
            Some(_) => None,
            None => {
                if ok {
                    self.report(MemopRule::BadShape, span);
                }
                None
            }
        }
    }

    fn body(&mut self, stmts: &[Stmt], decl_span: &Span) -> Option<MemopShape> {
        let mut rest = Vec::new();
        for s in stmts {
            if let StmtKind::Local { .. } = s.kind {
                self.report(MemopRule::LocalDeclInBody, &s.span);
            } else {
                rest.push(s);
            }
        }
        let [only] = rest.as_slice() else {
            self.report(MemopRule::BadShape, decl_span);
            return None;
        };
        match &only.kind {
            StmtKind::Return(Some(e)) => self.ret_exp(e).map(MemopShape::ReturnOnly),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let test = self.test(cond);
                let then_ret = self.branch_ret(then_branch, &only.span);
                let else_ret = match else_branch {
                    None => {
                        self.report(MemopRule::MissingElse, &only.span);
                        None
                    }
                    Some(b) => self.branch_ret(b, &only.span),
                };
                let (lhs, cmp, rhs) = test?;
                Some(MemopShape::IfElse {
                    lhs,
                    cmp,
                    rhs,
                    then_ret: then_ret?,
                    else_ret: else_ret?,
                })
            }
            _ => {
                self.report(MemopRule::BadShape, &only.span);
                None
            }
        }
    }

    fn test(&mut self, cond: &Expr) -> Option<(MathExp, CmpOp, MathExp)> {
        let ExprKind::Binary { op, lhs, rhs } = &cond.kind else {
            self.report(MemopRule::BadShape, &cond.span);
            return None;
        };
        if op.is_logical() {
            self.report(MemopRule::CompoundCondition, &cond.span);
            return None;
        }
        let Some(cmp) = CmpOp::from_binop(*op) else {
            self.report(MemopRule::BadShape, &cond.span);
            return None;
        };
        let mut uses = Vec::new();
        let l = self.math(lhs, &[AluOp::Add, AluOp::Sub], &mut uses);
        let r = self.math(rhs, &[AluOp::Add, AluOp::Sub], &mut uses);
        self.check_reuse(&uses, &cond.span);
        Some((l?, cmp, r?))
    }
}

fn has_bad_operator(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Binary { op, lhs, rhs } => {
            AluOp::from_binop(*op).is_none() || has_bad_operator(lhs) || has_bad_operator(rhs)
        }
        _ => false,
    }
}

/// Validates a memop declaration, collecting every violation.
pub fn validate_memop(
    decl: &Decl,
    consts: &BTreeMap<String, ConstInfo>,
) -> Result<MemopShape, Vec<MemopViolation>> {
    let DeclKind::Memop { name, params, body } = &decl.kind else {
        panic!("validate_memop called on a non-memop declaration");
    };
    let mut v = Validator {
        name: &name.name,
        params: params.iter().map(|p| p.name.name.as_str()).collect(),
        consts,
        violations: Vec::new(),
    };
    match params.len() {
        2 => {}
        n if n > 2 => v.report(MemopRule::TooManyParams, &decl.span),
        _ => v.report(MemopRule::BadShape, &decl.span),
    }
    let shape = v.body(body, &decl.span);
    match shape {
        Some(s) if v.violations.is_empty() => Ok(s),
        _ => {
            if v.violations.is_empty() {
                v.report(MemopRule::BadShape, &decl.span);
            }
            Err(v.violations)
        }
    }
}

fn operand(o: Operand, stored: u64, arg: u64, w: u32) -> u64 {
    match o {
        Operand::Stored => stored,
        Operand::Arg => arg,
        Operand::Const(c) => c & mask(w),
    }
}

fn math(m: &MathExp, stored: u64, arg: u64, w: u32) -> u64 {
    let a = operand(m.lhs, stored, arg, w);
    match m.rest {
        None => a,
        Some((op, b)) => op.apply(a, operand(b, stored, arg, w), w),
    }
}

/// Evaluates a validated memop on `w`-bit unsigned operands.
pub fn memop_semantics(shape: &MemopShape, stored: u64, arg: u64, w: u32) -> u64 {
    let (stored, arg) = (stored & mask(w), arg & mask(w));
    match shape {
        MemopShape::ReturnOnly(m) => math(m, stored, arg, w),
        MemopShape::IfElse {
            lhs,
            cmp,
            rhs,
            then_ret,
            else_ret,
        } => {
            let a = math(lhs, stored, arg, w);
            let b = math(rhs, stored, arg, w);
            if cmp.eval(a, b) {
                math(then_ret, stored, arg, w)
            } else {
                math(else_ret, stored, arg, w)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, resolve_names};

    fn validate(src: &str) -> Result<MemopShape, Vec<MemopViolation>> {
        let r = resolve_names(&parse_source("m.lucid", src).unwrap()).unwrap();
        let d = r.memops().last().unwrap().clone();
        validate_memop(&d, &r.consts)
    }

    fn rules(src: &str) -> Vec<MemopRule> {
        validate(src).unwrap_err().into_iter().map(|v| v.rule).collect()
    }

    #[test]
    fn increment_is_return_only() {
        let s = validate("memop incr(int stored, int x){return stored + x;}").unwrap();
        assert!(matches!(s, MemopShape::ReturnOnly(_)));
        assert_eq!(memop_semantics(&s, 5, 1, 32), 6);
        assert_eq!(memop_semantics(&s, u32::MAX as u64, 1, 32), 0);
    }

    #[test]
    fn min_style_memop() {
        let s = validate(
            "memop mn(int stored, int nw){ if (stored > nw) { return nw; } else { return stored; } }",
        )
        .unwrap();
        assert_eq!(memop_semantics(&s, 7, 3, 32), 3);
        assert_eq!(memop_semantics(&s, 2, 3, 32), 2);
    }

    #[test]
    fn rejected_memops() {
        assert_eq!(
            rules(
                "memop compoundCondition(int memval, int y){
                  if (memval == 1 || memval == 2) { return memval; } else { return y; } }"
            ),
            vec![MemopRule::CompoundCondition]
        );
        assert_eq!(
            rules(
                "memop twoLocalArgs(int memval, int y, int z){
                  if (memval == 1) { return y; } else { return z; } }"
            ),
            vec![MemopRule::TooManyParams]
        );
        assert_eq!(
            rules("const int N = 10; memop multipy(int memval, int x){ return (N * memval) + x; }"),
            vec![MemopRule::BadOperator]
        );
        assert_eq!(
            rules("memop dbl(int m, int y){ return y + y; }"),
            vec![MemopRule::ParamReuse]
        );
    }

    #[test]
    fn structural_violations() {
        assert_eq!(
            rules("memop a(int m, int y){ if (m == 1) { return y; } }"),
            vec![MemopRule::MissingElse]
        );
        assert_eq!(
            rules("memop a(int m, int y){ int z = 1; return m; }"),
            vec![MemopRule::LocalDeclInBody]
        );
        assert_eq!(
            rules(
                "memop a(int m, int y){ if (m == 1) { if (y == 2) { return y; } else { return m; } } else { return m; } }"
            ),
            vec![MemopRule::NestedIf]
        );
        assert_eq!(rules("memop a(int m){ return m; }"), vec![MemopRule::BadShape]);
        assert_eq!(
            rules("memop a(int m, int y){ return m + y + 1; }"),
            vec![MemopRule::BadShape]
        );
        assert_eq!(
            rules("memop a(int m, int y){ if (m < 1) { return m; } else { return y; } return y; }"),
            vec![MemopRule::BadShape]
        );
    }

    #[test]
    fn test_operands_limited_to_plus_minus() {
        assert_eq!(
            rules("memop a(int m, int y){ if ((m & 3) == 1) { return y; } else { return m; } }"),
            vec![MemopRule::BadOperator]
        );
        assert!(validate("memop a(int m, int y){ if (m + 1 == y) { return y; } else { return m; } }").is_ok());
    }

    #[test]
    fn every_violation_is_reported() {
        let r = rules("memop a(int m, int y, int z){ int q = 0; return y * y; }");
        assert!(r.contains(&MemopRule::TooManyParams));
        assert!(r.contains(&MemopRule::LocalDeclInBody));
        assert!(r.contains(&MemopRule::BadOperator));
        assert!(r.contains(&MemopRule::ParamReuse));
    }
}
