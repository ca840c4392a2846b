//! Recursive-descent parser producing the surface [`Program`].

use crate::span::Span;

use super::ast::*;
use super::lexer::{Tok, Token};
use super::FrontendError;

const EVENT_QUALIFIERS: &[&str] = &["packet", "entry", "exit", "support"];

pub fn parse_program(tokens: &[Token]) -> Result<Program, FrontendError> {
    let mut p = Parser { toks: tokens, pos: 0 };
    let mut decls = Vec::new();
    while !p.at_end() {
        decls.push(p.decl()?);
    }
    Ok(Program { decls })
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
}

type PResult<T> = Result<T, FrontendError>;

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Tok> {
        self.toks.get(self.pos + n).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        match self.toks.get(self.pos).or_else(|| self.toks.last()) {
            Some(t) => t.span.clone(),
            None => Span::default(),
        }
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span.clone()
    }

    fn bump(&mut self) -> &'a Token {
        let t = &self.toks[self.pos];
        self.pos += 1;
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let found = self
            .peek()
            .map(|t| t.to_string())
            .unwrap_or_else(|| "end of input".to_string());
        Err(FrontendError::Syntax {
            span: self.span(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        })
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if self.peek() == Some(&tok) {
            Ok(self.bump().span.clone())
        } else {
            self.error(&[&tok.to_string()])
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                let span = self.bump().span.clone();
                Ok(Ident::new(name, span))
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn peek_ident(&self, text: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(n)) if n == text)
    }

    fn uint(&mut self) -> PResult<u64> {
        match self.peek() {
            Some(Tok::Int { value, width: None }) => {
                let v = *value;
                self.bump();
                Ok(v)
            }
            _ => self.error(&["integer"]),
        }
    }

    fn size(&mut self) -> PResult<Size> {
        match self.peek() {
            Some(Tok::Int { value, width: None }) => {
                let v = *value;
                let span = self.bump().span.clone();
                u32::try_from(v)
                    .map(Size::Lit)
                    .map_err(|_| FrontendError::BadLiteral { span })
            }
            Some(Tok::Ident(_)) => Ok(Size::Named(self.ident()?.name)),
            _ => self.error(&["size"]),
        }
    }

    // ---------------------------------------------------------------- decls

    fn decl(&mut self) -> PResult<Decl> {
        let start = self.span();
        let kind = match self.peek() {
            Some(Tok::Const) => self.const_decl()?,
            Some(Tok::Global) => {
                self.bump();
                self.global_decl()?
            }
            // `Array name = new Array<<32>>(n);`
            Some(Tok::Ident(n))
                if n == "Array"
                    && matches!(self.peek_at(1), Some(Tok::Ident(_)))
                    && self.peek_at(2) == Some(&Tok::Assign) =>
            {
                self.bump();
                self.global_decl()?
            }
            Some(Tok::Event) => self.event_decl(Vec::new())?,
            Some(Tok::Ident(q)) if EVENT_QUALIFIERS.contains(&q.as_str()) => {
                let mut qualifiers = Vec::new();
                while let Some(Tok::Ident(q)) = self.peek() {
                    if !EVENT_QUALIFIERS.contains(&q.as_str()) {
                        break;
                    }
                    qualifiers.push(q.clone());
                    self.bump();
                }
                if self.peek() != Some(&Tok::Event) {
                    return self.error(&["event"]);
                }
                self.event_decl(qualifiers)?
            }
            Some(Tok::Handle) => {
                self.bump();
                let event = self.ident()?;
                let params = self.params()?;
                let body = self.block()?;
                DeclKind::Handler {
                    event,
                    params,
                    body,
                }
            }
            Some(Tok::Fun) => {
                self.bump();
                let ret = self.ty()?;
                let name = self.ident()?;
                let params = self.params()?;
                let body = self.block()?;
                DeclKind::Fun {
                    ret,
                    name,
                    params,
                    body,
                }
            }
            Some(Tok::Memop) => {
                self.bump();
                let name = self.ident()?;
                let params = self.params()?;
                let body = self.block()?;
                DeclKind::Memop { name, params, body }
            }
            _ => {
                return self.error(&[
                    "const", "global", "event", "handle", "fun", "memop",
                ])
            }
        };
        Ok(Decl {
            kind,
            span: start.to(&self.prev_span()),
        })
    }

    fn const_decl(&mut self) -> PResult<DeclKind> {
        self.expect(Tok::Const)?;
        if self.peek_ident("group") {
            self.bump();
            let name = self.ident()?;
            self.expect(Tok::Assign)?;
            self.expect(Tok::LBrace)?;
            let mut members = Vec::new();
            if self.peek() != Some(&Tok::RBrace) {
                loop {
                    let span = self.span();
                    let v = self.uint()?;
                    members.push(u32::try_from(v).map_err(|_| FrontendError::BadLiteral { span })?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RBrace)?;
            self.expect(Tok::Semi)?;
            return Ok(DeclKind::Group { name, members });
        }
        let ty = self.ty()?;
        let name = self.ident()?;
        self.expect(Tok::Assign)?;
        let value = self.expr()?;
        self.expect(Tok::Semi)?;
        Ok(DeclKind::Const { ty, name, value })
    }

    fn global_decl(&mut self) -> PResult<DeclKind> {
        let name = self.ident()?;
        self.expect(Tok::Assign)?;
        self.expect(Tok::New)?;
        let module = self.ident()?;
        // Both `Array<<32>>` and `Array<32>` are accepted.
        self.expect(Tok::Lt)?;
        let double = self.eat(&Tok::Lt);
        let cell_width = self.size()?;
        self.expect(Tok::Gt)?;
        if double {
            self.expect(Tok::Gt)?;
        }
        let args = self.args()?;
        self.expect(Tok::Semi)?;
        Ok(DeclKind::Global {
            name,
            module,
            cell_width,
            args,
        })
    }

    fn event_decl(&mut self, qualifiers: Vec<String>) -> PResult<DeclKind> {
        self.expect(Tok::Event)?;
        let name = self.ident()?;
        let params = self.params()?;
        self.expect(Tok::Semi)?;
        Ok(DeclKind::Event {
            qualifiers,
            name,
            params,
        })
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                let ty = self.ty()?;
                let name = self.ident()?;
                params.push(Param { ty, name });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(params)
    }

    fn is_type_start(&self) -> bool {
        match self.peek() {
            Some(Tok::KwInt | Tok::KwBool | Tok::Void | Tok::Auto) => true,
            // `Array x` / `Array<<32>> x` as a type, but not `Array.get(...)`.
            Some(Tok::Ident(n)) if n == "Array" => {
                matches!(self.peek_at(1), Some(Tok::Ident(_) | Tok::Lt))
            }
            _ => false,
        }
    }

    fn ty(&mut self) -> PResult<Ty> {
        match self.peek() {
            Some(Tok::KwInt) => {
                self.bump();
                if self.eat(&Tok::Lt) {
                    let s = self.size()?;
                    self.expect(Tok::Gt)?;
                    Ok(Ty::Int(Some(s)))
                } else {
                    Ok(Ty::Int(None))
                }
            }
            Some(Tok::KwBool) => {
                self.bump();
                Ok(Ty::Bool)
            }
            Some(Tok::Void) => {
                self.bump();
                Ok(Ty::Void)
            }
            Some(Tok::Auto) => {
                self.bump();
                Ok(Ty::Auto)
            }
            Some(Tok::Ident(n)) if n == "Array" => {
                self.bump();
                if self.eat(&Tok::Lt) {
                    self.expect(Tok::Lt)?;
                    let s = self.size()?;
                    self.expect(Tok::Gt)?;
                    self.expect(Tok::Gt)?;
                    Ok(Ty::Array(Some(s)))
                } else {
                    Ok(Ty::Array(None))
                }
            }
            _ => self.error(&["int", "bool", "void", "auto", "Array"]),
        }
    }

    // ----------------------------------------------------------- statements

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while self.peek() != Some(&Tok::RBrace) {
            if self.at_end() {
                return self.error(&["}"]);
            }
            stmts.push(self.stmt()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(stmts)
    }

    /// A braced block, or a single unbraced statement.
    fn branch_body(&mut self) -> PResult<Vec<Stmt>> {
        if self.peek() == Some(&Tok::LBrace) {
            self.block()
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let kind = match self.peek() {
            Some(Tok::If) => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let then_branch = self.branch_body()?;
                let else_branch = if self.eat(&Tok::Else) {
                    Some(self.branch_body()?)
                } else {
                    None
                };
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                }
            }
            Some(Tok::Generate | Tok::MGenerate) => {
                let multicast = self.bump().tok == Tok::MGenerate;
                let event = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Generate { multicast, event }
            }
            Some(Tok::Return) => {
                self.bump();
                let value = if self.peek() == Some(&Tok::Semi) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(Tok::Semi)?;
                StmtKind::Return(value)
            }
            _ if self.is_type_start() => {
                let ty = self.ty()?;
                let name = self.ident()?;
                let init = if self.eat(&Tok::Assign) {
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect(Tok::Semi)?;
                StmtKind::Local { ty, name, init }
            }
            Some(Tok::Ident(_)) if self.peek_at(1) == Some(&Tok::Assign) => {
                let name = self.ident()?;
                self.expect(Tok::Assign)?;
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Assign { name, value }
            }
            Some(_) => {
                let e = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Expr(e)
            }
            None => return self.error(&["statement"]),
        };
        Ok(Stmt {
            kind,
            span: start.to(&self.prev_span()),
        })
    }

    // ---------------------------------------------------------- expressions

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek()? {
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Amp => BinOp::BitAnd,
            Tok::Pipe => BinOp::BitOr,
            Tok::Caret => BinOp::BitXor,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Gt => BinOp::Gt,
            Tok::Le => BinOp::Le,
            Tok::Ge => BinOp::Ge,
            Tok::AndAnd => BinOp::And,
            Tok::OrOr => BinOp::Or,
            _ => return None,
        })
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.primary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.to(&rhs.span);
            lhs = Expr::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
        Ok(lhs)
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                args.push(self.expr()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let kind = match self.peek() {
            Some(Tok::Int { value, width }) => {
                let kind = ExprKind::Int {
                    value: *value,
                    width: *width,
                };
                self.bump();
                kind
            }
            Some(Tok::True) => {
                self.bump();
                ExprKind::Bool(true)
            }
            Some(Tok::False) => {
                self.bump();
                ExprKind::Bool(false)
            }
            Some(Tok::LParen) => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                return Ok(e);
            }
            Some(Tok::Hash) => {
                self.bump();
                self.expect(Tok::Lt)?;
                let width = self.size()?;
                self.expect(Tok::Gt)?;
                let args = self.args()?;
                ExprKind::Hash { width, args }
            }
            Some(Tok::Ident(_)) => {
                let first = self.ident()?;
                if self.eat(&Tok::Dot) {
                    let name = self.ident()?;
                    let args = self.args()?;
                    call_kind(first.name, name.name, args, &start)?
                } else if self.peek() == Some(&Tok::LParen) {
                    let args = self.args()?;
                    ExprKind::Call {
                        callee: Callee {
                            module: None,
                            name: first.name,
                        },
                        args,
                    }
                } else {
                    ExprKind::Var(first.name)
                }
            }
            _ => return self.error(&["expression"]),
        };
        Ok(Expr::new(kind, start.to(&self.prev_span())))
    }
}

fn call_kind(module: String, name: String, mut args: Vec<Expr>, span: &Span) -> PResult<ExprKind> {
    if module == "Event" && (name == "delay" || name == "locate") {
        if args.len() != 2 {
            return Err(FrontendError::Syntax {
                span: span.clone(),
                expected: vec!["2 arguments".into()],
                found: format!("{} arguments", args.len()),
            });
        }
        let second = Box::new(args.pop().unwrap());
        let event = Box::new(args.pop().unwrap());
        return Ok(if name == "delay" {
            ExprKind::Delay {
                event,
                delay: second,
            }
        } else {
            ExprKind::Locate {
                event,
                dest: second,
            }
        });
    }
    Ok(ExprKind::Call {
        callee: Callee {
            module: Some(module),
            name,
        },
        args,
    })
}

#[cfg(test)]
mod tests {
    use super::super::lexer::tokenize;
    use super::*;

    fn parse(src: &str) -> PResult<Program> {
        parse_program(&tokenize("t.lucid", src)?)
    }

    const EVPROG: &str = "event a(); event b(); event c(); const group GRP = {2, 3};
handle a() {
	generate b();
	mgenerate Event.delay (Event.locate (c(), GRP), 10ms);
}";

    #[test]
    fn event_scheduling_program() {
        let p = parse(EVPROG).unwrap();
        let events = p
            .decls
            .iter()
            .filter(|d| matches!(d.kind, DeclKind::Event { .. }))
            .count();
        let groups = p
            .decls
            .iter()
            .filter(|d| matches!(d.kind, DeclKind::Group { .. }))
            .count();
        assert_eq!((events, groups), (3, 1));
        let DeclKind::Handler { body, .. } = &p.decls[4].kind else {
            panic!("expected handler")
        };
        assert!(matches!(
            body[0].kind,
            StmtKind::Generate {
                multicast: false,
                ..
            }
        ));
        let StmtKind::Generate {
            multicast: true,
            event,
        } = &body[1].kind
        else {
            panic!("expected mgenerate")
        };
        let ExprKind::Delay { event, delay } = &event.kind else {
            panic!("expected delay")
        };
        assert!(matches!(delay.kind, ExprKind::Int { value: 10_000_000, .. }));
        assert!(matches!(event.kind, ExprKind::Locate { .. }));
    }

    #[test]
    fn memop_declaration() {
        let p = parse("memop incr(int stored, int x){return stored + x;}").unwrap();
        let DeclKind::Memop { params, body, .. } = &p.decls[0].kind else {
            panic!()
        };
        assert_eq!(params.len(), 2);
        let StmtKind::Return(Some(e)) = &body[0].kind else {
            panic!()
        };
        assert!(matches!(e.kind, ExprKind::Binary { op: BinOp::Add, .. }));
    }

    #[test]
    fn generate_without_expression_is_a_syntax_error() {
        let err = parse("handle h() { generate ; }").unwrap_err();
        match err {
            FrontendError::Syntax { expected, .. } => {
                assert!(expected.contains(&"expression".to_string()))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence_follows_c() {
        let p = parse("const int X = 1 + 2 * 3 == 7 && 1 < 2 | 4;").unwrap();
        let DeclKind::Const { value, .. } = &p.decls[0].kind else {
            panic!()
        };
        let ExprKind::Binary { op, lhs, rhs } = &value.kind else {
            panic!()
        };
        assert_eq!(*op, BinOp::And);
        assert!(matches!(lhs.kind, ExprKind::Binary { op: BinOp::Eq, .. }));
        // `1 < 2 | 4` parses as `(1 < 2) | 4`? No: `<` binds tighter than `|`.
        assert!(matches!(rhs.kind, ExprKind::Binary { op: BinOp::BitOr, .. }));
    }

    #[test]
    fn every_declaration_form() {
        let src = "
const int SZ = 16;
const int<8> TCP = 6;
const group G = {1};
global arr = new Array<<32>>(SZ);
packet entry event ip_in(int<32> dst, bool ok);
support event tick();
memop m(int a, int b) { if (a > b) { return b; } else { return a; } }
fun int f(Array x, int i) { int v = Array.get(x, i); return v; }
handle ip_in(int<32> dst, bool ok) {
  auto h = hash<16>(7, dst, 1<8>);
  int t = Sys.time();
  if (ok) { Array.set(arr, h & 15, t); } else { generate Event.delay(tick(), 1ms); }
  f(arr, 0);
}
handle tick() { }";
        let p = parse(src).unwrap();
        assert_eq!(p.decls.len(), 10);
        assert!(matches!(&p.decls[4].kind, DeclKind::Event { qualifiers, .. } if qualifiers == &["packet", "entry"]));
    }

    #[test]
    fn unbraced_branches() {
        let p = parse("handle h(int p) { if (p == 1) p = 2; else p = 3; }").unwrap();
        let DeclKind::Handler { body, .. } = &p.decls[0].kind else {
            panic!()
        };
        let StmtKind::If {
            then_branch,
            else_branch,
            ..
        } = &body[0].kind
        else {
            panic!()
        };
        assert_eq!(then_branch.len(), 1);
        assert_eq!(else_branch.as_ref().unwrap().len(), 1);
    }
}
