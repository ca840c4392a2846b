//! Tokenizer for `.lucid` source text.

use std::fmt;
use std::sync::Arc;

use crate::span::Span;

use super::FrontendError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Integer literal. `width` is set for sized literals such as `5<8>`;
    /// duration suffixes (`ns`, `us`, `ms`, `s`) are folded into nanoseconds.
    Int { value: u64, width: Option<u32> },

    // keywords
    Const,
    Global,
    New,
    Event,
    Handle,
    Fun,
    Memop,
    If,
    Else,
    Return,
    Generate,
    MGenerate,
    KwInt,
    KwBool,
    Void,
    Auto,
    True,
    False,
    Hash,

    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Dot,
    Assign,
    Plus,
    Minus,
    Star,
    Amp,
    Pipe,
    Caret,
    EqEq,
    NotEq,
    Lt,
    Gt,
    Le,
    Ge,
    AndAnd,
    OrOr,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(name) => return write!(f, "identifier `{name}`"),
            Tok::Int { value, .. } => return write!(f, "integer `{value}`"),
            Tok::Const => "const",
            Tok::Global => "global",
            Tok::New => "new",
            Tok::Event => "event",
            Tok::Handle => "handle",
            Tok::Fun => "fun",
            Tok::Memop => "memop",
            Tok::If => "if",
            Tok::Else => "else",
            Tok::Return => "return",
            Tok::Generate => "generate",
            Tok::MGenerate => "mgenerate",
            Tok::KwInt => "int",
            Tok::KwBool => "bool",
            Tok::Void => "void",
            Tok::Auto => "auto",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Hash => "hash",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Dot => ".",
            Tok::Assign => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Caret => "^",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "const" => Tok::Const,
        "global" => Tok::Global,
        "new" => Tok::New,
        "event" => Tok::Event,
        "handle" => Tok::Handle,
        "fun" => Tok::Fun,
        "memop" => Tok::Memop,
        "if" => Tok::If,
        "else" => Tok::Else,
        "return" => Tok::Return,
        "generate" => Tok::Generate,
        "mgenerate" => Tok::MGenerate,
        "int" => Tok::KwInt,
        "bool" => Tok::KwBool,
        "void" => Tok::Void,
        "auto" => Tok::Auto,
        "true" => Tok::True,
        "false" => Tok::False,
        "hash" => Tok::Hash,
        _ => return None,
    })
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    file: &'a Arc<str>,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.pos + n).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn here(&self) -> (u32, u32) {
        (self.line, self.col)
    }

    fn span_from(&self, start: (u32, u32)) -> Span {
        // `col` already points one past the last consumed character.
        let end = (self.line, self.col.saturating_sub(1).max(1));
        Span::new(self.file.clone(), start, end.max(start))
    }
}

/// Splits `source` into tokens, skipping whitespace and `//` line comments.
pub fn tokenize(file: &str, source: &str) -> Result<Vec<Token>, FrontendError> {
    let file: Arc<str> = Arc::from(file);
    let mut cur = Cursor {
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        file: &file,
    };
    let mut out = Vec::new();

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' && cur.peek_at(1) == Some('/') {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }

        let start = cur.here();
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            keyword(&word).unwrap_or(Tok::Ident(word))
        } else if c.is_ascii_digit() {
            lex_number(&mut cur, start)?
        } else {
            cur.bump();
            let two = |cur: &mut Cursor, next: char, yes: Tok, no: Tok| {
                if cur.peek() == Some(next) {
                    cur.bump();
                    yes
                } else {
                    no
                }
            };
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                '.' => Tok::Dot,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '^' => Tok::Caret,
                '=' => two(&mut cur, '=', Tok::EqEq, Tok::Assign),
                '<' => two(&mut cur, '=', Tok::Le, Tok::Lt),
                '>' => two(&mut cur, '=', Tok::Ge, Tok::Gt),
                '&' => two(&mut cur, '&', Tok::AndAnd, Tok::Amp),
                '|' => two(&mut cur, '|', Tok::OrOr, Tok::Pipe),
                '!' if cur.peek() == Some('=') => {
                    cur.bump();
                    Tok::NotEq
                }
                _ => {
                    return Err(FrontendError::UnknownCharacter {
                        ch: c,
                        span: cur.span_from(start),
                    })
                }
            }
        };
        out.push(Token {
            tok,
            span: cur.span_from(start),
        });
    }
    Ok(out)
}

fn lex_number(cur: &mut Cursor, start: (u32, u32)) -> Result<Tok, FrontendError> {
    let mut digits = String::new();
    let hex = cur.peek() == Some('0') && matches!(cur.peek_at(1), Some('x' | 'X'));
    if hex {
        cur.bump();
        cur.bump();
    }
    while let Some(c) = cur.peek() {
        if (hex && c.is_ascii_hexdigit()) || (!hex && c.is_ascii_digit()) {
            digits.push(c);
            cur.bump();
        } else if c == '_' {
            cur.bump();
        } else {
            break;
        }
    }
    let radix = if hex { 16 } else { 10 };
    let mut value = u64::from_str_radix(&digits, radix).map_err(|_| FrontendError::BadLiteral {
        span: cur.span_from(start),
    })?;

    // Duration suffix, folded into nanoseconds.
    let mut suffix = String::new();
    let mut i = 0;
    while let Some(c) = cur.peek_at(i) {
        if c.is_ascii_alphanumeric() || c == '_' {
            suffix.push(c);
            i += 1;
        } else {
            break;
        }
    }
    if !suffix.is_empty() {
        let scale = match suffix.as_str() {
            "ns" => 1,
            "us" => 1_000,
            "ms" => 1_000_000,
            "s" => 1_000_000_000,
            _ => {
                for _ in 0..i {
                    cur.bump();
                }
                return Err(FrontendError::BadLiteral {
                    span: cur.span_from(start),
                });
            }
        };
        for _ in 0..i {
            cur.bump();
        }
        value = value.checked_mul(scale).ok_or_else(|| FrontendError::BadLiteral {
            span: cur.span_from(start),
        })?;
        return Ok(Tok::Int { value, width: None });
    }

    // A width annotation glued to the literal: `5<8>`.
    if cur.peek() == Some('<') {
        let mut j = 1;
        let mut w = String::new();
        while let Some(c) = cur.peek_at(j) {
            if c.is_ascii_digit() {
                w.push(c);
                j += 1;
            } else {
                break;
            }
        }
        if !w.is_empty() && cur.peek_at(j) == Some('>') {
            for _ in 0..=j {
                cur.bump();
            }
            let width = w.parse().map_err(|_| FrontendError::BadLiteral {
                span: cur.span_from(start),
            })?;
            return Ok(Tok::Int {
                value,
                width: Some(width),
            });
        }
    }
    Ok(Tok::Int { value, width: None })
}
