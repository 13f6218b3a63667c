//! Surface syntax to labelled AST.
//!
//! Labels are assigned after parsing by a left-to-right post-order walk, so
//! children always carry smaller labels than their parent.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::syntax::{Const, Env, Expr, Label, Marker, PrimOp, Term};

pub const RESERVED: &[&str] = &[
    "undef", "null", "true", "false", "fun", "box", "unbox", "run", "if", "else", "del", "let", "in",
    "typeof",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Error)]
#[error("{}", .diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ParseError {
    pub diagnostics: Vec<ParseDiagnostic>,
}

#[derive(Clone, Debug)]
pub struct SourceProgram {
    pub text: String,
    pub origin: String,
}

impl SourceProgram {
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> Self {
        SourceProgram {
            text: text.into(),
            origin: origin.into(),
        }
    }
}

/// Parse source forms plus markers.
pub fn parse_str(src: &str) -> Result<Expr, ParseError> {
    parse(&SourceProgram::new(src, "<string>"), false)
}

pub fn parse(src: &SourceProgram, allow_intermediate: bool) -> Result<Expr, ParseError> {
    let tokens = lex(&src.text).map_err(|d| ParseError { diagnostics: vec![d] })?;
    let mut p = Parser {
        tokens,
        pos: 0,
        allow_intermediate,
    };
    let result = p.parse_expr().and_then(|e| {
        if p.peek().kind == Tok::Eof {
            Ok(e)
        } else {
            Err(p.error_here("unexpected input after end of expression"))
        }
    });
    match result {
        Ok(mut e) => {
            let mut next = 0;
            assign_labels(&mut e, &mut next);
            Ok(e)
        }
        Err(first) => {
            let mut diagnostics = vec![first];
            diagnostics.extend(balance_diagnostics(&p.tokens));
            Err(ParseError { diagnostics })
        }
    }
}

/// Relabel in left-to-right post-order starting from `next`.
pub fn assign_labels(e: &mut Expr, next: &mut u32) {
    match &mut e.term {
        Term::Closure(inner, env) => {
            let mut tmp = Expr::new(std::mem::replace(&mut **inner, Term::Hole), e.label);
            for c in tmp.children_mut() {
                assign_labels(c, next);
            }
            **inner = tmp.term;
            *env = relabel_env(env, next);
        }
        Term::RunIn(body, env) => {
            assign_labels(body, next);
            *env = relabel_env(env, next);
        }
        _ => {
            for c in e.children_mut() {
                assign_labels(c, next);
            }
        }
    }
    e.label = Label(*next);
    *next += 1;
}

fn relabel_env(env: &Env, next: &mut u32) -> Env {
    env.iter()
        .map(|(x, v)| {
            let mut v = v.clone();
            assign_labels(&mut v, next);
            (x.clone(), v)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBrack,
    RBrack,
    Comma,
    Colon,
    Assign,
    EqEq,
    Minus,
    MapsTo,
    Underscore,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Num(n) => format!("number {n}"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LBrack => "'['".into(),
            Tok::RBrack => "']'".into(),
            Tok::Comma => "','".into(),
            Tok::Colon => "':'".into(),
            Tok::Assign => "'='".into(),
            Tok::EqEq => "'=='".into(),
            Tok::Minus => "'-'".into(),
            Tok::MapsTo => "'↦'".into(),
            Tok::Underscore => "'_'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    kind: Tok,
    line: usize,
    column: usize,
}

fn diag(line: usize, column: usize, message: impl Into<String>) -> ParseDiagnostic {
    ParseDiagnostic {
        line,
        column,
        message: message.into(),
        severity: Severity::Error,
    }
}

fn lex(src: &str) -> Result<Vec<Token>, ParseDiagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |kind: Tok, len: usize, i: &mut usize, col: &mut usize| {
            toks.push(Token {
                kind,
                line: tl,
                column: tc,
            });
            *i += len;
            *col += len;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            '{' => push(Tok::LBrace, 1, &mut i, &mut col),
            '}' => push(Tok::RBrace, 1, &mut i, &mut col),
            '[' => push(Tok::LBrack, 1, &mut i, &mut col),
            ']' => push(Tok::RBrack, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            ':' => push(Tok::Colon, 1, &mut i, &mut col),
            '↦' => push(Tok::MapsTo, 1, &mut i, &mut col),
            '|' if chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') => {
                push(Tok::MapsTo, 3, &mut i, &mut col)
            }
            '=' if chars.get(i + 1) == Some(&'=') => push(Tok::EqEq, 2, &mut i, &mut col),
            '=' => push(Tok::Assign, 1, &mut i, &mut col),
            '-' => push(Tok::Minus, 1, &mut i, &mut col),
            '"' => {
                let start = i;
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => return Err(diag(tl, tc, "unterminated string literal")),
                        Some('\\') => j += 2,
                        Some('"') => break,
                        Some(_) => j += 1,
                    }
                }
                let raw: String = chars[start..=j].iter().collect();
                let s: String = serde_json::from_str(&raw)
                    .map_err(|e| diag(tl, tc, format!("invalid string literal: {e}")))?;
                push(Tok::Str(s), j + 1 - start, &mut i, &mut col);
            }
            c if c.is_ascii_digit() => {
                let start = i;
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if chars.get(j) == Some(&'.') && chars.get(j + 1).is_some_and(|c| c.is_ascii_digit()) {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if matches!(chars.get(j), Some('e' | 'E')) {
                    let mut k = j + 1;
                    if matches!(chars.get(k), Some('+' | '-')) {
                        k += 1;
                    }
                    if chars.get(k).is_some_and(|c| c.is_ascii_digit()) {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let raw: String = chars[start..j].iter().collect();
                let n: f64 = raw
                    .parse()
                    .map_err(|_| diag(tl, tc, format!("invalid number literal '{raw}'")))?;
                push(Tok::Num(n), j - start, &mut i, &mut col);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[start..j].iter().collect();
                let kind = if word == "_" {
                    Tok::Underscore
                } else {
                    Tok::Ident(word)
                };
                push(kind, j - start, &mut i, &mut col);
            }
            other => return Err(diag(tl, tc, format!("unexpected character '{other}'"))),
        }
    }
    toks.push(Token {
        kind: Tok::Eof,
        line,
        column: col,
    });
    Ok(toks)
}

/// Report unmatched or mismatched delimiters.
fn balance_diagnostics(tokens: &[Token]) -> Vec<ParseDiagnostic> {
    let mut stack: Vec<&Token> = Vec::new();
    let mut out = Vec::new();
    for t in tokens {
        let close_for = |open: &Tok| match open {
            Tok::LParen => Tok::RParen,
            Tok::LBrace => Tok::RBrace,
            _ => Tok::RBrack,
        };
        match &t.kind {
            Tok::LParen | Tok::LBrace | Tok::LBrack => stack.push(t),
            Tok::RParen | Tok::RBrace | Tok::RBrack => match stack.pop() {
                Some(open) if close_for(&open.kind) == t.kind => {}
                Some(open) => out.push(diag(
                    t.line,
                    t.column,
                    format!(
                        "unbalanced {}: does not close {} at {}:{}",
                        t.kind.describe(),
                        open.kind.describe(),
                        open.line,
                        open.column
                    ),
                )),
                None => out.push(diag(
                    t.line,
                    t.column,
                    format!("unbalanced {}: no matching opener", t.kind.describe()),
                )),
            },
            _ => {}
        }
    }
    for open in stack {
        out.push(diag(
            open.line,
            open.column,
            format!("unbalanced {}: never closed", open.kind.describe()),
        ));
    }
    out
}

fn dummy(term: Term) -> Expr {
    Expr::new(term, Label(0))
}

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    allow_intermediate: bool,
}

type PResult<T> = Result<T, ParseDiagnostic>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.tokens[(self.pos + k).min(self.tokens.len() - 1)].kind
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, msg: &str) -> ParseDiagnostic {
        let t = self.peek();
        if t.kind == Tok::Eof {
            diag(t.line, t.column, format!("unexpected end of input: {msg}"))
        } else {
            diag(t.line, t.column, format!("{msg}, found {}", t.kind.describe()))
        }
    }

    fn expect(&mut self, kind: Tok) -> PResult<Token> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            Err(self.error_here(&format!("expected {}", kind.describe())))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, Tok::Ident(s) if s == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(&format!("expected '{kw}'")))
        }
    }

    fn binder(&mut self) -> PResult<String> {
        let t = self.peek().clone();
        match t.kind {
            Tok::Ident(s) if RESERVED.contains(&s.as_str()) => Err(diag(
                t.line,
                t.column,
                format!("reserved word '{s}' cannot be used as a variable name"),
            )),
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error_here("expected a variable name")),
        }
    }

    fn intermediate(&self, what: &str, at: &Token) -> PResult<()> {
        if self.allow_intermediate {
            Ok(())
        } else {
            Err(diag(
                at.line,
                at.column,
                format!("{what} is an intermediate form and is not allowed in source programs"),
            ))
        }
    }

    fn parse_expr(&mut self) -> PResult<Expr> {
        if self.at_keyword("let") {
            self.bump();
            let x = self.binder()?;
            self.expect(Tok::Assign)?;
            let bound = self.parse_expr()?;
            self.expect_keyword("in")?;
            let body = self.parse_expr()?;
            let f = dummy(Term::Fun(x, bx(body)));
            return Ok(dummy(Term::App(bx(f), bx(bound))));
        }
        self.parse_binary()
    }

    fn parse_binary(&mut self) -> PResult<Expr> {
        let lhs = self.parse_unary()?;
        let op = match self.peek().kind {
            Tok::EqEq => PrimOp::Eq,
            Tok::Minus => PrimOp::Sub,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.parse_unary()?;
        if matches!(self.peek().kind, Tok::EqEq | Tok::Minus) {
            return Err(self.error_here("'==' and '-' are non-associative; add parentheses"));
        }
        Ok(dummy(Term::Prim(op, bx(lhs), Some(bx(rhs)))))
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let kw = match &self.peek().kind {
            Tok::Ident(s) => s.clone(),
            _ => return self.parse_postfix(),
        };
        match kw.as_str() {
            "typeof" => {
                self.bump();
                let e = self.parse_unary()?;
                Ok(dummy(Term::Prim(PrimOp::Typeof, bx(e), None)))
            }
            "box" => {
                self.bump();
                Ok(dummy(Term::Box(bx(self.parse_unary()?))))
            }
            "unbox" => {
                self.bump();
                Ok(dummy(Term::Unbox(bx(self.parse_unary()?))))
            }
            "run" => {
                let at = self.bump();
                let e = self.parse_unary()?;
                if self.allow_intermediate && self.at_keyword("in") && self.env_follows(1) {
                    self.intermediate("'run … in ρ'", &at)?;
                    self.bump();
                    let env = self.parse_env()?;
                    return Ok(dummy(Term::RunIn(bx(e), env)));
                }
                Ok(dummy(Term::Run(bx(e))))
            }
            "del" => {
                let at = self.bump();
                let target = self.parse_postfix()?;
                match target.term {
                    Term::Read(r, s) => Ok(dummy(Term::Del(r, s))),
                    _ => Err(diag(
                        at.line,
                        at.column,
                        "'del' must be followed by a field access e[e]",
                    )),
                }
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let mut e = self.parse_primary()?;
        loop {
            match self.peek().kind {
                Tok::LParen => {
                    self.bump();
                    let arg = self.parse_expr()?;
                    self.expect(Tok::RParen)?;
                    e = dummy(Term::App(bx(e), bx(arg)));
                }
                Tok::LBrack => {
                    self.bump();
                    let sel = self.parse_expr()?;
                    self.expect(Tok::RBrack)?;
                    if self.peek().kind == Tok::Assign {
                        self.bump();
                        let v = self.parse_binary()?;
                        return Ok(dummy(Term::Write(bx(e), bx(sel), bx(v))));
                    }
                    e = dummy(Term::Read(bx(e), bx(sel)));
                }
                _ => return Ok(e),
            }
        }
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        match t.kind {
            Tok::Num(n) => {
                self.bump();
                Ok(dummy(Term::Const(Const::Num(n))))
            }
            Tok::Minus => {
                if let Tok::Num(n) = *self.peek_at(1) {
                    self.bump();
                    self.bump();
                    Ok(dummy(Term::Const(Const::Num(-n))))
                } else {
                    Err(self.error_here("expected an expression"))
                }
            }
            Tok::Str(s) => {
                self.bump();
                Ok(dummy(Term::Const(Const::Str(s))))
            }
            Tok::Underscore => {
                self.intermediate("the hole '_'", &t)?;
                self.bump();
                Ok(dummy(Term::Hole))
            }
            Tok::LBrace => self.parse_record(),
            Tok::LParen => self.parse_paren(),
            Tok::Ident(ref s) => match s.as_str() {
                "undef" => self.constant(Const::Undef),
                "null" => self.constant(Const::Null),
                "true" => self.constant(Const::Bool(true)),
                "false" => self.constant(Const::Bool(false)),
                "fun" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let x = self.binder()?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::LBrace)?;
                    let body = self.parse_expr()?;
                    self.expect(Tok::RBrace)?;
                    Ok(dummy(Term::Fun(x, bx(body))))
                }
                "if" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let c = self.parse_expr()?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::LBrace)?;
                    let a = self.parse_expr()?;
                    self.expect(Tok::RBrace)?;
                    self.expect_keyword("else")?;
                    self.expect(Tok::LBrace)?;
                    let b = self.parse_expr()?;
                    self.expect(Tok::RBrace)?;
                    Ok(dummy(Term::If(bx(c), bx(a), bx(b))))
                }
                kw if RESERVED.contains(&kw) => Err(diag(
                    t.line,
                    t.column,
                    format!("reserved word '{kw}' cannot start an expression here"),
                )),
                _ => {
                    self.bump();
                    Ok(dummy(Term::Var(s.clone())))
                }
            },
            _ => Err(self.error_here("expected an expression")),
        }
    }

    fn constant(&mut self, k: Const) -> PResult<Expr> {
        self.bump();
        Ok(dummy(Term::Const(k)))
    }

    fn parse_record(&mut self) -> PResult<Expr> {
        self.expect(Tok::LBrace)?;
        let mut fields: Vec<(String, Expr)> = Vec::new();
        let mut seen = BTreeSet::new();
        if self.peek().kind != Tok::RBrace {
            loop {
                let t = self.peek().clone();
                let name = match t.kind {
                    Tok::Str(s) => s,
                    _ => return Err(self.error_here("expected a quoted field name")),
                };
                self.bump();
                if !seen.insert(name.clone()) {
                    return Err(diag(t.line, t.column, format!("duplicate record field {name:?}")));
                }
                self.expect(Tok::Colon)?;
                let v = self.parse_expr()?;
                fields.push((name, v));
                if self.peek().kind == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(dummy(Term::Record(fields)))
    }

    /// `(M : e)`, `(e, ρ)` or a parenthesised expression.
    fn parse_paren(&mut self) -> PResult<Expr> {
        let open = self.expect(Tok::LParen)?;
        if let (Tok::Ident(m), Tok::Colon) = (self.peek_at(0).clone(), self.peek_at(1)) {
            if m.chars().next().is_some_and(|c| c.is_uppercase()) && !RESERVED.contains(&m.as_str()) {
                self.bump();
                self.bump();
                let e = self.parse_expr()?;
                self.expect(Tok::RParen)?;
                return Ok(dummy(Term::Marked(Marker::new(m), bx(e))));
            }
        }
        let e = self.parse_expr()?;
        if self.peek().kind == Tok::Comma {
            self.intermediate("the closure form '(e, ρ)'", &open)?;
            self.bump();
            let env = self.parse_env()?;
            self.expect(Tok::RParen)?;
            return Ok(Expr::new(Term::Closure(Box::new(e.term), env), e.label));
        }
        self.expect(Tok::RParen)?;
        Ok(e)
    }

    fn env_follows(&self, k: usize) -> bool {
        *self.peek_at(k) == Tok::LBrace
            && (*self.peek_at(k + 1) == Tok::RBrace
                || (matches!(self.peek_at(k + 1), Tok::Ident(_)) && *self.peek_at(k + 2) == Tok::MapsTo))
    }

    fn parse_env(&mut self) -> PResult<Env> {
        self.expect(Tok::LBrace)?;
        let mut binds = Vec::new();
        if self.peek().kind != Tok::RBrace {
            loop {
                let x = self.binder()?;
                self.expect(Tok::MapsTo)?;
                binds.push((x, self.parse_expr()?));
                if self.peek().kind == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(binds.into_iter().collect())
    }
}
