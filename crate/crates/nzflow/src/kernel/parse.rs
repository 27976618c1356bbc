//! Hand-rolled lexer and recursive-descent parser for the kernel DSL.
//!
//! ```text
//! kernel cholesky(n) {
//!     array A[n][n] inout;
//!     for i in 0..n {
//!         for j in 0..i {
//!             if nonzero(A[j][j]) {
//!                 S2: A[i][j] /= A[j][j];
//!             }
//!         }
//!     }
//! }
//! ```
//!
//! Subscripts and loop bounds are affine; a product of two names inside an
//! affine position is rejected here with a source location.

use super::*;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.src.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn tokens(mut self) -> Result<Vec<SpannedTok>> {
        let mut out = Vec::new();
        loop {
            // skip whitespace and `#` / `//` comments
            loop {
                match self.peek() {
                    Some(b) if b.is_ascii_whitespace() => {
                        self.bump();
                    }
                    Some(b'#') => {
                        while let Some(b) = self.bump() {
                            if b == b'\n' {
                                break;
                            }
                        }
                    }
                    Some(b'/') if self.peek2() == Some(b'/') => {
                        while let Some(b) = self.bump() {
                            if b == b'\n' {
                                break;
                            }
                        }
                    }
                    _ => break,
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(b) = self.peek() else { break };
            let tok = match b {
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    let mut s = String::new();
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == b'_' {
                            s.push(c as char);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(s)
                }
                b'0'..=b'9' => {
                    let mut s = String::new();
                    let mut float = false;
                    while let Some(c) = self.peek() {
                        if c.is_ascii_digit() {
                            s.push(c as char);
                            self.bump();
                        } else if c == b'.' && self.peek2().is_some_and(|d| d.is_ascii_digit()) {
                            float = true;
                            s.push('.');
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    if float {
                        Tok::Float(
                            s.parse()
                                .map_err(|_| self.err(format!("bad number `{s}`")))?,
                        )
                    } else {
                        Tok::Int(
                            s.parse()
                                .map_err(|_| self.err(format!("integer out of range `{s}`")))?,
                        )
                    }
                }
                _ => {
                    let two: Option<&'static str> = match (b, self.peek2()) {
                        (b'.', Some(b'.')) => Some(".."),
                        (b'+', Some(b'=')) => Some("+="),
                        (b'-', Some(b'=')) => Some("-="),
                        (b'*', Some(b'=')) => Some("*="),
                        (b'/', Some(b'=')) => Some("/="),
                        (b'%', Some(b'=')) => Some("%="),
                        _ => None,
                    };
                    if let Some(sym) = two {
                        self.bump();
                        self.bump();
                        Tok::Sym(sym)
                    } else {
                        let sym = match b {
                            b'(' => "(",
                            b')' => ")",
                            b'{' => "{",
                            b'}' => "}",
                            b'[' => "[",
                            b']' => "]",
                            b';' => ";",
                            b':' => ":",
                            b',' => ",",
                            b'=' => "=",
                            b'+' => "+",
                            b'-' => "-",
                            b'*' => "*",
                            b'/' => "/",
                            b'%' => "%",
                            other => {
                                return Err(
                                    self.err(format!("unexpected character `{}`", other as char))
                                )
                            }
                        };
                        self.bump();
                        Tok::Sym(sym)
                    }
                }
            };
            out.push(SpannedTok { tok, line, col });
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
}

impl Parser {
    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.here();
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Result<Tok> {
        let t = self
            .toks
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        Ok(t.tok.clone())
    }

    fn eat_sym(&mut self, sym: &str) -> Result<()> {
        match self.next()? {
            Tok::Sym(s) if s == sym => Ok(()),
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected `{sym}`, found {}", tok_name(&other))))
            }
        }
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym)
    }

    fn eat_if_sym(&mut self, sym: &str) -> bool {
        if self.at_sym(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected identifier, found {}", tok_name(&other))))
            }
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> Result<()> {
        let got = self.ident()?;
        if got == kw {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected `{kw}`, found `{got}`")))
        }
    }

    // affine := ['-'] aterm (('+'|'-') aterm)*
    // aterm  := INT ['*' IDENT] | IDENT ['*' INT]
    fn affine(&mut self) -> Result<AffineExpr> {
        let mut acc = AffineExpr::constant(0);
        let mut neg = self.eat_if_sym("-");
        loop {
            let term = self.affine_term()?;
            let term = if neg { term.scale(-1)? } else { term };
            acc = acc.add(&term)?;
            if self.eat_if_sym("+") {
                neg = false;
            } else if self.eat_if_sym("-") {
                neg = true;
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn affine_term(&mut self) -> Result<AffineExpr> {
        match self.next()? {
            Tok::Int(v) => {
                if self.eat_if_sym("*") {
                    match self.next()? {
                        Tok::Ident(id) => Ok(AffineExpr::term(v, name(&id))),
                        Tok::Int(w) => Ok(AffineExpr::constant(
                            v.checked_mul(w)
                                .ok_or_else(|| self.err("integer overflow"))?,
                        )),
                        _ => {
                            self.pos -= 1;
                            Err(self.err("expected name or integer after `*`"))
                        }
                    }
                } else {
                    Ok(AffineExpr::constant(v))
                }
            }
            Tok::Ident(id) => {
                if self.eat_if_sym("*") {
                    match self.next()? {
                        Tok::Int(v) => Ok(AffineExpr::term(v, name(&id))),
                        Tok::Ident(_) => {
                            self.pos -= 1;
                            Err(self.err(format!(
                                "non-affine expression: product of `{id}` and another name"
                            )))
                        }
                        _ => {
                            self.pos -= 1;
                            Err(self.err("expected integer after `*`"))
                        }
                    }
                } else {
                    Ok(AffineExpr::var(name(&id)))
                }
            }
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected affine term, found {}", tok_name(&other))))
            }
        }
    }

    fn array_ref(&mut self) -> Result<ArrayRef> {
        let arr = self.ident()?;
        let mut subs = Vec::new();
        if !self.at_sym("[") {
            return Err(self.err(format!("expected `[` after array name `{arr}`")));
        }
        while self.eat_if_sym("[") {
            subs.push(self.affine()?);
            self.eat_sym("]")?;
        }
        Ok(ArrayRef::new(name(&arr), subs))
    }

    // expr := mulexpr (('+'|'-') mulexpr)*
    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = if self.eat_if_sym("+") {
                BinOp::Add
            } else if self.eat_if_sym("-") {
                BinOp::Sub
            } else {
                break;
            };
            let rhs = self.mul_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = if self.eat_if_sym("*") {
                BinOp::Mul
            } else if self.eat_if_sym("/") {
                BinOp::Div
            } else if self.eat_if_sym("%") {
                BinOp::Mod
            } else {
                break;
            };
            let rhs = self.unary_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr> {
        if self.eat_if_sym("-") {
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary_expr()?)));
        }
        if self.at_keyword("sqrt") {
            self.pos += 1;
            self.eat_sym("(")?;
            let inner = self.expr()?;
            self.eat_sym(")")?;
            return Ok(Expr::Unary(UnaryOp::Sqrt, Box::new(inner)));
        }
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Expr::Lit(v as f64))
            }
            Some(Tok::Float(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Expr::Lit(v))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.eat_sym(")")?;
                Ok(inner)
            }
            Some(Tok::Ident(_)) => Ok(Expr::Ref(self.array_ref()?)),
            other => Err(self.err(format!(
                "expected expression, found {}",
                other.map(tok_name).unwrap_or_else(|| "end of input".into())
            ))),
        }
    }

    fn statement(&mut self, guard: Option<ArrayRef>) -> Result<Statement> {
        let id = self.ident()?;
        self.eat_sym(":")?;
        let lhs = self.array_ref()?;
        let accum_op = match self.next()? {
            Tok::Sym("=") => None,
            Tok::Sym("+=") => Some(BinOp::Add),
            Tok::Sym("-=") => Some(BinOp::Sub),
            Tok::Sym("*=") => Some(BinOp::Mul),
            Tok::Sym("/=") => Some(BinOp::Div),
            Tok::Sym("%=") => Some(BinOp::Mod),
            other => {
                self.pos -= 1;
                return Err(self.err(format!(
                    "expected assignment operator, found {}",
                    tok_name(&other)
                )));
            }
        };
        let rhs = self.expr()?;
        self.eat_sym(";")?;
        Ok(Statement {
            id: name(&id),
            guard,
            lhs,
            rhs,
            accum_op,
        })
    }

    fn items(&mut self) -> Result<Vec<Item>> {
        let mut out = Vec::new();
        loop {
            if self.at_sym("}") || self.peek().is_none() {
                return Ok(out);
            }
            if self.at_keyword("for") {
                self.pos += 1;
                let it = self.ident()?;
                self.eat_keyword("in")?;
                let lower = self.affine()?;
                self.eat_sym("..")?;
                let upper = self.affine()?;
                self.eat_sym("{")?;
                let body = self.items()?;
                self.eat_sym("}")?;
                out.push(Item::Loop(Loop {
                    iterator: name(&it),
                    lower,
                    upper,
                    body,
                }));
            } else if self.at_keyword("if") {
                self.pos += 1;
                self.eat_keyword("nonzero")?;
                self.eat_sym("(")?;
                let guard = self.array_ref()?;
                self.eat_sym(")")?;
                self.eat_sym("{")?;
                let stmt = self.statement(Some(guard))?;
                self.eat_sym("}")?;
                out.push(Item::Stmt(stmt));
            } else {
                out.push(Item::Stmt(self.statement(None)?));
            }
        }
    }

    fn kernel(&mut self) -> Result<Kernel> {
        self.eat_keyword("kernel")?;
        let kname = self.ident()?;
        self.eat_sym("(")?;
        let mut params = Vec::new();
        if !self.at_sym(")") {
            loop {
                params.push(name(&self.ident()?));
                if !self.eat_if_sym(",") {
                    break;
                }
            }
        }
        self.eat_sym(")")?;
        self.eat_sym("{")?;
        let mut arrays = Vec::new();
        while self.at_keyword("array") {
            self.pos += 1;
            let aname = self.ident()?;
            let mut dims = Vec::new();
            while self.eat_if_sym("[") {
                dims.push(self.affine()?);
                self.eat_sym("]")?;
            }
            let role = match self.ident()?.as_str() {
                "input" => Role::Input,
                "output" => Role::Output,
                "inout" => Role::Inout,
                other => {
                    self.pos -= 1;
                    return Err(self.err(format!(
                        "expected `input`, `output` or `inout`, found `{other}`"
                    )));
                }
            };
            self.eat_sym(";")?;
            arrays.push(ArrayDecl {
                name: name(&aname),
                dims,
                role,
            });
        }
        let body = self.items()?;
        self.eat_sym("}")?;
        if let Some(t) = self.toks.get(self.pos) {
            return Err(Error::Parse {
                line: t.line,
                col: t.col,
                msg: format!("trailing input after kernel: {}", tok_name(&t.tok)),
            });
        }
        Ok(Kernel {
            name: name(&kname),
            params,
            arrays,
            body,
        })
    }
}

fn tok_name(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Float(v) => format!("`{v}`"),
        Tok::Sym(s) => format!("`{s}`"),
    }
}

/// Parses and validates a kernel from DSL source.
pub fn parse_kernel(src: &str) -> Result<Kernel> {
    let toks = Lexer::new(src).tokens()?;
    let mut p = Parser { toks, pos: 0 };
    let kernel = p.kernel()?;
    kernel.validate()?;
    Ok(kernel)
}
