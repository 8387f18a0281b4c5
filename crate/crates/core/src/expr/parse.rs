//! Recursive-descent parser for the arithmetic expression language.
//!
//! ```text
//! expr   := term (("+"|"-") term)* ;
//! term   := factor (("*"|"/") factor)* ;
//! factor := ("-" factor) | power ;
//! power  := atom ("^" factor)? ;
//! atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")" ;
//! ```

use super::{BinaryOp, Node, UnaryOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (t, at) = lx.next()?;
            let end = t == Tok::End;
            out.push((t, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() {
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                self.pos += 1;
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(Error::Syntax {
            offset: start,
            message: format!("unexpected character `{ch}`"),
        })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let s = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - s
        };
        let mut n = digits(&mut self.pos);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return Err(Error::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            if digits(&mut self.pos) == 0 {
                // not an exponent after all, e.g. "2e" followed by an identifier
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        let v: f64 = text.parse().map_err(|_| Error::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::Syntax {
                offset: start,
                message: format!("number `{text}` out of range"),
            });
        }
        Ok((Tok::Num(v), start))
    }
}

pub(super) struct Parser<'v> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'v [String],
}

impl<'v> Parser<'v> {
    pub(super) fn parse(src: &str, vars: &'v [String]) -> Result<Node> {
        if src.trim().is_empty() {
            return Err(Error::Syntax {
                offset: 0,
                message: "empty expression".into(),
            });
        }
        let mut p = Parser {
            toks: Lexer::tokens(src)?,
            pos: 0,
            vars,
        };
        let e = p.expr()?;
        match p.peek() {
            Tok::End => Ok(e),
            t => Err(p.error(format!("unexpected token {t:?}"))),
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: String) -> Error {
        Error::Syntax {
            offset: self.offset(),
            message,
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(Node::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.factor()?;
            return Ok(Node::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let Some(op) = UnaryOp::from_name(&name) else {
                        return Err(if self.vars.contains(&name) {
                            Error::Syntax {
                                offset: at,
                                message: format!("variable `{name}` used as a function"),
                            }
                        } else {
                            Error::UnknownIdentifier(name)
                        });
                    };
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Unary(op, Box::new(arg)));
                }
                if let Some(k) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(k));
                }
                if name == "pi" {
                    return Ok(Node::Const(std::f64::consts::PI));
                }
                if UnaryOp::from_name(&name).is_some() {
                    return Err(Error::Syntax {
                        offset: at,
                        message: format!("function `{name}` needs an argument"),
                    });
                }
                Err(Error::UnknownIdentifier(name))
            }
            Tok::End => Err(Error::Syntax {
                offset: at,
                message: "unexpected end of input".into(),
            }),
            t => Err(Error::Syntax {
                offset: at,
                message: format!("unexpected token {t:?}"),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            t => Err(self.error(format!("expected `)`, found {t:?}"))),
        }
    }
}
