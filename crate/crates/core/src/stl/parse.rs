//! Recursive-descent parser for the task fragment.
//!
//! ```text
//! formula   := until ("AND" until)*
//! until     := atom ("U" interval atom)?
//! atom      := "TRUE" | ("G" | "F") interval "(" formula ")" | "(" formula ")" | predicate
//! predicate := expr ("<=" | "<" | ">=" | ">") expr | NAME
//! expr      := term (("+" | "-") term)*
//! term      := unary ("*" unary)*
//! unary     := "-" unary | NUMBER | VAR | ("abs" | "sq") "(" expr ")" | "(" expr ")"
//! ```
//!
//! Variables are `p<i>`, `v<i>` or `x<i>` (`x` is an alias for `p`).

use std::collections::BTreeMap;

use super::expr::{Comparison, Expr, Predicate};
use super::{Interval, StlError, StlFormula};
use crate::state::{StateVar, VarKind};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Cmp(Comparison),
    And,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, StlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = |tok| Token { tok, pos: start };
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => out.push(single(Tok::LParen)),
            b')' => out.push(single(Tok::RParen)),
            b'[' => out.push(single(Tok::LBracket)),
            b']' => out.push(single(Tok::RBracket)),
            b',' => out.push(single(Tok::Comma)),
            b'+' => out.push(single(Tok::Plus)),
            b'-' => out.push(single(Tok::Minus)),
            b'*' => out.push(single(Tok::Star)),
            b'&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    i += 1;
                }
                out.push(single(Tok::And));
            }
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let cmp = match (c, eq) {
                    (b'<', true) => Comparison::Le,
                    (b'<', false) => Comparison::Lt,
                    (_, true) => Comparison::Ge,
                    (_, false) => Comparison::Gt,
                };
                if eq {
                    i += 1;
                }
                out.push(single(Tok::Cmp(cmp)));
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let lit = &text[i..j];
                let value: f64 = lit.parse().map_err(|_| StlError::Syntax {
                    pos: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                out.push(Token {
                    tok: Tok::Num(value),
                    pos: start,
                });
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let word = &text[i..j];
                let tok = if word == "AND" {
                    Tok::And
                } else {
                    Tok::Ident(word.to_string())
                };
                out.push(Token { tok, pos: start });
                i = j;
                continue;
            }
            _ => {
                return Err(StlError::Syntax {
                    pos: start,
                    message: format!(
                        "unexpected character `{}`",
                        text[start..].chars().next().unwrap()
                    ),
                })
            }
        }
        i += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: text.len(),
    });
    Ok(out)
}

fn state_var(word: &str) -> Option<StateVar> {
    let (head, digits) = word.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let kind = match head {
        "p" | "x" => VarKind::Position,
        "v" => VarKind::Velocity,
        _ => return None,
    };
    let agent: usize = digits.parse().ok()?;
    Some(StateVar { kind, agent })
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    named: Option<&'a BTreeMap<String, Predicate>>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    fn here(&self) -> usize {
        self.toks[self.pos].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, StlError> {
        Err(StlError::Syntax {
            pos: self.here(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), StlError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn is_keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == word)
    }

    fn formula(&mut self) -> Result<StlFormula, StlError> {
        let mut left = self.until()?;
        while *self.peek() == Tok::And {
            self.bump();
            let right = self.until()?;
            left = StlFormula::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn until(&mut self) -> Result<StlFormula, StlError> {
        let left = self.atom()?;
        if self.is_keyword("U") && *self.peek_at(1) == Tok::LBracket {
            let start = self.here();
            self.bump();
            let interval = self.interval()?;
            let right = self.atom()?;
            for side in [&left, &right] {
                if !side.is_state_formula() {
                    return Err(StlError::NestedTemporal { pos: start });
                }
            }
            return Ok(StlFormula::Until {
                interval,
                left: Box::new(left),
                right: Box::new(right),
            });
        }
        Ok(left)
    }

    fn interval(&mut self) -> Result<Interval, StlError> {
        self.expect(Tok::LBracket, "`[`")?;
        let a = self.number()?;
        self.expect(Tok::Comma, "`,`")?;
        let b = self.number()?;
        self.expect(Tok::RBracket, "`]`")?;
        Interval::new(a, b)
    }

    fn number(&mut self) -> Result<f64, StlError> {
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(if negative { -v } else { v })
            }
            _ => self.error("expected a number"),
        }
    }

    fn atom(&mut self) -> Result<StlFormula, StlError> {
        if self.is_keyword("TRUE") {
            self.bump();
            return Ok(StlFormula::True);
        }
        if (self.is_keyword("G") || self.is_keyword("F")) && *self.peek_at(1) == Tok::LBracket {
            let always = self.is_keyword("G");
            let start = self.here();
            self.bump();
            let interval = self.interval()?;
            self.expect(Tok::LParen, "`(`")?;
            let sub = self.formula()?;
            self.expect(Tok::RParen, "`)`")?;
            if !sub.is_state_formula() {
                return Err(StlError::NestedTemporal { pos: start });
            }
            let sub = Box::new(sub);
            return Ok(if always {
                StlFormula::Always { interval, sub }
            } else {
                StlFormula::Eventually { interval, sub }
            });
        }
        if *self.peek() == Tok::LParen {
            // Either a parenthesised formula or a predicate whose left side
            // starts with a parenthesised expression.
            let save = self.pos;
            self.bump();
            if let Ok(inner) = self.formula() {
                if *self.peek() == Tok::RParen {
                    self.bump();
                    if !matches!(
                        self.peek(),
                        Tok::Cmp(_) | Tok::Plus | Tok::Minus | Tok::Star
                    ) {
                        return Ok(inner);
                    }
                }
            }
            self.pos = save;
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<StlFormula, StlError> {
        let start = self.here();
        if let Tok::Ident(word) = self.peek().clone() {
            let next = self.peek_at(1).clone();
            let is_named = state_var(&word).is_none()
                && word != "abs"
                && word != "sq"
                && !matches!(next, Tok::Cmp(_) | Tok::Plus | Tok::Minus | Tok::Star);
            if is_named {
                self.bump();
                let pred = self
                    .named
                    .and_then(|table| table.get(&word))
                    .ok_or_else(|| StlError::UnknownPredicate(word.clone()))?;
                let mut pred = pred.clone();
                pred.name = Some(word);
                return self.checked(pred, start);
            }
        }
        let lhs = self.expr()?;
        let cmp = match self.peek() {
            Tok::Cmp(c) => *c,
            _ => return self.error("expected a comparison (`<=`, `<`, `>=`, `>`)"),
        };
        self.bump();
        let rhs = self.expr()?;
        self.checked(Predicate::new(lhs, cmp, rhs), start)
    }

    fn checked(&self, pred: Predicate, pos: usize) -> Result<StlFormula, StlError> {
        if !pred.is_concave() {
            return Err(StlError::NonConcave {
                pos,
                predicate: pred.label(),
            });
        }
        Ok(StlFormula::Predicate(pred))
    }

    fn expr(&mut self) -> Result<Expr, StlError> {
        let mut left = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    left = Expr::Add(Box::new(left), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    left = Expr::Sub(Box::new(left), Box::new(self.term()?));
                }
                _ => return Ok(left),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, StlError> {
        let mut left = self.unary()?;
        while *self.peek() == Tok::Star {
            self.bump();
            left = Expr::Mul(Box::new(left), Box::new(self.unary()?));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, StlError> {
        match self.peek().clone() {
            Tok::Minus => {
                self.bump();
                if let Tok::Num(v) = *self.peek() {
                    self.bump();
                    return Ok(Expr::Const(-v));
                }
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(word)
                if (word == "abs" || word == "sq") && *self.peek_at(1) == Tok::LParen =>
            {
                self.bump();
                self.bump();
                let e = Box::new(self.expr()?);
                self.expect(Tok::RParen, "`)`")?;
                Ok(if word == "abs" {
                    Expr::Abs(e)
                } else {
                    Expr::Sq(e)
                })
            }
            Tok::Ident(word) => match state_var(&word) {
                Some(v) => {
                    self.bump();
                    Ok(Expr::Var(v))
                }
                None => self.error(format!("unknown variable `{word}`")),
            },
            _ => self.error("expected an expression"),
        }
    }
}

/// Parses a formula; named predicates are resolved against `named`.
pub fn parse_with(
    text: &str,
    named: Option<&BTreeMap<String, Predicate>>,
) -> Result<StlFormula, StlError> {
    let toks = lex(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        named,
    };
    let formula = parser.formula()?;
    if *parser.peek() != Tok::Eof {
        return parser.error("unexpected trailing input");
    }
    Ok(formula)
}

/// Parses a bare predicate such as `sq(p1 - 2) <= 0.25`.
pub fn parse_predicate(text: &str) -> Result<Predicate, StlError> {
    let toks = lex(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        named: None,
    };
    let start = parser.here();
    let lhs = parser.expr()?;
    let cmp = match parser.peek() {
        Tok::Cmp(c) => *c,
        _ => return parser.error("expected a comparison"),
    };
    parser.bump();
    let rhs = parser.expr()?;
    if *parser.peek() != Tok::Eof {
        return parser.error("unexpected trailing input");
    }
    match parser.checked(Predicate::new(lhs, cmp, rhs), start)? {
        StlFormula::Predicate(p) => Ok(p),
        _ => unreachable!(),
    }
}
