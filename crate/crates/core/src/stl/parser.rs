//! Recursive-descent parser for the textual requirement language.
//!
//! ```text
//! formula    := or
//! or         := and ("or" and)*
//! and        := until ("and" until)*
//! until      := unary ("until" interval unary)*
//! unary      := "not" unary | "alw" interval unary | "ev" interval unary
//!             | "false" | "true" | comparison | "(" formula ")"
//! comparison := expr (">" | "<" | ">=" | "<=") expr
//! expr       := term (("+" | "-") term)*
//! term       := factor (("*" | "/") factor)*
//! factor     := "-" factor | primary
//! primary    := number | channel | "abs(" expr ")" | "min(" expr "," expr ")"
//!             | "max(" expr "," expr ")" | "(" expr ")"
//! interval   := "[" number "," number "]"
//! ```

use super::{Expr, Formula, Interval, Result, StlError};

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
    Slash,
    Gt,
    Ge,
    Lt,
    Le,
    Eof,
}

const KEYWORDS: &[&str] = &[
    "alw", "ev", "until", "and", "or", "not", "false", "true", "abs", "min", "max",
];

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '>' | '<' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                if eq {
                    i += 1;
                }
                match (c, eq) {
                    ('>', false) => Tok::Gt,
                    ('>', true) => Tok::Ge,
                    ('<', false) => Tok::Lt,
                    _ => Tok::Le,
                }
            }
            c if c.is_ascii_digit() || c == '.' => {
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
                let v: f64 = lit.parse().map_err(|_| StlError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{lit}`"),
                })?;
                i = j;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(text[i..j].to_string()), start));
                i = j;
                continue;
            }
            other => {
                return Err(StlError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

struct Parser<'a, S> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    channels: &'a [S],
}

/// Parses a requirement, resolving channel names against `channels`.
pub fn parse<S: AsRef<str>>(text: &str, channels: &[S]) -> Result<Formula> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        channels,
    };
    let f = p.formula()?;
    p.expect(&Tok::Eof, "end of input")?;
    Ok(f)
}

impl<S: AsRef<str>> Parser<'_, S> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(StlError::Syntax {
            pos: self.offset(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<()> {
        if self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}, found {:?}", self.peek()))
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn formula(&mut self) -> Result<Formula> {
        let mut lhs = self.and()?;
        while self.keyword("or") {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut lhs = self.until()?;
        while self.keyword("and") {
            self.bump();
            let rhs = self.until()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula> {
        let mut lhs = self.unary()?;
        while self.keyword("until") {
            self.bump();
            let i = self.interval()?;
            let rhs = self.unary()?;
            lhs = Formula::until(i, lhs, rhs);
        }
        Ok(lhs)
    }

    fn interval(&mut self) -> Result<Interval> {
        self.expect(&Tok::LBracket, "`[`")?;
        let at = self.offset();
        let lo = self.number()?;
        self.expect(&Tok::Comma, "`,`")?;
        let hi = self.number()?;
        self.expect(&Tok::RBracket, "`]`")?;
        Interval::new(lo, hi).map_err(|_| StlError::Syntax {
            pos: at,
            msg: format!("interval [{lo}, {hi}] must satisfy 0 <= lo <= hi"),
        })
    }

    fn number(&mut self) -> Result<f64> {
        match self.bump() {
            Tok::Num(v) => Ok(v),
            other => {
                self.pos -= 1;
                self.error(format!("expected number, found {other:?}"))
            }
        }
    }

    fn unary(&mut self) -> Result<Formula> {
        if let Tok::Ident(kw) = self.peek().clone() {
            match kw.as_str() {
                "not" => {
                    self.bump();
                    return Ok(Formula::not(self.unary()?));
                }
                "alw" | "ev" => {
                    self.bump();
                    let i = self.interval()?;
                    let body = self.unary()?;
                    return Ok(if kw == "alw" {
                        Formula::always(i, body)
                    } else {
                        Formula::eventually(i, body)
                    });
                }
                "false" => {
                    self.bump();
                    return Ok(Formula::False);
                }
                "true" => {
                    self.bump();
                    return Ok(Formula::not(Formula::False));
                }
                _ => {}
            }
        }
        // A leading parenthesis opens either an arithmetic sub-expression of a
        // comparison or a nested formula; try the comparison first.
        let save = self.pos;
        let cmp_err = match self.comparison() {
            Ok(f) => return Ok(f),
            Err(e) => e,
        };
        let cmp_pos = self.pos;
        self.pos = save;
        if *self.peek() == Tok::LParen {
            self.bump();
            match self.formula().and_then(|f| {
                self.expect(&Tok::RParen, "`)`")?;
                Ok(f)
            }) {
                Ok(f) => return Ok(f),
                Err(e) if self.pos >= cmp_pos => return Err(e),
                Err(_) => {}
            }
        }
        Err(cmp_err)
    }

    fn comparison(&mut self) -> Result<Formula> {
        let lhs = self.expr()?;
        let op = self.bump();
        let rhs = match op {
            Tok::Gt | Tok::Ge | Tok::Lt | Tok::Le => self.expr()?,
            other => {
                self.pos -= usize::from(other != Tok::Eof);
                return self.error(format!("expected comparison operator, found {other:?}"));
            }
        };
        let zero = |e: &Expr| matches!(e, Expr::Const(c) if *c == 0.0);
        let expr = match op {
            Tok::Gt | Tok::Ge if zero(&rhs) => lhs,
            Tok::Gt | Tok::Ge => Expr::Sub(Box::new(lhs), Box::new(rhs)),
            _ if zero(&lhs) => rhs,
            _ => Expr::Sub(Box::new(rhs), Box::new(lhs)),
        };
        Ok(Formula::Atom(expr))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            if let Tok::Num(v) = *self.peek() {
                self.bump();
                return Ok(Expr::Const(-v));
            }
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.primary()
    }

    fn call_args(&mut self, n: usize) -> Result<Vec<Expr>> {
        self.expect(&Tok::LParen, "`(`")?;
        let mut args = vec![self.expr()?];
        while args.len() < n {
            self.expect(&Tok::Comma, "`,`")?;
            args.push(self.expr()?);
        }
        self.expect(&Tok::RParen, "`)`")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "abs" => {
                    let mut a = self.call_args(1)?;
                    Ok(Expr::Abs(Box::new(a.remove(0))))
                }
                "min" | "max" => {
                    let mut a = self.call_args(2)?;
                    let (x, y) = (Box::new(a.remove(0)), Box::new(a.remove(0)));
                    Ok(if name == "min" {
                        Expr::Min(x, y)
                    } else {
                        Expr::Max(x, y)
                    })
                }
                kw if KEYWORDS.contains(&kw) => {
                    self.pos -= 1;
                    self.error(format!("expected expression, found keyword `{kw}`"))
                }
                _ => {
                    let index = self
                        .channels
                        .iter()
                        .position(|c| c.as_ref() == name)
                        .ok_or(StlError::UnknownChannel { name: name.clone(), pos: at })?;
                    Ok(Expr::Channel { name, index })
                }
            },
            other => {
                self.pos -= usize::from(other != Tok::Eof);
                self.error(format!("expected expression, found {other:?}"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ACC: &[&str] = &["d_rel", "v_ego"];

    fn ch(name: &str, index: usize) -> Expr {
        Expr::Channel {
            name: name.into(),
            index,
        }
    }

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn parses_acc_requirement() {
        let f = parse("alw[0,50](d_rel - 10 > 0 and 30 - v_ego > 0)", ACC).unwrap();
        let expected = Formula::always(
            iv(0.0, 50.0),
            Formula::and(
                Formula::Atom(Expr::Sub(Box::new(ch("d_rel", 0)), Box::new(Expr::Const(10.0)))),
                Formula::Atom(Expr::Sub(Box::new(Expr::Const(30.0)), Box::new(ch("v_ego", 1)))),
            ),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn comparison_sugar_rewrites_to_strict_atom() {
        let a = parse("alw[0,50](d_rel >= 10 and v_ego <= 30)", ACC).unwrap();
        let b = parse("alw[0,50](d_rel - 10 > 0 and 30 - v_ego > 0)", ACC).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            parse("0 < d_rel", ACC).unwrap(),
            Formula::Atom(ch("d_rel", 0))
        );
    }

    #[test]
    fn parses_eventually_and_until() {
        let f = parse("ev[0,2](w > 0)", &["w"]).unwrap();
        assert_eq!(f, Formula::eventually(iv(0.0, 2.0), Formula::Atom(ch("w", 0))));

        let g = parse("(a > 0) until[1,3] (b > 0)", &["a", "b"]).unwrap();
        assert_eq!(
            g,
            Formula::until(
                iv(1.0, 3.0),
                Formula::Atom(ch("a", 0)),
                Formula::Atom(ch("b", 1))
            )
        );
    }

    #[test]
    fn parenthesized_arithmetic_is_not_a_formula() {
        let f = parse("(d_rel + v_ego) * 2 > 3", ACC).unwrap();
        assert!(matches!(f, Formula::Atom(Expr::Sub(..))));
        let g = parse("alw[4,5](abs(d_rel) < 0.86)", ACC).unwrap();
        assert!(matches!(g, Formula::Always(_, _)));
    }

    #[test]
    fn reports_errors_with_position() {
        match parse("alw[0,50](speed > 3)", ACC) {
            Err(StlError::UnknownChannel { name, pos }) => {
                assert_eq!(name, "speed");
                assert_eq!(pos, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("alw[0,50](d_rel > )", ACC), Err(StlError::Syntax { .. })));
        assert!(matches!(parse("alw[5,1](d_rel > 0)", ACC), Err(StlError::Syntax { pos: 4, .. })));
        assert!(matches!(parse("d_rel > 0 and", ACC), Err(StlError::Syntax { .. })));
        assert!(matches!(parse("d_rel # 0", ACC), Err(StlError::Syntax { pos: 6, .. })));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-50.0f64..50.0).prop_map(Expr::Const),
            Just(ch("d_rel", 0)),
            Just(ch("v_ego", 1)),
        ];
        leaf.prop_recursive(3, 16, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                inner.clone().prop_map(|e| Expr::Abs(Box::new(e))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Min(Box::new(a), Box::new(b))),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Max(Box::new(a), Box::new(b))),
            ]
        })
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        let interval = (0.0f64..5.0, 0.0f64..5.0).prop_map(|(a, w)| iv(a, a + w));
        let leaf = prop_oneof![arb_expr().prop_map(Formula::Atom), Just(Formula::False)];
        leaf.prop_recursive(3, 12, 2, move |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                (interval.clone(), inner.clone()).prop_map(|(i, f)| Formula::always(i, f)),
                (interval.clone(), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
                (interval.clone(), inner.clone(), inner).prop_map(|(i, a, b)| Formula::until(i, a, b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(f in arb_formula()) {
            let text = f.to_string();
            let back = parse(&text, ACC).unwrap();
            prop_assert_eq!(back, f, "{}", text);
        }
    }
}
