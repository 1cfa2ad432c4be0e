//! Signal temporal logic: formulas, parsing, grid robustness and violation
//! diagnosis.
//!
//! Atoms have the form `expr > 0` where `expr` is an arithmetic expression
//! over named output channels. The textual grammar accepts the usual
//! comparison sugar (`<`, `>=`, `<=`, `expr > c`) and rewrites it into that
//! form; non-strict comparisons are treated as strict.

mod diagnose;
mod parser;
mod robustness;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnose::{diagnose, pointwise_margin, safety_fragment, ViolationEpisode};
pub use parser::parse;
pub use robustness::{evaluate, robustness, robustness_signal, Evaluation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StlError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown channel `{name}` at byte {pos}")]
    UnknownChannel { name: String, pos: usize },
    #[error("invalid interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("formula references channel {index} but the signal has {dim} channels")]
    ChannelMismatch { index: usize, dim: usize },
    #[error("signal satisfies the formula (robustness {0}); nothing to diagnose")]
    NotViolated(f64),
}

pub type Result<T> = std::result::Result<T, StlError>;

/// Closed time interval `[lo, hi]` of a temporal operator, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(StlError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Grid offsets `(first, last)` of the points inside the interval for a
    /// grid step `dt`. `first > last` when no grid point falls inside.
    pub fn steps(&self, dt: f64) -> (usize, usize) {
        let first = (self.lo / dt - 1e-9).ceil().max(0.0) as usize;
        let last = (self.hi / dt + 1e-9).floor().max(0.0) as usize;
        (first, last)
    }
}

/// Real-valued function of one output sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Channel { name: String, index: usize },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, sample: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Channel { index, .. } => sample[*index],
            Expr::Neg(e) => -e.eval(sample),
            Expr::Add(a, b) => a.eval(sample) + b.eval(sample),
            Expr::Sub(a, b) => a.eval(sample) - b.eval(sample),
            Expr::Mul(a, b) => a.eval(sample) * b.eval(sample),
            Expr::Div(a, b) => a.eval(sample) / b.eval(sample),
            Expr::Abs(e) => e.eval(sample).abs(),
            Expr::Min(a, b) => a.eval(sample).min(b.eval(sample)),
            Expr::Max(a, b) => a.eval(sample).max(b.eval(sample)),
        }
    }

    fn max_channel(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Channel { index, .. } => Some(*index),
            Expr::Neg(e) | Expr::Abs(e) => e.max_channel(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => a.max_channel().max(b.max_channel()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Operands of equal precedence on either side are parenthesized so
        // that printing and re-parsing reproduces the exact tree.
        fn operand(f: &mut fmt::Formatter<'_>, e: &Expr, prec: u8) -> fmt::Result {
            if e.precedence() <= prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Channel { name, .. } => f.write_str(name),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (op, prec) = match self {
                    Expr::Add(..) => ("+", 1),
                    Expr::Sub(..) => ("-", 1),
                    Expr::Mul(..) => ("*", 2),
                    _ => ("/", 2),
                };
                operand(f, a, prec)?;
                write!(f, " {op} ")?;
                operand(f, b, prec)
            }
            Expr::Abs(e) => write!(f, "abs({e})"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
        }
    }
}

/// STL formula over a multi-channel output signal.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    /// `expr > 0`
    Atom(Expr),
    False,
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn parse<S: AsRef<str>>(text: &str, channels: &[S]) -> Result<Self> {
        parse(text, channels)
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn always(i: Interval, f: Formula) -> Self {
        Formula::Always(i, Box::new(f))
    }

    pub fn eventually(i: Interval, f: Formula) -> Self {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn until(i: Interval, a: Formula, b: Formula) -> Self {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    /// Largest channel index referenced by any atom.
    pub fn max_channel(&self) -> Option<usize> {
        match self {
            Formula::Atom(e) => e.max_channel(),
            Formula::False => None,
            Formula::Not(f) | Formula::Always(_, f) | Formula::Eventually(_, f) => f.max_channel(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.max_channel().max(b.max_channel())
            }
        }
    }

    pub fn is_temporal_free(&self) -> bool {
        match self {
            Formula::Atom(_) | Formula::False => true,
            Formula::Not(f) => f.is_temporal_free(),
            Formula::And(a, b) | Formula::Or(a, b) => a.is_temporal_free() && b.is_temporal_free(),
            Formula::Always(..) | Formula::Eventually(..) | Formula::Until(..) => false,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) | Formula::False => 0,
            Formula::Not(f) | Formula::Always(_, f) | Formula::Eventually(_, f) => 1 + f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(e) => write!(f, "{e} > 0"),
            Formula::False => f.write_str("false"),
            Formula::Not(g) => write!(f, "not ({g})"),
            Formula::And(a, b) => write!(f, "({a}) and ({b})"),
            Formula::Or(a, b) => write!(f, "({a}) or ({b})"),
            Formula::Always(i, g) => write!(f, "alw[{},{}]({g})", i.lo, i.hi),
            Formula::Eventually(i, g) => write!(f, "ev[{},{}]({g})", i.lo, i.hi),
            Formula::Until(i, a, b) => write!(f, "({a}) until[{},{}] ({b})", i.lo, i.hi),
        }
    }
}
