//! Independent reference implementations shared by the integration tests
//! and the acceptance suite.

#![allow(dead_code)]

use ctrlrepair::controller::MlpController;
use ctrlrepair::signal::Signal;
use ctrlrepair::stl::{Expr, Formula, Interval};
use rand::Rng;

pub fn oracle_expr(e: &Expr, s: &[f64]) -> f64 {
    match e {
        Expr::Const(c) => *c,
        Expr::Channel { index, .. } => s[*index],
        Expr::Neg(a) => -oracle_expr(a, s),
        Expr::Add(a, b) => oracle_expr(a, s) + oracle_expr(b, s),
        Expr::Sub(a, b) => oracle_expr(a, s) - oracle_expr(b, s),
        Expr::Mul(a, b) => oracle_expr(a, s) * oracle_expr(b, s),
        Expr::Div(a, b) => oracle_expr(a, s) / oracle_expr(b, s),
        Expr::Abs(a) => oracle_expr(a, s).abs(),
        Expr::Min(a, b) => oracle_expr(a, s).min(oracle_expr(b, s)),
        Expr::Max(a, b) => oracle_expr(a, s).max(oracle_expr(b, s)),
    }
}

/// Grid indices of `[j + a, j + b]` clipped to the signal.
fn window(w: &Signal, i: &Interval, j: usize) -> Vec<usize> {
    let dt = w.dt();
    let a = (i.lo / dt - 1e-9).ceil().max(0.0) as usize;
    let b = (i.hi / dt + 1e-9).floor().max(0.0) as usize;
    (j + a..=j + b).filter(|&k| k < w.len()).collect()
}

/// Robustness at grid index `j` straight from the recursive definition.
pub fn oracle_rob(phi: &Formula, w: &Signal, j: usize) -> f64 {
    match phi {
        Formula::Atom(e) => oracle_expr(e, w.sample(j)),
        Formula::False => f64::NEG_INFINITY,
        Formula::Not(f) => -oracle_rob(f, w, j),
        Formula::And(a, b) => oracle_rob(a, w, j).min(oracle_rob(b, w, j)),
        Formula::Or(a, b) => oracle_rob(a, w, j).max(oracle_rob(b, w, j)),
        Formula::Always(i, f) => window(w, i, j)
            .into_iter()
            .map(|k| oracle_rob(f, w, k))
            .fold(f64::INFINITY, f64::min),
        Formula::Eventually(i, f) => window(w, i, j)
            .into_iter()
            .map(|k| oracle_rob(f, w, k))
            .fold(f64::NEG_INFINITY, f64::max),
        Formula::Until(i, a, b) => window(w, i, j)
            .into_iter()
            .map(|k| {
                let hold = (j..k).map(|m| oracle_rob(a, w, m)).fold(f64::INFINITY, f64::min);
                oracle_rob(b, w, k).min(hold)
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn random_expr<R: Rng>(rng: &mut R, dim: usize, depth: usize) -> Expr {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        return if rng.gen_bool(0.6) {
            let index = rng.gen_range(0..dim);
            Expr::Channel {
                name: format!("w{index}"),
                index,
            }
        } else {
            Expr::Const(rng.gen_range(-3.0..3.0))
        };
    }
    let a = Box::new(random_expr(rng, dim, depth - 1));
    match rng.gen_range(0..8) {
        0 => Expr::Neg(a),
        1 => Expr::Abs(a),
        k => {
            let b = Box::new(random_expr(rng, dim, depth - 1));
            match k {
                2 => Expr::Add(a, b),
                3 => Expr::Sub(a, b),
                4 => Expr::Mul(a, b),
                5 => Expr::Min(a, b),
                6 => Expr::Max(a, b),
                _ => Expr::Sub(a, b),
            }
        }
    }
}

fn random_interval<R: Rng>(rng: &mut R, dt: f64) -> Interval {
    let a = rng.gen_range(0..6);
    let b = a + rng.gen_range(0..8);
    Interval::new(a as f64 * dt, b as f64 * dt).unwrap()
}

/// Random formula of temporal/boolean depth at most `depth`.
pub fn random_formula<R: Rng>(rng: &mut R, dim: usize, dt: f64, depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.2) {
        return if rng.gen_bool(0.05) {
            Formula::False
        } else {
            Formula::Atom(random_expr(rng, dim, 2))
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..7) {
        0 => Formula::not(random_formula(rng, dim, dt, d)),
        1 => Formula::and(random_formula(rng, dim, dt, d), random_formula(rng, dim, dt, d)),
        2 => Formula::or(random_formula(rng, dim, dt, d), random_formula(rng, dim, dt, d)),
        3 => Formula::always(random_interval(rng, dt), random_formula(rng, dim, dt, d)),
        4 => Formula::eventually(random_interval(rng, dt), random_formula(rng, dim, dt, d)),
        _ => Formula::until(
            random_interval(rng, dt),
            random_formula(rng, dim, dt, d),
            random_formula(rng, dim, dt, d),
        ),
    }
}

/// Piecewise-linear signal through random knots, sampled on the grid.
pub fn random_pwl_signal<R: Rng>(rng: &mut R, dim: usize, len: usize, dt: f64) -> Signal {
    let knots = rng.gen_range(2..=8usize).min(len.max(2));
    let mut data = Vec::with_capacity(len * dim);
    let values: Vec<Vec<f64>> = (0..knots)
        .map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect())
        .collect();
    for i in 0..len {
        let s = if len > 1 { i as f64 / (len - 1) as f64 * (knots - 1) as f64 } else { 0.0 };
        let k = (s.floor() as usize).min(knots - 2);
        let f = s - k as f64;
        for c in 0..dim {
            data.push(values[k][c] + f * (values[k + 1][c] - values[k][c]));
        }
    }
    Signal::new(dt, 0.0, dim, data).unwrap()
}

/// Bitwise equality, treating both zeros as equal.
pub fn same_value(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a == 0.0 && b == 0.0)
}

/// Violation episode of a single `alw[a,b](body)` term by linear scan over
/// precomputed body margins.
pub fn scan_episode(margins: &[f64], first: usize, last: usize) -> Option<(usize, usize)> {
    let n = margins.len();
    let last = last.min(n - 1);
    let start = (first..=last).find(|&i| margins[i] < 0.0)?;
    if start == n - 1 {
        return Some((start.saturating_sub(1), start));
    }
    let mut end = n - 1;
    for (i, m) in margins.iter().enumerate().skip(start + 1) {
        if *m >= 0.0 {
            end = i;
            break;
        }
    }
    Some((start, end))
}

/// Worst relative error between backpropagation and central differences,
/// with the error measured against `max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check(net: &MlpController, batch: &[(&[f64], f64)], h: f64) -> f64 {
    let (_, grad) = net.gradient(batch).unwrap();
    let base = net.params();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.set_params(&p);
        let up = probe.loss(batch).unwrap();
        p[k] = base[k] - h;
        probe.set_params(&p);
        let down = probe.loss(batch).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let scale = grad[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[k] - numeric).abs() / scale);
    }
    worst
}

/// A scalar trace that dips below zero at least once inside `[lo, hi]`.
pub fn violating_trace<R: Rng>(rng: &mut R, n: usize, lo: usize, hi: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
    for _ in 0..rng.gen_range(1..4) {
        let s = rng.gen_range(lo..=hi.min(n - 1));
        let len = rng.gen_range(1..20);
        for x in v.iter_mut().skip(s).take(len) {
            *x = -rng.gen_range(0.1..2.0);
        }
    }
    v
}

/// Fronts by repeated peeling of the non-dominated set, each sorted by index.
pub fn brute_force_fronts(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let dominates = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y);
    let mut left: Vec<usize> = (0..objs.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&objs[j], &objs[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}
