//! Quantitative semantics evaluated on the sampling grid.
//!
//! `inf`/`sup` over a time window become `min`/`max` over the grid points
//! inside it. Windows reaching past the last sample are clamped to the
//! available samples; a window with no sample left is empty, giving `+inf`
//! for `alw` and `-inf` for `ev` and `until`.

use super::{Formula, Result, StlError};
use crate::signal::Signal;

/// Robustness value together with a note on whether any temporal window had
/// to be clamped at the end of the signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub clamped: bool,
}

pub fn robustness(w: &Signal, phi: &Formula) -> Result<f64> {
    evaluate(w, phi).map(|e| e.value)
}

pub fn evaluate(w: &Signal, phi: &Formula) -> Result<Evaluation> {
    check_channels(w, phi)?;
    let mut ev = Evaluator { w, clamped: false };
    let value = ev.eval(phi, 0, 0)[0];
    Ok(Evaluation {
        value,
        clamped: ev.clamped,
    })
}

/// Robustness of `phi` at every grid index in `lo..=hi`.
pub fn robustness_signal(w: &Signal, phi: &Formula, lo: usize, hi: usize) -> Result<Vec<f64>> {
    check_channels(w, phi)?;
    let hi = hi.min(w.len() - 1);
    if lo > hi {
        return Ok(Vec::new());
    }
    Ok(Evaluator { w, clamped: false }.eval(phi, lo, hi))
}

fn check_channels(w: &Signal, phi: &Formula) -> Result<()> {
    match phi.max_channel() {
        Some(index) if index >= w.dim() => Err(StlError::ChannelMismatch {
            index,
            dim: w.dim(),
        }),
        _ => Ok(()),
    }
}

struct Evaluator<'a> {
    w: &'a Signal,
    clamped: bool,
}

impl Evaluator<'_> {
    fn last(&self) -> usize {
        self.w.len() - 1
    }

    /// Child index range `[lo + first, min(hi + last, n-1)]` needed by a
    /// window operator evaluated over `lo..=hi`, or `None` when every window
    /// is empty.
    fn child_range(&mut self, lo: usize, hi: usize, first: usize, last: usize) -> Option<(usize, usize)> {
        if hi + last > self.last() {
            self.clamped = true;
        }
        let c_lo = lo + first;
        let c_hi = (hi + last).min(self.last());
        (first <= last && c_lo <= c_hi).then_some((c_lo, c_hi))
    }

    fn eval(&mut self, phi: &Formula, lo: usize, hi: usize) -> Vec<f64> {
        match phi {
            Formula::Atom(e) => (lo..=hi).map(|i| e.eval(self.w.sample(i))).collect(),
            Formula::False => vec![f64::NEG_INFINITY; hi - lo + 1],
            Formula::Not(f) => self.eval(f, lo, hi).into_iter().map(|v| -v).collect(),
            Formula::And(a, b) => {
                let (a, b) = (self.eval(a, lo, hi), self.eval(b, lo, hi));
                a.into_iter().zip(b).map(|(x, y)| x.min(y)).collect()
            }
            Formula::Or(a, b) => {
                let (a, b) = (self.eval(a, lo, hi), self.eval(b, lo, hi));
                a.into_iter().zip(b).map(|(x, y)| x.max(y)).collect()
            }
            Formula::Always(i, f) => self.window(f, lo, hi, i.steps(self.w.dt()), f64::INFINITY, f64::min),
            Formula::Eventually(i, f) => {
                self.window(f, lo, hi, i.steps(self.w.dt()), f64::NEG_INFINITY, f64::max)
            }
            Formula::Until(i, a, b) => self.until(a, b, lo, hi, i.steps(self.w.dt())),
        }
    }

    fn window(
        &mut self,
        f: &Formula,
        lo: usize,
        hi: usize,
        (first, last): (usize, usize),
        empty: f64,
        fold: fn(f64, f64) -> f64,
    ) -> Vec<f64> {
        let Some((c_lo, c_hi)) = self.child_range(lo, hi, first, last) else {
            return vec![empty; hi - lo + 1];
        };
        let child = self.eval(f, c_lo, c_hi);
        (lo..=hi)
            .map(|j| {
                let a = j + first;
                let b = (j + last).min(c_hi);
                if a > b {
                    empty
                } else {
                    child[a - c_lo..=b - c_lo].iter().copied().fold(empty, fold)
                }
            })
            .collect()
    }

    fn until(
        &mut self,
        lhs: &Formula,
        rhs: &Formula,
        lo: usize,
        hi: usize,
        (first, last): (usize, usize),
    ) -> Vec<f64> {
        let Some((_, c_hi)) = self.child_range(lo, hi, first, last) else {
            return vec![f64::NEG_INFINITY; hi - lo + 1];
        };
        let left = self.eval(lhs, lo, c_hi);
        let right = self.eval(rhs, lo, c_hi);
        (lo..=hi)
            .map(|j| {
                let mut best = f64::NEG_INFINITY;
                // min of the left operand over [j, i)
                let mut prefix = f64::INFINITY;
                for i in j..=(j + last).min(c_hi) {
                    if i >= j + first {
                        best = best.max(right[i - lo].min(prefix));
                    }
                    prefix = prefix.min(left[i - lo]);
                }
                best
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse, Interval};

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn constant_signal_examples() {
        let w = Signal::constant(0.1, 51, &[3.0]).unwrap();
        let phi = parse("alw[0,2](w > 0)", &["w"]).unwrap();
        assert_eq!(robustness(&w, &phi).unwrap(), 3.0);
        assert_eq!(robustness(&w, &Formula::not(phi)).unwrap(), -3.0);
    }

    #[test]
    fn acc_constants() {
        let w = Signal::constant(0.1, 501, &[12.0, 25.0]).unwrap();
        let phi = parse("alw[0,50](d_rel - 10 > 0 and 30 - v_ego > 0)", &["d_rel", "v_ego"]).unwrap();
        assert_eq!(robustness(&w, &phi).unwrap(), 2.0);
    }

    #[test]
    fn eventually_on_ramp() {
        // samples of t - 1 at dt = 0.5 over [0, 2]: {-1, -0.5, 0, 0.5, 1}
        let w = Signal::from_scalars(0.5, &[-1.0, -0.5, 0.0, 0.5, 1.0]).unwrap();
        let phi = parse("ev[0,2](w > 0)", &["w"]).unwrap();
        assert_eq!(robustness(&w, &phi).unwrap(), 1.0);
    }

    #[test]
    fn until_picks_best_release_point() {
        let w = Signal::from_samples(
            1.0,
            &[
                vec![5.0, -1.0],
                vec![4.0, -2.0],
                vec![-3.0, 2.0],
                vec![1.0, 7.0],
            ],
        )
        .unwrap();
        let phi = Formula::until(
            iv(1.0, 3.0),
            parse("a > 0", &["a", "b"]).unwrap(),
            parse("b > 0", &["a", "b"]).unwrap(),
        );
        // i=1: min(-2, 5) = -2; i=2: min(2, min(5,4)) = 2; i=3: min(7, -3) = -3
        assert_eq!(robustness(&w, &phi).unwrap(), 2.0);
    }

    #[test]
    fn windows_past_the_end_are_clamped() {
        let w = Signal::from_scalars(1.0, &[4.0, 3.0, 2.0]).unwrap();
        let phi = parse("alw[0,10](w > 0)", &["w"]).unwrap();
        let e = evaluate(&w, &phi).unwrap();
        assert_eq!(e.value, 2.0);
        assert!(e.clamped);

        let empty = parse("alw[5,6](w > 0)", &["w"]).unwrap();
        assert_eq!(robustness(&w, &empty).unwrap(), f64::INFINITY);
        let never = parse("ev[5,6](w > 0)", &["w"]).unwrap();
        assert_eq!(robustness(&w, &never).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let w = Signal::from_scalars(1.0, &[1.0]).unwrap();
        let phi = parse("b > 0", &["a", "b"]).unwrap();
        assert!(matches!(
            robustness(&w, &phi),
            Err(StlError::ChannelMismatch { index: 1, dim: 1 })
        ));
    }

    #[test]
    fn always_is_monotone_in_window() {
        let w = Signal::from_scalars(0.5, &[3.0, 1.0, 4.0, 1.5, -2.0, 6.0, 0.5]).unwrap();
        let mut prev = f64::INFINITY;
        for hi in 0..=6 {
            let phi = Formula::always(iv(0.0, hi as f64 * 0.5), parse("w > 0", &["w"]).unwrap());
            let r = robustness(&w, &phi).unwrap();
            assert!(r <= prev);
            prev = r;
        }
    }
}
