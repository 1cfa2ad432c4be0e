//! Localization of the first violation episode of a safety requirement.
//!
//! Exact diagnosis is supported for the safety fragment: a conjunction of
//! `alw[a,b](body)` terms whose bodies are boolean combinations of atoms.
//! Anything else gets the conservative episode covering the whole trace.

use serde::{Deserialize, Serialize};

use super::{robustness, robustness_signal, Formula, Interval, Result, StlError};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationEpisode {
    pub tau_start: f64,
    pub tau_end: f64,
    /// Set when the formula is outside the safety fragment and the episode is
    /// the whole trace rather than a localized segment.
    pub conservative: bool,
}

/// Splits a formula of the safety fragment into its `(window, body)` terms.
pub fn safety_fragment(phi: &Formula) -> Option<Vec<(Interval, &Formula)>> {
    match phi {
        Formula::Always(i, body) if body.is_temporal_free() => Some(vec![(*i, body.as_ref())]),
        Formula::And(a, b) => {
            let mut terms = safety_fragment(a)?;
            terms.extend(safety_fragment(b)?);
            Some(terms)
        }
        _ => None,
    }
}

/// Grid indices `(first, last)` covered by a window evaluated at time 0.
fn window_indices(w: &Signal, i: &Interval) -> Option<(usize, usize)> {
    let (first, last) = i.steps(w.dt());
    let last = last.min(w.len() - 1);
    (first <= last).then_some((first, last))
}

pub fn diagnose(w: &Signal, phi: &Formula) -> Result<ViolationEpisode> {
    let rho = robustness(w, phi)?;
    if rho >= 0.0 {
        return Err(StlError::NotViolated(rho));
    }
    let n = w.len();
    let Some(terms) = safety_fragment(phi) else {
        return Ok(ViolationEpisode {
            tau_start: w.start(),
            tau_end: w.end(),
            conservative: true,
        });
    };

    let mut best: Option<(usize, usize)> = None;
    for (interval, body) in terms {
        let Some((first, last)) = window_indices(w, &interval) else {
            continue;
        };
        let values = robustness_signal(w, body, 0, n - 1)?;
        let Some(start) = (first..=last).find(|&i| values[i] < 0.0) else {
            continue;
        };
        let end = (start + 1..n).find(|&i| values[i] >= 0.0).unwrap_or(n - 1);
        let episode = if start == n - 1 {
            (start.saturating_sub(1), start)
        } else {
            (start, end)
        };
        best = match best {
            Some(b) if b.0 < episode.0 || (b.0 == episode.0 && b.1 >= episode.1) => Some(b),
            _ => Some(episode),
        };
    }
    // A negative robustness in the fragment always has a violating term.
    let (s, e) = best.expect("violated safety formula without a violating term");
    Ok(ViolationEpisode {
        tau_start: w.time(s),
        tau_end: w.time(e),
        conservative: false,
    })
}

/// Smallest body margin among the safety terms whose window covers each grid
/// point; `None` at points outside every window. Returns `Ok(None)` when the
/// formula is outside the safety fragment.
pub fn pointwise_margin(w: &Signal, phi: &Formula) -> Result<Option<Vec<Option<f64>>>> {
    let Some(terms) = safety_fragment(phi) else {
        return Ok(None);
    };
    let n = w.len();
    let mut out: Vec<Option<f64>> = vec![None; n];
    for (interval, body) in terms {
        let Some((first, last)) = window_indices(w, &interval) else {
            continue;
        };
        let values = robustness_signal(w, body, first, last)?;
        for (i, v) in (first..=last).zip(values) {
            out[i] = Some(out[i].map_or(v, |m: f64| m.min(v)));
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    fn ep(w: &[f64], dt: f64, text: &str) -> Result<ViolationEpisode> {
        let s = Signal::from_scalars(dt, w).unwrap();
        diagnose(&s, &parse(text, &["w"]).unwrap())
    }

    #[test]
    fn episode_in_the_middle() {
        let e = ep(&[8.0, 6.0, 4.0, 3.0, 6.0, 9.0], 1.0, "alw[0,5](w > 5)").unwrap();
        assert_eq!((e.tau_start, e.tau_end), (2.0, 4.0));
        assert!(!e.conservative);
    }

    #[test]
    fn episode_from_the_start() {
        let e = ep(&[1.0, 2.0, 9.0], 1.0, "alw[0,2](w > 5)").unwrap();
        assert_eq!((e.tau_start, e.tau_end), (0.0, 2.0));
    }

    #[test]
    fn episode_at_the_very_end_is_widened() {
        let e = ep(&[9.0, 9.0, 1.0], 1.0, "alw[0,2](w > 5)").unwrap();
        assert_eq!((e.tau_start, e.tau_end), (1.0, 2.0));
        let e = ep(&[9.0, 1.0, 1.0], 1.0, "alw[0,2](w > 5)").unwrap();
        assert_eq!((e.tau_start, e.tau_end), (1.0, 2.0));
    }

    #[test]
    fn earliest_term_wins() {
        let e = ep(
            &[9.0, 9.0, 9.0, 1.0, 9.0, 1.0, 1.0, 9.0],
            1.0,
            "alw[4,7](w > 5) and alw[0,3](w > 5)",
        )
        .unwrap();
        assert_eq!((e.tau_start, e.tau_end), (3.0, 4.0));
        // only the violation inside a window counts as its start
        let e = ep(&[1.0, 1.0, 9.0, 9.0, 1.0, 9.0], 1.0, "alw[3,5](w > 5)").unwrap();
        assert_eq!((e.tau_start, e.tau_end), (4.0, 5.0));
    }

    #[test]
    fn satisfied_signal_is_rejected() {
        assert!(matches!(
            ep(&[9.0, 9.0], 1.0, "alw[0,1](w > 5)"),
            Err(StlError::NotViolated(_))
        ));
    }

    #[test]
    fn outside_fragment_is_conservative() {
        let e = ep(&[1.0, 1.0, 1.0], 0.5, "ev[0,1](w > 5)").unwrap();
        assert_eq!((e.tau_start, e.tau_end), (0.0, 1.0));
        assert!(e.conservative);
    }

    #[test]
    fn margin_covers_only_windows() {
        let s = Signal::from_scalars(1.0, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let phi = parse("alw[1,2](w > 2) and alw[2,2](w > 0)", &["w"]).unwrap();
        let m = pointwise_margin(&s, &phi).unwrap().unwrap();
        assert_eq!(m, vec![None, Some(0.0), Some(1.0), None]);
    }
}
