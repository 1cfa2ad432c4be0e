//! Uniformly sampled multi-dimensional time series and piecewise-linear
//! control patches.
//!
//! Every signal in the closed loop (external input `u`, state `x`, control `c`
//! and output `w`) is a [`Signal`] on a uniform grid. Patches are rendered onto
//! the same grid before they are spliced into a control signal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack (in units of `dt`) used when matching times to grid points.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("signal dimension must be positive")]
    ZeroDim,
    #[error("signal needs at least one sample")]
    Empty,
    #[error("sample {index} has length {len}, expected {dim}")]
    Ragged { index: usize, len: usize, dim: usize },
    #[error("non-finite value in sample {index}")]
    NonFinite { index: usize },
    #[error("time {t} outside signal domain [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid bounds [{lo}, {hi}]")]
    BadBounds { lo: f64, hi: f64 },
    #[error("invalid patch: {0}")]
    BadPatch(String),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Closed real interval, used for the admissible control range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SignalError::BadBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A uniformly sampled vector-valued signal.
///
/// Samples are stored row-major: sample `i` occupies `data[i*dim..(i+1)*dim]`
/// and is taken at time `start + i*dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    dt: f64,
    start: f64,
    dim: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn new(dt: f64, start: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SignalError::BadStep(dt));
        }
        if dim == 0 {
            return Err(SignalError::ZeroDim);
        }
        if data.is_empty() {
            return Err(SignalError::Empty);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(SignalError::Ragged {
                index: data.len() / dim,
                len: data.len() % dim,
                dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite { index: pos / dim });
        }
        if !start.is_finite() {
            return Err(SignalError::NonFinite { index: 0 });
        }
        Ok(Self {
            dt,
            start,
            dim,
            data,
        })
    }

    /// Builds a signal starting at 0 from one vector per grid point.
    pub fn from_samples(dt: f64, samples: &[Vec<f64>]) -> Result<Self> {
        let dim = samples.first().map(Vec::len).ok_or(SignalError::Empty)?;
        let mut data = Vec::with_capacity(dim * samples.len());
        for (index, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(SignalError::Ragged {
                    index,
                    len: s.len(),
                    dim,
                });
            }
            data.extend_from_slice(s);
        }
        Self::new(dt, 0.0, dim, data)
    }

    /// One-dimensional signal starting at 0.
    pub fn from_scalars(dt: f64, values: &[f64]) -> Result<Self> {
        Self::new(dt, 0.0, 1, values.to_vec())
    }

    pub fn constant(dt: f64, len: usize, value: &[f64]) -> Result<Self> {
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(value.len() * len)
            .collect();
        Self::new(dt, 0.0, value.len(), data)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Time of the last grid point.
    pub fn end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn time(&self, index: usize) -> f64 {
        self.start + index as f64 * self.dt
    }

    pub fn sample(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Values of one channel over the whole grid.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.samples().map(|s| s[channel]).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let slack = GRID_EPS * self.dt;
        if !t.is_finite() || t < self.start - slack || t > self.end() + slack {
            return Err(SignalError::OutOfRange {
                t,
                start: self.start,
                end: self.end(),
            });
        }
        Ok(())
    }

    /// Index of the grid point nearest to `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.check_range(t)?;
        let pos = ((t - self.start) / self.dt).round().max(0.0) as usize;
        Ok(pos.min(self.len() - 1))
    }

    /// Linear interpolation between the two bracketing samples.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        self.check_range(t)?;
        let pos = ((t - self.start) / self.dt).max(0.0);
        let nearest = pos.round();
        if (pos - nearest).abs() <= GRID_EPS || pos >= (self.len() - 1) as f64 {
            let i = (nearest as usize).min(self.len() - 1);
            return Ok(self.sample(i).to_vec());
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let (a, b) = (self.sample(i), self.sample(i + 1));
        Ok(a.iter().zip(b).map(|(&a, &b)| a + frac * (b - a)).collect())
    }

    /// Suffix of the signal starting `t` time units after `start`, re-indexed
    /// to start at 0. `t` is snapped to the nearest grid point.
    pub fn shift(&self, t: f64) -> Result<Signal> {
        let k = self.index_of(self.start + t)?;
        Ok(Signal {
            dt: self.dt,
            start: 0.0,
            dim: self.dim,
            data: self.data[k * self.dim..].to_vec(),
        })
    }

    /// The first `len` samples (at least one).
    pub fn prefix(&self, len: usize) -> Signal {
        let len = len.clamp(1, self.len());
        Signal {
            dt: self.dt,
            start: self.start,
            dim: self.dim,
            data: self.data[..len * self.dim].to_vec(),
        }
    }

    /// Restriction to `[start, t]`, `t` snapped to the grid.
    pub fn truncate_at(&self, t: f64) -> Result<Signal> {
        let k = self.index_of(t)?;
        Ok(self.prefix(k + 1))
    }
}

/// A piecewise-linear partial control signal on `[t_lower, t_upper]`.
///
/// The `k` knot values sit at equally spaced times including both window
/// endpoints. Knots are clamped into `bounds` on construction, so every
/// rendered sample is admissible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPatch {
    t_lower: f64,
    t_upper: f64,
    points: Vec<f64>,
    bounds: Bounds,
}

impl ControlPatch {
    pub fn new(t_lower: f64, t_upper: f64, points: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if !(t_lower.is_finite() && t_upper.is_finite()) || t_lower < 0.0 || t_lower >= t_upper {
            return Err(SignalError::BadPatch(format!(
                "window [{t_lower}, {t_upper}] must satisfy 0 <= lower < upper"
            )));
        }
        if points.len() < 2 {
            return Err(SignalError::BadPatch(format!(
                "need at least 2 knots, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(SignalError::BadPatch("non-finite knot".into()));
        }
        let points = points.into_iter().map(|p| bounds.clamp(p)).collect();
        Ok(Self {
            t_lower,
            t_upper,
            points,
            bounds,
        })
    }

    pub fn t_lower(&self) -> f64 {
        self.t_lower
    }

    pub fn t_upper(&self) -> f64 {
        self.t_upper
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_lower && t <= self.t_upper
    }

    /// Patch value at `t`; times outside the window take the nearest endpoint.
    pub fn value(&self, t: f64) -> f64 {
        let segments = (self.points.len() - 1) as f64;
        let s = ((t - self.t_lower) / (self.t_upper - self.t_lower) * segments).clamp(0.0, segments);
        let i = (s.floor() as usize).min(self.points.len() - 2);
        let frac = s - i as f64;
        let (a, b) = (self.points[i], self.points[i + 1]);
        self.bounds.clamp(a + frac * (b - a))
    }

    /// One-dimensional signal on the grid `t_lower + i*dt` covering the window.
    pub fn render(&self, dt: f64) -> Result<Signal> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SignalError::BadStep(dt));
        }
        let n = ((self.t_upper - self.t_lower) / dt).round() as usize + 1;
        let values: Vec<f64> = (0..n)
            .map(|i| self.value(self.t_lower + i as f64 * dt))
            .collect();
        Signal::new(dt, self.t_lower, 1, values)
    }
}

/// Replaces `base` by `patch` on the grid points of `[t_lower, t_upper]`.
pub fn splice(base: &Signal, patch: &Signal, t_lower: f64, t_upper: f64) -> Result<Signal> {
    if patch.dim() != base.dim() {
        return Err(SignalError::DimMismatch {
            expected: base.dim(),
            got: patch.dim(),
        });
    }
    let lo = base.index_of(t_lower)?;
    let hi = base.index_of(t_upper)?;
    let mut out = base.clone();
    for i in lo..=hi {
        let v = patch.value_at(base.time(i))?;
        out.data[i * base.dim..(i + 1) * base.dim].copy_from_slice(&v);
    }
    Ok(out)
}

/// Root-mean-square difference between the patch and a one-dimensional
/// `original` on the grid points inside the patch window.
pub fn patch_distance(patch: &ControlPatch, original: &Signal) -> Result<f64> {
    if original.dim() != 1 {
        return Err(SignalError::DimMismatch {
            expected: 1,
            got: original.dim(),
        });
    }
    let lo = original.index_of(patch.t_lower)?;
    let hi = original.index_of(patch.t_upper)?;
    let rendered = patch.render(original.dt())?;
    let sum: f64 = (lo..=hi)
        .map(|i| {
            let k = (i - lo).min(rendered.len() - 1);
            let d = rendered.sample(k)[0] - original.sample(i)[0];
            d * d
        })
        .sum();
    Ok((sum / (hi - lo + 1) as f64).sqrt())
}
