//! Safety rate and per-trace performance metrics.

use serde::{Deserialize, Serialize};

use super::Result;
use crate::plant::{ExecutionTrace, PlantId, PlantModel, PlantParams};
use crate::stl::{pointwise_margin, robustness, Formula};

/// Fraction of traces whose output satisfies `phi` (robustness >= 0); 1.0
/// for an empty set.
pub fn safety_rate<'a, I>(traces: I, phi: &Formula) -> Result<f64>
where
    I: IntoIterator<Item = &'a ExecutionTrace>,
{
    let mut total = 0usize;
    let mut safe = 0usize;
    for t in traces {
        total += 1;
        if robustness(&t.w, phi)? >= 0.0 {
            safe += 1;
        }
    }
    Ok(if total == 0 { 1.0 } else { safe as f64 / total as f64 })
}

/// Metric values of one trace; fields that do not apply to the plant, or
/// have no defined value for the trace, are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub space: Option<f64>,
    pub speed: Option<f64>,
    pub steadiness: Option<f64>,
    pub resilience: Option<f64>,
    pub comfort: Option<f64>,
    pub error: Option<f64>,
}

/// Means of the metrics over a trace set, plus its safety rate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub safety_rate: f64,
    pub traces: usize,
    pub space: Option<f64>,
    pub speed: Option<f64>,
    pub steadiness: Option<f64>,
    pub resilience: Option<f64>,
    pub comfort: Option<f64>,
    pub error: Option<f64>,
}

impl MetricReport {
    /// `(name, value)` pairs of the metrics reported for `plant`.
    pub fn entries(&self, plant: PlantId) -> Vec<(&'static str, Option<f64>)> {
        match plant {
            PlantId::Acc => vec![
                ("space", self.space),
                ("speed", self.speed),
                ("steadiness", self.steadiness),
                ("resilience", self.resilience),
                ("comfort", self.comfort),
            ],
            PlantId::Afc | PlantId::Wt => {
                vec![("error", self.error), ("steadiness", self.steadiness)]
            }
        }
    }
}

/// Instantaneous safety per grid interval `[t_i, t_{i+1})` covered by the
/// requirement's windows: `Some(holds)` or `None` when uncovered.
fn interval_safety(m: &[Option<f64>]) -> Vec<Option<bool>> {
    (0..m.len().saturating_sub(1))
        .map(|i| match (m[i], m[i + 1]) {
            (Some(v), Some(_)) => Some(v >= 0.0),
            _ => None,
        })
        .collect()
}

pub fn trace_metrics(model: &PlantModel, trace: &ExecutionTrace, phi: &Formula) -> Result<TraceMetrics> {
    let dt = model.dt;
    let margins = pointwise_margin(&trace.w, phi)?;
    let (steadiness, resilience) = match &margins {
        Some(m) => {
            let cover = interval_safety(m);
            let covered = cover.iter().filter(|c| c.is_some()).count();
            let good = cover.iter().filter(|c| **c == Some(true)).count();
            let mut runs = Vec::new();
            let mut len = 0usize;
            for c in &cover {
                if *c == Some(false) {
                    len += 1;
                } else if len > 0 {
                    runs.push(len);
                    len = 0;
                }
            }
            if len > 0 {
                runs.push(len);
            }
            let steadiness = (covered > 0).then(|| good as f64 / covered as f64);
            let resilience = if runs.is_empty() {
                0.0
            } else {
                runs.iter().sum::<usize>() as f64 * dt / runs.len() as f64
            };
            (steadiness, Some(resilience))
        }
        None => (None, None),
    };

    let n = trace.len();
    let mut out = TraceMetrics {
        steadiness,
        ..TraceMetrics::default()
    };
    match &model.params {
        PlantParams::Acc(p) => {
            out.space = Some(trace.x.sample(n - 1)[2] - trace.x.sample(0)[2]);
            let safe_speeds: Vec<f64> = (0..n)
                .filter(|&i| margins.as_ref().is_some_and(|m| m[i].is_some_and(|v| v >= 0.0)))
                .map(|i| (trace.x.sample(i)[3] - p.v_set).abs())
                .collect();
            out.speed = mean(&safe_speeds);
            out.resilience = resilience;
            out.comfort = Some(
                (1..n)
                    .map(|i| (trace.x.sample(i)[4] - trace.x.sample(i - 1)[4]).abs() / dt)
                    .fold(0.0, f64::max),
            );
        }
        PlantParams::Afc(_) | PlantParams::Wt(_) => {
            let e: Vec<f64> = trace.w.samples().map(|s| s[0].abs()).collect();
            out.error = mean(&e);
        }
    }
    Ok(out)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn mean_of(items: &[TraceMetrics], f: impl Fn(&TraceMetrics) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = items.iter().filter_map(f).collect();
    mean(&v)
}

pub fn summarize(model: &PlantModel, traces: &[ExecutionTrace], phi: &Formula) -> Result<MetricReport> {
    let per: Vec<TraceMetrics> = traces
        .iter()
        .map(|t| trace_metrics(model, t, phi))
        .collect::<Result<_>>()?;
    Ok(MetricReport {
        safety_rate: safety_rate(traces, phi)?,
        traces: traces.len(),
        space: mean_of(&per, |m| m.space),
        speed: mean_of(&per, |m| m.speed),
        steadiness: mean_of(&per, |m| m.steadiness),
        resilience: mean_of(&per, |m| m.resilience),
        comfort: mean_of(&per, |m| m.comfort),
        error: mean_of(&per, |m| m.error),
    })
}

/// Maps each value to `[0, 1]` over the range of all given values; a
/// constant (or single) set maps to 0.5. Missing values stay missing.
pub fn normalize(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let present = values.iter().flatten();
    let lo = present.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = present.copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| {
            v.map(|x| {
                if hi > lo {
                    (x - lo) / (hi - lo)
                } else {
                    0.5
                }
            })
        })
        .collect()
}
