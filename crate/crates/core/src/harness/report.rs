//! Report files: safety table, metric comparison, timing table, manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{normalize, MetricReport};
use super::Result;
use crate::plant::PlantId;
use crate::repair::Strategy;

pub const SAFETY_TABLE: &str = "safety.csv";
pub const TIMING_TABLE: &str = "timing.csv";
pub const METRICS_TABLE: &str = "metrics_normalized.csv";
pub const RAW_METRICS_TABLE: &str = "metrics_raw.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub already_safe: usize,
    pub repaired: usize,
    pub failed: usize,
    pub retrain_rows: usize,
    pub best_epoch: usize,
    pub train: MetricReport,
    pub test: MetricReport,
    /// Wall-clock seconds spent repairing the unsafe train traces.
    pub repair_seconds: f64,
}

/// Wall-clock cost summary; not reproducible across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub system: String,
    /// Mean seconds per closed-loop simulation.
    pub sim: f64,
    /// Mean seconds per repaired unsafe trace, over all strategies.
    pub avg_cost: f64,
    pub violations: usize,
    pub traces: usize,
    /// `avg_cost * violations`.
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub plant: PlantId,
    pub requirement: String,
    pub master_seed: u64,
    /// Train-set safety rates are measured on the exact sampled train inputs.
    pub train_rates_reuse_inputs: bool,
    pub original_train: MetricReport,
    pub original_test: MetricReport,
    pub strategies: Vec<StrategyResult>,
    pub timing: TimingRow,
    pub failures: Vec<String>,
    pub files: Vec<String>,
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

impl StudyReport {
    pub fn write_safety_table(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(SAFETY_TABLE))?;
        w.write_record(["controller", "train", "test"])?;
        w.write_record(["Original", &fmt(self.original_train.safety_rate), &fmt(self.original_test.safety_rate)])?;
        for s in &self.strategies {
            w.write_record([s.strategy.name(), &fmt(s.train.safety_rate), &fmt(s.test.safety_rate)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timing_table(&self, dir: &Path) -> Result<()> {
        let t = &self.timing;
        let mut w = csv::Writer::from_path(dir.join(TIMING_TABLE))?;
        w.write_record(["system", "sim", "avg_cost", "vio_ratio", "total_cost"])?;
        w.write_record([
            t.system.clone(),
            format!("{:.6e}", t.sim),
            format!("{:.6e}", t.avg_cost),
            format!("{}/{}", t.violations, t.traces),
            format!("{:.6e}", t.total_cost),
        ])?;
        w.flush()?;
        Ok(())
    }

    /// Test-set metric means: one row per metric, one column per controller.
    /// The normalized file maps each row onto `[0, 1]`.
    pub fn write_metric_tables(&self, dir: &Path) -> Result<()> {
        let mut header = vec!["metric".to_string(), "Original".to_string()];
        header.extend(self.strategies.iter().map(|s| s.strategy.name().to_string()));
        let mut raw = csv::Writer::from_path(dir.join(RAW_METRICS_TABLE))?;
        let mut norm = csv::Writer::from_path(dir.join(METRICS_TABLE))?;
        raw.write_record(&header)?;
        norm.write_record(&header)?;
        let reports: Vec<&MetricReport> = std::iter::once(&self.original_test)
            .chain(self.strategies.iter().map(|s| &s.test))
            .collect();
        let mut rows: Vec<(&str, Vec<Option<f64>>)> = reports[0]
            .entries(self.plant)
            .iter()
            .enumerate()
            .map(|(k, (name, _))| (*name, reports.iter().map(|r| r.entries(self.plant)[k].1).collect()))
            .collect();
        rows.push(("safety_rate", reports.iter().map(|r| Some(r.safety_rate)).collect()));
        for (name, values) in rows {
            let mut r = vec![name.to_string()];
            r.extend(values.iter().map(|v| opt(*v)));
            raw.write_record(&r)?;
            let mut n = vec![name.to_string()];
            n.extend(normalize(&values).iter().map(|v| opt(*v)));
            norm.write_record(&n)?;
        }
        raw.flush()?;
        norm.flush()?;
        Ok(())
    }

    pub fn write_manifest(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }
}
