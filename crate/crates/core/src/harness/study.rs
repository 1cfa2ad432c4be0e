use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::bootstrap::bootstrap;
use super::metrics::summarize;
use super::report::{
    StrategyResult, StudyReport, TimingRow, MANIFEST, METRICS_TABLE, RAW_METRICS_TABLE, SAFETY_TABLE,
    TIMING_TABLE,
};
use super::{HarnessError, Result, StudyConfig, BOOTSTRAP_SEED_OFFSET, REPAIR_SEED_OFFSET, TEST_SEED_OFFSET};
use crate::controller::{self, train, Dataset, MlpController, Policy, TrainConfig};
use crate::plant::{sample_initial, simulate, ExecutionTrace, PlantModel};
use crate::repair::{build_retraining_set, diag_and_repair, RepairConfig, RepairOutcome, RepairStatus};
use crate::signal::Signal;
use crate::stl::{parse, Formula};

/// Sampled inputs of one trace set, keyed by seed.
struct Inputs {
    seeds: Vec<u64>,
    x0: Vec<Vec<f64>>,
    u: Vec<Signal>,
}

fn sample_inputs(m: &PlantModel, first_seed: u64, count: usize) -> Inputs {
    let seeds: Vec<u64> = (0..count as u64).map(|i| first_seed.wrapping_add(i)).collect();
    let (x0, u) = seeds
        .iter()
        .map(|&s| sample_initial(m, &mut ChaCha8Rng::seed_from_u64(s)))
        .unzip();
    Inputs { seeds, x0, u }
}

/// Simulates every input with `policy`; returns the traces that completed
/// (in input order), their positions, and one message per failure.
fn run_set<P: Policy + ?Sized>(
    m: &PlantModel,
    policy: &P,
    inputs: &Inputs,
    label: &str,
) -> (Vec<ExecutionTrace>, Vec<usize>, Vec<String>, f64) {
    let results: Vec<(std::result::Result<ExecutionTrace, String>, f64)> = (0..inputs.seeds.len())
        .into_par_iter()
        .map(|i| {
            let start = Instant::now();
            let r = simulate(m, policy, &inputs.u[i], &[], &inputs.x0[i])
                .map(|mut t| {
                    t.seed = inputs.seeds[i];
                    t
                })
                .map_err(|e| format!("{label} trace {} (seed {}): {e}", i, inputs.seeds[i]));
            (r, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut traces = Vec::new();
    let mut index = Vec::new();
    let mut failures = Vec::new();
    let mut seconds = 0.0;
    for (i, (r, s)) in results.into_iter().enumerate() {
        seconds += s;
        match r {
            Ok(t) => {
                traces.push(t);
                index.push(i);
            }
            Err(msg) => {
                warn!("{msg}");
                failures.push(msg);
            }
        }
    }
    (traces, index, failures, seconds)
}

/// Samples `count` traces of `policy` with seeds `first_seed..`.
pub fn sample_traces<P: Policy + ?Sized>(
    m: &PlantModel,
    policy: &P,
    first_seed: u64,
    count: usize,
) -> Result<Vec<ExecutionTrace>> {
    let inputs = sample_inputs(m, first_seed, count);
    let (traces, _, failures, _) = run_set(m, policy, &inputs, "sampled");
    match failures.into_iter().next() {
        Some(msg) => Err(HarnessError::Config(msg)),
        None => Ok(traces),
    }
}

fn load_original(cfg: &StudyConfig, m: &PlantModel) -> Result<(MlpController, Dataset)> {
    let ctrl = match &cfg.controller {
        Some(path) => Some(controller::load(path)?),
        None => None,
    };
    let data = match &cfg.dataset {
        Some(path) => Some(Dataset::read_csv(fs::File::open(path)?)?),
        None => None,
    };
    let (ctrl, data) = match (ctrl, data) {
        (Some(c), Some(d)) => (c, d),
        (Some(c), None) => (c, Dataset::new(m.feature_dim())),
        (None, data) => {
            let seed = cfg.master_seed.wrapping_add(BOOTSTRAP_SEED_OFFSET);
            let (c, demo) = bootstrap(m, &cfg.bootstrap_config(), seed)?;
            (c, data.unwrap_or(demo))
        }
    };
    if ctrl.layer_sizes()[0] != m.feature_dim() || data.dim() != m.feature_dim() {
        return Err(HarnessError::Config(format!(
            "controller/dataset input width does not match the {} plant features ({})",
            m.id(),
            m.feature_dim()
        )));
    }
    Ok((ctrl, data))
}

fn persist(dir: &Path, group: &str, set: &str, traces: &[ExecutionTrace]) -> Result<()> {
    let d = dir.join("traces").join(group);
    fs::create_dir_all(&d)?;
    for t in traces {
        let f = fs::File::create(d.join(format!("{set}_{}.csv", t.seed)))?;
        t.write_csv(std::io::BufWriter::new(f))?;
    }
    Ok(())
}

/// Runs the full sample / repair / retrain / re-evaluate study and writes
/// its report tree to the configured output directory.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let m = cfg.plant_model();
    let requirement = cfg.requirement_text();
    let phi: Formula = parse(&requirement, m.output_names())?;
    let out_dir = cfg.resolved_output_dir();
    fs::create_dir_all(&out_dir)?;

    let (original, original_data) = load_original(cfg, &m)?;
    controller::save(&original, out_dir.join("controller_original.json"))?;

    let train_inputs = sample_inputs(&m, cfg.master_seed, cfg.train_traces);
    let test_inputs = sample_inputs(&m, cfg.master_seed.wrapping_add(TEST_SEED_OFFSET), cfg.test_traces);

    let (train_traces, _, mut failures, sim_seconds) = run_set(&m, &original, &train_inputs, "train");
    let (test_traces, _, f, _) = run_set(&m, &original, &test_inputs, "test");
    failures.extend(f);
    let original_train = summarize(&m, &train_traces, &phi)?;
    let original_test = summarize(&m, &test_traces, &phi)?;
    info!(
        "{}: original safety rate train {:.4}, test {:.4}",
        m.id(),
        original_train.safety_rate,
        original_test.safety_rate
    );
    if cfg.persist_traces {
        persist(&out_dir, "Original", "train", &train_traces)?;
        persist(&out_dir, "Original", "test", &test_traces)?;
    }

    let mut strategies = Vec::new();
    let mut repair_runs = 0usize;
    let mut repair_total = 0.0;
    let mut violations = 0usize;
    for &strategy in &cfg.strategies {
        let results: Vec<(std::result::Result<RepairOutcome, String>, f64)> = train_traces
            .par_iter()
            .map(|t| {
                let rc = RepairConfig {
                    strategy,
                    seed: t.seed.wrapping_add(REPAIR_SEED_OFFSET),
                    ..cfg.repair.clone()
                };
                let start = Instant::now();
                let r = diag_and_repair(&m, &original, &phi, t, &rc)
                    .map_err(|e| format!("{strategy} repair of seed {}: {e}", t.seed));
                (r, start.elapsed().as_secs_f64())
            })
            .collect();
        let mut outcomes = Vec::new();
        let mut seconds = 0.0;
        for (r, s) in results {
            match r {
                Ok(o) => {
                    if o.status != RepairStatus::AlreadySafe {
                        seconds += s;
                        repair_runs += 1;
                    }
                    outcomes.push(o);
                }
                Err(msg) => {
                    warn!("{msg}");
                    failures.push(msg);
                }
            }
        }
        repair_total += seconds;
        violations = outcomes.iter().filter(|o| o.status != RepairStatus::AlreadySafe).count();
        let count = |s: RepairStatus| outcomes.iter().filter(|o| o.status == s).count();

        let reports: Vec<_> = outcomes
            .iter()
            .filter(|o| o.status != RepairStatus::AlreadySafe)
            .map(|o| o.report())
            .collect();
        fs::write(
            out_dir.join(format!("repairs_{strategy}.json")),
            serde_json::to_string_pretty(&reports).expect("repair reports serialize"),
        )?;

        let retrain_set = build_retraining_set(&m, &outcomes, &original_data)?;
        let tc = TrainConfig {
            seed: cfg.master_seed,
            ..cfg.retrain.clone()
        };
        let trained = train(&original, &retrain_set, &tc)?;
        let repaired = trained.controller;
        controller::save(&repaired, out_dir.join(format!("controller_{strategy}.json")))?;

        let (rtrain, _, f1, _) = run_set(&m, &repaired, &train_inputs, &format!("{strategy} train"));
        let (rtest, _, f2, _) = run_set(&m, &repaired, &test_inputs, &format!("{strategy} test"));
        failures.extend(f1);
        failures.extend(f2);
        if cfg.persist_traces {
            persist(&out_dir, strategy.name(), "train", &rtrain)?;
            persist(&out_dir, strategy.name(), "test", &rtest)?;
        }
        let result = StrategyResult {
            strategy,
            already_safe: count(RepairStatus::AlreadySafe),
            repaired: count(RepairStatus::Repaired),
            failed: count(RepairStatus::Failed),
            retrain_rows: retrain_set.len(),
            best_epoch: trained.best_epoch,
            train: summarize(&m, &rtrain, &phi)?,
            test: summarize(&m, &rtest, &phi)?,
            repair_seconds: seconds,
        };
        info!(
            "{}/{strategy}: repaired {}/{} unsafe, safety rate train {:.4}, test {:.4}",
            m.id(),
            result.repaired,
            result.repaired + result.failed,
            result.train.safety_rate,
            result.test.safety_rate
        );
        strategies.push(result);
    }

    let avg_cost = if repair_runs > 0 {
        repair_total / repair_runs as f64
    } else {
        0.0
    };
    let timing = TimingRow {
        system: m.id().to_string().to_ascii_uppercase(),
        sim: sim_seconds / train_inputs.seeds.len() as f64,
        avg_cost,
        violations,
        traces: train_traces.len(),
        total_cost: avg_cost * violations as f64,
    };
    let mut files = vec![
        SAFETY_TABLE.to_string(),
        METRICS_TABLE.to_string(),
        RAW_METRICS_TABLE.to_string(),
        TIMING_TABLE.to_string(),
        MANIFEST.to_string(),
        "controller_original.json".to_string(),
    ];
    for s in &cfg.strategies {
        files.push(format!("controller_{s}.json"));
        files.push(format!("repairs_{s}.json"));
    }
    let report = StudyReport {
        plant: m.id(),
        requirement,
        master_seed: cfg.master_seed,
        train_rates_reuse_inputs: true,
        original_train,
        original_test,
        strategies,
        timing,
        failures,
        files,
    };
    report.write_safety_table(&out_dir)?;
    report.write_metric_tables(&out_dir)?;
    report.write_timing_table(&out_dir)?;
    report.write_manifest(&out_dir)?;
    Ok(report)
}
