//! Diagnosis-guided repair of unsafe executions by control signal patches,
//! and collection of the repaired behavior for retraining.

mod select;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerError, Dataset, Policy};
use crate::moo::{evolve, MooError, NsgaConfig, Problem};
use crate::plant::{simulate, ExecutionTrace, PlantError, PlantModel};
use crate::signal::{patch_distance, ControlPatch, SignalError};
use crate::stl::{diagnose, pointwise_margin, robustness, Formula, StlError, ViolationEpisode};

pub use select::select_optimum;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("invalid repair configuration: {0}")]
    BadConfig(String),
    #[error("cannot select from an empty front")]
    EmptyFront,
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Moo(#[from] MooError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

pub type Result<T> = std::result::Result<T, RepairError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    MinSat,
    Random,
    Similar,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::MinSat, Strategy::Similar, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MinSat => "MinSat",
            Strategy::Random => "Random",
            Strategy::Similar => "Similar",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = RepairError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minsat" => Ok(Strategy::MinSat),
            "random" => Ok(Strategy::Random),
            "similar" => Ok(Strategy::Similar),
            _ => Err(RepairError::BadConfig(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub strategy: Strategy,
    /// Knots per patch.
    pub knots: usize,
    /// Maximum number of diagnose/patch/rerun iterations.
    pub budget: usize,
    pub nsga: NsgaConfig,
    pub seed: u64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Similar,
            knots: 4,
            budget: 5,
            nsga: NsgaConfig::default(),
            seed: 0,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knots < 2 {
            return Err(RepairError::BadConfig(format!("need at least 2 knots, got {}", self.knots)));
        }
        if self.budget < 1 {
            return Err(RepairError::BadConfig("budget must be at least 1".into()));
        }
        self.nsga.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairStatus {
    AlreadySafe,
    Repaired,
    Failed,
}

/// What happened in one diagnose/patch/rerun round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub episode: ViolationEpisode,
    /// Violation episodes of the trace entering this round.
    pub violations: usize,
    pub robustness_before: f64,
    /// Objectives of the selected solution; empty if none was usable.
    pub objectives: Vec<f64>,
    pub patch: Option<ControlPatch>,
    /// Full-horizon robustness after the rerun.
    pub robustness_after: Option<f64>,
    pub front_size: usize,
    pub non_finite: usize,
}

#[derive(Debug, Clone)]
pub struct RepairOutcome {
    pub status: RepairStatus,
    /// The repaired trace, the original one, or the best trace seen on failure.
    pub trace: ExecutionTrace,
    pub robustness: f64,
    pub iterations: Vec<IterationRecord>,
}

/// Serializable summary of a repair run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub seed: u64,
    pub status: RepairStatus,
    pub initial_robustness: f64,
    pub final_robustness: f64,
    pub patches: Vec<ControlPatch>,
    pub iterations: Vec<IterationRecord>,
}

impl RepairOutcome {
    pub fn patches(&self) -> &[ControlPatch] {
        &self.trace.patches
    }

    /// Robustness after each round, in order.
    pub fn robustness_history(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .map(|r| r.robustness_after.unwrap_or(r.robustness_before))
            .collect()
    }

    pub fn report(&self) -> RepairReport {
        RepairReport {
            seed: self.trace.seed,
            status: self.status,
            initial_robustness: self
                .iterations
                .first()
                .map_or(self.robustness, |r| r.robustness_before),
            final_robustness: self.robustness,
            patches: self.trace.patches.clone(),
            iterations: self.iterations.clone(),
        }
    }
}

/// Number of maximal runs of negative margin for formulas of the safety
/// fragment; a violated formula outside it counts as one episode.
pub fn count_violations(w: &crate::signal::Signal, phi: &Formula) -> Result<usize> {
    match pointwise_margin(w, phi)? {
        Some(margins) => {
            let mut count = 0;
            let mut inside = false;
            for m in margins {
                let bad = m.is_some_and(|v| v < 0.0);
                if bad && !inside {
                    count += 1;
                }
                inside = bad;
            }
            Ok(count)
        }
        None => Ok(usize::from(robustness(w, phi)? < 0.0)),
    }
}

/// The patch search of one round: decision `(g1, g2, knots..)`.
pub(crate) struct PatchProblem<'a, P: Policy + ?Sized> {
    pub model: &'a PlantModel,
    pub policy: &'a P,
    pub phi: &'a Formula,
    pub base: &'a ExecutionTrace,
    pub patches: &'a [ControlPatch],
    /// Grid indices of the episode.
    pub start: usize,
    pub end: usize,
    pub knots: usize,
}

impl<P: Policy + ?Sized> PatchProblem<'_, P> {
    /// Patch window as grid indices `(lo, hi)` with `lo <= start`,
    /// `lo < hi <= end`.
    pub fn window(&self, g1: f64, g2: f64) -> (usize, usize) {
        let dt = self.model.dt;
        let t_s = self.start as f64 * dt;
        let t_e = self.end as f64 * dt;
        let lo = ((t_s * g1.clamp(0.0, 1.0) / dt).round() as usize).min(self.start);
        let t_l = lo as f64 * dt;
        let g2 = g2.clamp(0.0, 1.0).max(dt / t_e);
        let t_u = t_l + (t_e - t_l) * g2;
        let hi = ((t_u / dt).round() as usize).clamp(lo + 1, self.end);
        (lo, hi)
    }

    pub fn patch(&self, x: &[f64]) -> Result<ControlPatch> {
        let (lo, hi) = self.window(x[0], x[1]);
        let dt = self.model.dt;
        Ok(ControlPatch::new(
            lo as f64 * dt,
            hi as f64 * dt,
            x[2..].to_vec(),
            self.model.bounds,
        )?)
    }

    fn objectives(&self, x: &[f64]) -> Result<Vec<f64>> {
        let patch = self.patch(x)?;
        let (lo, hi) = self.window(x[0], x[1]);
        let mut all = self.patches.to_vec();
        all.push(patch.clone());
        let w = self
            .base
            .resimulate_output(self.model, self.policy, &all, lo, self.end)?;
        let f1 = -robustness(&w, self.phi)?;
        let f2 = patch_distance(&patch, &self.base.c)?;
        let f3 = (hi - lo) as f64 / self.end as f64;
        Ok(vec![f1, f2, f3])
    }
}

impl<P: Policy + ?Sized> Problem for PatchProblem<'_, P> {
    fn bounds(&self) -> Vec<(f64, f64)> {
        let b = self.model.bounds;
        let mut v = vec![(0.0, 1.0), (0.0, 1.0)];
        v.extend(std::iter::repeat_n((b.lo, b.hi), self.knots));
        v
    }

    fn num_objectives(&self) -> usize {
        3
    }

    fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.objectives(x).unwrap_or_else(|_| vec![f64::NAN; 3])
    }
}

fn grid_index(m: &PlantModel, t: f64) -> usize {
    (t / m.dt).round() as usize
}

/// Repairs `trace` by iteratively patching the control around the first
/// violation episode and re-running the closed loop.
///
/// # Panics
///
/// Panics if a selected patch leaves the window allowed by its episode, or if
/// the robustness the optimizer reported for it differs from the one
/// recomputed on the rerun trace.
pub fn diag_and_repair<P: Policy + ?Sized>(
    m: &PlantModel,
    policy: &P,
    phi: &Formula,
    trace: &ExecutionTrace,
    cfg: &RepairConfig,
) -> Result<RepairOutcome> {
    cfg.validate()?;
    let rho0 = robustness(&trace.w, phi)?;
    if rho0 >= 0.0 {
        return Ok(RepairOutcome {
            status: RepairStatus::AlreadySafe,
            trace: trace.clone(),
            robustness: rho0,
            iterations: Vec::new(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = trace.clone();
    let mut rho = rho0;
    let mut best = (rho0, trace.clone());
    let mut iterations = Vec::new();

    for round in 0..cfg.budget {
        let episode = diagnose(&current.w, phi)?;
        let start = grid_index(m, episode.tau_start);
        let end = grid_index(m, episode.tau_end);
        let problem = PatchProblem {
            model: m,
            policy,
            phi,
            base: &current,
            patches: &current.patches,
            start,
            end,
            knots: cfg.knots,
        };
        let nsga = NsgaConfig {
            seed: cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(round as u64),
            ..cfg.nsga.clone()
        };
        let evolution = evolve(&problem, &nsga)?;
        let front: Vec<_> = evolution
            .front
            .into_iter()
            .filter(|i| i.objectives.iter().all(|v| v.is_finite()))
            .collect();
        let mut record = IterationRecord {
            episode,
            violations: count_violations(&current.w, phi)?,
            robustness_before: rho,
            objectives: Vec::new(),
            patch: None,
            robustness_after: None,
            front_size: front.len(),
            non_finite: evolution.non_finite,
        };
        if front.is_empty() {
            iterations.push(record);
            break;
        }
        let chosen = select_optimum(&front, cfg.strategy, &mut rng)?;
        let patch = problem.patch(&chosen.decision)?;
        let eps = 1e-9 * m.dt;
        assert!(
            patch.t_lower() <= episode.tau_start + eps && patch.t_upper() <= episode.tau_end + eps,
            "patch [{}, {}] outside the episode bounds ({}, {})",
            patch.t_lower(),
            patch.t_upper(),
            episode.tau_start,
            episode.tau_end
        );

        let mut patches = current.patches.clone();
        patches.push(patch.clone());
        let mut next = simulate(m, policy, &current.u, &patches, current.initial_state())?;
        next.seed = current.seed;
        let truncated = robustness(&next.w.prefix(end + 1), phi)?;
        assert_eq!(
            (-truncated).to_bits(),
            chosen.objectives[0].to_bits(),
            "optimizer robustness disagrees with the rerun"
        );
        rho = robustness(&next.w, phi)?;
        record.objectives = chosen.objectives.clone();
        record.patch = Some(patch);
        record.robustness_after = Some(rho);
        iterations.push(record);
        current = next;
        if rho > best.0 {
            best = (rho, current.clone());
        }
        if rho >= 0.0 {
            return Ok(RepairOutcome {
                status: RepairStatus::Repaired,
                trace: current,
                robustness: rho,
                iterations,
            });
        }
    }
    Ok(RepairOutcome {
        status: RepairStatus::Failed,
        trace: best.1,
        robustness: best.0,
        iterations,
    })
}

/// Appends the (features, applied control) pair of every grid point of each
/// usable final trace to a copy of `original`. Failed outcomes are skipped.
pub fn build_retraining_set(m: &PlantModel, outcomes: &[RepairOutcome], original: &Dataset) -> Result<Dataset> {
    let mut data = original.clone();
    let mut f = vec![0.0; m.feature_dim()];
    for o in outcomes.iter().filter(|o| o.status != RepairStatus::Failed) {
        let tr = &o.trace;
        for i in 0..tr.len() {
            m.features(tr.x.sample(i), tr.u.sample(i), &mut f);
            data.push(&f, tr.c.sample(i)[0])?;
        }
    }
    Ok(data)
}
