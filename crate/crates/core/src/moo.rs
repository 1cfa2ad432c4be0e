//! NSGA-II over bounded real decision vectors.

use std::cmp::Ordering;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MooError {
    #[error("invalid optimizer configuration: {0}")]
    BadConfig(String),
    #[error("invalid problem: {0}")]
    BadProblem(String),
}

pub type Result<T> = std::result::Result<T, MooError>;

/// A minimization problem over a box.
pub trait Problem: Sync {
    /// `(lower, upper)` per decision variable.
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn num_objectives(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsgaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-variable mutation probability; `None` means `1 / dimension`.
    pub mutation_prob: Option<f64>,
    pub crossover_eta: f64,
    pub mutation_eta: f64,
    pub seed: u64,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        Self {
            population: 40,
            generations: 10,
            crossover_prob: 0.9,
            mutation_prob: None,
            crossover_eta: 15.0,
            mutation_eta: 20.0,
            seed: 0,
        }
    }
}

impl NsgaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(MooError::BadConfig(format!(
                "population must be even and at least 4, got {}",
                self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob)
            || self.mutation_prob.is_some_and(|p| !(0.0..=1.0).contains(&p))
        {
            return Err(MooError::BadConfig("probabilities must lie in [0, 1]".into()));
        }
        if !(self.crossover_eta >= 0.0 && self.mutation_eta >= 0.0) {
            return Err(MooError::BadConfig("distribution indices must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub decision: Vec<f64>,
    pub objectives: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    /// Front 0 of the final population.
    pub front: Vec<Individual>,
    pub population: Vec<Individual>,
    /// Evaluations that returned a non-finite or malformed objective vector.
    pub non_finite: usize,
    pub evaluations: usize,
    /// Best value of each objective over the population, per generation
    /// (entry 0 is the initial population).
    pub best_per_generation: Vec<Vec<f64>>,
}

/// `a` dominates `b`: no worse in every objective, better in at least one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Fast non-dominated sorting; fronts list indices in ascending order.
pub fn non_dominated_sort(objectives: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&objectives[i], &objectives[j]) {
                dominated_by_me[i].push(j);
                count[j] += 1;
            } else if dominates(&objectives[j], &objectives[i]) {
                dominated_by_me[j].push(i);
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front, in input order.
pub fn crowding_distance(front: &[&[f64]]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    let mut dist = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        order.sort_by(|&a, &b| front[a][k].total_cmp(&front[b][k]));
        let lo = front[order[0]][k];
        let hi = front[order[n - 1]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if !(range.is_finite() && range > 0.0) {
            continue;
        }
        for w in 1..n - 1 {
            let gap = front[order[w + 1]][k] - front[order[w - 1]][k];
            if gap.is_finite() {
                dist[order[w]] += gap / range;
            }
        }
    }
    dist
}

/// Assigns rank and crowding in place.
fn rank_population(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let objs: Vec<Vec<f64>> = pop.iter().map(|p| p.objectives.clone()).collect();
    let fronts = non_dominated_sort(&objs);
    for (r, front) in fronts.iter().enumerate() {
        let members: Vec<&[f64]> = front.iter().map(|&i| objs[i].as_slice()).collect();
        let cd = crowding_distance(&members);
        for (&i, d) in front.iter().zip(cd) {
            pop[i].rank = r;
            pop[i].crowding = d;
        }
    }
    fronts
}

fn better(a: &Individual, b: &Individual) -> Ordering {
    a.rank
        .cmp(&b.rank)
        .then_with(|| b.crowding.total_cmp(&a.crowding))
}

fn tournament<'a, R: Rng>(pop: &'a [Individual], rng: &mut R) -> &'a Individual {
    let a = &pop[rng.gen_range(0..pop.len())];
    let b = &pop[rng.gen_range(0..pop.len())];
    match better(a, b) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if rng.gen_bool(0.5) {
                a
            } else {
                b
            }
        }
    }
}

/// Simulated binary crossover with bound-aware spread.
fn sbx<R: Rng>(p1: &[f64], p2: &[f64], bounds: &[(f64, f64)], eta: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !rng.gen_bool(0.5) || (p1[i] - p2[i]).abs() <= 1e-14 || hi <= lo {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let r: f64 = rng.gen();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if r <= 1.0 / alpha {
                (r * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - r * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let beta_lo = 1.0 + 2.0 * (y1 - lo) / (y2 - y1);
        let q = spread(beta_lo);
        let a = (0.5 * ((y1 + y2) - q * (y2 - y1))).clamp(lo, hi);
        let beta_hi = 1.0 + 2.0 * (hi - y2) / (y2 - y1);
        let q = spread(beta_hi);
        let b = (0.5 * ((y1 + y2) + q * (y2 - y1))).clamp(lo, hi);
        if rng.gen_bool(0.5) {
            c1[i] = b;
            c2[i] = a;
        } else {
            c1[i] = a;
            c2[i] = b;
        }
    }
    (c1, c2)
}

/// Bounded polynomial mutation.
fn mutate<R: Rng>(x: &mut [f64], bounds: &[(f64, f64)], prob: f64, eta: f64, rng: &mut R) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        if hi <= lo || !rng.gen_bool(prob) {
            continue;
        }
        let d1 = (*v - lo) / (hi - lo);
        let d2 = (hi - *v) / (hi - lo);
        let r: f64 = rng.gen();
        let pow = 1.0 / (eta + 1.0);
        let dq = if r < 0.5 {
            let xy = 1.0 - d1;
            let val = 2.0 * r + (1.0 - 2.0 * r) * xy.powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let xy = 1.0 - d2;
            let val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * xy.powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        *v = (*v + dq * (hi - lo)).clamp(lo, hi);
    }
}

fn evaluate_all<P: Problem + ?Sized>(p: &P, decisions: Vec<Vec<f64>>, m: usize, non_finite: &mut usize) -> Vec<Individual> {
    let objs: Vec<Vec<f64>> = decisions.par_iter().map(|d| p.evaluate(d)).collect();
    decisions
        .into_iter()
        .zip(objs)
        .map(|(decision, mut objectives)| {
            if objectives.len() != m || objectives.iter().any(|v| !v.is_finite()) {
                *non_finite += 1;
                objectives = vec![f64::INFINITY; m];
            }
            Individual {
                decision,
                objectives,
                rank: 0,
                crowding: 0.0,
            }
        })
        .collect()
}

fn best_values(pop: &[Individual], m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| pop.iter().map(|p| p.objectives[k]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Runs NSGA-II for `cfg.generations` offspring generations after the
/// initial random population.
pub fn evolve<P: Problem + ?Sized>(p: &P, cfg: &NsgaConfig) -> Result<Evolution> {
    cfg.validate()?;
    let bounds = p.bounds();
    if bounds.is_empty() {
        return Err(MooError::BadProblem("no decision variables".into()));
    }
    if let Some((i, _)) = bounds
        .iter()
        .enumerate()
        .find(|(_, (lo, hi))| !(lo.is_finite() && hi.is_finite() && lo <= hi))
    {
        return Err(MooError::BadProblem(format!("bad bounds for variable {i}")));
    }
    let m = p.num_objectives();
    if m == 0 {
        return Err(MooError::BadProblem("no objectives".into()));
    }
    let dim = bounds.len();
    let pm = cfg.mutation_prob.unwrap_or(1.0 / dim as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut non_finite = 0;

    let init: Vec<Vec<f64>> = (0..cfg.population)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect()
        })
        .collect();
    let mut pop = evaluate_all(p, init, m, &mut non_finite);
    rank_population(&mut pop);
    let mut history = vec![best_values(&pop, m)];

    for _ in 0..cfg.generations {
        let mut children = Vec::with_capacity(cfg.population);
        while children.len() < cfg.population {
            let a = tournament(&pop, &mut rng).decision.clone();
            let b = tournament(&pop, &mut rng).decision.clone();
            let (mut c1, mut c2) = if rng.gen_bool(cfg.crossover_prob) {
                sbx(&a, &b, &bounds, cfg.crossover_eta, &mut rng)
            } else {
                (a, b)
            };
            mutate(&mut c1, &bounds, pm, cfg.mutation_eta, &mut rng);
            mutate(&mut c2, &bounds, pm, cfg.mutation_eta, &mut rng);
            children.push(c1);
            children.push(c2);
        }
        let offspring = evaluate_all(p, children, m, &mut non_finite);
        pop.extend(offspring);
        let fronts = rank_population(&mut pop);
        let mut keep = Vec::with_capacity(cfg.population);
        for front in fronts {
            if keep.len() + front.len() <= cfg.population {
                keep.extend(front);
            } else {
                let mut rest = front;
                rest.sort_by(|&a, &b| pop[b].crowding.total_cmp(&pop[a].crowding));
                keep.extend(rest.into_iter().take(cfg.population - keep.len()));
            }
            if keep.len() == cfg.population {
                break;
            }
        }
        let mut next: Vec<Individual> = keep.into_iter().map(|i| pop[i].clone()).collect();
        rank_population(&mut next);
        pop = next;
        history.push(best_values(&pop, m));
    }

    let front = pop.iter().filter(|i| i.rank == 0).cloned().collect();
    Ok(Evolution {
        front,
        population: pop,
        non_finite,
        evaluations: cfg.population * (cfg.generations + 1),
        best_per_generation: history,
    })
}
