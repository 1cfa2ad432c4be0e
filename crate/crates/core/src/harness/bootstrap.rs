//! Initial controllers trained by imitation of the reference feedback laws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{train, Dataset, MlpController, Policy, TrainConfig};
use crate::plant::{sample_initial, ExpertController, PlantError, PlantId, PlantModel};

use super::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    /// Demonstration traces drawn from the reference controller.
    pub traces: usize,
    /// Keep every `stride`-th grid point of each demonstration.
    pub stride: usize,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Amplitude of the control perturbation applied while collecting
    /// demonstrations, as a fraction of the control range.
    pub exploration: f64,
    /// Hold time of each perturbation value (s).
    pub exploration_hold: f64,
    pub train: TrainConfig,
}

impl BootstrapConfig {
    pub fn for_plant(id: PlantId) -> Self {
        let (hidden, stride, epochs) = match id {
            PlantId::Acc => (vec![10, 10, 10], 5, 8),
            PlantId::Afc => (vec![15, 15, 15], 5, 4),
            PlantId::Wt => (vec![5, 5, 5], 25, 6),
        };
        Self {
            traces: 40,
            stride,
            hidden,
            exploration: 0.1,
            exploration_hold: 1.0,
            train: TrainConfig {
                epochs,
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
        }
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self::for_plant(PlantId::Acc)
    }
}

/// Rolls out the reference controller under a held random perturbation and
/// records the unperturbed reference action at the visited states.
pub fn demonstrations(m: &PlantModel, cfg: &BootstrapConfig, seed: u64) -> Result<Dataset> {
    let expert = ExpertController::new(m);
    let stride = cfg.stride.max(1);
    let hold = ((cfg.exploration_hold / m.dt).round() as usize).max(1);
    let amplitude = cfg.exploration * m.bounds.width();
    let parts: Vec<Dataset> = (0..cfg.traces)
        .into_par_iter()
        .map(|i| -> Result<Dataset> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let (x0, u) = sample_initial(m, &mut rng);
            let mut d = Dataset::new(m.feature_dim());
            let mut f = vec![0.0; m.feature_dim()];
            let mut x = x0;
            let mut noise = 0.0;
            for k in 0..m.grid_len() {
                if k % hold == 0 && amplitude > 0.0 {
                    noise = rng.gen_range(-amplitude..=amplitude);
                }
                m.features(&x, u.sample(k), &mut f);
                let label = expert.act(&f);
                if k % stride == 0 {
                    d.push(&f, label)?;
                }
                x = m
                    .step(&x, m.bounds.clamp(label + noise), u.sample(k), m.dt)
                    .map_err(|e| match e {
                        PlantError::Diverged { .. } => PlantError::Diverged { time: k as f64 * m.dt },
                        other => other,
                    })?;
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let mut all = Dataset::new(m.feature_dim());
    for p in &parts {
        all.extend(p)?;
    }
    Ok(all)
}

/// Builds the demonstration set and trains a fresh network on it.
pub fn bootstrap(m: &PlantModel, cfg: &BootstrapConfig, seed: u64) -> Result<(MlpController, Dataset)> {
    let data = demonstrations(m, cfg, seed)?;
    let mut sizes = vec![m.feature_dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = MlpController::random(&sizes, m.bounds, data.normalization(), &mut rng)?;
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let report = train(&init, &data, &tc)?;
    Ok((report.controller, data))
}
