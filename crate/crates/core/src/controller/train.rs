use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ControllerError, MlpController, Normalization, Result};
use crate::signal::Bounds;

/// Supervised `(features, control)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, features: &[f64], target: f64) -> Result<()> {
        if features.len() != self.dim {
            return Err(ControllerError::DimMismatch {
                expected: self.dim,
                got: features.len(),
            });
        }
        self.features.extend_from_slice(features);
        self.targets.push(target);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.dim != self.dim {
            return Err(ControllerError::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        self.features.extend_from_slice(&other.features);
        self.targets.extend_from_slice(&other.targets);
        Ok(())
    }

    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (&self.features[i * self.dim..(i + 1) * self.dim], self.targets[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.features
            .chunks_exact(self.dim)
            .zip(self.targets.iter().copied())
    }

    /// Per-feature mean and standard deviation; constant features get a unit
    /// scale.
    pub fn normalization(&self) -> Normalization {
        let n = self.len().max(1) as f64;
        let mut mean = vec![0.0; self.dim];
        for (f, _) in self.rows() {
            for (m, x) in mean.iter_mut().zip(f) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; self.dim];
        for (f, _) in self.rows() {
            for ((v, x), m) in var.iter_mut().zip(f).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Normalization { mean, std }
    }

    pub fn check_targets(&self, bounds: Bounds) -> Result<()> {
        match self.targets.iter().position(|t| !bounds.contains(*t)) {
            Some(row) => Err(ControllerError::TargetOutOfBounds {
                row,
                value: self.targets[row],
            }),
            None => Ok(()),
        }
    }

    /// CSV with header `f_0,..,f_{d-1},c`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("f_{i}")).collect();
        header.push("c".into());
        w.write_record(&header).map_err(csv_err)?;
        for (f, t) in self.rows() {
            let rec: Vec<String> = f.iter().chain(std::iter::once(&t)).map(|v| format!("{v:e}")).collect();
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let cols = r.headers().map_err(csv_err)?.len();
        if cols < 2 {
            return Err(ControllerError::Format("dataset needs features and a target".into()));
        }
        let mut data = Dataset::new(cols - 1);
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| ControllerError::Format(e.to_string()))?;
            data.push(&vals[..cols - 1], vals[cols - 1])?;
        }
        Ok(data)
    }
}

fn csv_err(e: csv::Error) -> ControllerError {
    ControllerError::Format(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub controller: MlpController,
    /// Epoch whose parameters were kept; 0 means the initial parameters.
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch Adam regression on the mean-squared error. The returned
/// controller carries the parameters of the epoch with the lowest holdout
/// loss (training loss when the holdout is empty); the initial parameters
/// compete as epoch 0.
pub fn train(init: &MlpController, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(ControllerError::EmptyDataset);
    }
    if data.dim() != init.layer_sizes()[0] {
        return Err(ControllerError::DimMismatch {
            expected: init.layer_sizes()[0],
            got: data.dim(),
        });
    }
    data.check_targets(init.bounds())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_holdout = (data.len() as f64 * cfg.holdout_fraction).floor() as usize;
    let (holdout, mut train_idx) = (order[..n_holdout].to_vec(), order[n_holdout..].to_vec());
    let holdout_rows: Vec<(&[f64], f64)> = holdout.iter().map(|&i| data.row(i)).collect();
    let train_rows: Vec<(&[f64], f64)> = train_idx.iter().map(|&i| data.row(i)).collect();
    let score_rows = if holdout_rows.is_empty() {
        &train_rows
    } else {
        &holdout_rows
    };

    let mut net = init.clone();
    let mut best = net.clone();
    let mut best_score = net.loss(score_rows)?;
    let mut best_epoch = 0;
    let mut params = net.params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut validation_loss = Vec::with_capacity(cfg.epochs);
    let batch_size = cfg.batch_size.max(1);

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| data.row(i)).collect();
            let (loss, grad) = net.gradient(&batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ControllerError::Diverged { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &grad);
            net.set_params(&params);
        }
        epoch_loss /= train_idx.len().max(1) as f64;
        let score = net.loss(score_rows)?;
        if !score.is_finite() {
            return Err(ControllerError::Diverged { epoch, loss: score });
        }
        log::debug!("epoch {epoch}: train {epoch_loss:.6e} holdout {score:.6e}");
        train_loss.push(epoch_loss);
        validation_loss.push(score);
        if score < best_score {
            best_score = score;
            best_epoch = epoch;
            best = net.clone();
        }
    }
    Ok(TrainReport {
        controller: best,
        best_epoch,
        train_loss,
        validation_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn bounds() -> Bounds {
        Bounds::new(-3.0, 2.0).unwrap()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = MlpController::random(&[2, 4, 1], bounds(), Normalization::identity(2), &mut rng).unwrap();
        let mut data = Dataset::new(2);
        data.push(&[1.0, 2.0], 0.5).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&init, &data, &cfg).unwrap();
        assert_eq!(out.controller, init);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn memorizes_a_single_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let init = MlpController::random(&[3, 8, 1], bounds(), Normalization::identity(3), &mut rng).unwrap();
        let mut data = Dataset::new(3);
        data.push(&[0.2, -0.4, 1.0], 1.25).unwrap();
        let cfg = TrainConfig {
            epochs: 2000,
            batch_size: 1,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = train(&init, &data, &cfg).unwrap();
        let loss = out.controller.loss(&[data.row(0)]).unwrap();
        assert!(loss < 1e-4, "loss {loss}");
    }

    #[test]
    fn rejects_empty_and_out_of_bounds_data() {
        let init = MlpController::zeros(&[1, 1], bounds(), Normalization::identity(1)).unwrap();
        assert!(matches!(
            train(&init, &Dataset::new(1), &TrainConfig::default()),
            Err(ControllerError::EmptyDataset)
        ));
        let mut data = Dataset::new(1);
        data.push(&[0.0], 5.0).unwrap();
        assert!(matches!(
            train(&init, &data, &TrainConfig::default()),
            Err(ControllerError::TargetOutOfBounds { row: 0, .. })
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let init = MlpController::zeros(&[1, 1], Bounds::new(-1e300, 1e300).unwrap(), Normalization::identity(1)).unwrap();
        let mut data = Dataset::new(1);
        data.push(&[1e300], 1e300).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 1e10,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&init, &data, &cfg), Err(ControllerError::Diverged { .. })));
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data = Dataset::new(2);
        for _ in 0..200 {
            let f = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            data.push(&f, (f[0] * f[1]).clamp(-3.0, 2.0)).unwrap();
        }
        let init = MlpController::random(&[2, 6, 1], bounds(), data.normalization(), &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(&init, &data, &cfg).unwrap().controller;
        let b = train(&init, &data, &cfg).unwrap().controller;
        let bits = |n: &MlpController| n.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let mut data = Dataset::new(2);
        data.push(&[0.1, 1.0 / 3.0], -2.5).unwrap();
        data.push(&[1e-12, 7.0], 0.0).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), data);
    }
}
