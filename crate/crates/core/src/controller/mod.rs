//! Feed-forward neural controller: inference, backpropagation, training and
//! weight files.

mod io;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Bounds;

pub use io::{load, save, FORMAT_VERSION};
pub use train::{train, Dataset, TrainConfig, TrainReport};

/// Widest layer supported by the allocation-free forward pass.
pub const MAX_WIDTH: usize = 256;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("expected {expected} features, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    BadArchitecture(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("target {value} at row {row} lies outside the control bounds")]
    TargetOutOfBounds { row: usize, value: f64 },
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("weight file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ControllerError>;

/// Anything that maps a feature vector to a scalar control.
pub trait Policy: Sync {
    fn input_dim(&self) -> usize;
    fn act(&self, features: &[f64]) -> f64;
}

/// Per-feature affine normalization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, raw: &[f64], out: &mut [f64]) {
        for (((o, &x), &m), &s) in out.iter_mut().zip(raw).zip(&self.mean).zip(&self.std) {
            *o = (x - m) / s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.biases))
        {
            *o = row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x);
        }
    }
}

/// Multi-layer perceptron with `tanh` hidden layers, a linear scalar output
/// and an output clamp to the control bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpController {
    layers: Vec<Layer>,
    bounds: Bounds,
    norm: Normalization,
}

impl MlpController {
    /// Network with all parameters zero. `sizes` lists every layer width from
    /// the input to the single output.
    pub fn zeros(sizes: &[usize], bounds: Bounds, norm: Normalization) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(ControllerError::BadArchitecture(format!(
                "layer sizes {sizes:?} need an input and an output layer, all non-empty"
            )));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(ControllerError::BadArchitecture(
                "the output layer must have exactly one unit".into(),
            ));
        }
        if sizes.iter().any(|&s| s > MAX_WIDTH) {
            return Err(ControllerError::BadArchitecture(format!(
                "layers wider than {MAX_WIDTH} are not supported"
            )));
        }
        if norm.dim() != sizes[0] || norm.std.len() != sizes[0] {
            return Err(ControllerError::BadArchitecture(format!(
                "normalization has {} entries for {} inputs",
                norm.dim(),
                sizes[0]
            )));
        }
        if norm.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(ControllerError::BadArchitecture(
                "normalization scales must be positive".into(),
            ));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layers,
            bounds,
            norm,
        })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn random<R: Rng>(
        sizes: &[usize],
        bounds: Bounds,
        norm: Normalization,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, bounds, norm)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params(), "parameter count mismatch");
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = r;
        }
    }

    pub fn normalize(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(raw.len())?;
        let mut out = vec![0.0; raw.len()];
        self.norm.apply(raw, &mut out);
        Ok(out)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        let expected = self.layers[0].inputs;
        if got != expected {
            return Err(ControllerError::DimMismatch { expected, got });
        }
        Ok(())
    }

    /// Control for raw (unnormalized) features.
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        self.check_dim(features.len())?;
        let mut buf = [0.0; MAX_WIDTH];
        self.norm.apply(features, &mut buf[..features.len()]);
        Ok(self.forward_normalized_unchecked(&buf[..features.len()]))
    }

    /// Control for features already normalized with this network's stats.
    pub fn forward_normalized(&self, normalized: &[f64]) -> Result<f64> {
        self.check_dim(normalized.len())?;
        Ok(self.forward_normalized_unchecked(normalized))
    }

    fn forward_normalized_unchecked(&self, input: &[f64]) -> f64 {
        let mut a = [0.0; MAX_WIDTH];
        let mut b = [0.0; MAX_WIDTH];
        a[..input.len()].copy_from_slice(input);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&a[..layer.inputs], &mut b[..layer.outputs]);
            if k != last {
                for v in &mut b[..layer.outputs] {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut a, &mut b);
        }
        self.bounds.clamp(a[0])
    }

    /// Exact gradient of the batch mean-squared error with respect to
    /// [`params`](Self::params). The output clamp passes the gradient through
    /// inside the bounds and blocks it outside.
    pub fn gradient(&self, batch: &[(&[f64], f64)]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        if batch.is_empty() {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / batch.len() as f64;
        // activations[k] is the input of layer k; the last entry is the
        // linear output before the clamp.
        let mut activations: Vec<Vec<f64>> = self
            .layer_sizes()
            .iter()
            .map(|&s| vec![0.0; s])
            .collect();
        let mut delta = vec![0.0; MAX_WIDTH];
        let mut prev_delta = vec![0.0; MAX_WIDTH];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |off, l| {
                let o = *off;
                *off += l.weights.len() + l.biases.len();
                Some(o)
            })
            .collect();
        let last = self.layers.len() - 1;

        for &(features, target) in batch {
            self.check_dim(features.len())?;
            self.norm.apply(features, &mut activations[0]);
            for (k, layer) in self.layers.iter().enumerate() {
                let (head, tail) = activations.split_at_mut(k + 1);
                layer.affine(&head[k], &mut tail[0]);
                if k != last {
                    for v in tail[0].iter_mut() {
                        *v = v.tanh();
                    }
                }
            }
            let z = activations[last + 1][0];
            let y = self.bounds.clamp(z);
            let residual = y - target;
            loss += residual * residual * scale;
            let pass = if self.bounds.contains(z) { 1.0 } else { 0.0 };
            delta[0] = 2.0 * residual * scale * pass;

            for k in (0..=last).rev() {
                let layer = &self.layers[k];
                let input = &activations[k];
                let off = offsets[k];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    let row = &mut grad[off + o * layer.inputs..off + (o + 1) * layer.inputs];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                    grad[off + layer.weights.len() + o] += d;
                }
                if k > 0 {
                    for i in 0..layer.inputs {
                        let mut s = 0.0;
                        for o in 0..layer.outputs {
                            s += layer.weights[o * layer.inputs + i] * delta[o];
                        }
                        // input of layer k is tanh output of layer k-1
                        let a = input[i];
                        prev_delta[i] = s * (1.0 - a * a);
                    }
                    std::mem::swap(&mut delta, &mut prev_delta);
                }
            }
        }
        Ok((loss, grad))
    }

    /// Mean-squared error over a batch.
    pub fn loss(&self, batch: &[(&[f64], f64)]) -> Result<f64> {
        let mut sum = 0.0;
        for &(f, t) in batch {
            let r = self.forward(f)? - t;
            sum += r * r;
        }
        Ok(sum / batch.len().max(1) as f64)
    }
}

impl Policy for MlpController {
    fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn act(&self, features: &[f64]) -> f64 {
        let mut buf = [0.0; MAX_WIDTH];
        let n = features.len();
        self.norm.apply(features, &mut buf[..n]);
        self.forward_normalized_unchecked(&buf[..n])
    }
}
