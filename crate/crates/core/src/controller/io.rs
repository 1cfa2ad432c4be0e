//! JSON weight files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ControllerError, Layer, MlpController, Normalization, Result};
use crate::signal::Bounds;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightFile {
    version: u32,
    layer_sizes: Vec<usize>,
    bounds: Bounds,
    normalization: Normalization,
    /// Row-major `outputs x inputs` matrix per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpController {
    pub fn to_json(&self) -> String {
        let file = WeightFile {
            version: FORMAT_VERSION,
            layer_sizes: self.layer_sizes(),
            bounds: self.bounds,
            normalization: self.norm.clone(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("weight file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ControllerError::Format(e.to_string()))?;
        match raw.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(ControllerError::Format(format!(
                    "unsupported version {v}, expected {FORMAT_VERSION}"
                )))
            }
            None => return Err(ControllerError::Format("missing version field".into())),
        }
        let file: WeightFile =
            serde_json::from_value(raw).map_err(|e| ControllerError::Format(e.to_string()))?;
        let bounds = Bounds::new(file.bounds.lo, file.bounds.hi)
            .map_err(|e| ControllerError::Format(e.to_string()))?;
        let mut net = MlpController::zeros(&file.layer_sizes, bounds, file.normalization)
            .map_err(|e| ControllerError::Format(e.to_string()))?;
        if file.weights.len() != net.layers.len() || file.biases.len() != net.layers.len() {
            return Err(ControllerError::Format("layer count mismatch".into()));
        }
        for (k, (layer, (w, b))) in net
            .layers
            .iter_mut()
            .zip(file.weights.into_iter().zip(file.biases))
            .enumerate()
        {
            if w.len() != layer.weights.len() || b.len() != layer.biases.len() {
                return Err(ControllerError::Format(format!("layer {k} has the wrong shape")));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(ControllerError::Format(format!("layer {k} has non-finite values")));
            }
            *layer = Layer {
                inputs: layer.inputs,
                outputs: layer.outputs,
                weights: w,
                biases: b,
            };
        }
        Ok(net)
    }
}

pub fn save(ctrl: &MlpController, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ctrl.to_json())?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MlpController> {
    MlpController::from_json(&fs::read_to_string(path)?)
}
