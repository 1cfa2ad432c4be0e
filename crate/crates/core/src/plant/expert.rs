use super::{air_charge, PlantModel, PlantParams};
use crate::controller::Policy;

/// Hand-tuned feedback law per plant, used to generate demonstrations for
/// the initial networks.
#[derive(Debug, Clone)]
pub struct ExpertController {
    model: PlantModel,
    /// Overall feedback gain multiplier.
    pub gain: f64,
}

impl ExpertController {
    pub fn new(model: &PlantModel) -> Self {
        Self {
            model: model.clone(),
            gain: 1.0,
        }
    }
}

impl Policy for ExpertController {
    fn input_dim(&self) -> usize {
        self.model.feature_dim()
    }

    fn act(&self, f: &[f64]) -> f64 {
        let k = self.gain;
        let c = match &self.model.params {
            PlantParams::Acc(p) => {
                let (d_rel, v_rel, v_ego, v_err) = (f[0], f[1], f[2], f[3]);
                let d_des = p.d_safe + 5.0 + 1.4 * v_ego;
                let spacing = k * (0.25 * (d_rel - d_des) + 0.9 * v_rel);
                let cruise = k * 0.6 * (v_err - 1.0);
                spacing.min(cruise)
            }
            PlantParams::Wt(p) => {
                let (h_ref, err) = (f[0], f[2]);
                p.outflow_coef / p.inflow_gain * h_ref.max(0.0).sqrt() + k * 3.0 * err
            }
            PlantParams::Afc(p) => {
                let err = f[2] / p.af_ref;
                air_charge(p, &f[..2]) / p.af_ref * (1.0 + k * 0.5 * err)
            }
        };
        self.model.bounds.clamp(c)
    }
}
