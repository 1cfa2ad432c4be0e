//! Continuous-dynamics surrogates of the three benchmark systems and the
//! closed-loop simulator.
//!
//! These models are small hand-written stand-ins that keep each benchmark's
//! input/output signature and safety structure:
//!
//! * `acc`: lead and ego cars in a lane; the ego acceleration follows the
//!   commanded value through a first-order actuator lag.
//! * `wt`: a water tank with controlled inflow and gravity outflow.
//! * `afc`: a first-order air-to-fuel mixing model driven by a bilinear air
//!   charge map. It is a structural stand-in, not a powertrain model.

mod expert;
mod sampling;
mod sim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Bounds, SignalError};

pub use expert::ExpertController;
pub use sampling::sample_initial;
pub use sim::{simulate, ExecutionTrace, Rollout};

/// Largest state dimension among the plants; sizes the RK4 scratch buffers.
pub const MAX_STATE: usize = 8;

/// Any state component beyond this magnitude aborts the simulation.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("simulation diverged at t = {time}")]
    Diverged { time: f64 },
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("input signal does not match the plant grid: {0}")]
    Grid(String),
    #[error("unknown plant `{0}`")]
    UnknownPlant(String),
    #[error("trace file error: {0}")]
    Format(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PlantError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantId {
    Acc,
    Afc,
    Wt,
}

impl PlantId {
    pub const ALL: [PlantId; 3] = [PlantId::Acc, PlantId::Afc, PlantId::Wt];

    pub fn name(self) -> &'static str {
        match self {
            PlantId::Acc => "acc",
            PlantId::Afc => "afc",
            PlantId::Wt => "wt",
        }
    }
}

impl fmt::Display for PlantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlantId {
    type Err = PlantError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acc" => Ok(PlantId::Acc),
            "afc" => Ok(PlantId::Afc),
            "wt" => Ok(PlantId::Wt),
            _ => Err(PlantError::UnknownPlant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccParams {
    /// Ego actuator time constant (s).
    pub actuator_tau: f64,
    pub v_set: f64,
    pub d_safe: f64,
    /// Bound on the lead car's acceleration magnitude (m/s^2).
    pub lead_accel_max: f64,
    /// The lead car's speed is kept inside this range by the input sampler.
    pub lead_speed_range: [f64; 2],
    pub d_rel0_range: [f64; 2],
    pub v_lead0_range: [f64; 2],
    pub v_ego0_range: [f64; 2],
    /// Duration of each constant-acceleration segment of the lead car (s).
    pub segment: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            actuator_tau: 0.5,
            v_set: 30.0,
            d_safe: 10.0,
            lead_accel_max: 2.0,
            lead_speed_range: [15.0, 35.0],
            d_rel0_range: [40.0, 60.0],
            v_lead0_range: [25.0, 32.0],
            v_ego0_range: [20.0, 30.0],
            segment: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WtParams {
    pub inflow_gain: f64,
    pub outflow_coef: f64,
    pub level_range: [f64; 2],
    /// Range of the change of reference level at each switch.
    pub level_step_range: [f64; 2],
    /// Initial level offset from the first reference level.
    pub initial_offset_range: [f64; 2],
    /// Time between reference level switches (s).
    pub segment: f64,
    pub error_set: f64,
}

impl Default for WtParams {
    fn default() -> Self {
        Self {
            inflow_gain: 0.25,
            outflow_coef: 0.20,
            level_range: [5.0, 15.0],
            level_step_range: [-1.5, 3.0],
            initial_offset_range: [-2.0, 1.0],
            segment: 5.0,
            error_set: 0.86,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AfcParams {
    /// Mixing time constant (s).
    pub tau: f64,
    pub af_ref: f64,
    pub mu_set: f64,
    pub pedal_range: [f64; 2],
    pub engine_range: [f64; 2],
    /// Air charge `g0 + g1 p + g2 n + g3 p n` with `p = pedal / 70` and
    /// `n = engine / 1000`.
    pub air_map: [f64; 4],
    pub segment: f64,
}

impl Default for AfcParams {
    fn default() -> Self {
        Self {
            tau: 0.3,
            af_ref: 14.7,
            mu_set: 0.15,
            pedal_range: [8.8, 70.0],
            engine_range: [900.0, 1100.0],
            air_map: [1.0, 6.0, 2.0, 3.0],
            segment: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlantParams {
    Acc(AccParams),
    Afc(AfcParams),
    Wt(WtParams),
}

/// A benchmark plant together with its control bounds and sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub dt: f64,
    pub horizon: f64,
    pub bounds: Bounds,
    pub params: PlantParams,
}

impl PlantModel {
    pub fn acc() -> Self {
        Self {
            dt: 0.1,
            horizon: 50.0,
            bounds: Bounds { lo: -3.0, hi: 2.0 },
            params: PlantParams::Acc(AccParams::default()),
        }
    }

    pub fn wt() -> Self {
        Self {
            dt: 0.01,
            horizon: 15.0,
            bounds: Bounds { lo: 0.0, hi: 10.0 },
            params: PlantParams::Wt(WtParams::default()),
        }
    }

    pub fn afc() -> Self {
        Self {
            dt: 0.1,
            horizon: 30.0,
            bounds: Bounds { lo: 0.05, hi: 1.0 },
            params: PlantParams::Afc(AfcParams::default()),
        }
    }

    pub fn for_id(id: PlantId) -> Self {
        match id {
            PlantId::Acc => Self::acc(),
            PlantId::Afc => Self::afc(),
            PlantId::Wt => Self::wt(),
        }
    }

    pub fn id(&self) -> PlantId {
        match self.params {
            PlantParams::Acc(_) => PlantId::Acc,
            PlantParams::Afc(_) => PlantId::Afc,
            PlantParams::Wt(_) => PlantId::Wt,
        }
    }

    /// Number of grid points covering `[0, horizon]`.
    pub fn grid_len(&self) -> usize {
        (self.horizon / self.dt).round() as usize + 1
    }

    pub fn state_dim(&self) -> usize {
        match self.params {
            PlantParams::Acc(_) => 5,
            PlantParams::Afc(_) | PlantParams::Wt(_) => 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.params {
            PlantParams::Acc(_) | PlantParams::Wt(_) => 1,
            PlantParams::Afc(_) => 2,
        }
    }

    pub fn output_names(&self) -> &'static [&'static str] {
        match self.params {
            PlantParams::Acc(_) => &["d_rel", "v_ego"],
            PlantParams::Afc(_) => &["mu", "af"],
            PlantParams::Wt(_) => &["error", "h_out"],
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self.params {
            PlantParams::Acc(_) => &["x_lead", "v_lead", "x_ego", "v_ego", "a_ego"],
            PlantParams::Afc(_) => &["af"],
            PlantParams::Wt(_) => &["h"],
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_names().len()
    }

    pub fn feature_dim(&self) -> usize {
        match self.params {
            PlantParams::Acc(_) => 4,
            PlantParams::Afc(_) | PlantParams::Wt(_) => 3,
        }
    }

    /// The benchmark safety requirement in the textual grammar.
    pub fn default_requirement(&self) -> String {
        match &self.params {
            PlantParams::Acc(p) => format!(
                "alw[0,{}](d_rel - {} > 0 and {} - v_ego > 0)",
                self.horizon, p.d_safe, p.v_set
            ),
            PlantParams::Afc(p) => format!("alw[0,{}](mu < {})", self.horizon, p.mu_set),
            PlantParams::Wt(p) => {
                let e = p.error_set;
                format!(
                    "alw[4,5](abs(error) < {e}) and alw[9,10](abs(error) < {e}) and alw[14,15](abs(error) < {e})"
                )
            }
        }
    }

    /// State derivative for state `x`, control `c` and external input `u`.
    pub fn derivative(&self, x: &[f64], c: f64, u: &[f64], out: &mut [f64]) {
        match &self.params {
            PlantParams::Acc(p) => {
                out[0] = x[1];
                out[1] = u[0];
                out[2] = x[3];
                out[3] = x[4];
                out[4] = (c - x[4]) / p.actuator_tau;
            }
            PlantParams::Wt(p) => {
                out[0] = p.inflow_gain * c - p.outflow_coef * x[0].max(0.0).sqrt();
            }
            PlantParams::Afc(p) => {
                out[0] = (air_charge(p, u) / c - x[0]) / p.tau;
            }
        }
    }

    pub fn output(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match &self.params {
            PlantParams::Acc(_) => {
                out[0] = x[0] - x[2];
                out[1] = x[3];
            }
            PlantParams::Wt(_) => {
                out[0] = u[0] - x[0];
                out[1] = x[0];
            }
            PlantParams::Afc(p) => {
                out[0] = (x[0] - p.af_ref).abs() / p.af_ref;
                out[1] = x[0];
            }
        }
    }

    /// Controller input features.
    pub fn features(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match &self.params {
            PlantParams::Acc(p) => {
                out[0] = x[0] - x[2];
                out[1] = x[1] - x[3];
                out[2] = x[3];
                out[3] = p.v_set - x[3];
            }
            PlantParams::Wt(_) => {
                out[0] = u[0];
                out[1] = x[0];
                out[2] = u[0] - x[0];
            }
            PlantParams::Afc(p) => {
                out[0] = u[0];
                out[1] = u[1];
                out[2] = x[0] - p.af_ref;
            }
        }
    }

    pub fn features_vec(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.feature_dim()];
        self.features(x, u, &mut f);
        f
    }

    /// One fixed-step classical Runge-Kutta step with the control and
    /// external input held constant over the step.
    pub fn step(&self, state: &[f64], control: f64, u: &[f64], dt: f64) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(PlantError::Shape {
                what: "state",
                expected: self.state_dim(),
                got: state.len(),
            });
        }
        if u.len() != self.input_dim() {
            return Err(PlantError::Shape {
                what: "input",
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        let mut next = state.to_vec();
        self.rk4_in_place(&mut next, control, u, dt);
        check_state(&next, dt)?;
        Ok(next)
    }

    pub(crate) fn rk4_in_place(&self, x: &mut [f64], c: f64, u: &[f64], dt: f64) {
        let n = x.len();
        let mut k1 = [0.0; MAX_STATE];
        let mut k2 = [0.0; MAX_STATE];
        let mut k3 = [0.0; MAX_STATE];
        let mut k4 = [0.0; MAX_STATE];
        let mut tmp = [0.0; MAX_STATE];
        self.derivative(x, c, u, &mut k1[..n]);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        self.derivative(&tmp[..n], c, u, &mut k2[..n]);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        self.derivative(&tmp[..n], c, u, &mut k3[..n]);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        self.derivative(&tmp[..n], c, u, &mut k4[..n]);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

pub(crate) fn check_state(x: &[f64], time: f64) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
        return Err(PlantError::Diverged { time });
    }
    Ok(())
}

fn air_charge(p: &AfcParams, u: &[f64]) -> f64 {
    let pedal = u[0] / 70.0;
    let engine = u[1] / 1000.0;
    let [g0, g1, g2, g3] = p.air_map;
    g0 + g1 * pedal + g2 * engine + g3 * pedal * engine
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(m: &PlantModel, x0: &[f64], c: f64, u: &[f64], dt: f64, steps: usize) -> Vec<f64> {
        let mut x = x0.to_vec();
        for _ in 0..steps {
            x = m.step(&x, c, u, dt).unwrap();
        }
        x
    }

    #[test]
    fn acc_equal_speeds_keep_the_gap() {
        let m = PlantModel::acc();
        let x = run(&m, &[50.0, 25.0, 0.0, 25.0, 0.0], 0.0, &[0.0], 0.1, 500);
        assert!(((x[0] - x[2]) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn wt_empty_tank_stays_empty() {
        let m = PlantModel::wt();
        let x = run(&m, &[0.0], 0.0, &[10.0], 0.01, 1500);
        assert_eq!(x, vec![0.0]);
    }

    #[test]
    fn acc_actuator_lag_matches_analytic_step_response() {
        let m = PlantModel::acc();
        let dt = 0.05;
        let x = run(&m, &[50.0, 25.0, 0.0, 25.0, 0.0], 1.0, &[0.0], dt, 10);
        let exact = 1.0 - (-1.0f64).exp();
        assert!((x[4] - exact).abs() < 1e-6, "{} vs {exact}", x[4]);
        assert!((x[4] - 0.632).abs() < 1e-3);
    }

    #[test]
    fn rk4_is_fourth_order_on_the_lag() {
        // exact solution of a' = (1 - a)/tau, v' = a, x' = v from rest
        let tau = 0.5;
        let t_end = 2.0;
        let exact_x = |t: f64| t * t / 2.0 - tau * t + tau * tau * (1.0 - (-t / tau).exp());
        let m = PlantModel::acc();
        let err = |dt: f64| {
            let steps = (t_end / dt).round() as usize;
            let x = run(&m, &[0.0, 0.0, 0.0, 0.0, 0.0], 1.0, &[0.0], dt, steps);
            (x[2] - exact_x(t_end)).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio >= 12.0, "ratio {ratio}");
    }

    #[test]
    fn step_rejects_bad_shapes_and_divergence() {
        let m = PlantModel::acc();
        assert!(matches!(m.step(&[0.0], 0.0, &[0.0], 0.1), Err(PlantError::Shape { .. })));
        assert!(matches!(
            m.step(&[2e6, 0.0, 0.0, 0.0, 0.0], 0.0, &[0.0], 0.1),
            Err(PlantError::Diverged { .. })
        ));
    }

    #[test]
    fn requirements_parse_against_output_names() {
        for id in PlantId::ALL {
            let m = PlantModel::for_id(id);
            crate::stl::parse(&m.default_requirement(), m.output_names()).unwrap();
        }
        assert_eq!(
            PlantModel::acc().default_requirement(),
            "alw[0,50](d_rel - 10 > 0 and 30 - v_ego > 0)"
        );
    }

    #[test]
    fn plant_ids_parse() {
        assert_eq!("ACC".parse::<PlantId>().unwrap(), PlantId::Acc);
        assert!("boat".parse::<PlantId>().is_err());
    }
}
