use rand::Rng;

use super::{PlantModel, PlantParams};
use crate::signal::Signal;

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// Piecewise-constant values on the plant grid; segment `k` covers
/// `(k*len, (k+1)*len]` and time 0 belongs to the first segment.
fn piecewise(m: &PlantModel, segment: f64, levels: &[Vec<f64>]) -> Signal {
    let n = m.grid_len();
    let dim = levels[0].len();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        let t = i as f64 * m.dt;
        let k = ((t / segment - 1e-9).ceil().max(1.0) as usize - 1).min(levels.len() - 1);
        data.extend_from_slice(&levels[k]);
    }
    Signal::new(m.dt, 0.0, dim, data).expect("sampled input is finite")
}

fn segments(m: &PlantModel, segment: f64) -> usize {
    ((m.horizon / segment - 1e-9).ceil() as usize).max(1)
}

/// Draws an initial state and an external input signal on the plant grid.
pub fn sample_initial<R: Rng + ?Sized>(m: &PlantModel, rng: &mut R) -> (Vec<f64>, Signal) {
    match &m.params {
        PlantParams::Acc(p) => {
            let d0 = uniform(rng, p.d_rel0_range);
            let vl = uniform(rng, p.v_lead0_range);
            let ve = uniform(rng, p.v_ego0_range);
            let mut v = vl;
            let mut levels = Vec::new();
            for _ in 0..segments(m, p.segment) {
                let a = rng.gen_range(-p.lead_accel_max..=p.lead_accel_max);
                let end = (v + a * p.segment).clamp(p.lead_speed_range[0], p.lead_speed_range[1]);
                let a = ((end - v) / p.segment).clamp(-p.lead_accel_max, p.lead_accel_max);
                v += a * p.segment;
                levels.push(vec![a]);
            }
            (vec![d0, vl, 0.0, ve, 0.0], piecewise(m, p.segment, &levels))
        }
        PlantParams::Wt(p) => {
            let mut level = uniform(rng, p.level_range);
            let h0 = (level + uniform(rng, p.initial_offset_range)).max(0.0);
            let mut levels = vec![vec![level]];
            for _ in 1..segments(m, p.segment) {
                level = (level + uniform(rng, p.level_step_range))
                    .clamp(p.level_range[0], p.level_range[1]);
                levels.push(vec![level]);
            }
            (vec![h0], piecewise(m, p.segment, &levels))
        }
        PlantParams::Afc(p) => {
            let engine = uniform(rng, p.engine_range);
            let levels: Vec<Vec<f64>> = (0..segments(m, p.segment))
                .map(|_| vec![uniform(rng, p.pedal_range), engine])
                .collect();
            (vec![p.af_ref], piecewise(m, p.segment, &levels))
        }
    }
}
