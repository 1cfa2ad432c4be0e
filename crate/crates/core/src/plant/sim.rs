use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{check_state, PlantError, PlantId, PlantModel, Result, MAX_STATE};
use crate::controller::Policy;
use crate::signal::{ControlPatch, Signal};

/// One closed-loop run: external input, state, applied control and output,
/// all on the plant grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub plant: PlantId,
    pub seed: u64,
    pub u: Signal,
    pub x: Signal,
    pub c: Signal,
    pub w: Signal,
    pub patches: Vec<ControlPatch>,
}

/// Flat buffers for grid indices `from..=to` of a partial run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Rollout {
    pub from: usize,
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub w: Vec<f64>,
}

struct RenderedPatch {
    lo: usize,
    hi: usize,
    values: Vec<f64>,
}

fn render_patches(m: &PlantModel, patches: &[ControlPatch]) -> Result<Vec<RenderedPatch>> {
    patches
        .iter()
        .map(|p| {
            let values = p.render(m.dt)?.as_flat().to_vec();
            let lo = (p.t_lower() / m.dt).round() as usize;
            Ok(RenderedPatch {
                lo,
                hi: lo + values.len() - 1,
                values,
            })
        })
        .collect()
}

fn check_input(m: &PlantModel, u: &Signal) -> Result<()> {
    if (u.dt() - m.dt).abs() > 1e-12 * m.dt || u.start() != 0.0 {
        return Err(PlantError::Grid(format!(
            "step {} / start {} (plant step {})",
            u.dt(),
            u.start(),
            m.dt
        )));
    }
    if u.len() != m.grid_len() {
        return Err(PlantError::Shape {
            what: "input length",
            expected: m.grid_len(),
            got: u.len(),
        });
    }
    if u.dim() != m.input_dim() {
        return Err(PlantError::Shape {
            what: "input dimension",
            expected: m.input_dim(),
            got: u.dim(),
        });
    }
    Ok(())
}

/// Runs the closed loop over grid indices `from..=to` starting from state
/// `x_from` at index `from`.
///
/// At each index the control comes from the most recently added patch whose
/// window covers it, otherwise from the policy clamped to the plant bounds.
pub(crate) fn rollout<P: Policy + ?Sized>(
    m: &PlantModel,
    policy: &P,
    u: &Signal,
    patches: &[ControlPatch],
    x_from: &[f64],
    from: usize,
    to: usize,
) -> Result<Rollout> {
    check_input(m, u)?;
    let sd = m.state_dim();
    if x_from.len() != sd {
        return Err(PlantError::Shape {
            what: "initial state",
            expected: sd,
            got: x_from.len(),
        });
    }
    if from > to || to >= u.len() {
        return Err(PlantError::Grid(format!("bad index range {from}..={to}")));
    }
    if policy.input_dim() != m.feature_dim() {
        return Err(PlantError::Shape {
            what: "policy input",
            expected: m.feature_dim(),
            got: policy.input_dim(),
        });
    }
    let rendered = render_patches(m, patches)?;
    let od = m.output_dim();
    let count = to - from + 1;
    let mut out = Rollout {
        from,
        x: Vec::with_capacity(count * sd),
        c: Vec::with_capacity(count),
        w: Vec::with_capacity(count * od),
    };
    let mut state = [0.0; MAX_STATE];
    state[..sd].copy_from_slice(x_from);
    check_state(&state[..sd], m.dt * from as f64)?;
    let mut feats = [0.0; 16];
    let mut y = [0.0; 8];
    let fd = m.feature_dim();
    for i in from..=to {
        let ui = u.sample(i);
        let x = &mut state[..sd];
        let c = match rendered.iter().rev().find(|p| p.lo <= i && i <= p.hi) {
            Some(p) => p.values[i - p.lo],
            None => {
                m.features(x, ui, &mut feats[..fd]);
                m.bounds.clamp(policy.act(&feats[..fd]))
            }
        };
        m.output(x, ui, &mut y[..od]);
        out.x.extend_from_slice(x);
        out.c.push(c);
        out.w.extend_from_slice(&y[..od]);
        if i < to {
            m.rk4_in_place(x, c, ui, m.dt);
            check_state(x, m.dt * (i + 1) as f64)?;
        }
    }
    Ok(out)
}

/// Simulates the closed loop over the whole horizon.
pub fn simulate<P: Policy + ?Sized>(
    m: &PlantModel,
    policy: &P,
    u: &Signal,
    patches: &[ControlPatch],
    x0: &[f64],
) -> Result<ExecutionTrace> {
    let n = m.grid_len();
    let r = rollout(m, policy, u, patches, x0, 0, n - 1)?;
    Ok(ExecutionTrace {
        plant: m.id(),
        seed: 0,
        u: u.clone(),
        x: Signal::new(m.dt, 0.0, m.state_dim(), r.x)?,
        c: Signal::new(m.dt, 0.0, 1, r.c)?,
        w: Signal::new(m.dt, 0.0, m.output_dim(), r.w)?,
        patches: patches.to_vec(),
    })
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn initial_state(&self) -> &[f64] {
        self.x.sample(0)
    }

    /// Re-runs indices `from..=to` with `patches`, reusing this trace's state
    /// at `from`, and returns the output on `[0, to]`. Identical to a full
    /// simulation truncated at `to` when the prefix is unaffected by the
    /// patches.
    pub fn resimulate_output<P: Policy + ?Sized>(
        &self,
        m: &PlantModel,
        policy: &P,
        patches: &[ControlPatch],
        from: usize,
        to: usize,
    ) -> Result<Signal> {
        let r = rollout(m, policy, &self.u, patches, self.x.sample(from), from, to)?;
        let od = self.w.dim();
        let mut w = Vec::with_capacity((to + 1) * od);
        w.extend_from_slice(&self.w.as_flat()[..from * od]);
        w.extend_from_slice(&r.w);
        Ok(Signal::new(m.dt, 0.0, od, w)?)
    }

    /// Writes `t,u_*,x_*,c,w_*` rows with nine significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.u.dim()).map(|i| format!("u_{i}")));
        header.extend((0..self.x.dim()).map(|i| format!("x_{i}")));
        header.push("c".into());
        header.extend((0..self.w.dim()).map(|i| format!("w_{i}")));
        wr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let row = std::iter::once(self.w.time(i))
                .chain(self.u.sample(i).iter().copied())
                .chain(self.x.sample(i).iter().copied())
                .chain(std::iter::once(self.c.sample(i)[0]))
                .chain(self.w.sample(i).iter().copied())
                .map(|v| format!("{v:.8e}"));
            wr.write_record(row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, plant: PlantId) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers().map_err(csv_err)?.clone();
        let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
        let (ud, xd, wd) = (count("u_"), count("x_"), count("w_"));
        if header.len() != 2 + ud + xd + wd || header.get(0) != Some("t") {
            return Err(PlantError::Format("unexpected trace header".into()));
        }
        let (mut t, mut u, mut x, mut c, mut w) = (vec![], vec![], vec![], vec![], vec![]);
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| PlantError::Format(e.to_string()))?;
            if vals.len() != header.len() {
                return Err(PlantError::Format("ragged trace row".into()));
            }
            t.push(vals[0]);
            u.extend_from_slice(&vals[1..1 + ud]);
            x.extend_from_slice(&vals[1 + ud..1 + ud + xd]);
            c.push(vals[1 + ud + xd]);
            w.extend_from_slice(&vals[2 + ud + xd..]);
        }
        if t.len() < 2 {
            return Err(PlantError::Format("trace needs at least two rows".into()));
        }
        let dt = t[1] - t[0];
        Ok(Self {
            plant,
            seed: 0,
            u: Signal::new(dt, t[0], ud.max(1), u)?,
            x: Signal::new(dt, t[0], xd, x)?,
            c: Signal::new(dt, t[0], 1, c)?,
            w: Signal::new(dt, t[0], wd, w)?,
            patches: Vec::new(),
        })
    }
}

fn csv_err(e: csv::Error) -> PlantError {
    PlantError::Format(e.to_string())
}
