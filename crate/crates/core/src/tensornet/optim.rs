use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensornet::{Gradients, Network};

/// Momentum SGD state. Weight decay is the coupled L2 form: it enters the
/// gradient before the velocity update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    velocity: Vec<Vec<f64>>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Classical heavy-ball momentum by default; Nesterov as an option.
    pub nesterov: bool,
    pub step: usize,
}

impl OptimizerState {
    pub fn new(net: &Network, momentum: f64, weight_decay: f64, nesterov: bool) -> Self {
        OptimizerState {
            velocity: net
                .param_slices()
                .iter()
                .map(|p| vec![0.0; p.len()])
                .collect(),
            momentum,
            weight_decay,
            nesterov,
            step: 0,
        }
    }
}

/// One optimizer step:
/// `v <- momentum*v + grad + weight_decay*param; param <- param - lr*v`.
/// A non-finite gradient aborts with a diagnostic naming the step.
pub fn sgd_step(
    net: &mut Network,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    let gslices = grads.slices();
    let mut params = net.param_slices_mut();
    if gslices.len() != params.len() || gslices.len() != state.velocity.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient slots vs {} parameter slots vs {} velocity slots",
            gslices.len(),
            params.len(),
            state.velocity.len()
        )));
    }
    let m = state.momentum;
    let wd = state.weight_decay;
    for ((p, g), v) in params.iter_mut().zip(&gslices).zip(&mut state.velocity) {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(Error::ShapeMismatch(format!(
                "parameter slot of {} values with {} gradients and {} velocities",
                p.len(),
                g.len(),
                v.len()
            )));
        }
        for j in 0..p.len() {
            if !g[j].is_finite() {
                return Err(Error::Diverged { step: state.step });
            }
            let d = g[j] + wd * p[j];
            v[j] = m * v[j] + d;
            let update = if state.nesterov { d + m * v[j] } else { v[j] };
            p[j] -= lr * update;
        }
    }
    state.step += 1;
    Ok(())
}
