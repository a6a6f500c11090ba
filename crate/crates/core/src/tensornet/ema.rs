use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensornet::Network;

/// Exponential moving average of network parameters. Evaluation swaps the
/// shadow in, then swaps back to resume training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmaState {
    shadow: Vec<Vec<f64>>,
}

impl EmaState {
    /// Shadow initialized to the network's current parameters.
    pub fn new(net: &Network) -> Self {
        EmaState {
            shadow: net.param_slices().iter().map(|p| p.to_vec()).collect(),
        }
    }

    /// Shadow initialized to zero, for tests that exercise the raw update.
    pub fn zeros(net: &Network) -> Self {
        EmaState {
            shadow: net
                .param_slices()
                .iter()
                .map(|p| vec![0.0; p.len()])
                .collect(),
        }
    }

    pub fn shadow_slices(&self) -> Vec<&[f64]> {
        self.shadow.iter().map(|s| s.as_slice()).collect()
    }

    /// `shadow <- decay*shadow + (1-decay)*params`.
    pub fn update(&mut self, net: &Network, decay: f64) -> Result<()> {
        let params = net.param_slices();
        if params.len() != self.shadow.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} shadow slots vs {} parameter slots",
                self.shadow.len(),
                params.len()
            )));
        }
        for (s, p) in self.shadow.iter_mut().zip(&params) {
            if s.len() != p.len() {
                return Err(Error::ShapeMismatch(format!(
                    "shadow slot of {} values vs parameter slot of {}",
                    s.len(),
                    p.len()
                )));
            }
            for (sv, pv) in s.iter_mut().zip(p.iter()) {
                *sv = decay * *sv + (1.0 - decay) * pv;
            }
        }
        Ok(())
    }

    /// Exchange shadow and live parameters. Calling twice restores both.
    pub fn swap(&mut self, net: &mut Network) -> Result<()> {
        let mut params = net.param_slices_mut();
        if params.len() != self.shadow.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} shadow slots vs {} parameter slots",
                self.shadow.len(),
                params.len()
            )));
        }
        for (s, p) in self.shadow.iter_mut().zip(params.iter_mut()) {
            if s.len() != p.len() {
                return Err(Error::ShapeMismatch(
                    "shadow/parameter length mismatch".into(),
                ));
            }
            std::mem::swap(s, *p);
        }
        Ok(())
    }
}
