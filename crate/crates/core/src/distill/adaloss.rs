//! Loss balancing by the reciprocal of each term's exponential moving average.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaLossState {
    /// `None` until the first update, which seeds the average with the observed loss.
    pub ema: Option<Vec<f64>>,
    pub decay: f64,
    pub epsilon: f64,
}

impl AdaLossState {
    pub fn new(decay: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::InvalidArgument(format!("decay must lie in [0, 1), got {decay}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(AdaLossState { ema: None, decay, epsilon })
    }

    /// Weights for the current averages, `1 / max(ema, ε)`.
    pub fn weights(&self) -> Option<Vec<f64>> {
        self.ema.as_ref().map(|e| e.iter().map(|v| 1.0 / v.max(self.epsilon)).collect())
    }
}

impl Default for AdaLossState {
    fn default() -> Self {
        AdaLossState { ema: None, decay: 0.99, epsilon: 1e-8 }
    }
}

/// Folds one step of per-term losses into the averages and returns the new weights.
pub fn adaloss_update(state: &mut AdaLossState, losses: &[f64]) -> Result<Vec<f64>> {
    let d = state.decay;
    match &mut state.ema {
        None => state.ema = Some(losses.to_vec()),
        Some(ema) => {
            if ema.len() != losses.len() {
                return Err(shape_err(format!("{} loss terms, state tracks {}", losses.len(), ema.len())));
            }
            for (e, &l) in ema.iter_mut().zip(losses) {
                *e = d * *e + (1.0 - d) * l;
            }
        }
    }
    Ok(state.weights().expect("seeded above"))
}
