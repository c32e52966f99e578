//! AdamW with decoupled weight decay.
//!
//! ```text
//! θ ← θ·(1 − η·λ)                (weights only; biases and logit_scale skip this)
//! m ← β₁·m + (1 − β₁)·g
//! v ← β₂·v + (1 − β₂)·g²
//! θ ← θ − η·m̂ / (√v̂ + ε)         m̂ = m/(1 − β₁ᵗ), v̂ = v/(1 − β₂ᵗ)
//! ```

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::gradcore::Matrix;
use crate::model::DualEncoderModel;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(model: &DualEncoderModel) -> Self {
        let zeros: Vec<Matrix> = model
            .params()
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }
}

/// One AdamW update of every parameter, followed by the logit_scale clamp.
/// With `config.logit_scale_frozen` the scale is left untouched.
pub fn optimizer_step(
    model: &mut DualEncoderModel,
    grads: &[Matrix],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    if grads.len() != model.params().len() {
        return Err(Error::Dimension(format!(
            "{} gradients for {} parameters",
            grads.len(),
            model.params().len()
        )));
    }
    for (p, g) in model.params().iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::Dimension(format!(
                "gradient {:?} for parameter {} {:?}",
                g.shape(),
                p.name,
                p.value.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for {}",
                p.name
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (lr, b1, b2, eps) = (config.learning_rate, config.beta1, config.beta2, config.eps);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * config.weight_decay;

    for k in 0..grads.len() {
        if config.logit_scale_frozen && model.is_logit_scale(k) {
            continue;
        }
        let param = &mut model.params_mut()[k];
        let apply_decay = param.decay && config.weight_decay != 0.0;
        let m = state.first_moment[k].as_mut_slice();
        let v = state.second_moment[k].as_mut_slice();
        for (((w, &g), m), v) in param
            .value
            .as_mut_slice()
            .iter_mut()
            .zip(grads[k].as_slice())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            if apply_decay {
                *w *= decay;
            }
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    model.clamp_logit_scale();
    Ok(())
}
