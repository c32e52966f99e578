//! Positive-weighted binary cross entropy over tempered sigmoids.
//!
//! For a raw cosine logit `x`, target `y ∈ {0, 1}`, positive weight `p` and
//! temperature `τ = exp(−logit_scale)`:
//!
//! ```text
//! σ(x)  = 1 / (1 + exp(−x/τ))
//! ℓ     = −[p·y·log σ(x) + (1 − y)·log(1 − σ(x))]
//! ∂ℓ/∂x = (1/τ)·[σ(x)(1 − y) − p·y(1 − σ(x))]
//! ```
//!
//! The batch loss is the mean of `ℓ` over all `N·L` entries. It is evaluated
//! on the scaled logit `z = x·exp(logit_scale)` through softplus, so no
//! intermediate probability is ever rounded to 0 or 1.

use crate::error::{Error, Result};
use crate::gradcore::{Matrix, NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperedScale {
    pub logit_scale: f64,
}

impl TemperedScale {
    pub fn new(logit_scale: f64) -> Self {
        Self { logit_scale }
    }

    pub fn from_tau(tau: f64) -> Self {
        Self {
            logit_scale: -tau.ln(),
        }
    }

    pub fn tau(&self) -> f64 {
        (-self.logit_scale).exp()
    }

    /// Multiplier applied to raw logits, `1/τ`.
    pub fn factor(&self) -> f64 {
        self.logit_scale.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pub raw_logits: Matrix,
    pub targets: Matrix,
    pub pos_weights: Vec<f64>,
}

impl LossBatch {
    pub fn new(raw_logits: Matrix, targets: Matrix, pos_weights: Vec<f64>) -> Result<Self> {
        validate(&raw_logits, &targets, &pos_weights)?;
        Ok(Self {
            raw_logits,
            targets,
            pos_weights,
        })
    }

    /// Same positive weight for every class.
    pub fn uniform(raw_logits: Matrix, targets: Matrix, pos_weight: f64) -> Result<Self> {
        let l = raw_logits.cols();
        Self::new(raw_logits, targets, vec![pos_weight; l])
    }
}

fn validate(logits: &Matrix, targets: &Matrix, pos_weights: &[f64]) -> Result<()> {
    if logits.shape() != targets.shape() {
        return Err(Error::Dimension(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    if pos_weights.len() != logits.cols() {
        return Err(Error::Dimension(format!(
            "{} positive weights for {} classes",
            pos_weights.len(),
            logits.cols()
        )));
    }
    if let Some(t) = targets.as_slice().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::Input(format!("target {t} is not binary")));
    }
    if let Some(p) = pos_weights.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::Input(format!("positive weight {p} must be > 0")));
    }
    if logits.as_slice().iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in logits".into()));
    }
    Ok(())
}

/// Records the fused loss on `tape`. `logits` holds raw cosine similarities
/// and `logit_scale` is a 1×1 node, so gradients reach both.
pub fn tempered_bce(
    tape: &mut Tape,
    logits: NodeId,
    logit_scale: NodeId,
    targets: &Matrix,
    pos_weights: &[f64],
) -> Result<NodeId> {
    validate(tape.value(logits), targets, pos_weights)?;
    let s = tape.value(logit_scale).item()?;
    if s.is_nan() {
        return Err(Error::Numeric("logit_scale is NaN".into()));
    }
    tape.tempered_bce(logits, logit_scale, targets, pos_weights)
}

/// Loss value without a tape.
pub fn tempered_bce_value(batch: &LossBatch, scale: TemperedScale) -> Result<f64> {
    validate(&batch.raw_logits, &batch.targets, &batch.pos_weights)?;
    fused::mean_loss(
        &batch.raw_logits,
        &batch.targets,
        &batch.pos_weights,
        scale.factor(),
    )
}

/// Per-entry `∂ℓ/∂x` of the unreduced loss (no `1/(N·L)` factor).
pub fn analytic_grad_logits(batch: &LossBatch, scale: TemperedScale) -> Matrix {
    let factor = scale.factor();
    let x = &batch.raw_logits;
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        let z = x[(i, j)] * factor;
        let y = batch.targets[(i, j)];
        let p = batch.pos_weights[j];
        factor * (fused::sigmoid(z) * (1.0 - y) - p * y * fused::sigmoid(-z))
    })
}

/// `|∂ℓ/∂x| = gap/τ` for a fixed prediction error `gap = |σ(x) − y|`.
pub fn hardness_profile(taus: &[f64], gap: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&gap) {
        return Err(Error::Input(format!("gap {gap} outside [0, 1]")));
    }
    taus.iter()
        .map(|&tau| {
            if tau > 0.0 && tau.is_finite() {
                Ok(gap / tau)
            } else {
                Err(Error::Input(format!("temperature {tau} must be > 0")))
            }
        })
        .collect()
}

/// Scalar kernels of the fused loss, shared with the tape op.
pub mod fused {
    use crate::error::{Error, Result};
    use crate::gradcore::Matrix;

    #[inline]
    pub fn sigmoid(z: f64) -> f64 {
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }

    /// `log(1 + exp(z))` without overflow.
    #[inline]
    pub fn softplus(z: f64) -> f64 {
        z.max(0.0) + (-z.abs()).exp().ln_1p()
    }

    /// Loss of one entry at scaled logit `z`.
    #[inline]
    pub fn element_loss(z: f64, y: f64, p: f64) -> f64 {
        p * y * softplus(-z) + (1.0 - y) * softplus(z)
    }

    /// `∂ℓ/∂z` of one entry.
    #[inline]
    pub fn element_grad(z: f64, y: f64, p: f64) -> f64 {
        (1.0 - y) * sigmoid(z) - p * y * sigmoid(-z)
    }

    pub fn mean_loss(
        x: &Matrix,
        targets: &Matrix,
        pos_weights: &[f64],
        factor: f64,
    ) -> Result<f64> {
        let cols = x.cols();
        let mut total = 0.0;
        for (k, (&xv, &y)) in x.as_slice().iter().zip(targets.as_slice()).enumerate() {
            total += element_loss(xv * factor, y, pos_weights[k % cols]);
        }
        let loss = total / x.len() as f64;
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::Numeric(format!("loss evaluated to {loss}")))
        }
    }

    /// Gradients of [`mean_loss`] with respect to the raw logits and to the
    /// log-scale.
    pub fn mean_loss_grads(
        x: &Matrix,
        targets: &Matrix,
        pos_weights: &[f64],
        factor: f64,
    ) -> (Matrix, f64) {
        let cols = x.cols();
        let inv_count = 1.0 / x.len() as f64;
        let mut dx = Matrix::zeros(x.rows(), cols);
        let mut ds = 0.0;
        for (k, ((&xv, &y), d)) in x
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .zip(dx.as_mut_slice())
            .enumerate()
        {
            let z = xv * factor;
            let dz = element_grad(z, y, pos_weights[k % cols]) * inv_count;
            *d = dz * factor;
            ds += dz * z;
        }
        (dx, ds)
    }
}
