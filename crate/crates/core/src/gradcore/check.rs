use super::matrix::{l2_norm, Matrix};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// `|a − b| / max(|a|, |b|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Norm-wise `‖a − b‖ / max(‖a‖, ‖b‖, 1e-12)`.
pub fn relative_error_norm(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    l2_norm(&diff) / l2_norm(analytic).max(l2_norm(numeric)).max(1e-12)
}

/// Compares reverse-mode gradients with central differences.
///
/// `build` receives a fresh tape with `params` already registered as
/// parameter nodes (in order) and must return a scalar loss node. Every
/// coordinate of every parameter is perturbed by `±step`. Each parameter's
/// gradient is compared as a whole with [`relative_error_norm`], so
/// coordinates far below the round-off of the difference quotient do not
/// dominate; the largest error over parameters is returned.
pub fn finite_difference_check<F>(params: &[Matrix], step: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId> + Sync,
{
    finite_difference_check_with(params, step, build, Execution::default())
}

pub fn finite_difference_check_with<F>(
    params: &[Matrix],
    step: f64,
    build: F,
    exec: Execution,
) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId> + Sync,
{
    let eval = |values: &[Matrix]| -> Result<(Tape, NodeId, Vec<NodeId>)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values.iter().map(|m| tape.parameter(m.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        let v = tape.value(loss).item()?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("loss evaluated to {v}")));
        }
        Ok((tape, loss, ids))
    };

    let (tape, loss, _) = eval(params)?;
    let analytic = tape.backward(loss)?.into_matrices();

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, m)| (0..m.len()).map(move |k| (p, k)))
        .collect();

    let quotients = par::map_slice(exec, &coords, |&(p, k)| {
        let mut shifted = params.to_vec();
        let base = params[p].as_slice()[k];
        shifted[p].as_mut_slice()[k] = base + step;
        let (t, l, _) = eval(&shifted)?;
        let plus = t.value(l).item()?;
        shifted[p].as_mut_slice()[k] = base - step;
        let (t, l, _) = eval(&shifted)?;
        let minus = t.value(l).item()?;
        Ok::<f64, Error>((plus - minus) / (2.0 * step))
    });

    let mut numeric: Vec<Vec<f64>> = params.iter().map(|m| Vec::with_capacity(m.len())).collect();
    for (&(p, _), v) in coords.iter().zip(quotients) {
        numeric[p].push(v?);
    }
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error_norm(a.as_slice(), n))
        .fold(0.0, f64::max))
}
