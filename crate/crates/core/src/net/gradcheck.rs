//! Central finite-difference gradients, computed from forward passes only.

use alloc::vec::Vec;

use super::{Example, Network, Objective};
use crate::Result;

/// Mean batch loss `lambda * f1 + (1 - lambda) * f2` in inference mode.
pub fn batch_loss<O: Objective + ?Sized>(net: &Network, batch: &[Example], objective: &O) -> Result<f64> {
    let lambda = objective.lambda();
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let f = net.forward(&ex.input)?;
        let s = objective.sample(i, f.prediction, ex.target, &f.latent);
        total += lambda * s.f1 + (1.0 - lambda) * s.f2;
    }
    Ok(total / batch.len() as f64)
}

/// Numerical gradient of [`batch_loss`] in parameter order (the order of
/// [`super::Gradients::flat`]).
pub fn numerical_gradient<O: Objective + ?Sized>(
    net: &Network,
    batch: &[Example],
    objective: &O,
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.param_count());
    for li in 0..net.layers().len() {
        for pi in 0..net.layers()[li].params.len() {
            for k in 0..net.layers()[li].params[pi].len() {
                let w = net.layers()[li].params[pi].data()[k];
                probe.layers_mut()[li].params[pi].data_mut()[k] = w + step;
                let up = batch_loss(&probe, batch, objective)?;
                probe.layers_mut()[li].params[pi].data_mut()[k] = w - step;
                let down = batch_loss(&probe, batch, objective)?;
                probe.layers_mut()[li].params[pi].data_mut()[k] = w;
                out.push((up - down) / (2.0 * step));
            }
        }
    }
    Ok(out)
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all entries. The floor
/// keeps entries whose true gradient is essentially zero from dominating
/// through finite-difference round-off.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
