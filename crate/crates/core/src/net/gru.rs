//! Gated recurrent unit over a leading time axis.
//!
//! ```text
//! z = σ(Wz x + Uz h + bz)
//! r = σ(Wr x + Ur h + br)
//! n = tanh(Wn x + Un (r ⊙ h) + bn)
//! h' = (1 - z) ⊙ h + z ⊙ n
//! ```
//!
//! The hidden state starts at zero. Parameters are `W [3H, D]`,
//! `U [3H, H]` and `b [3H]` with gate blocks ordered update, reset,
//! candidate.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels::dot;
use super::logistic;
use crate::Tensor;

pub(crate) struct GruCache {
    inputs: Vec<f64>,
    step_in: usize,
    sequences: bool,
    /// Hidden state before each step; `hidden[t + 1]` is after step `t`.
    hidden: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
}

pub(crate) fn forward(
    params: &[Tensor],
    units: usize,
    steps: usize,
    sequences: bool,
    x: Vec<f64>,
) -> (Vec<f64>, GruCache) {
    let w = params[0].data();
    let u = params[1].data();
    let b = params[2].data();
    let d = x.len() / steps;
    let mut hidden = vec![vec![0.0; units]];
    let (mut zs, mut rs, mut ns) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..steps {
        let xt = &x[t * d..(t + 1) * d];
        let h = &hidden[t];
        let mut z = vec![0.0; units];
        let mut r = vec![0.0; units];
        for k in 0..units {
            z[k] = logistic(b[k] + dot(&w[k * d..(k + 1) * d], xt) + dot(&u[k * units..(k + 1) * units], h));
            let kr = units + k;
            r[k] = logistic(
                b[kr] + dot(&w[kr * d..(kr + 1) * d], xt) + dot(&u[kr * units..(kr + 1) * units], h),
            );
        }
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let mut n = vec![0.0; units];
        let mut next = vec![0.0; units];
        for k in 0..units {
            let kn = 2 * units + k;
            n[k] = libm::tanh(
                b[kn] + dot(&w[kn * d..(kn + 1) * d], xt) + dot(&u[kn * units..(kn + 1) * units], &rh),
            );
            next[k] = (1.0 - z[k]) * h[k] + z[k] * n[k];
        }
        zs.push(z);
        rs.push(r);
        ns.push(n);
        hidden.push(next);
    }
    let y = if sequences {
        hidden[1..].concat()
    } else {
        hidden[steps].clone()
    };
    (
        y,
        GruCache {
            inputs: x,
            step_in: d,
            sequences,
            hidden,
            z: zs,
            r: rs,
            n: ns,
        },
    )
}

pub(crate) fn backward(
    params: &[Tensor],
    units: usize,
    cache: &GruCache,
    up: &[f64],
    grads: &mut [Tensor],
) -> Vec<f64> {
    let w = params[0].data();
    let u = params[1].data();
    let d = cache.step_in;
    let steps = cache.z.len();
    let mut dx = vec![0.0; cache.inputs.len()];
    let mut dh = vec![0.0; units];
    if !cache.sequences {
        dh.copy_from_slice(up);
    }
    let (gw, rest) = grads.split_at_mut(1);
    let (gu, gb) = rest.split_at_mut(1);
    let (gw, gu, gb) = (gw[0].data_mut(), gu[0].data_mut(), gb[0].data_mut());
    for t in (0..steps).rev() {
        if cache.sequences {
            for (a, g) in dh.iter_mut().zip(&up[t * units..(t + 1) * units]) {
                *a += g;
            }
        }
        let h = &cache.hidden[t];
        let (z, r, n) = (&cache.z[t], &cache.r[t], &cache.n[t]);
        let xt = &cache.inputs[t * d..(t + 1) * d];
        let mut dh_prev: Vec<f64> = dh.iter().zip(z).map(|(g, z)| g * (1.0 - z)).collect();
        // pre-activation gradients for the update, reset and candidate blocks
        let mut da = vec![0.0; 3 * units];
        for k in 0..units {
            da[k] = dh[k] * (n[k] - h[k]) * z[k] * (1.0 - z[k]);
            da[2 * units + k] = dh[k] * z[k] * (1.0 - n[k] * n[k]);
        }
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        // candidate block reads r ⊙ h through Un
        let mut drh = vec![0.0; units];
        for k in 0..units {
            let g = da[2 * units + k];
            if g == 0.0 {
                continue;
            }
            let row = (2 * units + k) * units;
            for j in 0..units {
                gu[row + j] += g * rh[j];
                drh[j] += g * u[row + j];
            }
        }
        for j in 0..units {
            da[units + j] = drh[j] * h[j] * r[j] * (1.0 - r[j]);
            dh_prev[j] += drh[j] * r[j];
        }
        // update and reset blocks read h through Uz, Ur
        for k in 0..2 * units {
            let g = da[k];
            if g == 0.0 {
                continue;
            }
            let row = k * units;
            for j in 0..units {
                gu[row + j] += g * h[j];
                dh_prev[j] += g * u[row + j];
            }
        }
        let dxt = &mut dx[t * d..(t + 1) * d];
        for k in 0..3 * units {
            let g = da[k];
            gb[k] += g;
            if g == 0.0 {
                continue;
            }
            let row = k * d;
            for j in 0..d {
                gw[row + j] += g * xt[j];
                dxt[j] += g * w[row + j];
            }
        }
        dh = dh_prev;
    }
    dx
}
