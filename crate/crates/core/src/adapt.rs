//! Prototype-guided training for networks that see a reduced input.
//!
//! Each training latent `v(n)` is matched to its nearest reference center;
//! `u(m, n)` is 1 for that center and 0 elsewhere. With energies
//! `E(m, n) = |v(n) - c(m)|²` and a squashing function `f`, the latent term
//! is
//!
//! ```text
//! F2 = 1/(L N) Σ_m Σ_n (u(m, n) - (1 - f(E(m, n))))²
//! ```
//!
//! and the training objective is `λ F1 + (1 - λ) F2` with `F1` the output
//! mean squared error. Two squashes are available: a softmax over the `L`
//! scaled energies of a sample, or an elementwise logistic
//! `σ(scale (E - bias))`. With the softmax and `L > 2` the targets cannot
//! be met exactly, since the `f` values of a sample sum to one.

use alloc::vec;
use alloc::vec::Vec;

use crate::cluster::{nearest, LatentSet};
use crate::data::{Dataset, InputSpec};
use crate::net::{backward, fit, EpochRecord, Example, Gradients, Network, Objective, SampleLoss, TrainConfig};
use crate::proto::PrototypeSet;
use crate::tensor::sq_dist;
use crate::transfer::extract_latents;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Squash {
    /// Softmax over the scaled energies of one sample.
    Softmax,
    /// Elementwise `σ(scale (E - bias))`.
    Logistic,
}

impl Squash {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "softmax" | "softmax-over-clusters" => Ok(Squash::Softmax),
            "logistic" => Ok(Squash::Logistic),
            other => Err(Error::Config(alloc::format!("unknown squash `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Squash::Softmax => "softmax",
            Squash::Logistic => "logistic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptLossConfig {
    pub lambda: f64,
    /// Prototype set of the network trained on both modalities.
    pub reference: PrototypeSet,
    pub squash: Squash,
    /// Multiplier on `E` before squashing; `None` picks `1 / median(E)` of
    /// the first training batch.
    pub scale: Option<f64>,
    /// Logistic offset in energy units; `None` uses the same median.
    pub bias: Option<f64>,
}

impl AdaptLossConfig {
    pub fn new(lambda: f64, reference: PrototypeSet, squash: Squash) -> Self {
        Self {
            lambda,
            reference,
            squash,
            scale: None,
            bias: None,
        }
    }

    pub fn validate(&self, latent_dim: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must lie in [0, 1]".into()));
        }
        if self.reference.is_empty() {
            return Err(Error::NoPrototypes);
        }
        if self.reference.dim != latent_dim {
            return Err(Error::Dimension {
                expected: latent_dim,
                found: self.reference.dim,
            });
        }
        if self.scale.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("energy scale must be positive".into()));
        }
        if self.bias.is_some_and(|b| !b.is_finite()) {
            return Err(Error::Config("logistic bias must be finite".into()));
        }
        Ok(())
    }
}

/// One-hot target columns, stored as the selected row of each column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptationTargets {
    pub clusters: usize,
    pub selected: Vec<usize>,
}

impl AdaptationTargets {
    pub fn samples(&self) -> usize {
        self.selected.len()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        f64::from(u8::from(self.selected[n] == m))
    }

    /// Dense `L x N` matrix.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (0..self.clusters)
            .map(|m| (0..self.samples()).map(|n| self.get(m, n)).collect())
            .collect()
    }
}

fn check_dims(latents: &LatentSet, reference: &PrototypeSet) -> Result<()> {
    latents.validate()?;
    if reference.is_empty() {
        return Err(Error::NoPrototypes);
    }
    match latents.dim() {
        Some(d) if d != reference.dim => Err(Error::Dimension {
            expected: reference.dim,
            found: d,
        }),
        _ => Ok(()),
    }
}

/// Nearest reference center of each latent, lowest index on ties.
pub fn assign_targets(latents: &LatentSet, reference: &PrototypeSet) -> Result<AdaptationTargets> {
    check_dims(latents, reference)?;
    let centers = reference.centers();
    Ok(AdaptationTargets {
        clusters: centers.len(),
        selected: latents.vectors.iter().map(|v| nearest(&centers, v).0).collect(),
    })
}

/// `E[m][n]`: squared distance between latent `n` and center `m`.
pub fn residual_energies(latents: &LatentSet, reference: &PrototypeSet) -> Result<Vec<Vec<f64>>> {
    check_dims(latents, reference)?;
    Ok(reference
        .prototypes
        .iter()
        .map(|p| latents.vectors.iter().map(|v| sq_dist(v, &p.center)).collect())
        .collect())
}

/// `f` applied to one energy column.
pub fn squash_column(energies: &[f64], squash: Squash, scale: f64, bias: f64) -> Vec<f64> {
    match squash {
        Squash::Softmax => {
            let a: Vec<f64> = energies.iter().map(|e| scale * e).collect();
            let top = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = a.iter().map(|x| libm::exp(x - top)).collect();
            let sum: f64 = exp.iter().sum();
            exp.iter().map(|x| x / sum).collect()
        }
        Squash::Logistic => energies
            .iter()
            .map(|e| crate::net::logistic(scale * (e - bias)))
            .collect(),
    }
}

/// `(1/L) Σ_m (u_m - 1 + f_m)²` for one sample and its gradient with
/// respect to the energies.
fn column_loss(energies: &[f64], selected: usize, squash: Squash, scale: f64, bias: f64) -> (f64, Vec<f64>) {
    let l = energies.len() as f64;
    let f = squash_column(energies, squash, scale, bias);
    let resid: Vec<f64> = f
        .iter()
        .enumerate()
        .map(|(m, fm)| f64::from(u8::from(m == selected)) - 1.0 + fm)
        .collect();
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / l;
    let dg_df: Vec<f64> = resid.iter().map(|r| 2.0 * r / l).collect();
    let dg_de = match squash {
        Squash::Softmax => {
            let inner: f64 = dg_df.iter().zip(&f).map(|(g, f)| g * f).sum();
            f.iter().zip(&dg_df).map(|(fj, gj)| scale * fj * (gj - inner)).collect()
        }
        Squash::Logistic => f.iter().zip(&dg_df).map(|(fj, gj)| gj * scale * fj * (1.0 - fj)).collect(),
    };
    (loss, dg_de)
}

/// Mean of the squared target residuals over all `L x N` entries.
pub fn loss_f2(energies: &[Vec<f64>], u: &AdaptationTargets, squash: Squash, scale: f64, bias: f64) -> Result<f64> {
    if energies.len() != u.clusters {
        return Err(Error::Dimension {
            expected: u.clusters,
            found: energies.len(),
        });
    }
    if let Some(row) = energies.iter().find(|r| r.len() != u.samples()) {
        return Err(Error::Dimension {
            expected: u.samples(),
            found: row.len(),
        });
    }
    if u.samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = (0..u.samples())
        .map(|n| {
            let col: Vec<f64> = energies.iter().map(|r| r[n]).collect();
            column_loss(&col, u.selected[n], squash, scale, bias).0
        })
        .sum();
    Ok(total / u.samples() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub f1: f64,
    pub f2: f64,
    pub total: f64,
}

pub fn loss_total(f1: f64, f2: f64, lambda: f64) -> Result<LossBreakdown> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config("lambda must lie in [0, 1]".into()));
    }
    Ok(LossBreakdown {
        f1,
        f2,
        total: lambda * f1 + (1.0 - lambda) * f2,
    })
}

impl From<&EpochRecord> for LossBreakdown {
    fn from(r: &EpochRecord) -> Self {
        Self {
            f1: r.f1,
            f2: r.f2,
            total: r.total,
        }
    }
}

/// Median of every entry, or 1 when the median is zero.
pub fn auto_scale(energies: &[Vec<f64>]) -> f64 {
    let med = median_energy(energies);
    if med > 0.0 {
        1.0 / med
    } else {
        1.0
    }
}

fn median_energy(energies: &[Vec<f64>]) -> f64 {
    let mut all: Vec<f64> = energies.iter().flatten().copied().collect();
    if all.is_empty() {
        return 0.0;
    }
    all.sort_by(f64::total_cmp);
    let k = all.len();
    if k % 2 == 1 {
        all[k / 2]
    } else {
        0.5 * (all[k / 2 - 1] + all[k / 2])
    }
}

/// The composite objective as a training [`Objective`].
#[derive(Debug, Clone)]
pub struct AdaptObjective {
    lambda: f64,
    squash: Squash,
    centers: Vec<Vec<f64>>,
    scale: Option<f64>,
    bias: Option<f64>,
    targets: Vec<usize>,
    refresh: bool,
    first_batch: usize,
}

impl AdaptObjective {
    /// Objective whose targets are recomputed from the network's own
    /// latents at the start of every epoch.
    pub fn refreshing(cfg: &AdaptLossConfig) -> Self {
        Self {
            lambda: cfg.lambda,
            squash: cfg.squash,
            centers: cfg.reference.centers(),
            scale: cfg.scale,
            bias: cfg.bias,
            targets: Vec::new(),
            refresh: true,
            first_batch: TrainConfig::default().batch_size,
        }
    }

    /// Objective with fixed targets, one per sample of the slice it is
    /// used on.
    pub fn fixed(cfg: &AdaptLossConfig, u: &AdaptationTargets, scale: f64, bias: f64) -> Self {
        Self {
            scale: Some(scale),
            bias: Some(bias),
            targets: u.selected.clone(),
            refresh: false,
            ..Self::refreshing(cfg)
        }
    }

    /// Objective with fixed targets whose scale and bias are still taken
    /// from the first batch unless `cfg` sets them.
    pub fn anchored(cfg: &AdaptLossConfig, u: &AdaptationTargets) -> Self {
        Self {
            targets: u.selected.clone(),
            refresh: false,
            ..Self::refreshing(cfg)
        }
    }

    /// Number of leading training examples the automatic scale is
    /// measured on.
    pub fn with_first_batch(mut self, n: usize) -> Self {
        self.first_batch = n.max(1);
        self
    }

    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    pub fn bias(&self) -> Option<f64> {
        self.bias
    }

    pub fn targets(&self) -> AdaptationTargets {
        AdaptationTargets {
            clusters: self.centers.len(),
            selected: self.targets.clone(),
        }
    }

    fn energies(&self, latent: &[f64]) -> Vec<f64> {
        self.centers.iter().map(|c| sq_dist(latent, c)).collect()
    }
}

impl Objective for AdaptObjective {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn begin_epoch(&mut self, net: &Network, train: &[Example]) -> Result<()> {
        if self.scale.is_none() || self.bias.is_none() {
            let batch = &train[..train.len().min(self.first_batch)];
            let first = batch_energies(net, batch, &self.centers)?;
            let med = median_energy(&first);
            self.scale.get_or_insert(auto_scale(&first));
            self.bias.get_or_insert(med);
        }
        if self.refresh {
            self.targets = train
                .iter()
                .map(|ex| Ok(nearest(&self.centers, &net.forward(&ex.input)?.latent).0))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    fn sample(&self, index: usize, prediction: f64, target: f64, latent: &[f64]) -> SampleLoss {
        let e = prediction - target;
        let energies = self.energies(latent);
        let (scale, bias) = (self.scale.unwrap_or(1.0), self.bias.unwrap_or(0.0));
        let (f2, dg_de) = column_loss(&energies, self.targets[index], self.squash, scale, bias);
        let d_latent = (self.lambda < 1.0).then(|| {
            let w = 1.0 - self.lambda;
            let mut d = vec![0.0; latent.len()];
            for (c, g) in self.centers.iter().zip(&dg_de) {
                for ((dk, vk), ck) in d.iter_mut().zip(latent).zip(c) {
                    *dk += w * g * 2.0 * (vk - ck);
                }
            }
            d
        });
        SampleLoss {
            f1: e * e,
            f2,
            d_prediction: self.lambda * 2.0 * e,
            d_latent,
        }
    }
}

fn batch_energies(net: &Network, batch: &[Example], centers: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let latents = batch
        .iter()
        .map(|ex| Ok(net.forward(&ex.input)?.latent))
        .collect::<Result<Vec<_>>>()?;
    Ok(centers
        .iter()
        .map(|c| latents.iter().map(|v| sq_dist(v, c)).collect())
        .collect())
}

/// Scale and bias the objective would use on `batch`, honouring any fixed
/// values in `cfg`.
pub fn resolve_scale(net: &Network, batch: &[Example], cfg: &AdaptLossConfig) -> Result<(f64, f64)> {
    let e = batch_energies(net, batch, &cfg.reference.centers())?;
    Ok((cfg.scale.unwrap_or_else(|| auto_scale(&e)), cfg.bias.unwrap_or_else(|| median_energy(&e))))
}

/// Gradient of the mean composite loss over `batch` with the given targets.
/// The network is not modified.
pub fn adapt_gradients(net: &Network, batch: &[Example], cfg: &AdaptLossConfig, u: &AdaptationTargets) -> Result<Gradients> {
    cfg.validate(net.latent_dim())?;
    if u.samples() != batch.len() || u.clusters != cfg.reference.len() {
        return Err(Error::Dimension {
            expected: batch.len(),
            found: u.samples(),
        });
    }
    let (scale, bias) = resolve_scale(net, batch, cfg)?;
    backward(net, batch, &AdaptObjective::fixed(cfg, u, scale, bias))
}

/// Trains `net` on the composite objective, refreshing targets every
/// epoch. With `lambda = 1` the updates are bit-for-bit those of plain
/// output-loss training.
pub fn adapt_train(
    net: &mut Network,
    train: &[Example],
    valid: &[Example],
    cfg: &TrainConfig,
    acfg: &AdaptLossConfig,
) -> Result<Vec<EpochRecord>> {
    acfg.validate(net.latent_dim())?;
    let mut objective = AdaptObjective::refreshing(acfg).with_first_batch(cfg.batch_size);
    fit(net, train, valid, cfg, &mut objective)
}

/// Targets from a second view of the same training samples: each sample
/// is matched to the reference center nearest to the reference network's
/// latent of that sample, which sees both modalities.
pub fn reference_targets(
    reference_net: &Network,
    train: &Dataset,
    input: &InputSpec,
    reference: &PrototypeSet,
) -> Result<AdaptationTargets> {
    assign_targets(&extract_latents(reference_net, train, input)?, reference)
}

/// Like [`adapt_train`] but with targets fixed up front, one per training
/// example, for instance from [`reference_targets`].
pub fn adapt_train_anchored(
    net: &mut Network,
    train: &[Example],
    valid: &[Example],
    cfg: &TrainConfig,
    acfg: &AdaptLossConfig,
    u: &AdaptationTargets,
) -> Result<Vec<EpochRecord>> {
    acfg.validate(net.latent_dim())?;
    if u.samples() != train.len() || u.clusters != acfg.reference.len() {
        return Err(Error::Dimension {
            expected: train.len(),
            found: u.samples(),
        });
    }
    let mut objective = AdaptObjective::anchored(acfg, u).with_first_batch(cfg.batch_size);
    fit(net, train, valid, cfg, &mut objective)
}

#[cfg(test)]
mod tests;
