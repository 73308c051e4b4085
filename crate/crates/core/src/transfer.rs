//! Chained training: a second network learns from the frozen latents of a
//! first one, and the pair feeds a prototype set at inference time.

use alloc::vec::Vec;

use crate::cluster::LatentSet;
use crate::data::{augment_balance, default_noise_sigma, Dataset, InputSpec, Sample};
use crate::net::{train, Accuracy, EpochRecord, Example, LayerSpec, Network, TrainConfig};
use crate::proto::{classify, Classification, PrototypeSet};
use crate::{Error, Result, Tensor};

/// Latents of every sample in inference mode, labels and subjects carried
/// along.
pub fn extract_latents(net: &Network, ds: &Dataset, input: &InputSpec) -> Result<LatentSet> {
    let vectors = ds
        .samples
        .iter()
        .map(|s| Ok(net.forward(&input.encode(s)?)?.latent))
        .collect::<Result<Vec<_>>>()?;
    LatentSet::new(vectors, ds.labels(), ds.name.clone(), net.tap_name())?.with_subjects(ds.subject_ids())
}

/// Latent vectors as training examples for a network reading `[M]` inputs.
pub fn latent_examples(latents: &LatentSet) -> Vec<Example> {
    latents
        .vectors
        .iter()
        .zip(&latents.labels)
        .map(|(v, &l)| Example {
            input: Tensor::vector(v.clone()),
            target: f64::from(l),
        })
        .collect()
}

/// Name of the tapped layer in [`default_back_specs`].
pub const BACK_TAP: &str = "latent";

/// Two 1-D convolutions over the latent vector, a max pool, 20% dropout
/// and three fully connected layers, the last of which is tapped.
pub fn default_back_specs(latent_units: usize) -> Vec<LayerSpec> {
    alloc::vec![
        LayerSpec::conv1d(4, 3, 1),
        LayerSpec::relu(),
        LayerSpec::conv1d(4, 3, 1),
        LayerSpec::relu(),
        LayerSpec::maxpool(2, 2),
        LayerSpec::dropout(0.2),
        LayerSpec::dense(32),
        LayerSpec::relu(),
        LayerSpec::dense(24),
        LayerSpec::relu(),
        LayerSpec::dense(latent_units),
        LayerSpec::relu().named(BACK_TAP),
        LayerSpec::output(),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub front: Network,
    /// How samples are encoded for `front`.
    pub front_input: InputSpec,
    pub back: Network,
}

impl ChainModel {
    pub fn back_tap_dim(&self) -> usize {
        self.back.latent_dim()
    }

    /// Back-network latent of one sample.
    pub fn latent(&self, sample: &Sample) -> Result<Vec<f64>> {
        let v = self.front.forward(&self.front_input.encode(sample)?)?.latent;
        Ok(self.back.forward(&Tensor::vector(v))?.latent)
    }

    pub fn latents(&self, ds: &Dataset) -> Result<LatentSet> {
        let vectors = ds.samples.iter().map(|s| self.latent(s)).collect::<Result<Vec<_>>>()?;
        LatentSet::new(vectors, ds.labels(), ds.name.clone(), self.back.tap_name())?.with_subjects(ds.subject_ids())
    }

    /// Output accuracy of the back network over a dataset.
    pub fn evaluate(&self, ds: &Dataset) -> Result<Accuracy> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut acc = Accuracy::default();
        for s in &ds.samples {
            acc.record(s.label, u8::from(self.predict(s)? >= 0.5));
        }
        Ok(acc)
    }

    /// Back-network prediction of one sample.
    pub fn predict(&self, sample: &Sample) -> Result<f64> {
        let v = self.front.forward(&self.front_input.encode(sample)?)?.latent;
        Ok(self.back.forward(&Tensor::vector(v))?.prediction)
    }
}

/// Trains a back network on the front network's latents of `ds_new`,
/// which is class-balanced first. The front network is only read.
pub fn chain_train(
    front: &Network,
    front_input: InputSpec,
    ds_new: &Dataset,
    valid: Option<&Dataset>,
    back_specs: &[LayerSpec],
    back_tap: &str,
    cfg: &TrainConfig,
) -> Result<(ChainModel, Vec<EpochRecord>)> {
    if ds_new.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let balanced = augment_balance(ds_new, default_noise_sigma(ds_new), cfg.seed)?;
    let train_set = latent_examples(&extract_latents(front, &balanced, &front_input)?);
    let valid_set = match valid {
        Some(v) if !v.is_empty() => latent_examples(&extract_latents(front, v, &front_input)?),
        _ => Vec::new(),
    };
    let mut back = Network::build(back_specs, &[front.latent_dim()], back_tap, cfg.seed)?;
    let history = train(&mut back, &train_set, &valid_set, cfg)?;
    Ok((
        ChainModel {
            front: front.clone(),
            front_input,
            back,
        },
        history,
    ))
}

/// Sample, front latent, back latent, nearest prototype of `unified`.
pub fn composite_predict(chain: &ChainModel, unified: &PrototypeSet, sample: &Sample) -> Result<Classification> {
    classify(unified, &chain.latent(sample)?)
}

#[cfg(test)]
mod tests;
