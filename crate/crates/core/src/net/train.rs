use alloc::string::ToString;
use alloc::vec::Vec;

use super::{Network, Trace};
use crate::rng;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 10,
            batch_size: 10,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// Settings used with [`desk_specs`](super::desk_specs) on the default
    /// synthetic data.
    pub fn desk(seed: u64) -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 40,
            batch_size: 10,
            seed,
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be a finite non-negative number".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One network input with its 0/1 target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Tensor,
    pub target: f64,
}

/// Per-parameter gradient tensors, laid out like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn zeros(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| l.params.iter().map(|p| Tensor::zeros(p.dims())).collect())
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Vec<Tensor>] {
        &self.layers
    }

    pub(crate) fn layer_mut(&mut self, i: usize) -> &mut [Tensor] {
        &mut self.layers[i]
    }

    /// All gradient values in parameter order.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.layers.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Loss value parts and derivatives for a single sample.
///
/// `f1` is the squared output error, `f2` the latent term (zero for plain
/// output losses). The derivatives already carry the mixing weights, so the
/// per-sample total is `lambda * f1 + (1 - lambda) * f2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLoss {
    pub f1: f64,
    pub f2: f64,
    pub d_prediction: f64,
    pub d_latent: Option<Vec<f64>>,
}

/// A per-sample separable training objective; batch losses are means.
pub trait Objective {
    /// Weight of the output term.
    fn lambda(&self) -> f64 {
        1.0
    }

    /// Hook run before every epoch, and once before evaluation-only use.
    fn begin_epoch(&mut self, _net: &Network, _train: &[Example]) -> Result<()> {
        Ok(())
    }

    /// `index` is the sample's position in the slice handed to the caller
    /// (training set for `fit`, batch for `backward`).
    fn sample(&self, index: usize, prediction: f64, target: f64, latent: &[f64]) -> SampleLoss;
}

/// Built-in losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Squared error between the logistic output and the 0/1 target.
    MseOutput,
}

impl Loss {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mse_output" => Ok(Loss::MseOutput),
            other => Err(Error::UnknownLoss(other.to_string())),
        }
    }
}

impl Objective for Loss {
    fn sample(&self, _index: usize, prediction: f64, target: f64, _latent: &[f64]) -> SampleLoss {
        let e = prediction - target;
        SampleLoss {
            f1: e * e,
            f2: 0.0,
            d_prediction: 2.0 * e,
            d_latent: None,
        }
    }
}

/// Gradient of the mean batch loss. Dropout is disabled; weights are not
/// touched.
pub fn backward<O: Objective + ?Sized>(net: &Network, batch: &[Example], objective: &O) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grads = Gradients::zeros(net);
    for (i, ex) in batch.iter().enumerate() {
        net.check_input(&ex.input)?;
        let trace = net.trace(ex.input.data(), None);
        accumulate(net, &trace, objective, i, ex.target, &mut grads)?;
    }
    grads.scale(1.0 / batch.len() as f64);
    Ok(grads)
}

fn accumulate<O: Objective + ?Sized>(
    net: &Network,
    trace: &Trace,
    objective: &O,
    index: usize,
    target: f64,
    grads: &mut Gradients,
) -> Result<SampleLoss> {
    let s = objective.sample(index, trace.prediction, target, &trace.latent);
    if let Some(dl) = &s.d_latent {
        if dl.len() != trace.latent.len() {
            return Err(Error::Dimension {
                expected: trace.latent.len(),
                found: dl.len(),
            });
        }
    }
    net.backprop(trace, s.d_prediction, s.d_latent.as_deref(), grads);
    Ok(s)
}

/// Per-epoch training record. Loss parts are means over the full training
/// set, evaluated in inference mode after the epoch's updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub f1: f64,
    pub f2: f64,
    pub total: f64,
    pub train_acc: f64,
    pub valid_acc: Option<f64>,
}

/// Plain output-MSE training.
pub fn train(net: &mut Network, train: &[Example], valid: &[Example], cfg: &TrainConfig) -> Result<Vec<EpochRecord>> {
    fit(net, train, valid, cfg, &mut Loss::MseOutput)
}

/// Mini-batch gradient descent on an arbitrary objective.
///
/// A single stream seeded with `cfg.seed` drives shuffling and dropout, so
/// the same network, data and config always produce the same weights.
pub fn fit<O: Objective + ?Sized>(
    net: &mut Network,
    train: &[Example],
    valid: &[Example],
    cfg: &TrainConfig,
    objective: &mut O,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ex in train.iter().chain(valid) {
        net.check_input(&ex.input)?;
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        objective.begin_epoch(net, train)?;
        if cfg.shuffle {
            rng::shuffle(&mut rng, &mut order);
        }
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros(net);
            for &i in batch {
                let trace = net.trace(train[i].input.data(), Some(&mut rng));
                accumulate(net, &trace, objective, i, train[i].target, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            step(net, &grads, cfg.learning_rate);
        }
        let record = epoch_record(net, train, valid, objective, epoch)?;
        if !(record.total.is_finite() && record.f1.is_finite() && record.f2.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        history.push(record);
    }
    if !net.layers().iter().flat_map(|l| l.params.iter()).all(Tensor::is_finite) {
        return Err(Error::Diverged { epoch: cfg.epochs.saturating_sub(1) });
    }
    Ok(history)
}

fn step(net: &mut Network, grads: &Gradients, lr: f64) {
    for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
        for (p, gp) in layer.params.iter_mut().zip(g) {
            for (w, d) in p.data_mut().iter_mut().zip(gp.data()) {
                *w -= lr * d;
            }
        }
    }
}

fn epoch_record<O: Objective + ?Sized>(
    net: &Network,
    train: &[Example],
    valid: &[Example],
    objective: &O,
    epoch: usize,
) -> Result<EpochRecord> {
    let lambda = objective.lambda();
    let (mut f1, mut f2, mut correct) = (0.0, 0.0, 0usize);
    for (i, ex) in train.iter().enumerate() {
        let trace = net.trace(ex.input.data(), None);
        let s = objective.sample(i, trace.prediction, ex.target, &trace.latent);
        f1 += s.f1;
        f2 += s.f2;
        correct += usize::from(predicted_class(trace.prediction) == class_of(ex.target));
    }
    let n = train.len() as f64;
    let (f1, f2) = (f1 / n, f2 / n);
    let valid_acc = if valid.is_empty() {
        None
    } else {
        Some(evaluate(net, valid)?.total())
    };
    Ok(EpochRecord {
        epoch,
        f1,
        f2,
        total: lambda * f1 + (1.0 - lambda) * f2,
        train_acc: 100.0 * correct as f64 / n,
        valid_acc,
    })
}

/// Decision rule: predictions at or above 0.5 are class 1.
pub(crate) fn predicted_class(prediction: f64) -> u8 {
    u8::from(prediction >= 0.5)
}

fn class_of(target: f64) -> u8 {
    u8::from(target >= 0.5)
}

/// Correct/total counts per class (index 0 = control, 1 = patient).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accuracy {
    pub correct: [usize; 2],
    pub count: [usize; 2],
}

impl Accuracy {
    pub fn record(&mut self, label: u8, predicted: u8) {
        let c = usize::from(label.min(1));
        self.count[c] += 1;
        self.correct[c] += usize::from(label == predicted);
    }

    /// Percent correct for one class; `None` when the class is absent.
    pub fn class(&self, label: u8) -> Option<f64> {
        let c = usize::from(label.min(1));
        (self.count[c] > 0).then(|| 100.0 * self.correct[c] as f64 / self.count[c] as f64)
    }

    pub fn total(&self) -> f64 {
        let n = self.count[0] + self.count[1];
        if n == 0 {
            return 0.0;
        }
        100.0 * (self.correct[0] + self.correct[1]) as f64 / n as f64
    }

    pub fn samples(&self) -> usize {
        self.count[0] + self.count[1]
    }
}

pub fn evaluate(net: &Network, data: &[Example]) -> Result<Accuracy> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = Accuracy::default();
    for ex in data {
        let p = net.forward(&ex.input)?.prediction;
        acc.record(class_of(ex.target), predicted_class(p));
    }
    Ok(acc)
}
