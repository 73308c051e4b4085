//! Layer-stack networks with a latent tap.
//!
//! A [`Network`] is an ordered list of layers ending in a single logistic
//! output unit. One layer is designated as the latent tap: its flattened
//! output is the latent vector handed to clustering and prototype code.
//!
//! Shapes flow through the stack as plain dim lists. Convolution and
//! pooling layers accept an optional leading time axis (`[T, C, H, W]`) and
//! apply the same weights to every step; a GRU consumes that axis.

pub mod gradcheck;
mod gru;
mod kernels;
mod train;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{self, SplitMix64};
use crate::tensor::numel;
use crate::{Error, Result, Tensor};

pub use train::{
    backward, evaluate, fit, train, Accuracy, EpochRecord, Example, Gradients, Loss, Objective,
    SampleLoss, TrainConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Dense {
        units: usize,
    },
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        stride: usize,
    },
    Conv1d {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    Dropout {
        p: f64,
    },
    Relu,
    Gru {
        units: usize,
        sequences: bool,
    },
    Output,
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Conv1d { .. } => "conv1d",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Relu => "relu",
            LayerKind::Gru { .. } => "gru",
            LayerKind::Output => "output",
        }
    }
}

/// One entry of a network description. Unnamed layers are called
/// `<kind>-<n>`, counting layers of the same kind from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub name: Option<String>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        Self { kind, name: None }
    }

    pub fn dense(units: usize) -> Self {
        Self::new(LayerKind::Dense { units })
    }

    pub fn conv2d(filters: usize, kernel: [usize; 2], stride: usize) -> Self {
        Self::new(LayerKind::Conv2d {
            filters,
            kernel,
            stride,
        })
    }

    pub fn conv1d(filters: usize, kernel: usize, stride: usize) -> Self {
        Self::new(LayerKind::Conv1d {
            filters,
            kernel,
            stride,
        })
    }

    pub fn maxpool(size: usize, stride: usize) -> Self {
        Self::new(LayerKind::MaxPool { size, stride })
    }

    pub fn dropout(p: f64) -> Self {
        Self::new(LayerKind::Dropout { p })
    }

    pub fn relu() -> Self {
        Self::new(LayerKind::Relu)
    }

    pub fn gru(units: usize, sequences: bool) -> Self {
        Self::new(LayerKind::Gru { units, sequences })
    }

    pub fn output() -> Self {
        Self::new(LayerKind::Output)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }
}

/// Name of the tapped layer in [`desk_specs`].
pub const DESK_TAP: &str = "latent";

/// The desk-scale convolutional-recurrent network: one strided
/// convolution shared across the three steps, a coarse max pool that keeps
/// a 2 x 2 grid per filter, a GRU over the steps and a tapped 16-unit
/// layer.
pub fn desk_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv2d(8, [5, 5], 2),
        LayerSpec::relu(),
        LayerSpec::maxpool(7, 7),
        LayerSpec::gru(16, false),
        LayerSpec::dense(16),
        LayerSpec::relu().named(DESK_TAP),
        LayerSpec::output(),
    ]
}

/// A built layer: resolved name, shapes and parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) kind: LayerKind,
    pub(crate) name: String,
    pub(crate) in_dims: Vec<usize>,
    pub(crate) out_dims: Vec<usize>,
    pub(crate) params: Vec<Tensor>,
}

impl Layer {
    pub fn kind(&self) -> &LayerKind {
        &self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dims: Vec<usize>,
    layers: Vec<Layer>,
    tap: usize,
}

/// Forward result for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub prediction: f64,
    pub latent: Vec<f64>,
}

fn out_shape(kind: &LayerKind, input: &[usize]) -> core::result::Result<Vec<usize>, String> {
    let rank = input.len();
    match *kind {
        LayerKind::Dense { units } => {
            if units == 0 {
                return Err("dense layer needs at least one unit".into());
            }
            Ok(vec![units])
        }
        LayerKind::Output => Ok(vec![1]),
        LayerKind::Relu => Ok(input.to_vec()),
        LayerKind::Dropout { p } => {
            if !(0.0..1.0).contains(&p) {
                return Err(format!("dropout probability {p} outside [0, 1)"));
            }
            Ok(input.to_vec())
        }
        LayerKind::Conv2d {
            filters,
            kernel,
            stride,
        } => {
            if rank != 3 && rank != 4 {
                return Err(format!("conv2d expects [C,H,W] or [T,C,H,W], got {input:?}"));
            }
            if filters == 0 || stride == 0 || kernel[0] == 0 || kernel[1] == 0 {
                return Err("conv2d sizes must be positive".into());
            }
            let (h, w) = (input[rank - 2], input[rank - 1]);
            if h < kernel[0] || w < kernel[1] {
                return Err(format!("kernel {kernel:?} larger than input {h}x{w}"));
            }
            let mut out = input[..rank - 3].to_vec();
            out.extend([
                filters,
                (h - kernel[0]) / stride + 1,
                (w - kernel[1]) / stride + 1,
            ]);
            Ok(out)
        }
        LayerKind::Conv1d {
            filters,
            kernel,
            stride,
        } => {
            let len = match rank {
                1 => input[0],
                2 => input[1],
                _ => return Err(format!("conv1d expects [L] or [C,L], got {input:?}")),
            };
            if filters == 0 || stride == 0 || kernel == 0 {
                return Err("conv1d sizes must be positive".into());
            }
            if len < kernel {
                return Err(format!("kernel {kernel} longer than signal {len}"));
            }
            Ok(vec![filters, (len - kernel) / stride + 1])
        }
        LayerKind::MaxPool { size, stride } => {
            if size == 0 || stride == 0 {
                return Err("pool sizes must be positive".into());
            }
            match rank {
                2 => {
                    if input[1] < size {
                        return Err(format!("pool window {size} longer than signal"));
                    }
                    Ok(vec![input[0], (input[1] - size) / stride + 1])
                }
                3 | 4 => {
                    let (h, w) = (input[rank - 2], input[rank - 1]);
                    if h < size || w < size {
                        return Err(format!("pool window {size} larger than {h}x{w}"));
                    }
                    let mut out = input[..rank - 2].to_vec();
                    out.extend([(h - size) / stride + 1, (w - size) / stride + 1]);
                    Ok(out)
                }
                _ => Err(format!("maxpool expects rank 2-4, got {input:?}")),
            }
        }
        LayerKind::Gru { units, sequences } => {
            if rank < 2 {
                return Err(format!("gru expects a leading time axis, got {input:?}"));
            }
            if units == 0 {
                return Err("gru needs at least one unit".into());
            }
            Ok(if sequences {
                vec![input[0], units]
            } else {
                vec![units]
            })
        }
    }
}

fn init_params(kind: &LayerKind, input: &[usize], rng: &mut SplitMix64) -> Vec<Tensor> {
    fn glorot(dims: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Tensor {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..numel(&dims))
            .map(|_| rng::uniform(rng, -limit, limit))
            .collect();
        Tensor::from_parts(dims, data)
    }
    let rank = input.len();
    match *kind {
        LayerKind::Dense { units } => {
            let d = numel(input);
            vec![glorot(vec![units, d], d, units, rng), Tensor::zeros(&[units])]
        }
        LayerKind::Output => {
            let d = numel(input);
            vec![glorot(vec![1, d], d, 1, rng), Tensor::zeros(&[1])]
        }
        LayerKind::Conv2d {
            filters, kernel, ..
        } => {
            let c = input[rank - 3];
            let area = kernel[0] * kernel[1];
            vec![
                glorot(
                    vec![filters, c, kernel[0], kernel[1]],
                    c * area,
                    filters * area,
                    rng,
                ),
                Tensor::zeros(&[filters]),
            ]
        }
        LayerKind::Conv1d {
            filters, kernel, ..
        } => {
            let c = if rank == 1 { 1 } else { input[0] };
            vec![
                glorot(vec![filters, c, kernel], c * kernel, filters * kernel, rng),
                Tensor::zeros(&[filters]),
            ]
        }
        LayerKind::Gru { units, .. } => {
            let d = numel(&input[1..]);
            // Gate blocks are stacked as [update; reset; candidate].
            vec![
                glorot(vec![3 * units, d], d, units, rng),
                glorot(vec![3 * units, units], units, units, rng),
                Tensor::zeros(&[3 * units]),
            ]
        }
        LayerKind::MaxPool { .. } | LayerKind::Dropout { .. } | LayerKind::Relu => Vec::new(),
    }
}

fn expected_param_dims(kind: &LayerKind, input: &[usize]) -> Vec<Vec<usize>> {
    let rank = input.len();
    match *kind {
        LayerKind::Dense { units } => vec![vec![units, numel(input)], vec![units]],
        LayerKind::Output => vec![vec![1, numel(input)], vec![1]],
        LayerKind::Conv2d {
            filters, kernel, ..
        } => vec![
            vec![filters, input[rank - 3], kernel[0], kernel[1]],
            vec![filters],
        ],
        LayerKind::Conv1d {
            filters, kernel, ..
        } => {
            let c = if rank == 1 { 1 } else { input[0] };
            vec![vec![filters, c, kernel], vec![filters]]
        }
        LayerKind::Gru { units, .. } => {
            let d = numel(&input[1..]);
            vec![
                vec![3 * units, d],
                vec![3 * units, units],
                vec![3 * units],
            ]
        }
        LayerKind::MaxPool { .. } | LayerKind::Dropout { .. } | LayerKind::Relu => Vec::new(),
    }
}

/// Resolves names and shapes, checking that the stack composes and ends in
/// the single output unit.
fn resolve(specs: &[LayerSpec], input_dims: &[usize]) -> Result<Vec<(LayerKind, String, Vec<usize>, Vec<usize>)>> {
    if input_dims.is_empty() || input_dims.contains(&0) {
        return Err(Error::Config(format!("invalid input dims {input_dims:?}")));
    }
    let mut counts: Vec<(&'static str, usize)> = Vec::new();
    let mut resolved: Vec<(LayerKind, String, Vec<usize>, Vec<usize>)> = Vec::new();
    let mut dims = input_dims.to_vec();
    for (i, spec) in specs.iter().enumerate() {
        let tag = spec.kind.tag();
        let name = match &spec.name {
            Some(n) => n.clone(),
            None => {
                let slot = match counts.iter_mut().find(|(t, _)| *t == tag) {
                    Some(slot) => slot,
                    None => {
                        counts.push((tag, 0));
                        counts.last_mut().unwrap()
                    }
                };
                let n = format!("{tag}-{}", slot.1);
                slot.1 += 1;
                n
            }
        };
        let from = resolved
            .last()
            .map(|l| l.1.clone())
            .unwrap_or_else(|| "input".to_string());
        if resolved.iter().any(|l| l.1 == name) {
            return Err(Error::LayerComposition {
                from,
                to: name,
                reason: "duplicate layer name".into(),
            });
        }
        if matches!(spec.kind, LayerKind::Output) && i + 1 != specs.len() {
            return Err(Error::LayerComposition {
                from,
                to: name,
                reason: "output layer must be last".into(),
            });
        }
        let out = out_shape(&spec.kind, &dims).map_err(|reason| Error::LayerComposition {
            from,
            to: name.clone(),
            reason,
        })?;
        resolved.push((spec.kind.clone(), name, dims, out.clone()));
        dims = out;
    }
    match resolved.last() {
        Some((LayerKind::Output, ..)) => Ok(resolved),
        Some((_, name, ..)) => Err(Error::LayerComposition {
            from: name.clone(),
            to: "end".into(),
            reason: "network must end with an output layer".into(),
        }),
        None => Err(Error::Config("empty layer list".into())),
    }
}

impl Network {
    /// Builds a network with scaled-uniform weights drawn from a stream
    /// seeded by `seed`; biases start at zero. `tap` names the layer whose
    /// output is the latent vector.
    pub fn build(specs: &[LayerSpec], input_dims: &[usize], tap: &str, seed: u64) -> Result<Self> {
        let resolved = resolve(specs, input_dims)?;
        let mut rng = rng::seeded(seed);
        let layers: Vec<Layer> = resolved
            .into_iter()
            .map(|(kind, name, in_dims, out_dims)| {
                let params = init_params(&kind, &in_dims, &mut rng);
                Layer {
                    kind,
                    name,
                    in_dims,
                    out_dims,
                    params,
                }
            })
            .collect();
        Self::assemble(input_dims.to_vec(), layers, tap)
    }

    /// Rebuilds a network from stored parameters, validating that the specs
    /// compose and every parameter tensor has the shape its layer needs.
    pub fn from_parts(
        specs: &[LayerSpec],
        input_dims: &[usize],
        tap: &str,
        params: Vec<Vec<Tensor>>,
    ) -> Result<Self> {
        let resolved = resolve(specs, input_dims)?;
        if params.len() != resolved.len() {
            return Err(Error::Dimension {
                expected: resolved.len(),
                found: params.len(),
            });
        }
        let mut layers = Vec::with_capacity(resolved.len());
        for ((kind, name, in_dims, out_dims), params) in resolved.into_iter().zip(params) {
            let want = expected_param_dims(&kind, &in_dims);
            let got: Vec<Vec<usize>> = params.iter().map(|t| t.dims().to_vec()).collect();
            if want != got {
                return Err(Error::LayerComposition {
                    from: name.clone(),
                    to: name,
                    reason: format!("parameter shapes {got:?}, expected {want:?}"),
                });
            }
            if params.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite);
            }
            layers.push(Layer {
                kind,
                name,
                in_dims,
                out_dims,
                params,
            });
        }
        Self::assemble(input_dims.to_vec(), layers, tap)
    }

    fn assemble(input_dims: Vec<usize>, layers: Vec<Layer>, tap: &str) -> Result<Self> {
        let tap = layers
            .iter()
            .position(|l| l.name == tap)
            .ok_or_else(|| Error::UnknownLayer(tap.to_string()))?;
        Ok(Self {
            input_dims,
            layers,
            tap,
        })
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec::new(l.kind.clone()).named(l.name.clone()))
            .collect()
    }

    pub fn tap_name(&self) -> &str {
        &self.layers[self.tap].name
    }

    pub fn tap_index(&self) -> usize {
        self.tap
    }

    pub fn latent_dim(&self) -> usize {
        numel(&self.layers[self.tap].out_dims)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params.iter())
            .map(Tensor::len)
            .sum()
    }

    /// Moves the latent tap to another layer.
    pub fn with_tap(mut self, tap: &str) -> Result<Self> {
        self.tap = self
            .layers
            .iter()
            .position(|l| l.name == tap)
            .ok_or_else(|| Error::UnknownLayer(tap.to_string()))?;
        Ok(self)
    }

    /// Inference-mode forward pass: dropout is the identity and the network
    /// is not touched.
    pub fn forward(&self, x: &Tensor) -> Result<Forward> {
        self.check_input(x)?;
        let trace = self.trace(x.data(), None);
        Ok(Forward {
            prediction: trace.prediction,
            latent: trace.latent,
        })
    }

    /// Forward pass with dropout masks drawn from `rng`.
    pub fn forward_train(&self, x: &Tensor, rng: &mut SplitMix64) -> Result<Forward> {
        self.check_input(x)?;
        let trace = self.trace(x.data(), Some(rng));
        Ok(Forward {
            prediction: trace.prediction,
            latent: trace.latent,
        })
    }

    pub(crate) fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.dims() != self.input_dims.as_slice() {
            return Err(Error::InputShape {
                expected: self.input_dims.clone(),
                found: x.dims().to_vec(),
            });
        }
        Ok(())
    }

    pub(crate) fn trace(&self, x: &[f64], mut rng: Option<&mut SplitMix64>) -> Trace {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        let mut latent = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, cache) = kernels::forward(layer, act, rng.as_deref_mut());
            caches.push(cache);
            act = out;
            if i == self.tap {
                latent = act.clone();
            }
        }
        Trace {
            caches,
            prediction: act[0],
            latent,
        }
    }

    /// Accumulates into `grads` the gradient of a per-sample loss whose
    /// derivatives with respect to the prediction and the tapped latent are
    /// `d_pred` and `d_latent`.
    pub(crate) fn backprop(
        &self,
        trace: &Trace,
        d_pred: f64,
        d_latent: Option<&[f64]>,
        grads: &mut Gradients,
    ) {
        let mut up = vec![d_pred];
        for i in (0..self.layers.len()).rev() {
            if i == self.tap {
                if let Some(dl) = d_latent {
                    for (u, d) in up.iter_mut().zip(dl) {
                        *u += d;
                    }
                }
            }
            up = kernels::backward(&self.layers[i], &trace.caches[i], &up, grads.layer_mut(i));
        }
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

pub(crate) struct Trace {
    caches: Vec<kernels::Cache>,
    pub(crate) prediction: f64,
    pub(crate) latent: Vec<f64>,
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}
