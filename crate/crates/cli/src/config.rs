//! Experiment configuration files (TOML).
//!
//! One file describes one experiment. Every section is optional and falls
//! back to the desk-scale defaults; unknown keys anywhere are rejected.
//! The seed is set once at the top level and feeds data generation,
//! splitting, balancing, weight initialisation, training and clustering.
//!
//! ```toml
//! seed = 0
//!
//! [data]                 # synthetic generator
//! n_subjects = 200
//! samples_per_subject = 2
//! style = "color-scan"
//!
//! [split]
//! fractions = [0.65, 0.15, 0.20]
//! balance = true         # class-balance the training split
//!
//! [network]
//! modality = "dual"      # dual | scan-only | volume-only
//! layout = "sequence"    # sequence | flat
//! tap = "latent"
//! layers = [
//!   { kind = "conv2d", filters = 8, kernel = [5, 5], stride = 2 },
//!   { kind = "relu" },
//!   { kind = "maxpool", size = 7, stride = 7 },
//!   { kind = "gru", units = 16 },
//!   { kind = "dense", units = 16 },
//!   { kind = "relu", name = "latent" },
//!   { kind = "output" },
//! ]
//!
//! [train]
//! learning_rate = 0.05
//! epochs = 40
//! batch_size = 10
//!
//! [cluster]
//! clusters = 5
//!
//! [chain]                # back network of a chained pair
//! latent_units = 16
//!
//! [merge]
//! pca_dim = 3            # omitted: the lower of the two set dims
//!
//! [adapt]
//! lambda = 0.5
//! squash = "softmax"     # softmax | logistic
//! targets = "refresh"    # refresh | reference
//! ```

use std::path::Path;

use protolatent_core::adapt::Squash;
use protolatent_core::cluster::KMeansConfig;
use protolatent_core::data::{GeneratorConfig, InputSpec, Layout, Modality};
use protolatent_core::net::{desk_specs, LayerKind, LayerSpec, Network, TrainConfig, DESK_TAP};
use protolatent_core::transfer::{default_back_specs, BACK_TAP};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// One layer as written in a config file. Only the keys that belong to
/// `kind` may be present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<usize>,
    /// One value for conv1d, two for conv2d.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequences: Option<bool>,
}

impl LayerEntry {
    pub fn from_spec(spec: &LayerSpec) -> Self {
        let mut e = LayerEntry {
            kind: spec.kind.tag().into(),
            name: spec.name.clone(),
            ..Default::default()
        };
        match spec.kind {
            LayerKind::Dense { units } => e.units = Some(units),
            LayerKind::Conv2d {
                filters,
                kernel,
                stride,
            } => {
                e.filters = Some(filters);
                e.kernel = Some(kernel.to_vec());
                e.stride = Some(stride);
            }
            LayerKind::Conv1d {
                filters,
                kernel,
                stride,
            } => {
                e.filters = Some(filters);
                e.kernel = Some(vec![kernel]);
                e.stride = Some(stride);
            }
            LayerKind::MaxPool { size, stride } => {
                e.size = Some(size);
                e.stride = Some(stride);
            }
            LayerKind::Dropout { p } => e.p = Some(p),
            LayerKind::Gru { units, sequences } => {
                e.units = Some(units);
                e.sequences = Some(sequences);
            }
            LayerKind::Relu | LayerKind::Output => {}
        }
        e
    }

    pub fn to_spec(&self) -> Result<LayerSpec> {
        let need = |v: Option<usize>, key: &str| v.ok_or_else(|| config_err(format!("{} layer needs `{key}`", self.kind)));
        let mut allowed: Vec<&str> = vec![];
        let kind = match self.kind.as_str() {
            "dense" => {
                allowed.push("units");
                LayerKind::Dense {
                    units: need(self.units, "units")?,
                }
            }
            "conv2d" => {
                allowed.extend(["filters", "kernel", "stride"]);
                let kernel = match self.kernel.as_deref() {
                    Some(&[h, w]) => [h, w],
                    _ => return Err(config_err("conv2d `kernel` takes two values")),
                };
                LayerKind::Conv2d {
                    filters: need(self.filters, "filters")?,
                    kernel,
                    stride: self.stride.unwrap_or(1),
                }
            }
            "conv1d" => {
                allowed.extend(["filters", "kernel", "stride"]);
                let kernel = match self.kernel.as_deref() {
                    Some(&[k]) => k,
                    _ => return Err(config_err("conv1d `kernel` takes one value")),
                };
                LayerKind::Conv1d {
                    filters: need(self.filters, "filters")?,
                    kernel,
                    stride: self.stride.unwrap_or(1),
                }
            }
            "maxpool" => {
                allowed.extend(["size", "stride"]);
                let size = need(self.size, "size")?;
                LayerKind::MaxPool {
                    size,
                    stride: self.stride.unwrap_or(size),
                }
            }
            "dropout" => {
                allowed.push("p");
                LayerKind::Dropout {
                    p: self.p.ok_or_else(|| config_err("dropout layer needs `p`"))?,
                }
            }
            "relu" => LayerKind::Relu,
            "gru" => {
                allowed.extend(["units", "sequences"]);
                LayerKind::Gru {
                    units: need(self.units, "units")?,
                    sequences: self.sequences.unwrap_or(false),
                }
            }
            "output" => LayerKind::Output,
            other => return Err(config_err(format!("unknown layer kind `{other}`"))),
        };
        let present = [
            ("units", self.units.is_some()),
            ("filters", self.filters.is_some()),
            ("kernel", self.kernel.is_some()),
            ("stride", self.stride.is_some()),
            ("size", self.size.is_some()),
            ("p", self.p.is_some()),
            ("sequences", self.sequences.is_some()),
        ];
        if let Some((key, _)) = present.iter().find(|(k, set)| *set && !allowed.contains(k)) {
            return Err(config_err(format!("`{key}` does not apply to a {} layer", self.kind)));
        }
        let spec = LayerSpec::new(kind);
        Ok(match &self.name {
            Some(n) => spec.named(n.clone()),
            None => spec,
        })
    }
}

pub fn specs_from_entries(entries: &[LayerEntry]) -> Result<Vec<LayerSpec>> {
    entries.iter().map(LayerEntry::to_spec).collect()
}

/// Training settings without the seed. Omitted keys take the desk-scale
/// values, not the bare [`TrainConfig`] defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::desk(0);
        Self {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            shuffle: d.shuffle,
        }
    }
}

impl TrainSection {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            shuffle: self.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub fractions: [f64; 3],
    /// Class-balance the training split by noisy duplication.
    pub balance: bool,
    /// Duplicate noise; omitted means 1% of the split's value range.
    pub noise_sigma: Option<f64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            fractions: [0.65, 0.15, 0.20],
            balance: true,
            noise_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub modality: Modality,
    pub layout: Layout,
    pub tap: String,
    pub layers: Vec<LayerEntry>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            modality: Modality::Dual,
            layout: Layout::Sequence,
            tap: DESK_TAP.into(),
            layers: desk_specs().iter().map(LayerEntry::from_spec).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    /// Back-network layers; omitted means the default back architecture
    /// with `latent_units` in its tapped layer.
    pub layers: Option<Vec<LayerEntry>>,
    pub latent_units: usize,
    pub tap: String,
    pub train: TrainSection,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            layers: None,
            latent_units: 16,
            tap: BACK_TAP.into(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeSection {
    pub pca_dim: Option<usize>,
}

/// Where each training sample's target center comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptTargets {
    /// Nearest center to the adapting network's own latent, every epoch.
    Refresh,
    /// Nearest center to the reference network's latent of the same
    /// sample, fixed for the whole run. Needs the reference network.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSection {
    pub lambda: f64,
    pub squash: String,
    pub scale: Option<f64>,
    pub bias: Option<f64>,
    pub targets: AdaptTargets,
}

impl Default for AdaptSection {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            squash: "softmax".into(),
            scale: None,
            bias: None,
            targets: AdaptTargets::Refresh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: GeneratorConfig,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cluster: KMeansConfig,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub merge: MergeSection,
    #[serde(default)]
    pub adapt: AdaptSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            data: GeneratorConfig::default(),
            split: SplitSection::default(),
            network: NetworkSection::default(),
            train: TrainSection::default(),
            cluster: KMeansConfig::default(),
            chain: ChainSection::default(),
            merge: MergeSection::default(),
            adapt: AdaptSection::default(),
        };
        cfg.set_seed(0);
        cfg
    }
}

/// Nested keys that would compete with the top-level seed.
const NESTED_SEEDS: [&[&str]; 2] = [&["data"], &["cluster"]];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        for path in NESTED_SEEDS {
            let mut node = Some(&table);
            for key in path {
                node = node.and_then(|t| t.get(*key)).and_then(toml::Value::as_table);
            }
            if node.is_some_and(|t| t.contains_key("seed")) {
                return Err(config_err(format!("`{}.seed` is not allowed; set the top-level seed", path.join("."))));
            }
        }
        let mut cfg: Self = toml::from_str(text).map_err(|e| config_err(e.message().to_string()))?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        for path in NESTED_SEEDS {
            let mut node = Some(&mut table);
            for key in path {
                node = node.and_then(|t| t.get_mut(*key)).and_then(toml::Value::as_table_mut);
            }
            if let Some(t) = node {
                t.remove("seed");
            }
        }
        toml::to_string(&table).expect("config serializes")
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.data.seed = seed;
        self.cluster.seed = seed;
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.config(self.seed)
    }

    pub fn chain_train_config(&self) -> TrainConfig {
        self.chain.train.config(self.seed)
    }

    pub fn input_spec(&self) -> InputSpec {
        let channels = self.data.style.channels();
        match self.network.layout {
            Layout::Sequence => InputSpec::sequence(self.network.modality, channels, self.data.image_size),
            Layout::Flat => InputSpec::flat(self.network.modality, channels, self.data.image_size),
        }
    }

    pub fn network_specs(&self) -> Result<Vec<LayerSpec>> {
        specs_from_entries(&self.network.layers)
    }

    pub fn back_specs(&self) -> Result<Vec<LayerSpec>> {
        match &self.chain.layers {
            Some(entries) => specs_from_entries(entries),
            None => Ok(default_back_specs(self.chain.latent_units)),
        }
    }

    pub fn squash(&self) -> Result<Squash> {
        Ok(Squash::from_name(&self.adapt.squash)?)
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        let f = self.split.fractions;
        if f.iter().any(|&x| !(x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(config_err(format!("split fractions {f:?} must be positive and sum to 1")));
        }
        if let Some(s) = self.split.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(config_err("split.noise_sigma must be a finite non-negative number"));
            }
        }
        self.train_config().validate()?;
        self.chain_train_config().validate()?;
        if self.cluster.clusters == 0 || self.cluster.n_init == 0 {
            return Err(config_err("cluster.clusters and cluster.n_init must be at least 1"));
        }
        if self.merge.pca_dim == Some(0) {
            return Err(config_err("merge.pca_dim must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.adapt.lambda) {
            return Err(config_err("adapt.lambda must lie in [0, 1]"));
        }
        self.squash()?;
        let net = Network::build(&self.network_specs()?, &self.input_spec().dims(), &self.network.tap, 0)?;
        Network::build(&self.back_specs()?, &[net.latent_dim()], &self.chain.tap, 0)?;
        Ok(())
    }
}
