//! The subcommands as plain functions. Each returns the text it would
//! print; artifacts go to the paths it is given.

use std::path::{Path, PathBuf};

use protolatent_core::adapt::{adapt_train, adapt_train_anchored, reference_targets, AdaptLossConfig};
use protolatent_core::cluster::{kmeans_fit, occupancy, ClusterModel, LatentSet};
use protolatent_core::data::{augment_balance, default_noise_sigma, split, Dataset, InputSpec, Layout, Modality};
use protolatent_core::net::{evaluate, train, Accuracy, EpochRecord, Example, Network};
use protolatent_core::proto::{build_prototypes, classify_report, merge, pca_fit, project_latents, ClassifyReport, PcaMap, PrototypeSet};
use protolatent_core::transfer::chain_train;
use serde::Serialize;

use crate::config::{AdaptTargets, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::files::{self, load_dataset, load_network, load_prototypes};
use crate::par::{extract_latents_parallel, generate_parallel};
use crate::report::{accuracy_table, centers_csv, history_csv, occupancy_table, subject_table};

/// Command-line values that replace scalar config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub clusters: Option<usize>,
    pub lambda: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.train.learning_rate = lr;
        }
        if let Some(c) = self.clusters {
            cfg.cluster.clusters = c;
        }
        if let Some(l) = self.lambda {
            cfg.adapt.lambda = l;
        }
        cfg.validate()
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

pub const SPLIT_FILES: [&str; 3] = ["train.ppds", "valid.ppds", "test.ppds"];

fn split_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(SPLIT_FILES[i])
}

/// Loads a split written by `gen-data`; `None` when the file is absent.
fn optional_split(dir: &Path, i: usize) -> Result<Option<Dataset>> {
    let p = split_path(dir, i);
    if p.exists() {
        load_dataset(&p).map(Some)
    } else {
        Ok(None)
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Input encoding for a stored network: layout and modality from the
/// caller, channel count and image size read off the network's input.
pub fn input_for(net: &Network, layout: Layout, modality: Modality, image_size: usize) -> Result<InputSpec> {
    let dims = net.input_dims();
    let spec = match (layout, dims) {
        (Layout::Sequence, [3, c, h, _]) if *c >= 2 => InputSpec::sequence(modality, c - 1, *h),
        (Layout::Flat, [len]) => {
            let plane = image_size * image_size;
            if plane == 0 || len % plane != 0 || len / plane < 4 {
                return Err(config_err(format!("a flat input of {len} values does not fit {image_size}x{image_size} images")));
            }
            InputSpec::flat(modality, len / plane - 3, image_size)
        }
        _ => return Err(config_err(format!("network input {dims:?} does not match the {layout:?} layout"))),
    };
    if spec.dims() != dims {
        return Err(config_err(format!("network input {dims:?} does not match {:?}", spec.dims())));
    }
    Ok(spec)
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string()
}

#[derive(Serialize)]
struct SplitEntry {
    name: String,
    file: String,
    subjects: usize,
    samples: usize,
    controls: usize,
    patients: usize,
}

#[derive(Serialize)]
struct DataManifest {
    format: String,
    version: u32,
    seed: u64,
    config: String,
    split: Vec<SplitEntry>,
}

/// Generated data split by subject into train, valid and test, with the
/// training split class-balanced when the config asks for it.
pub fn make_splits(cfg: &ExperimentConfig) -> Result<[Dataset; 3]> {
    let ds = generate_parallel(&cfg.data)?;
    let (tr, va, te) = split(&ds, cfg.split.fractions, cfg.seed)?;
    let tr = if cfg.split.balance {
        let sigma = cfg.split.noise_sigma.unwrap_or_else(|| default_noise_sigma(&tr));
        augment_balance(&tr, sigma, cfg.seed)?
    } else {
        tr
    };
    Ok([tr, va, te])
}

/// Writes the three dataset files of [`make_splits`], the effective config
/// and a manifest to `out`.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let [tr, va, te] = make_splits(cfg)?;
    let mut entries = Vec::new();
    for (i, part) in [&tr, &va, &te].into_iter().enumerate() {
        files::save_dataset(&split_path(out, i), part)?;
        let [controls, patients] = part.label_counts();
        entries.push(SplitEntry {
            name: part.split.as_str().into(),
            file: SPLIT_FILES[i].into(),
            subjects: part.subjects().len(),
            samples: part.len(),
            controls,
            patients,
        });
    }
    files::write(&out.join("config.toml"), cfg.to_toml())?;
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.name.clone(),
                e.subjects.to_string(),
                e.samples.to_string(),
                e.controls.to_string(),
                e.patients.to_string(),
            ]
        })
        .collect();
    let manifest = DataManifest {
        format: "protolatent-data".into(),
        version: 1,
        seed: cfg.seed,
        config: "config.toml".into(),
        split: entries,
    };
    files::write(&out.join("manifest.toml"), toml::to_string(&manifest).expect("manifest serializes"))?;
    let header: Vec<String> = ["split", "subjects", "samples", "controls", "patients"].map(String::from).to_vec();
    Ok(crate::report::table(&header, &rows))
}

fn modality_name(m: Modality) -> &'static str {
    match m {
        Modality::Dual => "dual",
        Modality::ScanOnly => "scan-only",
        Modality::VolumeOnly => "volume-only",
    }
}

fn accuracy_rows(net: &Network, input: &InputSpec, parts: &[(&str, Option<&Dataset>)]) -> Result<Vec<(String, Accuracy)>> {
    let mut rows = Vec::new();
    for (name, ds) in parts {
        if let Some(ds) = ds.filter(|d| !d.is_empty()) {
            rows.push((format!("{} {name}", modality_name(input.modality)), evaluate(net, &ds.examples(input)?)?));
        }
    }
    Ok(rows)
}

fn write_history(path: Option<&Path>, history: &[EpochRecord]) -> Result<()> {
    match path {
        Some(p) => files::write(p, history_csv(history)?),
        None => Ok(()),
    }
}

/// A network of the configured architecture for `input`, initialised and
/// trained with the config seed.
pub fn train_network(cfg: &ExperimentConfig, input: &InputSpec, tr: &Dataset, valid: &[Example]) -> Result<(Network, Vec<EpochRecord>)> {
    let mut net = Network::build(&cfg.network_specs()?, &input.dims(), &cfg.network.tap, cfg.seed)?;
    let h = train(&mut net, &tr.examples(input)?, valid, &cfg.train_config())?;
    Ok((net, h))
}

/// Trains the configured network on `data/train.ppds`, validating on
/// `data/valid.ppds`, and reports accuracy on every split present.
pub fn train_cmd(cfg: &ExperimentConfig, data: &Path, out: &Path, history: Option<&Path>) -> Result<String> {
    let input = cfg.input_spec();
    let tr = load_dataset(&split_path(data, 0))?;
    let va = optional_split(data, 1)?;
    let te = optional_split(data, 2)?;
    let valid = match &va {
        Some(v) if !v.is_empty() => v.examples(&input)?,
        _ => Vec::new(),
    };
    let (net, h) = train_network(cfg, &input, &tr, &valid)?;
    files::save_network(out, &net)?;
    write_history(history, &h)?;
    let rows = accuracy_rows(&net, &input, &[("train", Some(&tr)), ("valid", va.as_ref()), ("test", te.as_ref())])?;
    Ok(accuracy_table(&rows))
}

pub fn eval_cmd(cfg: &ExperimentConfig, net_path: &Path, data: &Path) -> Result<String> {
    let net = load_network(net_path)?;
    let input = input_for(&net, cfg.network.layout, cfg.network.modality, cfg.data.image_size)?;
    let ds = load_dataset(data)?;
    let rows = accuracy_rows(&net, &input, &[(ds.split.as_str(), Some(&ds))])?;
    if rows.is_empty() {
        return Err(protolatent_core::Error::EmptyDataset.into());
    }
    Ok(accuracy_table(&rows))
}

/// Where latents come from: a single network or a chained pair.
pub enum LatentSource {
    Net(PathBuf),
    Chain(PathBuf),
}

impl LatentSource {
    fn name(&self) -> String {
        match self {
            LatentSource::Net(p) | LatentSource::Chain(p) => stem(p),
        }
    }

    fn latents(&self, cfg: &ExperimentConfig, ds: &Dataset) -> Result<LatentSet> {
        match self {
            LatentSource::Net(p) => {
                let net = load_network(p)?;
                let input = input_for(&net, cfg.network.layout, cfg.network.modality, cfg.data.image_size)?;
                Ok(extract_latents_parallel(&net, ds, &input)?)
            }
            LatentSource::Chain(p) => Ok(files::load_chain(p)?.latents(ds)?),
        }
    }
}

pub struct ExtractOutputs<'a> {
    pub prototypes: &'a Path,
    pub latents: Option<&'a Path>,
    pub clusters: Option<&'a Path>,
    /// One annotation per cluster, one per line.
    pub annotations: Option<&'a Path>,
}

/// k-means with the configured settings and one labeled prototype per
/// cluster.
pub fn prototypes_from(
    cfg: &ExperimentConfig,
    latents: &LatentSet,
    notes: Option<&[String]>,
    network: &str,
) -> Result<(ClusterModel, PrototypeSet)> {
    let model = kmeans_fit(latents, &cfg.cluster)?;
    let set = build_prototypes(&model, latents, notes, network)?;
    Ok((model, set))
}

/// Latents of `data`, k-means with the configured cluster count, labeled
/// prototypes and the occupancy table.
pub fn extract_cluster(cfg: &ExperimentConfig, source: &LatentSource, data: &Path, out: &ExtractOutputs) -> Result<String> {
    let ds = load_dataset(data)?;
    let latents = source.latents(cfg, &ds)?;
    let notes = match out.annotations {
        Some(p) => {
            let text = files::read_text(p)?;
            let lines: Vec<String> = text.lines().map(String::from).collect();
            if lines.len() != cfg.cluster.clusters {
                return Err(config_err(format!(
                    "{}: {} annotations for {} clusters",
                    p.display(),
                    lines.len(),
                    cfg.cluster.clusters
                )));
            }
            Some(lines)
        }
        None => None,
    };
    let (model, set) = prototypes_from(cfg, &latents, notes.as_deref(), &source.name())?;
    files::save_prototypes(out.prototypes, &set)?;
    if let Some(p) = out.latents {
        files::save_latents(p, &latents)?;
    }
    if let Some(p) = out.clusters {
        files::save_clusters(p, &model)?;
    }
    let occ = occupancy(&model, &latents)?;
    Ok(format!(
        "{} prototypes of dim {} from {} latents (inertia {:.6e})\n{}",
        set.len(),
        set.dim,
        latents.len(),
        model.inertia,
        occupancy_table(&occ, &set)
    ))
}

/// Trains a back network on the front network's latents of
/// `data/train.ppds` and writes the pair.
pub fn chain_cmd(cfg: &ExperimentConfig, front_path: &Path, data: &Path, out: &Path, history: Option<&Path>) -> Result<String> {
    let front = load_network(front_path)?;
    let input = input_for(&front, cfg.network.layout, cfg.network.modality, cfg.data.image_size)?;
    let tr = load_dataset(&split_path(data, 0))?;
    let va = optional_split(data, 1)?;
    let te = optional_split(data, 2)?;
    let (chain, h) = chain_train(
        &front,
        input,
        &tr,
        va.as_ref(),
        &cfg.back_specs()?,
        &cfg.chain.tap,
        &cfg.chain_train_config(),
    )?;
    files::save_chain(out, &chain)?;
    write_history(history, &h)?;
    let mut rows = Vec::new();
    for (name, ds) in [("train", Some(&tr)), ("valid", va.as_ref()), ("test", te.as_ref())] {
        if let Some(ds) = ds.filter(|d| !d.is_empty()) {
            rows.push((format!("chain {name}"), chain.evaluate(ds)?));
        }
    }
    Ok(accuracy_table(&rows))
}

/// Merges two sets, fitting a PCA map on `latents` first when their
/// dimensions differ. The map takes the larger set down to the smaller
/// dimension, which `pca_dim` may only restate.
pub fn reconcile_and_merge(
    sa: &PrototypeSet,
    sb: &PrototypeSet,
    latents: Option<&LatentSet>,
    pca_dim: Option<usize>,
) -> Result<(PrototypeSet, Option<PcaMap>)> {
    let needs_map = sa.dim != sb.dim && !sa.is_empty() && !sb.is_empty();
    let map = if needs_map {
        let lo = sa.dim.min(sb.dim);
        let hi = sa.dim.max(sb.dim);
        let k = pca_dim.unwrap_or(lo);
        if k != lo {
            return Err(config_err(format!("pca dim {k} must equal the smaller set dim {lo}")));
        }
        let latents = latents.ok_or_else(|| config_err(format!("sets have dims {} and {}; pass latents of the {hi}-dim set", sa.dim, sb.dim)))?;
        if latents.dim() != Some(hi) {
            return Err(config_err(format!("latents have dim {:?}, expected {hi}", latents.dim())));
        }
        Some(pca_fit(latents, k)?)
    } else {
        None
    };
    Ok((merge(sa, sb, map.as_ref())?, map))
}

/// Union of two prototype sets. Sets of different dimension need latents
/// of the larger one to fit the PCA map, which is written to `pca_out`.
pub fn merge_cmd(a: &Path, b: &Path, pca_from: Option<&Path>, pca_dim: Option<usize>, out: &Path, pca_out: Option<&Path>) -> Result<String> {
    let sa = load_prototypes(a)?;
    let sb = load_prototypes(b)?;
    let latents = pca_from.map(files::load_latents).transpose()?;
    let (merged, map) = reconcile_and_merge(&sa, &sb, latents.as_ref(), pca_dim)?;
    files::save_prototypes(out, &merged)?;
    let mut msg = format!("{} + {} prototypes -> {} of dim {}\n", sa.len(), sb.len(), merged.len(), merged.dim);
    if let Some(map) = &map {
        let path = pca_out.map(Path::to_path_buf).unwrap_or_else(|| {
            let mut s = out.as_os_str().to_owned();
            s.push(".pca");
            s.into()
        });
        files::save_pca(&path, map)?;
        msg.push_str(&format!("pca map {} -> {} written to {}\n", map.input_dim(), map.k(), path.display()));
    }
    Ok(msg)
}

/// Nearest-prototype prediction with a per-subject report.
pub fn predict_cmd(cfg: &ExperimentConfig, set: &Path, source: &LatentSource, data: &Path, pca: Option<&Path>) -> Result<(String, ClassifyReport)> {
    let set = load_prototypes(set)?;
    let ds = load_dataset(data)?;
    let mut latents = source.latents(cfg, &ds)?;
    if let Some(p) = pca {
        latents = project_latents(&files::load_pca(p)?, &latents)?;
    }
    let report = classify_report(&set, &latents, true)?;
    Ok((subject_table(&report, &set), report))
}

pub struct AdaptInputs<'a> {
    pub data: &'a Path,
    pub reference: &'a Path,
    pub reference_net: Option<&'a Path>,
    pub out: &'a Path,
    pub history: Option<&'a Path>,
}

/// Trains a fresh network of the configured architecture on the volume
/// modality alone with the prototype-guided loss. `reference_net` is the
/// dual-modality network behind `reference`; it is required when targets
/// come from its latents.
pub fn adapt_network(
    cfg: &ExperimentConfig,
    reference: &PrototypeSet,
    reference_net: Option<&Network>,
    tr: &Dataset,
    valid: &[Example],
) -> Result<(Network, Vec<EpochRecord>)> {
    let vol = volume_input(cfg);
    let mut net = Network::build(&cfg.network_specs()?, &vol.dims(), &cfg.network.tap, cfg.seed)?;
    let mut acfg = AdaptLossConfig::new(cfg.adapt.lambda, reference.clone(), cfg.squash()?);
    acfg.scale = cfg.adapt.scale;
    acfg.bias = cfg.adapt.bias;
    let train_set = tr.examples(&vol)?;
    let h = match cfg.adapt.targets {
        AdaptTargets::Refresh => adapt_train(&mut net, &train_set, valid, &cfg.train_config(), &acfg)?,
        AdaptTargets::Reference => {
            let rnet = reference_net.ok_or_else(|| config_err("adapt.targets = \"reference\" needs the reference network"))?;
            let rin = input_for(rnet, cfg.network.layout, Modality::Dual, cfg.data.image_size)?;
            let u = reference_targets(rnet, tr, &rin, reference)?;
            adapt_train_anchored(&mut net, &train_set, valid, &cfg.train_config(), &acfg, &u)?
        }
    };
    Ok((net, h))
}

/// The configured input with the scan masked out.
pub fn volume_input(cfg: &ExperimentConfig) -> InputSpec {
    InputSpec {
        modality: Modality::VolumeOnly,
        ..cfg.input_spec()
    }
}

pub fn adapt_cmd(cfg: &ExperimentConfig, io: &AdaptInputs) -> Result<String> {
    let vol = volume_input(cfg);
    let reference = load_prototypes(io.reference)?;
    let tr = load_dataset(&split_path(io.data, 0))?;
    let va = optional_split(io.data, 1)?;
    let te = optional_split(io.data, 2)?;
    let valid = match &va {
        Some(v) if !v.is_empty() => v.examples(&vol)?,
        _ => Vec::new(),
    };
    let rnet = io.reference_net.map(load_network).transpose()?;
    let (net, h) = adapt_network(cfg, &reference, rnet.as_ref(), &tr, &valid)?;
    files::save_network(io.out, &net)?;
    write_history(io.history, &h)?;
    let rows = accuracy_rows(&net, &vol, &[("train", Some(&tr)), ("valid", va.as_ref()), ("test", te.as_ref())])?;
    let mut text = accuracy_table(&rows);
    if let Some(te) = te.filter(|d| !d.is_empty()) {
        let latents = extract_latents_parallel(&net, &te, &vol)?;
        let report = classify_report(&reference, &latents, true)?;
        text.push_str("\ntest samples per reference prototype\n");
        text.push_str(&subject_table(&report, &reference));
    }
    Ok(text)
}

pub fn report_centers(set: &Path, out: &Path) -> Result<String> {
    let set = load_prototypes(set)?;
    files::write(out, centers_csv(&set)?)?;
    Ok(format!("{} centers of dim {} written to {}\n", set.len(), set.dim, out.display()))
}
