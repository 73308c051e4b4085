//! Reading and writing artifacts with the path attached to every error.
//!
//! Latent sets and cluster models are two files: the records at `path`
//! and a TOML header at `path` + `.header`.

use std::path::{Path, PathBuf};

use protolatent_core::cluster::{ClusterModel, LatentSet};
use protolatent_core::data::{Dataset, InputSpec};
use protolatent_core::net::Network;
use protolatent_core::proto::{PcaMap, PrototypeSet};
use protolatent_core::transfer::ChainModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result, TextError};
use crate::{dsfile, netfile, text};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

/// Writes `contents`, creating missing parent directories.
pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    let io = |source| CliError::Io {
        path: path.into(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".header");
    s.into()
}

fn text_err(path: &Path) -> impl FnOnce(TextError) -> CliError + '_ {
    move |source| CliError::Text {
        path: path.into(),
        source,
    }
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    write(path, netfile::encode(net))
}

pub fn load_network(path: &Path) -> Result<Network> {
    netfile::decode(&read_bytes(path)?).map_err(|source| CliError::Format {
        path: path.into(),
        source,
    })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write(path, dsfile::encode(ds))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dsfile::decode(&read_bytes(path)?).map_err(|source| CliError::Format {
        path: path.into(),
        source,
    })
}

pub fn save_prototypes(path: &Path, set: &PrototypeSet) -> Result<()> {
    write(path, text::prototypes_to_text(set))
}

pub fn load_prototypes(path: &Path) -> Result<PrototypeSet> {
    text::prototypes_from_text(&read_text(path)?).map_err(text_err(path))
}

pub fn save_latents(path: &Path, set: &LatentSet) -> Result<()> {
    let (records, header) = text::latents_to_text(set);
    write(path, records)?;
    write(&header_path(path), header)
}

pub fn load_latents(path: &Path) -> Result<LatentSet> {
    let header_file = header_path(path);
    let header = read_text(&header_file)?;
    text::latents_from_text(&read_text(path)?, &header).map_err(text_err(path))
}

pub fn save_clusters(path: &Path, model: &ClusterModel) -> Result<()> {
    let (records, header) = text::clusters_to_text(model);
    write(path, records)?;
    write(&header_path(path), header)
}

pub fn load_clusters(path: &Path) -> Result<ClusterModel> {
    let header = read_text(&header_path(path))?;
    text::clusters_from_text(&read_text(path)?, &header).map_err(text_err(path))
}

pub fn save_pca(path: &Path, map: &PcaMap) -> Result<()> {
    write(path, text::pca_to_text(map))
}

pub fn load_pca(path: &Path) -> Result<PcaMap> {
    text::pca_from_text(&read_text(path)?).map_err(text_err(path))
}

/// TOML manifest of a chained pair. Network paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainManifest {
    pub format: String,
    pub version: u32,
    pub front: String,
    pub back: String,
    pub front_tap: String,
    pub back_tap: String,
    pub front_latent_dim: usize,
    pub back_latent_dim: usize,
    pub front_input: InputSpec,
}

const CHAIN_FORMAT: &str = "protolatent-chain";

/// Writes `path` plus `<stem>.front.ppnn` and `<stem>.back.ppnn` beside it.
pub fn save_chain(path: &Path, chain: &ChainModel) -> Result<()> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("chain").to_string();
    let dir = path.parent().unwrap_or(Path::new(""));
    let front = format!("{stem}.front.ppnn");
    let back = format!("{stem}.back.ppnn");
    save_network(&dir.join(&front), &chain.front)?;
    save_network(&dir.join(&back), &chain.back)?;
    let manifest = ChainManifest {
        format: CHAIN_FORMAT.into(),
        version: 1,
        front,
        back,
        front_tap: chain.front.tap_name().into(),
        back_tap: chain.back.tap_name().into(),
        front_latent_dim: chain.front.latent_dim(),
        back_latent_dim: chain.back.latent_dim(),
        front_input: chain.front_input,
    };
    write(path, toml::to_string(&manifest).expect("manifest serializes"))
}

pub fn load_chain(path: &Path) -> Result<ChainModel> {
    let text = read_text(path)?;
    let bad = |reason: String| CliError::Text {
        path: path.into(),
        source: TextError::new(1, reason),
    };
    let m: ChainManifest = toml::from_str(&text).map_err(|e| bad(e.message().to_string()))?;
    if m.format != CHAIN_FORMAT || m.version != 1 {
        return Err(bad(format!("not a version 1 chain manifest: `{}` {}", m.format, m.version)));
    }
    let dir = path.parent().unwrap_or(Path::new(""));
    let front = load_network(&dir.join(&m.front))?;
    let back = load_network(&dir.join(&m.back))?;
    if front.input_dims() != m.front_input.dims().as_slice() {
        return Err(bad(format!(
            "front network reads {:?} but the manifest input gives {:?}",
            front.input_dims(),
            m.front_input.dims()
        )));
    }
    if back.input_dims() != [front.latent_dim()] {
        return Err(bad(format!(
            "back network reads {:?} but the front latent has {} values",
            back.input_dims(),
            front.latent_dim()
        )));
    }
    Ok(ChainModel {
        front,
        front_input: m.front_input,
        back,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use protolatent_core::data::{Layout, Modality};
    use protolatent_core::net::LayerSpec;

    #[test]
    fn chain_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let input = InputSpec {
            layout: Layout::Flat,
            modality: Modality::Dual,
            scan_channels: 1,
            image_size: 2,
        };
        let front = Network::build(&[LayerSpec::dense(3).named("z"), LayerSpec::output()], &input.dims(), "z", 1).unwrap();
        let back = Network::build(&[LayerSpec::dense(2).named("w"), LayerSpec::output()], &[3], "w", 2).unwrap();
        let chain = ChainModel {
            front,
            front_input: input,
            back,
        };
        let path = dir.path().join("pair.toml");
        save_chain(&path, &chain).unwrap();
        assert!(dir.path().join("pair.front.ppnn").exists());
        assert_eq!(load_chain(&path).unwrap(), chain);
    }

    #[test]
    fn missing_files_name_the_path() {
        let err = load_network(Path::new("/nonexistent/net.ppnn")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("/nonexistent/net.ppnn"));
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppnn");
        std::fs::write(&path, b"PPNN\x01\x00").unwrap();
        let err = load_network(&path).unwrap_err();
        assert!(matches!(err, CliError::Format { .. }));
        assert_eq!(err.exit_code(), 4);
    }
}
