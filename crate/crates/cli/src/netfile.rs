//! `PPNN` network files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "PPNN" | version u32 | input rank u32 | input dims u64.. | tap name
//! layer count u32
//! per layer: kind tag u8 | name | hyper-parameters | param count u32 | tensors
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8. Tensors are rank u32,
//! dims u64 each, then f64 values. Hyper-parameters per kind: dense
//! `units`; conv2d `filters, kh, kw, stride`; conv1d `filters, kernel,
//! stride`; maxpool `size, stride`; dropout `p` (f64); gru `units,
//! sequences` (u8); relu and output carry none. Every integer
//! hyper-parameter is a u64.

use protolatent_core::net::{LayerKind, LayerSpec, Network};

use crate::binfmt::{FormatError, Reader, Writer};

pub const MAGIC: &[u8; 4] = b"PPNN";
pub const VERSION: u32 = 1;

const LIMIT: u64 = 1 << 32;

fn kind_tag(kind: &LayerKind) -> u8 {
    match kind {
        LayerKind::Dense { .. } => 1,
        LayerKind::Conv2d { .. } => 2,
        LayerKind::Conv1d { .. } => 3,
        LayerKind::MaxPool { .. } => 4,
        LayerKind::Dropout { .. } => 5,
        LayerKind::Relu => 6,
        LayerKind::Gru { .. } => 7,
        LayerKind::Output => 8,
    }
}

pub fn encode(net: &Network) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(net.input_dims().len() as u32);
    for &d in net.input_dims() {
        w.u64(d as u64);
    }
    w.str(net.tap_name());
    w.u32(net.layers().len() as u32);
    for layer in net.layers() {
        w.u8(kind_tag(layer.kind()));
        w.str(layer.name());
        match *layer.kind() {
            LayerKind::Dense { units } => w.u64(units as u64),
            LayerKind::Conv2d {
                filters,
                kernel,
                stride,
            } => {
                for v in [filters, kernel[0], kernel[1], stride] {
                    w.u64(v as u64);
                }
            }
            LayerKind::Conv1d {
                filters,
                kernel,
                stride,
            } => {
                for v in [filters, kernel, stride] {
                    w.u64(v as u64);
                }
            }
            LayerKind::MaxPool { size, stride } => {
                w.u64(size as u64);
                w.u64(stride as u64);
            }
            LayerKind::Dropout { p } => w.f64(p),
            LayerKind::Gru { units, sequences } => {
                w.u64(units as u64);
                w.u8(u8::from(sequences));
            }
            LayerKind::Relu | LayerKind::Output => {}
        }
        w.u32(layer.params().len() as u32);
        for t in layer.params() {
            w.tensor(t);
        }
    }
    w.finish()
}

fn read_kind(r: &mut Reader, tag: u8, at: usize) -> Result<LayerKind, FormatError> {
    Ok(match tag {
        1 => LayerKind::Dense {
            units: r.count(LIMIT)?,
        },
        2 => LayerKind::Conv2d {
            filters: r.count(LIMIT)?,
            kernel: [r.count(LIMIT)?, r.count(LIMIT)?],
            stride: r.count(LIMIT)?,
        },
        3 => LayerKind::Conv1d {
            filters: r.count(LIMIT)?,
            kernel: r.count(LIMIT)?,
            stride: r.count(LIMIT)?,
        },
        4 => LayerKind::MaxPool {
            size: r.count(LIMIT)?,
            stride: r.count(LIMIT)?,
        },
        5 => LayerKind::Dropout { p: r.f64()? },
        6 => LayerKind::Relu,
        7 => {
            let units = r.count(LIMIT)?;
            let at = r.offset();
            let sequences = match r.u8()? {
                0 => false,
                1 => true,
                v => return Err(r.invalid(at, format!("gru sequence flag {v}"))),
            };
            LayerKind::Gru { units, sequences }
        }
        8 => LayerKind::Output,
        _ => return Err(r.invalid(at, format!("unknown layer kind tag {tag}"))),
    })
}

/// Parses a network file. Shape composition and parameter shapes are
/// re-validated by rebuilding the network; a failure there is reported as
/// invalid data at the offset of the layer table.
pub fn decode(bytes: &[u8]) -> Result<Network, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let rank = r.u32()? as usize;
    let mut input = Vec::with_capacity(rank.min(8));
    for _ in 0..rank {
        input.push(r.count(LIMIT)?);
    }
    let tap = r.str()?;
    let table = r.offset();
    let n = r.u32()? as usize;
    let mut specs = Vec::new();
    let mut params = Vec::new();
    for _ in 0..n {
        let at = r.offset();
        let tag = r.u8()?;
        let name = r.str()?;
        let kind = read_kind(&mut r, tag, at)?;
        let count = r.u32()? as usize;
        let tensors = (0..count).map(|_| r.tensor()).collect::<Result<Vec<_>, _>>()?;
        specs.push(LayerSpec::new(kind).named(name));
        params.push(tensors);
    }
    r.finish()?;
    Network::from_parts(&specs, &input, &tap, params).map_err(|e| r.invalid(table, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zoo() -> Network {
        let specs = [
            LayerSpec::conv2d(2, [3, 3], 1),
            LayerSpec::relu(),
            LayerSpec::maxpool(2, 2),
            LayerSpec::dropout(0.25),
            LayerSpec::gru(4, true),
            LayerSpec::conv1d(2, 2, 1),
            LayerSpec::dense(3).named("z"),
            LayerSpec::output(),
        ];
        Network::build(&specs, &[2, 1, 6, 6], "z", 3).unwrap()
    }

    #[test]
    fn every_layer_kind_round_trips() {
        let net = zoo();
        let bytes = encode(&net);
        assert_eq!(&bytes[..4], b"PPNN");
        assert_eq!(decode(&bytes).unwrap(), net);
        assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = encode(&zoo());
        for cut in 0..bytes.len() {
            assert!(decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn wrong_magic_and_version_are_rejected() {
        let mut bytes = encode(&zoo());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(FormatError::BadMagic { .. })));
        let mut bytes = encode(&zoo());
        bytes[4] = 9;
        assert!(matches!(decode(&bytes), Err(FormatError::Version { found: 9, .. })));
    }

    #[test]
    fn mismatched_parameter_shapes_are_rejected() {
        let net = Network::build(&[LayerSpec::dense(2), LayerSpec::output()], &[3], "dense-0", 0).unwrap();
        let mut bytes = encode(&net);
        // the first dense weight tensor stores dims [2, 3]; claim [3, 2]
        let pos = bytes.windows(16).position(|w| w == [2, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        bytes[pos] = 3;
        bytes[pos + 8] = 2;
        assert!(matches!(decode(&bytes), Err(FormatError::Invalid { .. })));
    }
}
