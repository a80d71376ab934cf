//! Versioned text container for network parameters.
//!
//! ```text
//! GCMT-CKPT
//! version 1
//! kind model|pair
//! ema_decay <f64>          (pair only)
//! pair_id <n>              (pair only)
//! layers <d0> <d1> ... <dL>
//! classes <C>
//! param <name> <rows> <cols> <base64 of little-endian f32 values>
//! ...
//! checksum <16 hex digits>
//! ```
//!
//! Parameters appear in manifest order (encoder layers, then head) for each
//! network; a pair stores the student first. The checksum is 64-bit FNV-1a
//! over the concatenated decoded parameter bytes.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;

use crate::error::{CheckpointError, Error, Result};
use crate::numcore::Matrix;

use super::encoder::{DenseLayer, EncoderParams};
use super::network::{ClassifierHead, Network, NetworkPair};

pub const MAGIC: &str = "GCMT-CKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Model(Network),
    Pair(NetworkPair),
}

impl Checkpoint {
    /// The network used for feature extraction: the model itself, or the
    /// teacher of a pair.
    pub fn into_model(self) -> Network {
        match self {
            Checkpoint::Model(n) => n,
            Checkpoint::Pair(p) => p.teacher,
        }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

fn matrix_bytes(m: &Matrix) -> Vec<u8> {
    m.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn network_manifest(net: &Network) -> (Vec<usize>, usize) {
    (net.encoder.dims(), net.head.class_count())
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<String> {
    let (kind, nets): (&str, Vec<&Network>) = match ckpt {
        Checkpoint::Model(n) => ("model", vec![n]),
        Checkpoint::Pair(p) => ("pair", vec![&p.student, &p.teacher]),
    };
    if nets.iter().any(|n| !n.is_finite()) {
        return Err(Error::Numeric("refusing to save non-finite parameters".into()));
    }
    let (dims, classes) = network_manifest(nets[0]);
    if nets.iter().any(|n| network_manifest(n) != (dims.clone(), classes)) {
        return Err(Error::Internal("pair networks have different shapes".into()));
    }

    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("version {FORMAT_VERSION}\nkind {kind}\n"));
    if let Checkpoint::Pair(p) = ckpt {
        out.push_str(&format!("ema_decay {:?}\npair_id {}\n", p.ema_decay, p.pair_id));
    }
    let dims_text: Vec<String> = dims.iter().map(usize::to_string).collect();
    out.push_str(&format!("layers {}\nclasses {classes}\n", dims_text.join(" ")));

    let mut all_bytes = Vec::new();
    for (ni, net) in nets.iter().enumerate() {
        for (id, m) in net.params() {
            let bytes = matrix_bytes(m);
            out.push_str(&format!(
                "param net{ni}.{id} {} {} {}\n",
                m.rows(),
                m.cols(),
                B64.encode(&bytes)
            ));
            all_bytes.extend_from_slice(&bytes);
        }
    }
    out.push_str(&format!("checksum {:016x}\n", fnv1a64(&all_bytes)));
    Ok(out)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = encode_checkpoint(ckpt)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_checkpoint(&text)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next line split as `(line_no, key, rest)`.
    fn expect(&mut self, key: &str) -> Result<(usize, &'a str), CheckpointError> {
        let (idx, line) = self
            .inner
            .next()
            .ok_or_else(|| CheckpointError::Truncated(format!("`{key}` line")))?;
        let line_no = idx + 1;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok((line_no, rest)),
            _ => Err(CheckpointError::Malformed {
                line: line_no,
                message: format!("expected `{key} ...`, found {line:?}"),
            }),
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, s: &str) -> Result<T, CheckpointError> {
    s.trim().parse().map_err(|_| CheckpointError::Malformed {
        line,
        message: format!("bad {field} value {s:?}"),
    })
}

pub fn decode_checkpoint(text: &str) -> Result<Checkpoint, CheckpointError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let magic = lines
        .inner
        .next()
        .map(|(_, l)| l)
        .ok_or_else(|| CheckpointError::Truncated("magic string".into()))?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic.chars().take(32).collect()));
    }
    let (ln, v) = lines.expect("version")?;
    let version: u32 = parse_num(ln, "version", v)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (ln, kind) = lines.expect("kind")?;
    let (network_count, pair_meta) = match kind.trim() {
        "model" => (1, None),
        "pair" => {
            let (ln, d) = lines.expect("ema_decay")?;
            let decay: f64 = parse_num(ln, "ema_decay", d)?;
            let (ln, id) = lines.expect("pair_id")?;
            let pair_id: usize = parse_num(ln, "pair_id", id)?;
            (2, Some((decay, pair_id)))
        }
        other => {
            return Err(CheckpointError::Malformed {
                line: ln,
                message: format!("unknown kind {other:?}"),
            })
        }
    };
    let (ln, layer_text) = lines.expect("layers")?;
    let dims: Vec<usize> = layer_text
        .split_whitespace()
        .map(|s| parse_num(ln, "layers", s))
        .collect::<Result<_, _>>()?;
    if dims.len() < 2 || dims.contains(&0) {
        return Err(CheckpointError::Dimensions(format!("invalid layer manifest {dims:?}")));
    }
    let (ln, c) = lines.expect("classes")?;
    let classes: usize = parse_num(ln, "classes", c)?;

    let mut all_bytes = Vec::new();
    let mut networks = Vec::with_capacity(network_count);
    for ni in 0..network_count {
        let mut read_param = |name: String, rows: usize, cols: usize| -> Result<Matrix, CheckpointError> {
            let (ln, rest) = lines.expect("param")?;
            let fields: Vec<&str> = rest.split(' ').collect();
            if fields.len() != 4 {
                return Err(CheckpointError::Malformed {
                    line: ln,
                    message: format!("param line has {} fields, expected 4", fields.len()),
                });
            }
            if fields[0] != name {
                return Err(CheckpointError::Malformed {
                    line: ln,
                    message: format!("expected parameter {name}, found {}", fields[0]),
                });
            }
            let r: usize = parse_num(ln, "rows", fields[1])?;
            let c: usize = parse_num(ln, "cols", fields[2])?;
            let bytes = B64.decode(fields[3]).map_err(|e| CheckpointError::Malformed {
                line: ln,
                message: format!("bad base64: {e}"),
            })?;
            if bytes.len() % 4 != 0 || bytes.len() / 4 != r * c {
                return Err(CheckpointError::Length {
                    name,
                    declared: r * c,
                    actual: bytes.len() / 4,
                });
            }
            if (r, c) != (rows, cols) {
                return Err(CheckpointError::Dimensions(format!(
                    "{name} is {r}x{c}, manifest requires {rows}x{cols}"
                )));
            }
            let values: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            all_bytes.extend_from_slice(&bytes);
            Ok(Matrix::new(r, c, values).expect("length checked"))
        };
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (li, w) in dims.windows(2).enumerate() {
            let weight = read_param(format!("net{ni}.encoder.{li}.weight"), w[0], w[1])?;
            let bias = read_param(format!("net{ni}.encoder.{li}.bias"), 1, w[1])?;
            layers.push(DenseLayer { weight, bias });
        }
        let head = read_param(format!("net{ni}.head.weight"), dims[dims.len() - 1], classes)?;
        let encoder =
            EncoderParams::from_layers(layers).map_err(|e| CheckpointError::Dimensions(e.to_string()))?;
        let net = Network::new(encoder, ClassifierHead { weight: head })
            .map_err(|e| CheckpointError::Dimensions(e.to_string()))?;
        networks.push(net);
    }
    let (ln, sum) = lines.expect("checksum")?;
    let stored = u64::from_str_radix(sum.trim(), 16).map_err(|_| CheckpointError::Malformed {
        line: ln,
        message: format!("bad checksum {sum:?}"),
    })?;
    let computed = fnv1a64(&all_bytes);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }

    Ok(match pair_meta {
        None => Checkpoint::Model(networks.pop().expect("one network")),
        Some((ema_decay, pair_id)) => {
            let teacher = networks.pop().expect("two networks");
            let student = networks.pop().expect("two networks");
            Checkpoint::Pair(NetworkPair {
                student,
                teacher,
                ema_decay,
                pair_id,
            })
        }
    })
}
