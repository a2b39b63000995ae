//! Binary parameter checkpoints.
//!
//! Layout: the 8-byte magic `CMRLCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header describing every tensor
//! group (architecture descriptors, optimizer counters, free-form metadata),
//! then the raw little-endian parameter arrays in header order. Each network is
//! written layer by layer, row-major weights followed by the bias; optimizer
//! states write the first-moment arrays then the second-moment arrays in the
//! same order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::net::{Architecture, DenseNet, Gradients, Layer, LayerGradient};
use super::optim::{AdamConfig, OptimState};
use super::real::{Precision, Real};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CMRLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle<T: Real> {
    pub meta: serde_json::Value,
    pub nets: Vec<(String, DenseNet<T>)>,
    pub optims: Vec<(String, OptimState<T>)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    precision: Precision,
    meta: serde_json::Value,
    nets: Vec<NetEntry>,
    optims: Vec<OptimEntry>,
}

#[derive(Serialize, Deserialize)]
struct NetEntry {
    name: String,
    architecture: Architecture,
}

#[derive(Serialize, Deserialize)]
struct OptimEntry {
    name: String,
    architecture: Architecture,
    step: u64,
    config: AdamConfig,
}

impl<T: Real> Bundle<T> {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            nets: Vec::new(),
            optims: Vec::new(),
        }
    }

    pub fn push_net(&mut self, name: impl Into<String>, net: &DenseNet<T>) {
        self.nets.push((name.into(), net.clone()));
    }

    pub fn push_optim(&mut self, name: impl Into<String>, state: &OptimState<T>) {
        self.optims.push((name.into(), state.clone()));
    }

    /// Removes and returns the named network, validating its architecture.
    pub fn take_net(&mut self, name: &str, expected: &Architecture) -> Result<DenseNet<T>> {
        let pos = self
            .nets
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing network {name}")))?;
        let (_, net) = self.nets.remove(pos);
        if &net.architecture() != expected {
            return Err(Error::Checkpoint(format!(
                "network {name}: stored architecture {:?} does not match expected {:?}",
                net.architecture().layer_dims,
                expected.layer_dims
            )));
        }
        Ok(net)
    }

    pub fn take_optim(&mut self, name: &str, net: &DenseNet<T>) -> Result<OptimState<T>> {
        let pos = self
            .optims
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing optimizer state {name}")))?;
        let (_, state) = self.optims.remove(pos);
        let shapes_match = state
            .first_moment
            .layers
            .iter()
            .zip(net.layers())
            .all(|(m, l)| m.weights.dim() == l.weights.dim());
        if state.first_moment.layers.len() != net.layers().len() || !shapes_match {
            return Err(Error::Checkpoint(format!(
                "optimizer state {name} does not match its network"
            )));
        }
        Ok(state)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            precision: T::PRECISION,
            meta: self.meta.clone(),
            nets: self
                .nets
                .iter()
                .map(|(name, net)| NetEntry {
                    name: name.clone(),
                    architecture: net.architecture(),
                })
                .collect(),
            optims: self
                .optims
                .iter()
                .map(|(name, st)| OptimEntry {
                    name: name.clone(),
                    architecture: gradient_architecture(&st.first_moment),
                    step: st.step,
                    config: st.config,
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, net) in &self.nets {
            net.for_each_param(|v| v.write_le(&mut out));
        }
        for (_, st) in &self.optims {
            for g in [&st.first_moment, &st.second_moment] {
                g.flat().into_iter().for_each(|v| v.write_le(&mut out));
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        if cursor.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(cursor.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(cursor.take(8)?.try_into().expect("8 bytes")) as usize;
        let header: Header = serde_json::from_slice(cursor.take(header_len)?)?;
        if header.precision != T::PRECISION {
            return Err(Error::Checkpoint(format!(
                "checkpoint precision {:?} does not match {:?}",
                header.precision,
                T::PRECISION
            )));
        }
        let mut nets = Vec::with_capacity(header.nets.len());
        for entry in header.nets {
            let net = read_net::<T>(&mut cursor, &entry.architecture)?;
            nets.push((entry.name, net));
        }
        let mut optims = Vec::with_capacity(header.optims.len());
        for entry in header.optims {
            let first_moment = read_net::<T>(&mut cursor, &entry.architecture)?;
            let second_moment = read_net::<T>(&mut cursor, &entry.architecture)?;
            optims.push((
                entry.name,
                OptimState {
                    config: entry.config,
                    step: entry.step,
                    first_moment: net_as_gradients(first_moment),
                    second_moment: net_as_gradients(second_moment),
                },
            ));
        }
        if cursor.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - cursor.pos
            )));
        }
        Ok(Self {
            meta: header.meta,
            nets,
            optims,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn gradient_architecture<T: Real>(g: &Gradients<T>) -> Architecture {
    let mut layer_dims = vec![g.layers[0].weights.ncols()];
    layer_dims.extend(g.layers.iter().map(|l| l.weights.nrows()));
    Architecture {
        activations: vec![super::net::Activation::Identity; g.layers.len()],
        layer_dims,
    }
}

fn net_as_gradients<T: Real>(net: DenseNet<T>) -> Gradients<T> {
    Gradients {
        layers: net
            .layers()
            .iter()
            .map(|l| LayerGradient {
                weights: l.weights.clone(),
                bias: l.bias.clone(),
            })
            .collect(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: needed {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn values<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n * T::BYTES)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

fn read_net<T: Real>(cursor: &mut Cursor<'_>, arch: &Architecture) -> Result<DenseNet<T>> {
    if arch.layer_dims.len() < 2 || arch.activations.len() + 1 != arch.layer_dims.len() {
        return Err(Error::Checkpoint("malformed architecture descriptor".into()));
    }
    let mut layers = Vec::with_capacity(arch.activations.len());
    for (w, &activation) in arch.layer_dims.windows(2).zip(&arch.activations) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = Array2::from_shape_vec((fan_out, fan_in), cursor.values(fan_in * fan_out)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let bias = Array1::from(cursor.values(fan_out)?);
        layers.push(Layer {
            weights,
            bias,
            activation,
        });
    }
    DenseNet::from_layers(layers)
}
