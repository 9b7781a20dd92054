//! `LGNN` network container.
//!
//! Layout (little-endian): magic `LGNN`, version `u32`, layer count `u32`, then per
//! layer `in u32`, `out u32`, activation tag `u8`, row-major `f64` weights, `f64` biases.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Layer, Mlp};
use crate::error::{Error, Result};
use crate::io::{write_atomic, ByteReader};

const MAGIC: &[u8; 4] = b"LGNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_mlp_bytes(net: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + net.num_params() * 8 + net.layers().len() * 9);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        out.push(layer.activation.tag());
        for w in layer.weights.iter() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in layer.bias.iter() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

pub fn read_mlp_bytes(bytes: &[u8]) -> Result<Mlp> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not an LGNN checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported LGNN version {version}")));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let n_in = r.u32()? as usize;
        let n_out = r.u32()? as usize;
        let tag = r.u8()?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::Format(format!("unknown activation tag {tag}")))?;
        let weights = r.f64_vec(n_in * n_out)?;
        let bias = r.f64_vec(n_out)?;
        let weights = Array2::from_shape_vec((n_out, n_in), weights)
            .map_err(|e| Error::Format(e.to_string()))?;
        layers.push(Layer::new(weights, Array1::from(bias), activation)?);
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after LGNN payload".into()));
    }
    Mlp::new(layers)
}

pub fn write_mlp(net: &Mlp, path: &Path) -> Result<()> {
    write_atomic(path, &write_mlp_bytes(net))
}

pub fn read_mlp(path: &Path) -> Result<Mlp> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_mlp_bytes(&bytes)
}
