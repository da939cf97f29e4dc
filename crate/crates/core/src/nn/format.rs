//! Binary weight container.
//!
//! Layout: `b"LMNN"`, `u32` version, `u32` header length, the JSON header
//! `{spec, input_shape, tensors: [{name, shape}]}`, then every tensor as
//! little-endian `f32` in header order.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::{NetworkSpec, Shape};
use super::Scalar;
use crate::error::{Error, Result};

pub const NN_MAGIC: &[u8; 4] = b"LMNN";
pub const NN_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    input_shape: Shape,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn write_network<T: Scalar, W: Write>(net: &Network<T>, mut w: W) -> Result<()> {
    let tensors = net.tensors();
    let header = Header {
        spec: net.spec().clone(),
        input_shape: net.input_shape(),
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(12 + json.len() + 4 * net.param_count());
    buf.extend_from_slice(NN_MAGIC);
    buf.extend_from_slice(&NN_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, _, values) in tensors {
        for v in values {
            buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)
        .map_err(|e| Error::Format(format!("writing weights: {e}")))
}

pub fn read_network<T: Scalar, R: Read>(mut r: R) -> Result<Network<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("reading weights: {e}")))?;
    if bytes.len() < 12 || &bytes[..4] != NN_MAGIC {
        return Err(Error::Format("not an LMNN weight file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != NN_VERSION {
        return Err(Error::Format(format!(
            "unsupported weight file version {version}"
        )));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body)?;
    let mut net = Network::<T>::new(
        header.spec,
        header.input_shape,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let expected = net.tensors();
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((_, shape, _), e)| *shape != e.shape)
    {
        return Err(Error::Format("tensor table does not match the spec".into()));
    }
    let mut off = 12 + hlen;
    let mut values = Vec::with_capacity(expected.len());
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let raw = bytes
            .get(off..off + 4 * n)
            .ok_or_else(|| Error::Format(format!("truncated tensor {}", e.name)))?;
        let v: Vec<T> = raw
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        values.push(v);
        off += 4 * n;
    }
    if off != bytes.len() {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }
    drop(expected);
    net.load_tensors(&values)?;
    Ok(net)
}

pub fn save_network<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_network(net, std::io::BufWriter::new(f))
}

pub fn load_network<T: Scalar>(path: &Path) -> Result<Network<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_network(std::io::BufReader::new(f))
}
