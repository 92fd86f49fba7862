//! Checkpoint container: magic, a length-prefixed JSON header with the
//! architecture and tensor table, then every tensor as little-endian f32.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{EncoderConfig, Model, Params};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HGL2RCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub encoder: EncoderConfig,
    pub input_dims: [usize; 6],
    pub d_hidden: usize,
    pub head_dropout: f64,
    pub tensors: Vec<TensorEntry>,
}

/// Rounds every parameter to the nearest f32, the precision stored on disk.
pub fn quantize(params: &mut Params) {
    for t in params.tensors_mut() {
        t.mapv_inplace(|v| v as f32 as f64);
    }
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let names = model.params.names();
    let tensors = model.params.tensors();
    let header = CheckpointHeader {
        encoder: model.encoder,
        input_dims: model.input_dims,
        d_hidden: model.d_hidden,
        head_dropout: model.head_dropout,
        tensors: names
            .into_iter()
            .zip(&tensors)
            .map(|(name, t)| TensorEntry {
                name,
                shape: [t.nrows(), t.ncols()],
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.params.n_values());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let bad = |m: &str| Error::Provenance(format!("checkpoint: {m}"));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic bytes"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
    header.encoder.validate()?;
    let mut model = Model {
        encoder: header.encoder,
        input_dims: header.input_dims,
        d_hidden: header.d_hidden,
        head_dropout: header.head_dropout,
        params: Params::init(&header.encoder, header.input_dims, header.d_hidden, 0),
    };
    let names = model.params.names();
    if names.len() != header.tensors.len() {
        return Err(bad("tensor count does not match the architecture"));
    }
    let mut offset = 12 + hlen;
    for ((name, t), entry) in names.iter().zip(model.params.tensors_mut()).zip(&header.tensors) {
        if *name != entry.name || [t.nrows(), t.ncols()] != entry.shape {
            return Err(bad(&format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
        }
        let n = t.len();
        let raw = bytes
            .get(offset..offset + 4 * n)
            .ok_or_else(|| bad(&format!("truncated data in {name}")))?;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        *t = Array2::from_shape_vec(t.raw_dim(), vals).expect("shape checked");
        offset += 4 * n;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let cfg = EncoderConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            ..EncoderConfig::default()
        };
        Model::new(cfg, [3, 3, 5, 3, 3, 5], 0.5, 9)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut m = model();
        quantize(&mut m.params);
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = to_bytes(&model());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
    }
}
