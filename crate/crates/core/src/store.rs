//! Checkpoint files (`.a2f`).
//!
//! Layout, all integers little-endian:
//! `"A2FC"`, u32 version, u32-length-prefixed UTF-8 JSON header, u32 entry
//! count, then per entry a u32-length-prefixed name, u32 rank, rank × u32
//! dims and the f32 payload; finally a u64 FNV-1a hash of every preceding byte.
//! Optimizer moments, when present, are extra entries `adam.m.<param>` and
//! `adam.v.<param>`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::{Shape, Tensor};
use crate::train::AdamState;

pub const MAGIC: &[u8; 4] = b"A2FC";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "a2f";

/// Training context saved alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Metadata {
    /// Optimizer steps completed when the checkpoint was written.
    pub step: u64,
    pub seed: u64,
    /// Most recent training losses, oldest first.
    pub loss_tail: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<AdamState>,
    pub metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    metadata: Metadata,
    /// Present when optimizer moments follow the parameters.
    optimizer_step: Option<u64>,
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// Natural dimensions: weights rank 4, biases and λ rank 1.
fn stored_dims(shape: Shape) -> Vec<usize> {
    if shape.c == 1 && shape.h == 1 && shape.w == 1 {
        vec![shape.n]
    } else {
        shape.dims().to_vec()
    }
}

fn shape_of(dims: &[usize]) -> Option<Shape> {
    match *dims {
        [n] => Some(Shape::new(n, 1, 1, 1)),
        [n, c, h, w] => Some(Shape::new(n, c, h, w)),
        _ => None,
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_entry(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    let dims = stored_dims(t.shape());
    put_u32(out, dims.len());
    for d in dims {
        put_u32(out, d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &Model, optimizer: Option<&AdamState>, metadata: &Metadata) -> Result<Vec<u8>> {
    if let Some(state) = optimizer {
        state.check(model)?;
    }
    let header = Header {
        config: model.config.clone(),
        metadata: metadata.clone(),
        optimizer_step: optimizer.map(|s| s.t),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Parse(e.to_string()))?;
    let params = model.params();
    let entries = params.len() * if optimizer.is_some() { 3 } else { 1 };

    let mut out = Vec::with_capacity(64 + json.len() + 4 * model.count_params() * 3);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, json.len());
    out.extend_from_slice(&json);
    put_u32(&mut out, entries);
    for (name, slot) in &params {
        put_entry(&mut out, name, &slot.value);
    }
    if let Some(state) = optimizer {
        for ((name, _), m) in params.iter().zip(&state.m) {
            put_entry(&mut out, &format!("adam.m.{name}"), m);
        }
        for ((name, _), v) in params.iter().zip(&state.v) {
            put_entry(&mut out, &format!("adam.v.{name}"), v);
        }
    }
    let hash = fnv1a(&out);
    out.extend_from_slice(&hash.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(Error::Parse("file too short".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = fnv1a(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { bytes: body, pos: 8 };
    let len = r.u32()?;
    let header: Header =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::Parse(format!("header: {e}")))?;
    let count = r.u32()?;
    let mut entries = std::collections::HashMap::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Parse(format!("entry name: {e}")))?
            .to_string();
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let shape = shape_of(&dims)
            .ok_or_else(|| Error::Parse(format!("{name}: unsupported rank {rank}")))?;
        let payload = r.take(shape.len() * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if entries.insert(name.clone(), Tensor::from_vec(shape, data)?).is_some() {
            return Err(Error::Parse(format!("duplicate entry {name}")));
        }
    }
    if r.pos != body.len() {
        return Err(Error::Parse(format!("{} trailing bytes", body.len() - r.pos)));
    }

    let mut model = Model::new(header.config, 0)?;
    let mut take = |name: &str, like: Shape| -> Result<Tensor> {
        let t = entries
            .remove(name)
            .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {name}")))?;
        if t.shape() != like {
            return Err(Error::ShapeMismatch(format!(
                "{name}: file has {}, configuration needs {like}",
                t.shape()
            )));
        }
        Ok(t)
    };
    let names: Vec<(String, Shape)> = model
        .params()
        .iter()
        .map(|(n, s)| (n.clone(), s.value.shape()))
        .collect();
    for ((name, shape), (_, slot)) in names.iter().zip(model.params_mut()) {
        slot.value = take(name, *shape)?;
    }
    let optimizer = match header.optimizer_step {
        None => None,
        Some(t) => {
            let m = names
                .iter()
                .map(|(n, s)| take(&format!("adam.m.{n}"), *s))
                .collect::<Result<Vec<_>>>()?;
            let v = names
                .iter()
                .map(|(n, s)| take(&format!("adam.v.{n}"), *s))
                .collect::<Result<Vec<_>>>()?;
            Some(AdamState { t, m, v })
        }
    };
    if let Some(extra) = entries.keys().min() {
        return Err(Error::ShapeMismatch(format!(
            "tensor {extra} is not part of the configured model"
        )));
    }
    Ok(Checkpoint {
        model,
        optimizer,
        metadata: header.metadata,
    })
}

/// Writes atomically: a crash mid-write leaves any previous file intact.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Model,
    optimizer: Option<&AdamState>,
    metadata: &Metadata,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(model, optimizer, metadata)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
