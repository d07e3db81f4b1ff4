//! Parameter checkpoint container.
//!
//! ```text
//! "MSTL1" | header length (u64 LE) | JSON header | f64 LE payload
//! ```
//!
//! The header carries the model spec and, per parameter, its name, shape and
//! byte offset into the payload.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelSpec};
use super::params::{Param, ParameterSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 5] = b"MSTL1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    spec: ModelSpec,
    params: Vec<Entry>,
    payload_bytes: u64,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub spec: ModelSpec,
    pub params: ParameterSet<S>,
    /// Free-form metadata (training configuration, normalization, ...).
    pub meta: serde_json::Value,
}

pub fn write_checkpoint<S: Scalar, W: Write>(
    mut w: W,
    spec: &ModelSpec,
    params: &ParameterSet<S>,
    meta: &serde_json::Value,
) -> Result<()> {
    Model::new(*spec)?.param_layout().check(params)?;
    let mut offset = 0u64;
    let entries = params
        .params()
        .iter()
        .map(|p| {
            let e = Entry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                offset,
                len: p.data.len() as u64,
            };
            offset += 8 * p.data.len() as u64;
            e
        })
        .collect();
    let header = Header {
        format: String::from_utf8_lossy(MAGIC).into_owned(),
        spec: *spec,
        params: entries,
        payload_bytes: offset,
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut payload = Vec::with_capacity(offset as usize);
    for v in params.iter_scalars() {
        payload.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_checkpoint<S: Scalar, R: Read>(mut r: R) -> Result<Checkpoint<S>> {
    let bad = |m: &str| Error::Checkpoint(m.to_owned());
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic, expected MSTL1"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(bad("header length is implausible"));
    }
    let mut header = vec![0u8; len as usize];
    r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&header)?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() as u64 != header.payload_bytes {
        return Err(bad(&format!(
            "payload is {} bytes, header says {}",
            payload.len(),
            header.payload_bytes
        )));
    }
    let mut params = Vec::with_capacity(header.params.len());
    for e in &header.params {
        let end = e.offset + 8 * e.len;
        if end > header.payload_bytes || e.shape.iter().product::<usize>() as u64 != e.len {
            return Err(bad(&format!("inconsistent entry `{}`", e.name)));
        }
        let data = payload[e.offset as usize..end as usize]
            .chunks_exact(8)
            .map(|b| S::of(f64::from_le_bytes(b.try_into().expect("8-byte chunk"))))
            .collect();
        params.push(Param {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data,
        });
    }
    let params = ParameterSet::from_params(params);
    Model::new(header.spec)?.param_layout().check(&params)?;
    Ok(Checkpoint {
        spec: header.spec,
        params,
        meta: header.meta,
    })
}

pub fn save_checkpoint<S: Scalar>(
    path: impl AsRef<Path>,
    spec: &ModelSpec,
    params: &ParameterSet<S>,
    meta: &serde_json::Value,
) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, spec, params, meta)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<S>> {
    read_checkpoint(fs::File::open(path)?)
}
