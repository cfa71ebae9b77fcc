//! Versioned binary checkpoint container.
//!
//! Byte layout (all integers little-endian):
//!   magic        8 bytes  b"TRCECKPT"
//!   version      u32      (currently 1)
//!   header_len   u32
//!   header       JSON: step, dtype, rng seed, config, block table
//!   for each parameter block, in table order: f64 LE values
//!   adam m       f64 LE values (param_count entries)
//!   adam v       f64 LE values
//!   adam t       u64
//!
//! Values are stored as f64 regardless of the training precision; widening
//! f32 -> f64 is exact, so the save/load round trip is bitwise faithful.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::kernel::{AdamState, Layout, Params, Real};
use crate::model::config::ModelConfig;
use crate::model::transformer::Model;

const MAGIC: &[u8; 8] = b"TRCECKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    step: u64,
    dtype: String,
    seed: u64,
    config: ModelConfig,
    layout: Layout,
}

/// A saved training state.
pub struct Checkpoint<T> {
    pub step: u64,
    pub seed: u64,
    pub model: Model<T>,
    pub opt: AdamState<T>,
}

pub fn save<T: Real>(
    path: &Path,
    step: u64,
    seed: u64,
    model: &Model<T>,
    opt: &AdamState<T>,
) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = Header {
        step,
        dtype: T::DTYPE.to_string(),
        seed,
        config: model.cfg.clone(),
        layout: model.params.layout.clone(),
    };
    let hjson = serde_json::to_vec(&header)?;
    w.write_all(&(hjson.len() as u32).to_le_bytes())?;
    w.write_all(&hjson)?;
    for v in &model.params.data {
        w.write_all(&v.to_f64().to_le_bytes())?;
    }
    for v in &opt.m {
        w.write_all(&v.to_f64().to_le_bytes())?;
    }
    for v in &opt.v {
        w.write_all(&v.to_f64().to_le_bytes())?;
    }
    w.write_all(&opt.t.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn load<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TraceError::Checkpoint("bad magic".into()));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(TraceError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    r.read_exact(&mut v4)?;
    let hlen = u32::from_le_bytes(v4) as usize;
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf)?;
    let header: Header = serde_json::from_slice(&hbuf)?;
    let n = header.layout.total_len();
    let pdata = read_f64s(&mut r, n)?;
    let m = read_f64s(&mut r, n)?;
    let v = read_f64s(&mut r, n)?;
    let mut t8 = [0u8; 8];
    r.read_exact(&mut t8)?;
    let t = u64::from_le_bytes(t8);

    let params = Params {
        layout: header.layout,
        data: pdata.iter().map(|&x| T::from_f64(x)).collect(),
    };
    let model = Model::from_params(header.config, params)?;
    let opt = AdamState {
        m: m.iter().map(|&x| T::from_f64(x)).collect(),
        v: v.iter().map(|&x| T::from_f64(x)).collect(),
        t,
    };
    Ok(Checkpoint {
        step: header.step,
        seed: header.seed,
        model,
        opt,
    })
}

/// Peek at a checkpoint's step and config without loading tensors.
pub fn peek(path: &Path) -> Result<(u64, u64, ModelConfig)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TraceError::Checkpoint("bad magic".into()));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    r.read_exact(&mut v4)?;
    let hlen = u32::from_le_bytes(v4) as usize;
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf)?;
    let header: Header = serde_json::from_slice(&hbuf)?;
    Ok((header.step, header.seed, header.config))
}
