//! Binary model checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then every tensor as little-endian `f64` in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Architecture, Gradients, ModelParams, PARAM_NAMES};
use super::tensor::Matrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LSCHEDNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: Architecture,
    /// Hash of the training configuration that produced the weights.
    pub config_hash: String,
    pub tensors: Vec<TensorInfo>,
}

fn tensor_list(m: &ModelParams) -> Vec<(&'static str, usize, usize, &[f64])> {
    let (e, c) = (&m.embed, &m.clf);
    fn mat<'a>(name: &'static str, x: &'a Matrix) -> (&'static str, usize, usize, &'a [f64]) {
        (name, x.rows, x.cols, &x.data)
    }
    fn col<'a>(name: &'static str, v: &'a [f64]) -> (&'static str, usize, usize, &'a [f64]) {
        (name, v.len(), 1, v)
    }
    vec![
        mat(PARAM_NAMES[0], &e.w1),
        mat(PARAM_NAMES[1], &e.w2),
        mat(PARAM_NAMES[2], &e.w3),
        mat(PARAM_NAMES[3], &c.hidden),
        col(PARAM_NAMES[4], &c.gamma),
        col(PARAM_NAMES[5], &c.beta),
        mat(PARAM_NAMES[6], &c.out),
        col(PARAM_NAMES[7], &c.out_bias),
        col("bn_running_mean", &c.running_mean),
        col("bn_running_var", &c.running_var),
    ]
}

pub fn write_checkpoint<W: Write>(mut out: W, model: &ModelParams, config_hash: &str) -> Result<()> {
    model.check_shapes()?;
    let tensors = tensor_list(model);
    let header = CheckpointHeader {
        arch: model.arch,
        config_hash: config_hash.to_string(),
        tensors: tensors
            .iter()
            .map(|(name, rows, cols, _)| TensorInfo { name: name.to_string(), rows: *rows, cols: *cols })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, _, _, data) in tensors {
        for x in data {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| Ok(f64::from_le_bytes(read_array::<8, _>(input)?))).collect()
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(ModelParams, CheckpointHeader)> {
    if &read_array::<8, _>(&mut input)? != MAGIC {
        return Err(Error::Input("not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(read_array::<4, _>(&mut input)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Compatibility(format!("checkpoint version {version} is not supported")));
    }
    let len = u64::from_le_bytes(read_array::<8, _>(&mut input)?) as usize;
    if len > 1 << 24 {
        return Err(Error::Input("checkpoint header is implausibly large".into()));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    header.arch.validate()?;
    let mut model = ModelParams::init(header.arch, 0)?;
    let expected: Vec<TensorInfo> = tensor_list(&model)
        .iter()
        .map(|(name, rows, cols, _)| TensorInfo { name: name.to_string(), rows: *rows, cols: *cols })
        .collect();
    if expected != header.tensors {
        return Err(Error::Shape("checkpoint tensors do not match its architecture".into()));
    }
    let mut data = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        data.push(read_f64s(&mut input, t.rows * t.cols)?);
    }
    let mut it = data.into_iter();
    let mut next = || it.next().expect("tensor count checked above");
    let (e, c) = (&mut model.embed, &mut model.clf);
    e.w1.data = next();
    e.w2.data = next();
    e.w3.data = next();
    c.hidden.data = next();
    c.gamma = next();
    c.beta = next();
    c.out.data = next();
    c.out_bias = next();
    c.running_mean = next();
    c.running_var = next();
    model.grad = Gradients::zeros(&header.arch);
    model.check_shapes()?;
    if !model.is_finite() {
        return Err(Error::Input("checkpoint contains non-finite weights".into()));
    }
    Ok((model, header))
}

pub fn save_checkpoint(path: &Path, model: &ModelParams, config_hash: &str) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, config_hash)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
