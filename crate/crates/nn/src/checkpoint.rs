//! Binary checkpoint format (little-endian throughout):
//!
//! ```text
//! "PMXM"  u16 version  u32 descriptor_len  descriptor (JSON: config + layer list)
//! u32 n_params   { u32 ndim, u32 dims[ndim], f32 data[prod(dims)] } * n_params
//! u32 n_buffers  { same tensor encoding } * n_buffers      (batch-norm running stats)
//! u8 has_adam    [ u64 step, f64 beta1, f64 beta2, f64 eps, m tensors * n_params, v tensors * n_params ]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layers::LayerSpec;
use crate::model::{Model, ModelConfig};
use crate::optim::AdamState;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PMXM";
pub const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Descriptor {
    config: ModelConfig,
    layers: Vec<LayerSpec>,
}

fn corrupt(msg: impl Into<String>) -> NnError {
    NnError::CorruptCheckpoint(msg.into())
}

fn write_tensor<T: Real>(out: &mut impl Write, t: &Tensor<T>) -> Result<()> {
    out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in t.data() {
        out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|_| corrupt("truncated file"))?;
    Ok(buf)
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(input)?))
}

fn read_tensor<T: Real>(input: &mut impl Read, expected: &[usize]) -> Result<Tensor<T>> {
    let ndim = read_u32(input)? as usize;
    if ndim > 8 {
        return Err(corrupt(format!("implausible tensor rank {ndim}")));
    }
    let shape = (0..ndim)
        .map(|_| read_u32(input).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if shape != expected {
        return Err(corrupt(format!("tensor shape {shape:?}, expected {expected:?}")));
    }
    let n: usize = shape.iter().product();
    let mut raw = vec![0u8; n * 4];
    input
        .read_exact(&mut raw)
        .map_err(|_| corrupt("truncated tensor data"))?;
    let data = raw
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Tensor::from_vec(&shape, data)
}

pub fn write_checkpoint<T: Real>(
    out: &mut impl Write,
    model: &Model<T>,
    adam: Option<&AdamState<T>>,
) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let desc = serde_json::to_vec(&Descriptor {
        config: model.config().clone(),
        layers: model.specs().to_vec(),
    })
    .map_err(|e| NnError::Config(e.to_string()))?;
    out.write_all(&(desc.len() as u32).to_le_bytes())?;
    out.write_all(&desc)?;
    let params = model.params();
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in &params {
        write_tensor(out, p)?;
    }
    let buffers = model.buffers();
    out.write_all(&(buffers.len() as u32).to_le_bytes())?;
    for b in &buffers {
        write_tensor(out, b)?;
    }
    match adam {
        None => out.write_all(&[0u8])?,
        Some(state) => {
            out.write_all(&[1u8])?;
            out.write_all(&state.step.to_le_bytes())?;
            for v in [state.beta1, state.beta2, state.epsilon] {
                out.write_all(&v.to_le_bytes())?;
            }
            for t in state.m.iter().chain(&state.v) {
                write_tensor(out, t)?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<T: Real>(input: &mut impl Read) -> Result<(Model<T>, Option<AdamState<T>>)> {
    if &read_exact::<4>(input)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes(read_exact::<2>(input)?);
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let len = read_u32(input)? as usize;
    let mut desc = vec![0u8; len];
    input
        .read_exact(&mut desc)
        .map_err(|_| corrupt("truncated descriptor"))?;
    let desc: Descriptor =
        serde_json::from_slice(&desc).map_err(|e| corrupt(format!("descriptor: {e}")))?;
    let mut model = Model::<T>::build(&desc.config, 0)?;
    if model.specs() != desc.layers.as_slice() {
        return Err(corrupt("layer list does not match config"));
    }
    let n_params = read_u32(input)? as usize;
    if n_params != model.params().len() {
        return Err(corrupt(format!("{n_params} parameter tensors, expected {}", model.params().len())));
    }
    let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.shape().to_vec()).collect();
    for (dst, shape) in model.params_mut().into_iter().zip(&shapes) {
        *dst = read_tensor(input, shape)?;
    }
    let n_buffers = read_u32(input)? as usize;
    if n_buffers != model.buffers().len() {
        return Err(corrupt("buffer count mismatch"));
    }
    let bshapes: Vec<Vec<usize>> = model.buffers().iter().map(|p| p.shape().to_vec()).collect();
    for (dst, shape) in model.buffers_mut().into_iter().zip(&bshapes) {
        *dst = read_tensor(input, shape)?;
    }
    let adam = match read_exact::<1>(input)?[0] {
        0 => None,
        1 => {
            let step = u64::from_le_bytes(read_exact::<8>(input)?);
            let beta1 = f64::from_le_bytes(read_exact::<8>(input)?);
            let beta2 = f64::from_le_bytes(read_exact::<8>(input)?);
            let epsilon = f64::from_le_bytes(read_exact::<8>(input)?);
            let m = shapes.iter().map(|s| read_tensor(input, s)).collect::<Result<Vec<_>>>()?;
            let v = shapes.iter().map(|s| read_tensor(input, s)).collect::<Result<Vec<_>>>()?;
            Some(AdamState {
                step,
                beta1,
                beta2,
                epsilon,
                m,
                v,
            })
        }
        other => return Err(corrupt(format!("bad optimizer flag {other}"))),
    };
    Ok((model, adam))
}

pub fn save_checkpoint<T: Real>(path: &Path, model: &Model<T>, adam: Option<&AdamState<T>>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut out, model, adam)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(Model<T>, Option<AdamState<T>>)> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig::initial()
            .with_depths([2, 3, 2, 2])
            .with_input([1, 36, 36])
            .with_head_units(5)
    }

    #[test]
    fn round_trip_with_optimizer_state() {
        let model = Model::<f32>::build(&tiny(), 4).unwrap();
        let mut adam = AdamState::for_model(&model);
        adam.step = 17;
        adam.m[0].data_mut()[0] = 0.25;
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, Some(&adam)).unwrap();
        let (back, back_adam) = read_checkpoint::<f32>(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(back.buffers(), model.buffers());
        assert_eq!(back_adam.unwrap(), adam);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back, Some(&adam)).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let model = Model::<f32>::build(&tiny(), 4).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, None).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint::<f32>(&mut bad.as_slice()), Err(NnError::CorruptCheckpoint(_))));
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(read_checkpoint::<f32>(&mut &cut[..]), Err(NnError::CorruptCheckpoint(_))));
    }
}
