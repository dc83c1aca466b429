//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "SUBLABCK"
//! version      u8       1
//! ordering     u32 length + UTF-8 bytes ('s'/'f'/'c')
//! dims         u64 x 5  d, heads, ffn_inner, vocab, context
//! flags        u8 x 3   tie_embeddings, norm (0 pre / 1 post), activation (0 relu / 1 gelu)
//! scalars      f64 x 2  dropout, ln_eps
//! n_params     u32
//! per param    u32 rank, u64 x rank extents, f64 x numel values
//! ```
//!
//! Parameters appear in declaration order, matching [`build_model`].

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{build_model, Activation, ModelConfig, ModelError, NormPlacement, TransformerStack};
use crate::ordering::OrderingSpec;
use crate::tensor::ParamId;

pub const MAGIC: &[u8; 8] = b"SUBLABCK";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u8),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn read_exact<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    read_exact::<8>(r).map(u64::from_le_bytes)
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    read_exact::<4>(r).map(u32::from_le_bytes)
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    read_exact::<8>(r).map(f64::from_le_bytes)
}

pub fn save(model: &TransformerStack, w: &mut impl Write) -> Result<(), CheckpointError> {
    let c = &model.config;
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let ordering = c.ordering.to_string();
    w.write_all(&(ordering.len() as u32).to_le_bytes())?;
    w.write_all(ordering.as_bytes())?;
    for v in [c.d, c.heads, c.ffn_inner, c.vocab, c.context] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&[
        c.tie_embeddings as u8,
        matches!(c.norm, NormPlacement::Post) as u8,
        matches!(c.activation, Activation::Gelu) as u8,
    ])?;
    w.write_all(&c.dropout.to_le_bytes())?;
    w.write_all(&c.ln_eps.to_le_bytes())?;
    w.write_all(&(model.params.len() as u32).to_le_bytes())?;
    for p in model.params.iter() {
        let shape = p.value.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &e in shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(r: &mut impl Read) -> Result<TransformerStack, CheckpointError> {
    if &read_exact::<8>(r)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let [version] = read_exact::<1>(r)?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(CheckpointError::Corrupt(format!("ordering length {len}")));
    }
    let mut text = vec![0u8; len];
    r.read_exact(&mut text)?;
    let text = String::from_utf8(text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let ordering = if text.is_empty() {
        OrderingSpec::empty()
    } else {
        OrderingSpec::parse(&text, text.contains('c')).map_err(ModelError::from)?
    };
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = read_u64(r)? as usize;
    }
    let [tie, norm, act] = read_exact::<3>(r)?;
    let config = ModelConfig {
        d: dims[0],
        heads: dims[1],
        ffn_inner: dims[2],
        vocab: dims[3],
        context: dims[4],
        ordering,
        tie_embeddings: tie != 0,
        norm: if norm == 0 { NormPlacement::Pre } else { NormPlacement::Post },
        activation: if act == 0 { Activation::Relu } else { Activation::Gelu },
        dropout: read_f64(r)?,
        ln_eps: read_f64(r)?,
    };
    let mut model = build_model(config, 0)?;
    let count = read_u32(r)? as usize;
    if count != model.params.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{count} parameter tensors, config implies {}",
            model.params.len()
        )));
    }
    for i in 0..count {
        let param = model.params.get_mut(ParamId(i));
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(r)? as usize);
        }
        if shape != param.value.shape() {
            return Err(CheckpointError::Corrupt(format!(
                "{}: shape {shape:?}, expected {:?}",
                param.name,
                param.value.shape()
            )));
        }
        for v in param.value.data_mut() {
            *v = read_f64(r)?;
        }
    }
    Ok(model)
}

pub fn save_file(model: &TransformerStack, path: &std::path::Path) -> Result<(), CheckpointError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    save(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_file(path: &std::path::Path) -> Result<TransformerStack, CheckpointError> {
    load(&mut io::BufReader::new(std::fs::File::open(path)?))
}
