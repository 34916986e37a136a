//! Checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! "MRN1"                          4 bytes
//! version                         u32 (= 1)
//! levels, base_channels,
//! source_channels                 u32 each
//! threshold                       f32
//! per tensor, canonical order:    rank u32, dims u32 x rank, data f32 x prod(dims)
//! ```
//!
//! Tensors come in kernel order (encoder levels ascending, decoder levels
//! ascending, head), each kernel as its rank-4 weights then rank-1 bias.

use crate::error::{Error, Result};
use crate::net::{RefinerConfig, RefinerParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MRN1";
pub const CHECKPOINT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 4 * 4;

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Shapes of every stored tensor for `config`, in file order.
fn tensor_shapes(config: &RefinerConfig) -> Result<Vec<Vec<usize>>> {
    let params = RefinerParams::<f32>::zeros(*config)?;
    let mut shapes = Vec::new();
    for k in params.kernels() {
        let (a, b, c, d) = k.weights().dims();
        shapes.push(vec![a, b, c, d]);
        shapes.push(vec![k.bias().len()]);
    }
    Ok(shapes)
}

/// Exact byte length of a checkpoint for `config`.
pub fn checkpoint_len(config: &RefinerConfig) -> Result<usize> {
    let mut len = HEADER_LEN;
    for s in tensor_shapes(config)? {
        len += 4 + 4 * s.len() + 4 * s.iter().product::<usize>();
    }
    Ok(len)
}

pub fn save_checkpoint(params: &RefinerParams) -> Vec<u8> {
    let cfg = params.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [cfg.levels, cfg.base_channels, cfg.source_channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.threshold.to_le_bytes());

    let mut put = |dims: &[usize], data: &[f32]| {
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for k in params.kernels() {
        let (a, b, c, d) = k.weights().dims();
        put(&[a, b, c, d], k.weights().data());
        put(&[k.bias().len()], k.bias());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> u32 {
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }

    fn f32(&mut self) -> f32 {
        f32::from_bits(self.u32())
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<RefinerParams> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ckpt_err("bad magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(ckpt_err(format!(
            "length mismatch: header needs {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32();
    if version != CHECKPOINT_VERSION {
        return Err(ckpt_err(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let levels = r.u32() as usize;
    let base_channels = r.u32() as usize;
    let source_channels = r.u32() as usize;
    let threshold = r.f32();
    let config = RefinerConfig {
        levels,
        base_channels,
        source_channels,
        threshold,
    };
    config
        .validate()
        .map_err(|e| ckpt_err(format!("invalid config: {e}")))?;
    // Reject absurd channel counts before allocating anything.
    let widest = (base_channels as u128) << levels;
    if widest * widest * 9 * 4 > bytes.len() as u128 {
        return Err(ckpt_err(format!(
            "length mismatch: config {config:?} needs more than the {} bytes present",
            bytes.len()
        )));
    }
    let expected = checkpoint_len(&config)?;
    if bytes.len() != expected {
        return Err(ckpt_err(format!(
            "length mismatch: expected {expected} bytes for {config:?}, got {}",
            bytes.len()
        )));
    }

    let mut flat = Vec::new();
    for (i, shape) in tensor_shapes(&config)?.iter().enumerate() {
        let rank = r.u32() as usize;
        if rank != shape.len() {
            return Err(ckpt_err(format!(
                "tensor {i}: rank {rank}, expected {}",
                shape.len()
            )));
        }
        for (axis, &want) in shape.iter().enumerate() {
            let got = r.u32() as usize;
            if got != want {
                return Err(ckpt_err(format!(
                    "tensor {i}: dim {axis} is {got}, expected {want}"
                )));
            }
        }
        for _ in 0..shape.iter().product::<usize>() {
            flat.push(r.f32());
        }
    }
    let mut params = RefinerParams::zeros(config)?;
    params.set_from_flat(&flat)?;
    Ok(params)
}
