//! Versioned little-endian checkpoint format.
//!
//! ```text
//! magic "KLFLOWCK" | version u32 | d u32 | blocks u32
//! per block: parity u8 | trainable u8 | scale_bound f64 | layers u32 | widths u32 × (layers + 1)
//! base: variance f64 | mean f64 × d
//! payload: every (weight, bias) in block order, f64
//! ```

use std::io::{Read, Write};

use super::{BaseDistribution, CouplingBlock, FlowModel};
use crate::error::{Error, Result};
use crate::flow::coupling::Layer;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"KLFLOWCK";
pub const CHECKPOINT_VERSION: u32 = 1;

struct BlockHeader {
    parity: usize,
    trainable: bool,
    scale_bound: f64,
    widths: Vec<usize>,
}

/// Encodes a flow to bytes.
pub fn serialize(flow: &FlowModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(flow.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(flow.len() as u32).to_le_bytes());
    for b in flow.blocks() {
        out.push(b.parity() as u8);
        out.push(u8::from(b.is_trainable()));
        out.extend_from_slice(&b.scale_bound().to_le_bytes());
        out.extend_from_slice(&(b.layers().len() as u32).to_le_bytes());
        out.extend_from_slice(&(b.layers()[0].fan_in() as u32).to_le_bytes());
        for l in b.layers() {
            out.extend_from_slice(&(l.fan_out() as u32).to_le_bytes());
        }
    }
    out.extend_from_slice(&flow.base().variance().to_le_bytes());
    for m in flow.base().mean() {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for b in flow.blocks() {
        for p in b.params() {
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Parse(format!(
                "truncated checkpoint: need {n} bytes for {what} at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(what)).collect()
    }
}

/// Decodes a flow written by [`serialize`].
pub fn deserialize(bytes: &[u8]) -> Result<FlowModel> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(Error::Parse("not a flow checkpoint (bad magic)".into()));
    }
    let version = c.u32("version")? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let dim = c.u32("dimension")?;
    let count = c.u32("block count")?;
    let mut headers = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let parity = c.u8("parity")? as usize;
        let trainable = c.u8("trainable flag")? != 0;
        let scale_bound = c.f64("scale bound")?;
        let layers = c.u32("layer count")?;
        let widths = (0..=layers)
            .map(|_| c.u32("layer width"))
            .collect::<Result<Vec<_>>>()?;
        headers.push(BlockHeader {
            parity,
            trainable,
            scale_bound,
            widths,
        });
    }
    let variance = c.f64("base variance")?;
    let mean = c.f64s(dim, "base mean")?;
    let base = BaseDistribution::new(mean, variance).map_err(|e| Error::Parse(e.to_string()))?;
    let mut blocks = Vec::with_capacity(headers.len());
    for h in headers {
        let mut layers = Vec::with_capacity(h.widths.len() - 1);
        for w in h.widths.windows(2) {
            let weight = Tensor::matrix(w[0], w[1], c.f64s(w[0] * w[1], "weights")?)?;
            let bias = Tensor::row(c.f64s(w[1], "biases")?);
            layers.push(Layer { weight, bias });
        }
        let block = CouplingBlock::from_layers(dim, h.parity, layers, h.scale_bound, h.trainable)
            .map_err(|e| Error::Parse(e.to_string()))?;
        blocks.push(block);
    }
    if c.pos != bytes.len() {
        return Err(Error::Parse(format!(
            "{} trailing bytes after payload",
            bytes.len() - c.pos
        )));
    }
    FlowModel::new(base, blocks)
}

pub fn write_checkpoint<W: Write>(flow: &FlowModel, mut w: W) -> Result<()> {
    w.write_all(&serialize(flow))?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<FlowModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    deserialize(&bytes)
}
