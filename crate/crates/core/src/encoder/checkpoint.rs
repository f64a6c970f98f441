//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "CIDL" | u32 version
//! block: encoder config
//! block × n: query encoder tensors, declared order
//! block × n: key encoder tensors, declared order
//! block: optimizer state
//! block: rng state
//! u64 global step
//! u32 CRC32 of every preceding byte
//! ```
//!
//! A block is a `u64` byte length followed by that many payload bytes. Tensor
//! payloads are `u32 rows, u32 cols, f64 × rows·cols`.

use std::path::Path;

use super::{EncoderConfig, EncoderPair, EncoderParams};
use crate::numerics::{DenseMatrix, LrSchedule, OptimizerState, RngStream};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CIDL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub pair: EncoderPair,
    pub optimizer: OptimizerState,
    pub rng: RngStream,
    pub global_step: u64,
}

impl Checkpoint {
    pub fn config(&self) -> &EncoderConfig {
        self.pair.query.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        write_block(&mut out, &encode_config(self.config()));
        for t in self
            .pair
            .query
            .tensors()
            .iter()
            .chain(self.pair.key.tensors())
        {
            let mut p = Vec::new();
            encode_tensor(&mut p, t);
            write_block(&mut out, &p);
        }
        write_block(&mut out, &encode_optimizer(&self.optimizer));
        let mut r = Vec::new();
        r.extend_from_slice(&self.rng.seed().to_le_bytes());
        for w in self.rng.state() {
            r.extend_from_slice(&w.to_le_bytes());
        }
        write_block(&mut out, &r);
        out.extend_from_slice(&self.global_step.to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::CorruptChecksum(format!(
                "file is only {} bytes",
                bytes.len()
            )));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::CorruptChecksum("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::CorruptChecksum(format!(
                "crc32 {actual:08x} does not match stored {stored:08x}"
            )));
        }

        let mut r = Reader::new(&body[8..]);
        let config = decode_config(&mut Reader::new(r.block()?))?;
        let n = EncoderParams::zeros(&config)?.tensors().len();
        let read_tensors = |r: &mut Reader| -> Result<Vec<DenseMatrix>> {
            (0..n)
                .map(|_| decode_tensor(&mut Reader::new(r.block()?)))
                .collect()
        };
        let query = EncoderParams::from_tensors(&config, read_tensors(&mut r)?)?;
        let key = EncoderParams::from_tensors(&config, read_tensors(&mut r)?)?;
        let optimizer = decode_optimizer(&mut Reader::new(r.block()?))?;
        let mut rr = Reader::new(r.block()?);
        let seed = rr.u64()?;
        let state = [rr.u64()?, rr.u64()?, rr.u64()?, rr.u64()?];
        let global_step = r.u64()?;
        if !r.is_empty() {
            return Err(Error::CorruptChecksum(
                "trailing bytes after global step".into(),
            ));
        }
        Ok(Self {
            pair: EncoderPair { query, key },
            optimizer,
            rng: RngStream::from_state(seed, state),
            global_step,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn write_block(out: &mut Vec<u8>, payload: &[u8]) {
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn encode_config(c: &EncoderConfig) -> Vec<u8> {
    let mut p = Vec::new();
    put_u32(&mut p, c.input_dim);
    put_u32(&mut p, c.base_hidden_dims.len());
    for &d in &c.base_hidden_dims {
        put_u32(&mut p, d);
    }
    put_u32(&mut p, c.repr_dim);
    put_u32(&mut p, c.head_hidden_dim);
    put_u32(&mut p, c.embed_dim);
    p.extend_from_slice(&c.momentum.to_le_bytes());
    p
}

fn decode_config(r: &mut Reader) -> Result<EncoderConfig> {
    let input_dim = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    let base_hidden_dims = (0..n_hidden)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<_>>()?;
    let c = EncoderConfig {
        input_dim,
        base_hidden_dims,
        repr_dim: r.u32()? as usize,
        head_hidden_dim: r.u32()? as usize,
        embed_dim: r.u32()? as usize,
        momentum: r.f64()?,
    };
    c.validate()
        .map_err(|e| Error::CorruptChecksum(format!("invalid encoder config: {e}")))?;
    Ok(c)
}

fn encode_tensor(out: &mut Vec<u8>, t: &DenseMatrix) {
    put_u32(out, t.rows());
    put_u32(out, t.cols());
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn decode_tensor(r: &mut Reader) -> Result<DenseMatrix> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let data = (0..rows * cols)
        .map(|_| r.f64())
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::new(rows, cols, data)
}

fn encode_optimizer(o: &OptimizerState) -> Vec<u8> {
    let mut p = Vec::new();
    p.extend_from_slice(&o.learning_rate_base.to_le_bytes());
    p.extend_from_slice(&o.momentum_coeff.to_le_bytes());
    p.extend_from_slice(&o.weight_decay.to_le_bytes());
    p.push(match o.schedule {
        LrSchedule::Constant => 0,
        LrSchedule::Cosine => 1,
    });
    p.extend_from_slice(&(o.step_count as u64).to_le_bytes());
    p.extend_from_slice(&(o.total_steps as u64).to_le_bytes());
    put_u32(&mut p, o.velocity.len());
    for v in &o.velocity {
        encode_tensor(&mut p, v);
    }
    p
}

fn decode_optimizer(r: &mut Reader) -> Result<OptimizerState> {
    let learning_rate_base = r.f64()?;
    let momentum_coeff = r.f64()?;
    let weight_decay = r.f64()?;
    let schedule = match r.u8()? {
        0 => LrSchedule::Constant,
        1 => LrSchedule::Cosine,
        other => {
            return Err(Error::CorruptChecksum(format!(
                "unknown lr schedule tag {other}"
            )))
        }
    };
    let step_count = r.u64()? as usize;
    let total_steps = r.u64()? as usize;
    let n = r.u32()? as usize;
    let velocity = (0..n).map(|_| decode_tensor(r)).collect::<Result<_>>()?;
    Ok(OptimizerState {
        learning_rate_base,
        momentum_coeff,
        weight_decay,
        schedule,
        velocity,
        step_count,
        total_steps,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::CorruptChecksum(format!(
                "wanted {n} bytes, {} remain",
                self.buf.len()
            )));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| Error::CorruptChecksum("block too large".into()))?;
        self.take(n)
    }
}
