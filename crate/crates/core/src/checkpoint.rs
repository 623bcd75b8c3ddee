//! Binary checkpoints of a model and its feature buffer.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "IMLPCKPT"
//! version      u32      1
//! config_len   u32      byte length of the config
//! config       JSON     ImlpConfig
//! n_tensors    u32      8
//! per tensor:  rows u64, cols u64, rows*cols f64 (row-major)
//!              order: w_q, w_k, w_1, b_1, w_2, b_2, w_c, b_c
//! buffer:      capacity u64, dim u64, fill u64,
//!              capacity*dim f64 (oldest first, zero past fill)
//! ```

use std::io::{Read, Write};

use crate::buffer::{BufferSnapshot, FeatureBuffer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Imlp, ImlpConfig, ImlpParams};

pub const MAGIC: &[u8; 8] = b"IMLPCKPT";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &Imlp, buffer: &FeatureBuffer) -> std::io::Result<()> {
    let config = serde_json::to_vec(&model.config).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    let tensors = model.params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.rows() as u64).to_le_bytes())?;
        w.write_all(&(t.cols() as u64).to_le_bytes())?;
        for v in t.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    let snap = buffer.snapshot();
    for n in [snap.capacity, snap.dim, snap.fill] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in &snap.block {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| bad("size does not fit in memory"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Imlp, FeatureBuffer)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| bad(e.to_string()))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = c.u32()? as usize;
    let config: ImlpConfig = serde_json::from_slice(c.take(len)?).map_err(|e| bad(format!("config: {e}")))?;
    config.validate()?;

    let n = c.u32()? as usize;
    let mut params = ImlpParams::zeros(&config);
    if n != params.tensors().len() {
        return Err(bad(format!("expected 8 tensors, found {n}")));
    }
    for t in params.tensors_mut() {
        let (rows, cols) = (c.u64()?, c.u64()?);
        if (rows, cols) != t.shape() {
            return Err(bad(format!("tensor is {rows}x{cols}, config implies {}", t.shape_str())));
        }
        *t = Matrix::from_vec(rows, cols, c.f64s(rows * cols)?)?;
    }
    let (capacity, dim, fill) = (c.u64()?, c.u64()?, c.u64()?);
    if capacity != config.window || dim != config.d_h {
        return Err(bad("buffer shape does not match the config"));
    }
    let block = c.f64s(capacity * dim)?;
    if c.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let buffer = FeatureBuffer::from_snapshot(&BufferSnapshot {
        capacity,
        dim,
        fill,
        block,
    })?;
    Ok((Imlp::from_parts(config, params)?, buffer))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Imlp, FeatureBuffer) {
        let cfg = ImlpConfig {
            d_h: 3,
            d_ff: 5,
            window: 2,
            ..ImlpConfig::new(4, 2)
        };
        let model = Imlp::new(cfg.clone(), 9).unwrap();
        let mut buf = cfg.new_buffer().unwrap();
        buf.push(&[0.1, 0.2, 0.3]).unwrap();
        (model, buf)
    }

    #[test]
    fn round_trip_is_exact() {
        let (model, buf) = fixture();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, &buf).unwrap();
        let (m2, b2) = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(m2.config, model.config);
        assert_eq!(m2.params, model.params);
        assert_eq!(b2.snapshot(), buf.snapshot());
    }

    #[test]
    fn corruption_is_detected() {
        let (model, buf) = fixture();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, &buf).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(read_checkpoint(wrong.as_slice()), Err(Error::Checkpoint(_))));
        bytes.push(0);
        assert!(read_checkpoint(bytes.as_slice()).is_err());
    }
}
