//! Little-endian checkpoint layout:
//!
//! ```text
//! b"SNNLCKPT"            magic
//! u32                    format version (1)
//! u32                    number of widths N
//! u32 × N                layer widths, input first
//! per layer l:
//!   f64 × (w_l · w_{l+1})  weights, row-major fan_in × fan_out
//!   f64 × w_{l+1}          biases
//! ```
//!
//! The file ends exactly after the last bias.

use std::fs;
use std::path::Path;

use super::model::{Layer, MlpSpec, Params};
use crate::error::{Error, Result};
use crate::numkernel::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SNNLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &Params) -> Vec<u8> {
    let widths = params.spec().widths();
    let mut out = Vec::with_capacity(16 + 4 * widths.len() + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
    for &w in widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(
                self.pos,
                format!("truncated checkpoint while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn floats(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| self.err(self.pos, format!("{what} size overflows")))?;
        let raw = self.take(len, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Params> {
    let mut r = Reader {
        path,
        bytes,
        pos: 0,
    };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(r.err(0, "not a checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(r.err(8, format!("unsupported checkpoint version {version}")));
    }
    let n = r.u32("width count")? as usize;
    if !(3..=64).contains(&n) {
        return Err(r.err(12, format!("implausible width count {n}")));
    }
    let mut widths = Vec::with_capacity(n);
    for _ in 0..n {
        widths.push(r.u32("widths")? as usize);
    }
    let spec = MlpSpec::new(widths).map_err(|e| r.err(16, e.to_string()))?;
    let mut layers = Vec::with_capacity(spec.layer_count());
    for w in spec.widths().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let at = r.pos;
        let weights = r.floats(fan_in * fan_out, "weights")?;
        let weights =
            Matrix::new(fan_in, fan_out, weights).map_err(|e| r.err(at, e.to_string()))?;
        let at = r.pos;
        let bias = r.floats(fan_out, "biases")?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(r.err(at, "non-finite bias"));
        }
        layers.push(Layer { weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Params::from_layers(&spec, layers)
}

pub fn save_checkpoint(params: &Params, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Params> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
