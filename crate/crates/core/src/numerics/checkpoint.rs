//! Binary checkpoint layout, all integers `u64` and all reals `f64`,
//! little-endian:
//!
//! ```text
//! magic   b"HUBVAE01"
//! input_dim, latent_dim, n_hidden, hidden[n_hidden]
//! tau
//! seed
//! n_pool, pool[n_pool]
//! n_tensors, then per tensor: name_len, name (UTF-8), rows, cols, values[rows*cols]
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Architecture, HubVae};

use super::{ParamSet, Tensor2};

const MAGIC: &[u8; 8] = b"HUBVAE01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: HubVae,
    /// Dataset indices of the hub pool the model was validated with.
    pub pool: Vec<usize>,
    /// Seed of the run, also used to recreate data splits.
    pub seed: u64,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format { offset: self.pos, msg: format!("truncated: wanted {n} more bytes") });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let at = self.pos;
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format { offset: at, msg: format!("count {v} too large") })
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        fn put(out: &mut Vec<u8>, v: usize) {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let arch = &self.model.arch;
        let mut out = MAGIC.to_vec();
        put(&mut out, arch.input_dim);
        put(&mut out, arch.latent_dim);
        put(&mut out, arch.hidden.len());
        arch.hidden.iter().for_each(|&h| put(&mut out, h));
        out.extend_from_slice(&self.model.tau().to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        put(&mut out, self.pool.len());
        self.pool.iter().for_each(|&p| put(&mut out, p));
        put(&mut out, self.model.params.len());
        for (name, t) in self.model.params.iter() {
            put(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put(&mut out, t.rows());
            put(&mut out, t.cols());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format { offset: 0, msg: "bad checkpoint magic".into() });
        }
        let input_dim = r.usize()?;
        let latent_dim = r.usize()?;
        let n_hidden = r.usize()?;
        let hidden = (0..n_hidden).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let tau = r.f64()?;
        let seed = r.u64()?;
        let n_pool = r.usize()?;
        let pool = (0..n_pool).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n_tensors = r.usize()?;
        let mut params = ParamSet::new();
        for _ in 0..n_tensors {
            let len = r.usize()?;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format { offset: at, msg: "tensor name is not UTF-8".into() })?
                .to_string();
            let rows = r.usize()?;
            let cols = r.usize()?;
            let count = rows.checked_mul(cols).ok_or(Error::Format { offset: r.pos, msg: "shape overflow".into() })?;
            let data = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            params.push(name, Tensor2::from_vec(rows, cols, data)?);
        }
        if r.pos != buf.len() {
            return Err(Error::Format { offset: r.pos, msg: "trailing bytes".into() });
        }
        let arch = Architecture::new(input_dim, hidden, latent_dim);
        let model = HubVae::from_params(arch, params)
            .map_err(|e| Error::Checkpoint(format!("tensors do not match header: {e}")))?;
        if model.tau().to_bits() != tau.to_bits() {
            return Err(Error::Checkpoint("header tau disagrees with tau tensor".into()));
        }
        Ok(Self { model, pool, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
