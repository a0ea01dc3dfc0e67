//! Binary checkpoints of the policy and its optimizer.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "CTXSELCK"
//! version  u32
//! seed, scene, next_iteration, adam_step, model_dim, n_cross, n_linear   u64 each
//! count    u32
//! count × { name_len u32, name (UTF-8), rank u32, dims u64 × rank, values f64 × prod(dims) }
//! fnv1a    u64 over every preceding byte
//! ```
//!
//! Tensors are the policy's, prefixed `policy.`, then the optimizer moments,
//! prefixed `adam.m.` and `adam.v.`.

use crate::error::{Error, Result};
use ctxsel_core::grpo::AdamState;
use ctxsel_core::numcore::Matrix;
use ctxsel_core::policynet::{PolicyConfig, PolicyParams};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"CTXSELCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub scene: usize,
    /// First GRPO iteration that has not run yet.
    pub next_iteration: usize,
    pub policy: PolicyParams,
    pub optimizer: AdamState,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn named<'a>(prefix: &str, p: &'a PolicyParams) -> impl Iterator<Item = (String, &'a Matrix)> + 'a {
    let prefix = prefix.to_string();
    p.tensors().into_iter().map(move |(n, m)| (format!("{prefix}{n}"), m))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let c = self.policy.config;
        for v in [
            self.seed,
            self.scene as u64,
            self.next_iteration as u64,
            self.optimizer.step,
            c.model_dim as u64,
            c.n_cross as u64,
            c.n_linear as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let tensors: Vec<(String, &Matrix)> = named("policy.", &self.policy)
            .chain(named("adam.m.", &self.optimizer.m))
            .chain(named("adam.v.", &self.optimizer.v))
            .collect();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, m) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for x in m.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Corruption("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Migration { found: version, expected: VERSION });
        }
        if bytes.len() < r.pos + 8 {
            return Err(Error::Corruption("truncated checkpoint".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::Corruption("checksum mismatch (truncated or altered file)".into()));
        }
        let mut r = Reader { bytes: body, pos: r.pos };
        let seed = r.u64()?;
        let scene = r.usize()?;
        let next_iteration = r.usize()?;
        let step = r.u64()?;
        let config = PolicyConfig { model_dim: r.usize()?, n_cross: r.usize()?, n_linear: r.usize()? };
        let mut policy =
            PolicyParams::zeros(config).map_err(|e| Error::Corruption(format!("stored policy shape: {e}")))?;
        let mut m = policy.clone();
        let mut v = policy.clone();
        let count = r.u32()? as usize;
        let expected = 3 * policy.tensors().len();
        if count != expected {
            return Err(Error::Corruption(format!("{count} tensors stored, {expected} expected")));
        }
        for (prefix, target) in [("policy.", &mut policy), ("adam.m.", &mut m), ("adam.v.", &mut v)] {
            let names: Vec<String> = target.tensors().into_iter().map(|(n, _)| format!("{prefix}{n}")).collect();
            for (want, slot) in names.into_iter().zip(target.tensors_mut()) {
                let len = r.u32()? as usize;
                let name = std::str::from_utf8(r.take(len)?)
                    .map_err(|_| Error::Corruption("tensor name is not UTF-8".into()))?;
                if name != want {
                    return Err(Error::Corruption(format!("found tensor {name:?} where {want:?} belongs")));
                }
                let rank = r.u32()? as usize;
                let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
                if dims != [slot.rows(), slot.cols()] {
                    return Err(Error::Corruption(format!("tensor {name} has shape {dims:?}")));
                }
                for x in slot.data_mut() {
                    *x = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
                }
            }
        }
        if r.pos != body.len() {
            return Err(Error::Corruption("trailing bytes after the last tensor".into()));
        }
        if !policy.is_finite() || !m.is_finite() || !v.is_finite() {
            return Err(Error::Corruption("non-finite values in checkpoint".into()));
        }
        Ok(Self { seed, scene, next_iteration, policy, optimizer: AdamState { m, v, step } })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(Error::io(path))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corruption("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Corruption("size field overflows".into()))
    }
}
