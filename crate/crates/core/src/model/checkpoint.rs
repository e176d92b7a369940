//! Versioned flat binary checkpoints.
//!
//! ```text
//! magic "HPGMNCK\0" | version u32
//! | 4 × (enabled u8 | [n u64 | n × width u64])   block MLPs
//! | n u64 | n × width u64                         head
//! | K u64 | hidden u64
//! | alpha_kpattern f64 | beta f64 | gamma f64 | freeze_memory u8
//! | count u64 | count × f64                       parameters in `params()` order
//! ```
//!
//! All integers and floats are little endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::memory::MemoryBank;
use crate::model::{HpGmnModel, ModelConfig};
use crate::stats::NUM_BLOCKS;
use crate::tensor::{Matrix, Mlp};

const MAGIC: &[u8; 8] = b"HPGMNCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_widths(out: &mut Vec<u8>, w: &[usize]) {
    put_u64(out, w.len());
    for &x in w {
        put_u64(out, x);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format("length overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn widths(&mut self) -> Result<Vec<usize>> {
        let n = self.usize()?;
        if n > 64 {
            return Err(Error::Format(format!("implausible layer count {n}")));
        }
        (0..n).map(|_| self.usize()).collect()
    }
}

fn mlp_with_widths(widths: &[usize]) -> Result<Mlp> {
    // values are overwritten from the parameter section
    Mlp::new(widths, &mut ChaCha8Rng::seed_from_u64(0))
}

impl HpGmnModel {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for b in &self.blocks {
            match b {
                Some(b) => {
                    out.push(1);
                    put_widths(&mut out, &b.widths());
                }
                None => out.push(0),
            }
        }
        put_widths(&mut out, &self.head.widths());
        put_u64(&mut out, self.memory.k());
        put_u64(&mut out, self.memory.hidden());
        for c in [
            self.config.alpha_kpattern,
            self.config.beta,
            self.config.gamma,
        ] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.push(self.config.freeze_memory as u8);
        let params = self.params();
        put_u64(&mut out, params.len());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a model checkpoint".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let mut blocks: [Option<Mlp>; NUM_BLOCKS] = Default::default();
        let mut first_block = None;
        for b in &mut blocks {
            if r.u8()? != 0 {
                let w = r.widths()?;
                first_block.get_or_insert_with(|| w.clone());
                *b = Some(mlp_with_widths(&w)?);
            }
        }
        let head_widths = r.widths()?;
        let head = mlp_with_widths(&head_widths)?;
        let k = r.usize()?;
        let hidden = r.usize()?;
        let memory = MemoryBank::from_matrix(Matrix::zeros(k, hidden))?;
        let (alpha_kpattern, beta, gamma) = (r.f64()?, r.f64()?, r.f64()?);
        let freeze_memory = r.u8()? != 0;
        let block = first_block.ok_or(Error::NoStatisticEnabled)?;
        let config = ModelConfig {
            k,
            block_hidden: block.get(1).copied().unwrap_or(1),
            block_out: *block.last().unwrap_or(&1),
            head_hidden: head_widths.get(1).copied().unwrap_or(1),
            alpha_kpattern,
            beta,
            gamma,
            freeze_memory,
        };
        let mut model = HpGmnModel::from_parts(blocks, head, memory, config)?;
        let count = r.usize()?;
        if count != model.param_count() {
            return Err(Error::Format(format!(
                "checkpoint holds {count} parameters, architecture needs {}",
                model.param_count()
            )));
        }
        let raw = r.take(
            count
                .checked_mul(8)
                .ok_or_else(|| Error::Format("length overflow".into()))?,
        )?;
        let params: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        model.set_params(&params)?;
        Ok(model)
    }

    /// Writes atomically through a temporary file next to `path`.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_checkpoint_bytes())
            .map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{LocalStatistics, StatMask};

    fn stats(mask: StatMask) -> LocalStatistics {
        let n = 5;
        let blocks = [3, 2, 4, 5].map(|w| Matrix::filled(n, w, 0.5));
        LocalStatistics::from_blocks(blocks, mask).unwrap()
    }

    #[test]
    fn roundtrip_preserves_model() {
        let s = stats(StatMask::ALL.without(1));
        let cfg = ModelConfig {
            k: 4,
            block_hidden: 3,
            block_out: 2,
            head_hidden: 5,
            ..ModelConfig::default()
        };
        let m = HpGmnModel::new(&s, 3, cfg, 9).unwrap();
        let back = HpGmnModel::from_checkpoint_bytes(&m.to_checkpoint_bytes()).unwrap();
        assert_eq!(back, m);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        m.save_checkpoint(&path).unwrap();
        assert_eq!(HpGmnModel::load_checkpoint(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let s = stats(StatMask::ALL);
        let m = HpGmnModel::new(
            &s,
            2,
            ModelConfig {
                k: 2,
                ..ModelConfig::default()
            },
            0,
        )
        .unwrap();
        let bytes = m.to_checkpoint_bytes();
        assert!(HpGmnModel::from_checkpoint_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        assert!(HpGmnModel::from_checkpoint_bytes(&wrong).is_err());
        assert!(HpGmnModel::from_checkpoint_bytes(b"nonsense").is_err());
    }
}
