//! On-disk cache of computed local statistics.
//!
//! Blob layout (little endian):
//!
//! ```text
//! magic "HPGMNLS\0" | version u32 | mask u8 | num_classes u64 | n u64
//! | pseudo-labels n × u64 | 4 × (rows u64 | cols u64 | rows·cols × f64)
//! ```
//!
//! A blob with a different version is treated as a miss and overwritten.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::stats::{
    LocalStatistics, LocalStatsConfig, PseudoLabelSource, PseudoLabels, StatMask, NUM_BLOCKS,
};
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"HPGMNLS\0";
pub const CACHE_VERSION: u32 = 1;

/// Hex SHA-256 over the graph's nodes, edges, features, labels and class count.
pub fn graph_fingerprint(g: &Graph) -> String {
    let mut h = Sha256::new();
    h.update((g.num_nodes() as u64).to_le_bytes());
    h.update((g.num_classes() as u64).to_le_bytes());
    h.update((g.num_features() as u64).to_le_bytes());
    for &(u, v) in g.edges() {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
    }
    for x in g.features().as_slice() {
        h.update(x.to_le_bytes());
    }
    for y in g.labels() {
        h.update(y.map_or(-1i64, |y| y as i64).to_le_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Identifies one cached statistics computation.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheKey {
    pub dataset_hash: String,
    pub split_id: usize,
    pub alpha_ppr: f64,
    pub k_max: usize,
    pub estimator_seed: u64,
    /// Remaining settings that change the result (estimator schedule, top-d, mask).
    pub extra: String,
}

impl CacheKey {
    pub fn new(g: &Graph, split_id: usize, cfg: &LocalStatsConfig) -> Self {
        let e = &cfg.estimator;
        let d = &cfg.diffusion;
        CacheKey {
            dataset_hash: graph_fingerprint(g),
            split_id,
            alpha_ppr: cfg.diffusion.alpha_ppr,
            k_max: cfg.diffusion.k_max,
            estimator_seed: e.seed,
            extra: format!(
                "lr={:e};epochs={};patience={};wd={:e};opt={:?};dense={};top={};mask={:?}",
                e.learning_rate,
                e.max_epochs,
                e.patience,
                e.weight_decay,
                e.optimizer,
                d.dense_limit,
                d.top_d,
                cfg.mask.as_array()
            ),
        }
    }

    fn file_name(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dataset_hash.as_bytes());
        h.update((self.split_id as u64).to_le_bytes());
        h.update(self.alpha_ppr.to_le_bytes());
        h.update((self.k_max as u64).to_le_bytes());
        h.update(self.estimator_seed.to_le_bytes());
        h.update(self.extra.as_bytes());
        format!("{}.lstats", &hex(&h.finalize())[..32])
    }
}

/// Directory-backed statistics cache.
#[derive(Debug, Clone)]
pub struct StatsCache {
    dir: PathBuf,
}

impl StatsCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        StatsCache { dir: dir.into() }
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// Returns the cached entry, or `None` on a miss or a stale version.
    pub fn get(&self, key: &CacheKey) -> Result<Option<(LocalStatistics, PseudoLabels)>> {
        let path = self.path_for(key);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        match decode(&bytes) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Format(msg)) if msg.starts_with("version") => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Writes atomically through a temporary file in the same directory.
    pub fn put(&self, key: &CacheKey, stats: &LocalStatistics, pl: &PseudoLabels) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_for(key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&encode(stats, pl))
            .map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

pub(crate) fn encode(stats: &LocalStatistics, pl: &PseudoLabels) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    let bits = stats
        .mask()
        .as_array()
        .iter()
        .enumerate()
        .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
    out.push(bits);
    out.extend_from_slice(&(pl.num_classes() as u64).to_le_bytes());
    out.extend_from_slice(&(pl.len() as u64).to_le_bytes());
    for &y in pl.labels() {
        out.extend_from_slice(&(y as u64).to_le_bytes());
    }
    for b in stats.blocks() {
        out.extend_from_slice(&(b.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(b.cols() as u64).to_le_bytes());
        for x in b.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
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
            .ok_or_else(|| Error::Format("truncated statistics blob".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflow".into()))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<(LocalStatistics, PseudoLabels)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a statistics blob".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(Error::Format(format!(
            "version {version}, expected {CACHE_VERSION}"
        )));
    }
    let bits = r.take(1)?[0];
    let mask = StatMask::from_array(std::array::from_fn(|i| bits & (1 << i) != 0));
    let num_classes = r.usize()?;
    let n = r.usize()?;
    let labels = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let mut blocks: [Matrix; NUM_BLOCKS] = std::array::from_fn(|_| Matrix::zeros(0, 0));
    for b in &mut blocks {
        let rows = r.usize()?;
        let cols = r.usize()?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("block size overflow".into()))?;
        let raw = r.take(
            len.checked_mul(8)
                .ok_or_else(|| Error::Format("block size overflow".into()))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        *b = Matrix::from_vec(rows, cols, data)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes in statistics blob".into()));
    }
    let pl = PseudoLabels::new(labels, num_classes, PseudoLabelSource::Estimated)?;
    Ok((LocalStatistics::from_blocks(blocks, mask)?, pl))
}

/// Looks up `key`, computing and storing the statistics on a miss.
pub fn cached_or_compute<F>(
    cache: Option<&StatsCache>,
    key: &CacheKey,
    compute: F,
) -> Result<(LocalStatistics, PseudoLabels)>
where
    F: FnOnce() -> Result<(LocalStatistics, PseudoLabels)>,
{
    if let Some(c) = cache {
        if let Some(hit) = c.get(key)? {
            return Ok(hit);
        }
    }
    let v = compute()?;
    if let Some(c) = cache {
        c.put(key, &v.0, &v.1)?;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_heterophilous_sbm, random_splits};
    use crate::stats::compute_local_statistics;

    fn fixture() -> (Graph, LocalStatsConfig) {
        let g = generate_heterophilous_sbm(10, 2, 0.05, 0.3, 2.0, 1).unwrap();
        let mut cfg = LocalStatsConfig::default();
        cfg.estimator.max_epochs = 5;
        cfg.estimator.patience = 5;
        (g, cfg)
    }

    #[test]
    fn blob_roundtrip() {
        let (g, cfg) = fixture();
        let split = &random_splits(&g, 1, 0).unwrap()[0];
        let (stats, pl) = compute_local_statistics(&g, split, &cfg).unwrap();
        let (s2, p2) = decode(&encode(&stats, &pl)).unwrap();
        assert_eq!(s2, stats);
        assert_eq!(p2.labels(), pl.labels());
    }

    #[test]
    fn cache_hit_and_version_invalidation() {
        let (g, cfg) = fixture();
        let split = &random_splits(&g, 1, 0).unwrap()[0];
        let dir = tempfile::tempdir().unwrap();
        let cache = StatsCache::new(dir.path());
        let key = CacheKey::new(&g, 0, &cfg);
        assert!(cache.get(&key).unwrap().is_none());
        let mut calls = 0;
        let a = cached_or_compute(Some(&cache), &key, || {
            calls += 1;
            compute_local_statistics(&g, split, &cfg)
        })
        .unwrap();
        let b = cached_or_compute(Some(&cache), &key, || {
            calls += 1;
            compute_local_statistics(&g, split, &cfg)
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(a.0, b.0);

        let path = cache.path_for(&key);
        let mut bytes = fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&(CACHE_VERSION + 1).to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(cache.get(&key).unwrap().is_none());
    }

    #[test]
    fn key_depends_on_split_and_alpha() {
        let (g, cfg) = fixture();
        let a = CacheKey::new(&g, 0, &cfg).file_name();
        assert_ne!(a, CacheKey::new(&g, 1, &cfg).file_name());
        let mut other = cfg.clone();
        other.diffusion.alpha_ppr = 0.2;
        assert_ne!(a, CacheKey::new(&g, 0, &other).file_name());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let (g, cfg) = fixture();
        let split = &random_splits(&g, 1, 0).unwrap()[0];
        let (stats, pl) = compute_local_statistics(&g, split, &cfg).unwrap();
        let bytes = encode(&stats, &pl);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(b"garbage!").is_err());
    }
}
