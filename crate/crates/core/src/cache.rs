//! Per-record feature extraction and the FFC1 feature cache.
//!
//! ```text
//! "FFC1"  u16 version  [32] fingerprint
//! u32 len + UTF-8 backbone name
//! u32 block count, then (u8 block kind, u64 dim) per block
//! u64 dim  u64 record count
//! per record: u64 id, u8 ok, dim × f64 (zeros when extraction failed)
//! ```
//! Integers are little-endian. Records are in ascending id order.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::DatasetManifest;
use crate::deep::{embed_block, FeatureProvider};
use crate::error::{Error, Result};
use crate::features::{extract_all, BlockKind, HandcraftedParams};
use crate::fusion::{concat, BlockLayout, Fused};
use crate::imaging::{load_canonical, RasterImage};
use crate::segmentation::{segment_or_full, SegmentationConfig};

const MAGIC: &[u8; 4] = b"FFC1";
const VERSION: u16 = 1;

/// Everything besides the provider that shapes a fused vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionParams {
    pub segmentation: SegmentationConfig,
    pub features: HandcraftedParams,
}

impl ExtractionParams {
    pub fn layout(&self, deep_dim: usize) -> Result<BlockLayout> {
        let mut dims = self.features.block_dims().to_vec();
        dims.push((BlockKind::Deep, deep_dim));
        BlockLayout::from_dims(&dims)
    }
}

/// Raw fused vector of one canonical-size image: segment, describe, embed.
pub fn extract_image(img: &RasterImage, provider: &dyn FeatureProvider, params: &ExtractionParams) -> Result<Fused<f64>> {
    let seg = segment_or_full(img, &params.segmentation)?;
    let mut blocks = extract_all::<f64>(&seg.masked, &seg.mask, &params.features)?;
    blocks.push(embed_block(provider, &seg.masked)?);
    concat(&blocks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CacheEntry {
    pub id: u64,
    /// `None` when the record failed to load or extract.
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub fingerprint: [u8; 32],
    pub backbone: String,
    pub layout: BlockLayout,
    pub entries: Vec<CacheEntry>,
}

impl FeatureCache {
    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn failed_ids(&self) -> Vec<u64> {
        self.entries.iter().filter(|e| e.values.is_none()).map(|e| e.id).collect()
    }

    pub fn get(&self, id: u64) -> Option<&[f64]> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .and_then(|i| self.entries[i].values.as_deref())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.write_u16::<LE>(VERSION).unwrap();
        b.extend_from_slice(&self.fingerprint);
        b.write_u32::<LE>(self.backbone.len() as u32).unwrap();
        b.extend_from_slice(self.backbone.as_bytes());
        b.write_u32::<LE>(self.layout.blocks.len() as u32).unwrap();
        for &(kind, _, dim) in &self.layout.blocks {
            b.push(kind as u8);
            b.write_u64::<LE>(dim as u64).unwrap();
        }
        let dim = self.dim();
        b.write_u64::<LE>(dim as u64).unwrap();
        b.write_u64::<LE>(self.entries.len() as u64).unwrap();
        for e in &self.entries {
            b.write_u64::<LE>(e.id).unwrap();
            b.push(e.values.is_some() as u8);
            match &e.values {
                Some(v) => v.iter().for_each(|&x| b.write_f64::<LE>(x).unwrap()),
                None => (0..dim).for_each(|_| b.write_f64::<LE>(0.0).unwrap()),
            }
        }
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::CacheCorrupt(what.to_string());
        let io = |e: std::io::Error| Error::CacheCorrupt(format!("truncated ({e})"));
        let mut c = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        c.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if c.read_u16::<LE>().map_err(io)? != VERSION {
            return Err(corrupt("unsupported version"));
        }
        let mut fingerprint = [0u8; 32];
        c.read_exact(&mut fingerprint).map_err(io)?;
        let name_len = c.read_u32::<LE>().map_err(io)? as usize;
        if name_len > bytes.len() {
            return Err(corrupt("name length"));
        }
        let mut name = vec![0u8; name_len];
        c.read_exact(&mut name).map_err(io)?;
        let backbone = String::from_utf8(name).map_err(|_| corrupt("backbone name is not UTF-8"))?;
        let n_blocks = c.read_u32::<LE>().map_err(io)? as usize;
        if n_blocks > BlockKind::ALL.len() {
            return Err(corrupt("block count"));
        }
        let mut dims = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let tag = c.read_u8().map_err(io)? as usize;
            let kind = *BlockKind::ALL.get(tag).ok_or_else(|| corrupt("block kind"))?;
            dims.push((kind, c.read_u64::<LE>().map_err(io)? as usize));
        }
        let layout = BlockLayout::from_dims(&dims).map_err(|e| Error::CacheCorrupt(e.to_string()))?;
        let dim = c.read_u64::<LE>().map_err(io)? as usize;
        if dim != layout.total_dim() {
            return Err(Error::CacheCorrupt(format!("dim {dim} disagrees with block layout {}", layout.total_dim())));
        }
        let count = c.read_u64::<LE>().map_err(io)? as usize;
        let remaining = bytes.len() as u64 - c.position();
        if (count as u64).checked_mul(9 + 8 * dim as u64) != Some(remaining) {
            return Err(corrupt("payload size does not match record count and dim"));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let id = c.read_u64::<LE>().map_err(io)?;
            let ok = c.read_u8().map_err(io)?;
            let mut v = vec![0f64; dim];
            c.read_f64_into::<LE>(&mut v).map_err(io)?;
            if entries.last().is_some_and(|e: &CacheEntry| e.id >= id) {
                return Err(corrupt("ids not ascending"));
            }
            entries.push(CacheEntry { id, values: (ok == 1).then_some(v) });
        }
        Ok(Self { fingerprint, backbone, layout, entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Loads and insists on `expected` as the fingerprint.
    pub fn load_checked(path: &Path, expected: &[u8; 32]) -> Result<Self> {
        let cache = Self::load(path)?;
        if &cache.fingerprint != expected {
            return Err(Error::CacheCorrupt(format!(
                "fingerprint {} does not match expected {}",
                hex::encode(cache.fingerprint),
                hex::encode(expected)
            )));
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, &self.encode())
    }
}

/// Digest of the provider, the extraction parameters and the manifest.
pub fn fingerprint(manifest: &DatasetManifest, provider: &dyn FeatureProvider, params: &ExtractionParams) -> Result<[u8; 32]> {
    let mut h = Sha256::new();
    h.update(MAGIC);
    h.update(provider.fingerprint().as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(params).map_err(|e| Error::Config(e.to_string()))?);
    h.update([0]);
    h.update(manifest.to_csv()?);
    Ok(h.finalize().into())
}

/// Cache file name for a backbone inside a cache directory.
pub fn cache_file_name(backbone: &str) -> String {
    format!("{}.ffc", crate::io_util::file_safe(backbone))
}

/// Extracts every record in parallel and returns the cache without saving.
pub fn extract_all_records(
    manifest: &DatasetManifest,
    provider: &dyn FeatureProvider,
    params: &ExtractionParams,
) -> Result<FeatureCache> {
    let layout = params.layout(provider.output_dim())?;
    let mut entries: Vec<CacheEntry> = manifest
        .records
        .par_iter()
        .map(|r| {
            let path = manifest.full_path(r);
            let values = load_canonical(&path).and_then(|img| extract_image(&img, provider, params)).map(|f| f.values);
            match values {
                Ok(v) if v.len() == layout.total_dim() => CacheEntry { id: r.id, values: Some(v) },
                Ok(v) => {
                    log::warn!("record {}: {} values, expected {}", r.id, v.len(), layout.total_dim());
                    CacheEntry { id: r.id, values: None }
                }
                Err(e) => {
                    log::warn!("record {} ({}): {e}", r.id, path.display());
                    CacheEntry { id: r.id, values: None }
                }
            }
        })
        .collect();
    entries.sort_by_key(|e| e.id);
    Ok(FeatureCache {
        fingerprint: fingerprint(manifest, provider, params)?,
        backbone: provider.name().to_string(),
        layout,
        entries,
    })
}

/// Returns the cache at `path` when its fingerprint matches; otherwise
/// extracts, saves atomically and returns the fresh cache.
pub fn extract_and_cache(
    manifest: &DatasetManifest,
    provider: &dyn FeatureProvider,
    params: &ExtractionParams,
    path: &Path,
) -> Result<FeatureCache> {
    let expected = fingerprint(manifest, provider, params)?;
    if path.exists() {
        match FeatureCache::load_checked(path, &expected) {
            Ok(c) => {
                log::info!("feature cache hit: {}", path.display());
                return Ok(c);
            }
            Err(e) => log::info!("rebuilding {}: {e}", path.display()),
        }
    }
    let cache = extract_all_records(manifest, provider, params)?;
    cache.save(path)?;
    Ok(cache)
}
