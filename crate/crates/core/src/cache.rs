//! Content-addressed on-disk store for dynamic-programming results.
//!
//! Keys are SHA-256 digests of a format version, a tag and the JSON form of
//! every input parameter. An entry file holds
//!
//! ```text
//! b"VLSFC" | version u32 | header length u32 | JSON header
//!          | value count u64 | values as f64 | SHA-256 of all preceding bytes
//! ```
//!
//! with little-endian integers. Floating-point payload travels in the value
//! array so it round-trips bit for bit. Writes go through a temporary file
//! in the same directory followed by a rename. An entry that fails to parse
//! or verify is deleted and reported as missing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::walks::StoppingLaw;
use crate::Result;

const MAGIC: &[u8; 5] = b"VLSFC";
/// Bumped whenever the entry layout or the meaning of a cached quantity changes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub header: serde_json::Value,
    pub values: Vec<f64>,
}

impl Cache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key<T: Serialize + ?Sized>(tag: &str, parts: &T) -> String {
        let mut h = Sha256::new();
        h.update(FORMAT_VERSION.to_le_bytes());
        h.update(tag.as_bytes());
        h.update([0u8]);
        h.update(serde_json::to_vec(parts).expect("cache key parts serialise"));
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    pub fn get(&self, key: &str) -> Option<Entry> {
        let path = self.path(key);
        let bytes = fs::read(&path).ok()?;
        match decode(&bytes) {
            Some(e) => Some(e),
            None => {
                let _ = fs::remove_file(&path);
                None
            }
        }
    }

    pub fn put(&self, key: &str, entry: &Entry) -> Result<()> {
        let bytes = encode(entry);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path(key)).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn get_stopping_law(&self, key: &str) -> Option<StoppingLaw> {
        let e = self.get(key)?;
        if e.header.get("kind")?.as_str()? != "stopping_law" || e.values.len() < 6 {
            return None;
        }
        let horizon = e.header.get("horizon")?.as_u64()? as usize;
        if e.values.len() != 5 + horizon + 1 {
            return None;
        }
        let v = &e.values;
        Some(StoppingLaw {
            gamma: v[0],
            tail_mass_bound: v[1],
            pruned_mass: v[2],
            overshoot_tail: v[3],
            log_scale: v[4],
            horizon,
            cdf: v[5..].to_vec(),
        })
    }

    pub fn put_stopping_law(&self, key: &str, law: &StoppingLaw) -> Result<()> {
        let mut values = vec![law.gamma, law.tail_mass_bound, law.pruned_mass, law.overshoot_tail, law.log_scale];
        values.extend_from_slice(&law.cdf);
        let header = serde_json::json!({"kind": "stopping_law", "horizon": law.horizon});
        self.put(key, &Entry { header, values })
    }
}

/// Looks the key up in an optional cache and falls back to `compute`,
/// storing the fresh value. Cache write failures are ignored.
pub(crate) fn stopping_law_or(
    cache: Option<&Cache>,
    key: impl FnOnce() -> String,
    compute: impl FnOnce() -> Result<StoppingLaw>,
) -> Result<StoppingLaw> {
    let Some(c) = cache else { return compute() };
    let key = key();
    if let Some(law) = c.get_stopping_law(&key) {
        return Ok(law);
    }
    let law = compute()?;
    let _ = c.put_stopping_law(&key, &law);
    Ok(law)
}

/// Same as [`stopping_law_or`] for a bare value array.
pub(crate) fn values_or(
    cache: Option<&Cache>,
    key: impl FnOnce() -> String,
    compute: impl FnOnce() -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let Some(c) = cache else { return compute() };
    let key = key();
    if let Some(e) = c.get(&key) {
        if e.header.get("kind").and_then(|k| k.as_str()) == Some("values") {
            return Ok(e.values);
        }
    }
    let values = compute()?;
    let _ = c.put(&key, &Entry { header: serde_json::json!({"kind": "values"}), values: values.clone() });
    Ok(values)
}

fn encode(e: &Entry) -> Vec<u8> {
    let header = serde_json::to_vec(&e.header).expect("header serialises");
    let mut out = Vec::with_capacity(64 + header.len() + 8 * e.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(e.values.len() as u64).to_le_bytes());
    for v in &e.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn decode(bytes: &[u8]) -> Option<Entry> {
    if bytes.len() < MAGIC.len() + 16 + 32 {
        return None;
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest || &body[..5] != MAGIC {
        return None;
    }
    let mut at = 5;
    let mut take = |n: usize| -> Option<&[u8]> {
        let s = body.get(at..at + n)?;
        at += n;
        Some(s)
    };
    let version = u32::from_le_bytes(take(4)?.try_into().ok()?);
    if version != FORMAT_VERSION {
        return None;
    }
    let hlen = u32::from_le_bytes(take(4)?.try_into().ok()?) as usize;
    let header: serde_json::Value = serde_json::from_slice(take(hlen)?).ok()?;
    let count = u64::from_le_bytes(take(8)?.try_into().ok()?) as usize;
    let raw = take(count.checked_mul(8)?)?;
    if at != body.len() {
        return None;
    }
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Some(Entry { header, values })
}
