//! Content-addressed result cache: `<key>.bin` blobs next to `<key>.json` manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use waveop2d::C64;

/// Bumped whenever the numerics behind a cached artifact change.
pub const VERSION_TAG: &str = concat!("waveop2d-", env!("CARGO_PKG_VERSION"), "/cache-1");

pub const DTYPE_C128: &str = "complex128-le";
pub const DTYPE_JSON: &str = "json-utf8";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub key: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    /// SHA-256 of the blob.
    pub checksum: String,
    pub version: String,
}

pub struct Cache {
    dir: PathBuf,
}

fn sha256(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Key over the version tag, an artifact kind and its inputs.
pub fn key(kind: &str, inputs: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(VERSION_TAG.as_bytes());
    h.update([0]);
    h.update(kind.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(inputs).expect("json value serializes"));
    format!("{:x}", h.finalize())
}

pub fn encode_c128(values: &[C64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * values.len());
    for z in values {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_c128(bytes: &[u8]) -> Result<Vec<C64>> {
    anyhow::ensure!(
        bytes.len() % 16 == 0,
        "blob length {} is not a multiple of 16",
        bytes.len()
    );
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect())
}

// write to a sibling temp file, then rename over the target
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "tmp-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating cache dir {}", dir.display()))?;
        Ok(Self { dir })
    }

    pub fn blob_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    pub fn manifest_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Verified bytes for `key`, or None on a miss. A blob that fails its checksum
    /// counts as a miss and is reported.
    pub fn get(&self, key: &str, dtype: &str) -> Option<Vec<u8>> {
        let manifest: Manifest = fs::read(self.manifest_path(key))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())?;
        if manifest.key != key || manifest.dtype != dtype || manifest.version != VERSION_TAG {
            warn!("cache manifest {key} does not match the request, recomputing");
            return None;
        }
        let bytes = fs::read(self.blob_path(key)).ok()?;
        if sha256(&bytes) != manifest.checksum {
            warn!("cache blob {key} fails its checksum, recomputing");
            return None;
        }
        Some(bytes)
    }

    pub fn put(&self, key: &str, dtype: &str, shape: &[usize], bytes: &[u8]) -> Result<()> {
        let manifest = Manifest {
            key: key.into(),
            dtype: dtype.into(),
            shape: shape.to_vec(),
            checksum: sha256(bytes),
            version: VERSION_TAG.into(),
        };
        // blob first: a manifest never points at a missing blob
        write_atomic(&self.blob_path(key), bytes)?;
        write_atomic(
            &self.manifest_path(key),
            &serde_json::to_vec_pretty(&manifest)?,
        )?;
        Ok(())
    }

    /// Returns the bytes and whether they came from the cache.
    pub fn get_or_compute(
        &self,
        key: &str,
        dtype: &str,
        shape: &[usize],
        producer: impl FnOnce() -> Result<Vec<u8>>,
    ) -> Result<(Vec<u8>, bool)> {
        if let Some(bytes) = self.get(key, dtype) {
            return Ok((bytes, true));
        }
        let bytes = producer()?;
        self.put(key, dtype, shape, &bytes)?;
        Ok((bytes, false))
    }

    pub fn complex(
        &self,
        key: &str,
        shape: &[usize],
        producer: impl FnOnce() -> Result<Vec<C64>>,
    ) -> Result<(Vec<C64>, bool)> {
        let (bytes, hit) =
            self.get_or_compute(key, DTYPE_C128, shape, || Ok(encode_c128(&producer()?)))?;
        let values = decode_c128(&bytes)?;
        let want: usize = shape.iter().product();
        anyhow::ensure!(
            values.len() == want,
            "cached blob {key} holds {} values, expected {want}",
            values.len()
        );
        Ok((values, hit))
    }

    pub fn get_json<T: serde::de::DeserializeOwned>(&self, key: &str) -> Option<T> {
        let bytes = self.get(key, DTYPE_JSON)?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("cached summary {key} does not parse ({e}), recomputing");
                None
            }
        }
    }

    pub fn put_json<T: Serialize>(&self, key: &str, value: &T) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(value)?;
        info!("caching {key}");
        self.put(key, DTYPE_JSON, &[bytes.len()], &bytes)
    }
}
