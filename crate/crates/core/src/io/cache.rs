//! On-disk component cache.
//!
//! ```text
//! DIR/cache.json
//! DIR/task_000/{w_hat,c,w_orth}.rmat
//! DIR/task_001/...
//! ```
//!
//! `cache.json` records `beta`, `d_rep`, the task order, the SHA-256 of every
//! matrix file, and a hash of the calibration matrices the components were
//! computed from.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::matrix_file::{decode_matrix, encode_matrix};
use crate::bundle::TaskData;
use crate::corrector::{ComponentSet, TaskComponents};
use crate::error::{Error, Result};
use crate::types::SquareMap;

pub const CACHE_FILE: &str = "cache.json";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheIndex {
    pub version: u32,
    pub beta: f64,
    pub d_rep: usize,
    pub source_hash: String,
    pub tasks: Vec<CacheEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheEntry {
    pub id: String,
    pub dir: PathBuf,
    pub w_hat: String,
    pub c: String,
    pub w_orth: String,
}

/// SHA-256 over task ids and the `RMAT` encoding of both calibration
/// matrices, in task order.
pub fn source_hash(tasks: &[TaskData]) -> Result<String> {
    let mut h = Sha256::new();
    for task in tasks {
        h.update((task.id.len() as u64).to_le_bytes());
        h.update(task.id.as_bytes());
        h.update(encode_matrix(task.z_ind.as_mat())?);
        h.update(encode_matrix(task.z_mtl.as_mat())?);
    }
    Ok(hex::encode(h.finalize()))
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every task's components plus the index. `source_hash` should come
/// from [`source_hash`] on the tasks the set was computed from.
pub fn save_components(set: &ComponentSet, dir: impl AsRef<Path>, source_hash: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(set.len());
    for (i, (id, comp)) in set.tasks().iter().enumerate() {
        let sub = PathBuf::from(format!("task_{i:03}"));
        let task_dir = dir.join(&sub);
        fs::create_dir_all(&task_dir).map_err(|e| Error::io(&task_dir, e))?;
        let mut hashes = Vec::with_capacity(3);
        for (name, m) in [("w_hat", comp.w_hat()), ("c", comp.c()), ("w_orth", comp.w_orth())] {
            let bytes = encode_matrix(m.as_mat())?;
            hashes.push(digest(&bytes));
            let path = task_dir.join(format!("{name}.rmat"));
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let [w_hat, c, w_orth]: [String; 3] = hashes.try_into().expect("three files");
        entries.push(CacheEntry {
            id: id.clone(),
            dir: sub,
            w_hat,
            c,
            w_orth,
        });
    }
    let index = CacheIndex {
        version: CACHE_VERSION,
        beta: set.beta(),
        d_rep: set.d_rep(),
        source_hash: source_hash.to_string(),
        tasks: entries,
    };
    let path = dir.join(CACHE_FILE);
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_cache_index(dir: impl AsRef<Path>) -> Result<CacheIndex> {
    let path = dir.as_ref().join(CACHE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: CacheIndex = serde_json::from_str(&text).map_err(|e| Error::format(path.display(), e.to_string()))?;
    if index.version != CACHE_VERSION {
        return Err(Error::format(path.display(), format!("unsupported cache version {}", index.version)));
    }
    Ok(index)
}

/// Loads a cache, verifying every file hash. With `expected_source`, also
/// checks that the cache was computed from matching calibration data.
pub fn load_components(dir: impl AsRef<Path>, expected_source: Option<&str>) -> Result<ComponentSet> {
    let dir = dir.as_ref();
    let index = read_cache_index(dir)?;
    if let Some(expected) = expected_source {
        if expected != index.source_hash {
            return Err(Error::StaleCache(format!(
                "cache at {} was computed from different calibration data",
                dir.display()
            )));
        }
    }
    let mut tasks = Vec::with_capacity(index.tasks.len());
    for entry in &index.tasks {
        let load = |name: &str, hash: &str| -> Result<SquareMap> {
            let path = dir.join(&entry.dir).join(format!("{name}.rmat"));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if digest(&bytes) != hash {
                return Err(Error::StaleCache(format!("{} does not match its recorded hash", path.display())));
            }
            let m = decode_matrix(&bytes, &path.display().to_string())?;
            if m.nrows() != index.d_rep || m.ncols() != index.d_rep {
                return Err(Error::DimMismatch(format!(
                    "{} is {}x{}, cache declares d_rep {}",
                    path.display(),
                    m.nrows(),
                    m.ncols(),
                    index.d_rep
                )));
            }
            SquareMap::new(m)
        };
        let comp = TaskComponents::from_parts(
            load("w_hat", &entry.w_hat)?,
            load("c", &entry.c)?,
            load("w_orth", &entry.w_orth)?,
            index.beta,
        )
        .map_err(|e| e.for_task(&entry.id))?;
        tasks.push((entry.id.clone(), comp));
    }
    ComponentSet::new(tasks)
}
