//! JSON bundle manifests.
//!
//! ```json
//! { "d_rep": 16, "beta": 0.5,
//!   "tasks": [ { "id": "task0", "z_ind": "t0_z_ind.rmat", "z_mtl": "t0_z_mtl.rmat",
//!                "head": "t0_head.rmat", "labels": "t0_labels.rmat", "expert_acc": 0.97 } ] }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Heads are
//! `classes × d_rep` matrices of centroids; labels are `1 × N` matrices of
//! integral class indices.

use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::matrix_file::{read_matrix, write_matrix};
use crate::bundle::{Bundle, TaskData};
use crate::error::{Error, Result};
use crate::synthetic::Head;
use crate::types::RepMatrix;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub d_rep: usize,
    pub beta: f64,
    pub tasks: Vec<ManifestTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestTask {
    pub id: String,
    pub z_ind: PathBuf,
    pub z_mtl: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_acc: Option<f64>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display(), e.to_string()))
}

/// Loads a manifest and every matrix it references.
pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<Bundle> {
    let manifest_path = manifest_path.as_ref();
    let manifest = read_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let tasks = manifest
        .tasks
        .iter()
        .map(|t| load_task(root, t).map_err(|e| e.for_task(&t.id)))
        .collect::<Result<Vec<_>>>()?;
    let bundle = Bundle::new(manifest.beta, tasks)?;
    if bundle.d_rep != manifest.d_rep {
        return Err(Error::DimMismatch(format!(
            "manifest declares d_rep {}, matrices have {}",
            manifest.d_rep, bundle.d_rep
        )));
    }
    if !(manifest.beta.is_finite() && manifest.beta >= 0.0) {
        return Err(Error::InvalidInput(format!("manifest beta {} must be nonnegative", manifest.beta)));
    }
    Ok(bundle)
}

fn load_task(root: &Path, t: &ManifestTask) -> Result<TaskData> {
    let z_ind = RepMatrix::new(read_matrix(root.join(&t.z_ind))?)?;
    let z_mtl = RepMatrix::new(read_matrix(root.join(&t.z_mtl))?)?;
    let head = t
        .head
        .as_ref()
        .map(|p| Head::new(t.id.clone(), read_matrix(root.join(p))?))
        .transpose()?;
    let labels = t.labels.as_ref().map(|p| read_labels(&root.join(p))).transpose()?;
    let mut task = TaskData::new(t.id.clone(), z_ind, z_mtl);
    task.head = head;
    task.labels = labels;
    task.expert_acc = t.expert_acc;
    Ok(task)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let m = read_matrix(path)?;
    if m.nrows() != 1 {
        return Err(Error::format(path.display(), format!("labels must be 1xN, got {}x{}", m.nrows(), m.ncols())));
    }
    (0..m.ncols())
        .map(|j| {
            let v = m[(0, j)];
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::format(path.display(), format!("label {v} at column {j} is not a class index")))
            }
        })
        .collect()
}

/// Writes `bundle` as `manifest.json` plus one file per matrix under `dir`.
pub fn save_bundle(bundle: &Bundle, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(bundle.len());
    for (i, task) in bundle.tasks.iter().enumerate() {
        let name = |kind: &str| PathBuf::from(format!("t{i}_{kind}.rmat"));
        let mut entry = ManifestTask {
            id: task.id.clone(),
            z_ind: name("z_ind"),
            z_mtl: name("z_mtl"),
            head: None,
            labels: None,
            expert_acc: task.expert_acc,
        };
        write_matrix(dir.join(&entry.z_ind), task.z_ind.as_mat())?;
        write_matrix(dir.join(&entry.z_mtl), task.z_mtl.as_mat())?;
        if let Some(head) = &task.head {
            let p = name("head");
            write_matrix(dir.join(&p), head.centroids())?;
            entry.head = Some(p);
        }
        if let Some(labels) = &task.labels {
            let p = name("labels");
            let m = Mat::from_fn(1, labels.len(), |_, j| labels[j] as f64);
            write_matrix(dir.join(&p), m.as_ref())?;
            entry.labels = Some(p);
        }
        entries.push(entry);
    }
    let manifest = Manifest {
        d_rep: bundle.d_rep,
        beta: bundle.beta,
        tasks: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
