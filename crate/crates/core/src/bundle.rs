//! In-memory task bundle: calibration representations plus optional
//! evaluation data for each task.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::synthetic::Head;
use crate::types::RepMatrix;

/// Calibration data for one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub id: String,
    /// Representations produced by the task's own model.
    pub z_ind: RepMatrix,
    /// Representations produced by the merged model on the same samples.
    pub z_mtl: RepMatrix,
    pub head: Option<Head>,
    pub labels: Option<Vec<usize>>,
    pub expert_acc: Option<f64>,
}

impl TaskData {
    pub fn new(id: impl Into<String>, z_ind: RepMatrix, z_mtl: RepMatrix) -> Self {
        Self {
            id: id.into(),
            z_ind,
            z_mtl,
            head: None,
            labels: None,
            expert_acc: None,
        }
    }

    pub fn with_evaluation(mut self, head: Head, labels: Vec<usize>, expert_acc: Option<f64>) -> Self {
        self.head = Some(head);
        self.labels = Some(labels);
        self.expert_acc = expert_acc;
        self
    }

    pub fn n_calib(&self) -> usize {
        self.z_mtl.n_samples()
    }
}

/// An ordered collection of tasks sharing one representation dimension.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub d_rep: usize,
    /// Default regularization strength carried by the manifest.
    pub beta: f64,
    pub tasks: Vec<TaskData>,
}

impl Bundle {
    pub fn new(beta: f64, tasks: Vec<TaskData>) -> Result<Self> {
        let first = tasks.first().ok_or(Error::EmptyBundle)?;
        let d_rep = first.z_mtl.d_rep();
        let mut seen = HashSet::new();
        for task in &tasks {
            if !seen.insert(task.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate task id `{}`", task.id)));
            }
            validate_task(task, d_rep).map_err(|e| e.for_task(&task.id))?;
        }
        Ok(Self { d_rep, beta, tasks })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task_ids(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.id.clone()).collect()
    }

    /// Whether every task carries a head and labels.
    pub fn has_evaluation_data(&self) -> bool {
        self.tasks.iter().all(|t| t.head.is_some() && t.labels.is_some())
    }
}

fn validate_task(task: &TaskData, d_rep: usize) -> Result<()> {
    crate::procrustes::check_pair(&task.z_ind, &task.z_mtl)?;
    if task.z_mtl.d_rep() != d_rep {
        return Err(Error::DimMismatch(format!(
            "representation dimension {} differs from bundle dimension {d_rep}",
            task.z_mtl.d_rep()
        )));
    }
    if let Some(head) = &task.head {
        if head.d_rep() != d_rep {
            return Err(Error::DimMismatch(format!(
                "head has dimension {}, bundle has {d_rep}",
                head.d_rep()
            )));
        }
    }
    if let Some(labels) = &task.labels {
        if labels.len() != task.z_mtl.n_samples() {
            return Err(Error::DimMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                task.z_mtl.n_samples()
            )));
        }
        if let Some(head) = &task.head {
            if let Some(bad) = labels.iter().find(|&&l| l >= head.num_classes()) {
                return Err(Error::InvalidInput(format!(
                    "label {bad} out of range for {} classes",
                    head.num_classes()
                )));
            }
        }
    }
    if let Some(acc) = task.expert_acc {
        if !(acc.is_finite() && acc > 0.0) {
            return Err(Error::InvalidExpert(format!("expert accuracy {acc} must be positive")));
        }
    }
    Ok(())
}
