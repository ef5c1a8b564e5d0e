//! Preference → corrector → scored front, shared by the CLI and the service.

use crate::bundle::Bundle;
use crate::corrector::{self, ComponentSet};
use crate::error::{Error, Result};
use crate::metrics::{self, Front, FrontPoint, DEFAULT_SHORTFALL_FLOOR};
use crate::synthetic::evaluate_accuracy;
use crate::types::{Preference, SquareMap};

#[derive(Debug, Clone, PartialEq)]
pub struct TaskScore {
    pub id: String,
    pub acc: f64,
    pub normalized_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub preference: Preference,
    pub per_task: Vec<TaskScore>,
    pub uniformity: f64,
}

impl Evaluation {
    pub fn accuracies(&self) -> Vec<f64> {
        self.per_task.iter().map(|s| s.acc).collect()
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.per_task.iter().map(|s| s.normalized_acc).collect()
    }

    pub fn to_front_point(&self) -> Result<FrontPoint> {
        FrontPoint::new(self.normalized(), self.preference.clone(), Some(self.accuracies()))
    }
}

/// Checks that a component set was computed for this bundle's tasks, in order.
pub fn check_compatible(bundle: &Bundle, set: &ComponentSet) -> Result<()> {
    if bundle.d_rep != set.d_rep() {
        return Err(Error::DimMismatch(format!(
            "bundle has dimension {}, components have {}",
            bundle.d_rep,
            set.d_rep()
        )));
    }
    let ids = bundle.task_ids();
    if !ids.iter().map(String::as_str).eq(set.task_ids()) {
        return Err(Error::InvalidInput(format!(
            "component tasks do not match bundle tasks {ids:?}"
        )));
    }
    Ok(())
}

/// Expert accuracy per task: the manifest value, or the head's accuracy on
/// the individual representations when absent.
pub fn expert_accuracies(bundle: &Bundle) -> Result<Vec<f64>> {
    bundle
        .tasks
        .iter()
        .map(|task| match task.expert_acc {
            Some(acc) => Ok(acc),
            None => {
                let (head, labels) = evaluation_data(task)?;
                evaluate_accuracy(&task.z_ind, head, labels)
            }
        })
        .collect()
}

fn evaluation_data(task: &crate::bundle::TaskData) -> Result<(&crate::synthetic::Head, &[usize])> {
    match (&task.head, &task.labels) {
        (Some(h), Some(l)) => Ok((h, l.as_slice())),
        _ => Err(Error::MissingEvaluationData(format!("task `{}` has no head or labels", task.id))),
    }
}

/// Scores `w` on every task's calibration representations.
pub fn evaluate_corrector(bundle: &Bundle, experts: &[f64], w: &SquareMap, p: &Preference) -> Result<Evaluation> {
    if p.len() != bundle.len() || experts.len() != bundle.len() {
        return Err(Error::DimMismatch(format!(
            "preference over {} tasks for a bundle of {}",
            p.len(),
            bundle.len()
        )));
    }
    let mut raw = Vec::with_capacity(bundle.len());
    for task in &bundle.tasks {
        let (head, labels) = evaluation_data(task)?;
        let corrected = corrector::apply_correction(w, &task.z_mtl)?;
        raw.push(evaluate_accuracy(&corrected, head, labels)?);
    }
    let normalized = metrics::normalized_accuracy(&raw, experts)?;
    let uniformity = metrics::uniformity(&normalized, p, DEFAULT_SHORTFALL_FLOOR)?;
    let per_task = bundle
        .tasks
        .iter()
        .zip(raw.iter().zip(&normalized))
        .map(|(task, (&acc, &normalized_acc))| TaskScore {
            id: task.id.clone(),
            acc,
            normalized_acc,
        })
        .collect();
    Ok(Evaluation {
        preference: p.clone(),
        per_task,
        uniformity,
    })
}

/// Aggregation rule used to build a corrector from the cached components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Pareto,
    Naive,
}

pub fn assemble(set: &ComponentSet, p: &Preference, how: Aggregation) -> Result<SquareMap> {
    match how {
        Aggregation::Pareto => corrector::assemble_pareto(set, p),
        Aggregation::Naive => corrector::assemble_naive(set, p),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub evaluations: Vec<Evaluation>,
    pub front: Front,
    pub hypervolume: f64,
    pub mean_uniformity: f64,
}

/// Grid of preferences: the whole simplex, or `mass` spread over `subset`
/// with the rest split evenly.
pub fn sweep_preferences(tasks: usize, resolution: usize, subset: Option<(&[usize], f64)>) -> Result<Vec<Preference>> {
    match subset {
        None => metrics::simplex_grid(tasks, resolution),
        Some((idx, mass)) => metrics::subset_grid(tasks, idx, mass, resolution),
    }
}

/// Evaluates every preference and scores the resulting front.
pub fn sweep(bundle: &Bundle, set: &ComponentSet, prefs: &[Preference], how: Aggregation) -> Result<SweepResult> {
    check_compatible(bundle, set)?;
    let experts = expert_accuracies(bundle)?;
    let evaluations = prefs
        .iter()
        .map(|p| evaluate_corrector(bundle, &experts, &assemble(set, p, how)?, p))
        .collect::<Result<Vec<_>>>()?;
    let points = evaluations
        .iter()
        .map(Evaluation::to_front_point)
        .collect::<Result<Vec<_>>>()?;
    let front = Front::with_origin(bundle.len(), points)?;
    let hypervolume = metrics::hypervolume(&front)?;
    let mean_uniformity = if evaluations.is_empty() {
        0.0
    } else {
        evaluations.iter().map(|e| e.uniformity).sum::<f64>() / evaluations.len() as f64
    };
    Ok(SweepResult {
        evaluations,
        front,
        hypervolume,
        mean_uniformity,
    })
}
