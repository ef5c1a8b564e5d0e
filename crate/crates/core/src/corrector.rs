//! Regularized linear correction and preference-driven assembly.
//!
//! Offline, each task `t` gets a single-task corrector
//!
//! ```text
//! Ŵ_t = (S_t + β W_t^orth) C_t⁻¹,   S_t = Z_ind Z_mtlᵀ,   C_t = Z_mtl Z_mtlᵀ + β I
//! ```
//!
//! which minimizes `‖W Z_mtl − Z_ind‖²_F + β ‖W − W_t^orth‖²_F`. Online, a
//! preference `p` is turned into the minimizer of `Σ_t p_t L_t(W)`:
//!
//! ```text
//! W_p = (Σ_t p_t Ŵ_t C_t) (Σ_t p_t C_t)⁻¹
//! ```
//!
//! Every inverse is realized as a Cholesky solve.

use std::collections::HashSet;

use faer::Mat;
use rayon::prelude::*;

use crate::bundle::TaskData;
use crate::error::{Error, Result};
use crate::linalg;
use crate::procrustes;
use crate::types::{Config, Preference, RepMatrix, SquareMap};

/// Per-task artifacts of the offline stage.
#[derive(Debug, Clone)]
pub struct TaskComponents {
    w_hat: SquareMap,
    c: SquareMap,
    w_orth: SquareMap,
    beta: f64,
    /// `Ŵ_t · C_t`, preference independent, so it is formed once.
    w_hat_c: Mat<f64>,
}

impl TaskComponents {
    /// Reassembles components, e.g. after loading them from disk.
    pub fn from_parts(w_hat: SquareMap, c: SquareMap, w_orth: SquareMap, beta: f64) -> Result<Self> {
        let d = w_hat.dim();
        if c.dim() != d || w_orth.dim() != d {
            return Err(Error::DimMismatch(format!(
                "component dimensions differ: w_hat {d}, c {}, w_orth {}",
                c.dim(),
                w_orth.dim()
            )));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidInput(format!("beta must be nonnegative, got {beta}")));
        }
        let scale = linalg::max_abs(c.as_mat()).max(f64::MIN_POSITIVE);
        for j in 0..d {
            for i in (j + 1)..d {
                if (c.as_mat()[(i, j)] - c.as_mat()[(j, i)]).abs() > linalg::SYMMETRY_TOL * scale {
                    return Err(Error::InvalidInput(format!("C is not symmetric at ({i}, {j})")));
                }
            }
        }
        let w_hat_c = linalg::matmul(w_hat.as_mat(), c.as_mat());
        Ok(Self {
            w_hat,
            c,
            w_orth,
            beta,
            w_hat_c,
        })
    }

    pub fn w_hat(&self) -> &SquareMap {
        &self.w_hat
    }

    pub fn c(&self) -> &SquareMap {
        &self.c
    }

    pub fn w_orth(&self) -> &SquareMap {
        &self.w_orth
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn d_rep(&self) -> usize {
        self.w_hat.dim()
    }
}

/// Components for an ordered list of tasks sharing `d_rep` and `beta`.
#[derive(Debug, Clone)]
pub struct ComponentSet {
    tasks: Vec<(String, TaskComponents)>,
    d_rep: usize,
    beta: f64,
}

impl ComponentSet {
    pub fn new(tasks: Vec<(String, TaskComponents)>) -> Result<Self> {
        let (_, first) = tasks.first().ok_or(Error::EmptyBundle)?;
        let (d_rep, beta) = (first.d_rep(), first.beta());
        let mut ids = HashSet::new();
        for (id, comp) in &tasks {
            if !ids.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate task id `{id}`")));
            }
            if comp.d_rep() != d_rep {
                return Err(Error::DimMismatch(format!(
                    "task `{id}` has dimension {}, expected {d_rep}",
                    comp.d_rep()
                )));
            }
            if comp.beta().to_bits() != beta.to_bits() {
                return Err(Error::InvalidInput(format!(
                    "task `{id}` was computed with beta {}, expected {beta}",
                    comp.beta()
                )));
            }
        }
        Ok(Self { tasks, d_rep, beta })
    }

    pub fn tasks(&self) -> &[(String, TaskComponents)] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn d_rep(&self) -> usize {
        self.d_rep
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().map(|(id, _)| id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&TaskComponents> {
        self.tasks.iter().find(|(t, _)| t == id).map(|(_, c)| c)
    }

    fn check_preference(&self, p: &Preference) -> Result<()> {
        if p.len() != self.len() {
            return Err(Error::DimMismatch(format!(
                "preference has {} weights for {} tasks",
                p.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Converts a relative regularization strength into absolute units:
/// `beta_rel · mean_t trace(Z_mtl,t Z_mtl,tᵀ) / d_rep`.
pub fn relative_beta(beta_rel: f64, tasks: &[TaskData]) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyBundle);
    }
    if !beta_rel.is_finite() || beta_rel < 0.0 {
        return Err(Error::InvalidInput(format!("relative beta must be nonnegative, got {beta_rel}")));
    }
    let mean_energy = tasks
        .iter()
        .map(|t| {
            let n = linalg::frobenius(t.z_mtl.as_mat());
            n * n / t.z_mtl.d_rep() as f64
        })
        .sum::<f64>()
        / tasks.len() as f64;
    Ok(beta_rel * mean_energy)
}

/// Closed-form regularized corrector for a single task.
pub fn single_task_corrector(z_ind: &RepMatrix, z_mtl: &RepMatrix, cfg: Config) -> Result<TaskComponents> {
    procrustes::check_pair(z_ind, z_mtl)?;
    let beta = cfg.beta;
    let d = z_mtl.d_rep();

    let cross = linalg::matmul_nt(z_ind.as_mat(), z_mtl.as_mat());
    let w_orth = procrustes::procrustes_from_cross_covariance(&cross)?;

    let mut c = linalg::gram(z_mtl.as_mat());
    let mut rhs = cross;
    if beta > 0.0 {
        for i in 0..d {
            c[(i, i)] += beta;
        }
        linalg::axpy(&mut rhs, beta, w_orth.as_mat());
    }
    let w_hat = linalg::solve_spd(c.as_ref(), rhs.as_ref())?;

    TaskComponents::from_parts(SquareMap::new(w_hat)?, SquareMap::new(c)?, w_orth, beta)
}

/// Runs [`single_task_corrector`] for every task, in parallel on the
/// current rayon pool. Task order is preserved.
pub fn precompute_components(tasks: &[TaskData], cfg: Config) -> Result<ComponentSet> {
    check_bundle(tasks)?;
    let computed: Vec<Result<(String, TaskComponents)>> = tasks
        .par_iter()
        .map(|t| compute_one(t, cfg))
        .collect();
    ComponentSet::new(computed.into_iter().collect::<Result<_>>()?)
}

/// Same as [`precompute_components`] on the calling thread only.
pub fn precompute_components_sequential(tasks: &[TaskData], cfg: Config) -> Result<ComponentSet> {
    check_bundle(tasks)?;
    ComponentSet::new(tasks.iter().map(|t| compute_one(t, cfg)).collect::<Result<_>>()?)
}

fn compute_one(task: &TaskData, cfg: Config) -> Result<(String, TaskComponents)> {
    single_task_corrector(&task.z_ind, &task.z_mtl, cfg)
        .map(|c| (task.id.clone(), c))
        .map_err(|e| e.for_task(&task.id))
}

fn check_bundle(tasks: &[TaskData]) -> Result<()> {
    let first = tasks.first().ok_or(Error::EmptyBundle)?;
    for t in tasks {
        if t.z_mtl.d_rep() != first.z_mtl.d_rep() {
            return Err(Error::DimMismatch(format!(
                "task `{}` has dimension {}, expected {}",
                t.id,
                t.z_mtl.d_rep(),
                first.z_mtl.d_rep()
            ))
            .for_task(&t.id));
        }
    }
    Ok(())
}

/// Pareto-optimal corrector for preference `p`.
///
/// Tasks with zero weight are skipped, and a preference with a single
/// nonzero weight returns that task's `Ŵ_t` unchanged. With `beta > 0` the aggregate is
/// always positive definite; with `beta == 0` a singular aggregate is
/// reported as [`Error::SingularSystem`].
pub fn assemble_pareto(set: &ComponentSet, p: &Preference) -> Result<SquareMap> {
    set.check_preference(p)?;
    let mut active = p.weights().iter().enumerate().filter(|(_, &w)| w != 0.0);
    if let (Some((t, _)), None) = (active.next(), active.next()) {
        // a single term: (w Ŵ C)(w C)^{-1} is Ŵ itself
        return Ok(set.tasks()[t].1.w_hat.clone());
    }
    let d = set.d_rep();
    let mut numerator = Mat::<f64>::zeros(d, d);
    let mut aggregate = Mat::<f64>::zeros(d, d);
    for ((_, comp), &w) in set.tasks().iter().zip(p.weights()) {
        if w == 0.0 {
            continue;
        }
        linalg::axpy(&mut numerator, w, comp.w_hat_c.as_ref());
        linalg::axpy(&mut aggregate, w, comp.c.as_mat());
    }
    SquareMap::new(linalg::solve_spd(aggregate.as_ref(), numerator.as_ref())?)
}

/// Preference-weighted average of the single-task correctors, `Σ_t p_t Ŵ_t`.
pub fn assemble_naive(set: &ComponentSet, p: &Preference) -> Result<SquareMap> {
    set.check_preference(p)?;
    let d = set.d_rep();
    let mut acc = Mat::<f64>::zeros(d, d);
    for ((_, comp), &w) in set.tasks().iter().zip(p.weights()) {
        if w != 0.0 {
            linalg::axpy(&mut acc, w, comp.w_hat.as_mat());
        }
    }
    SquareMap::new(acc)
}

/// `w · z`: corrects every column of `z`.
pub fn apply_correction(w: &SquareMap, z: &RepMatrix) -> Result<RepMatrix> {
    if w.dim() != z.d_rep() {
        return Err(Error::DimMismatch(format!(
            "corrector is {0}x{0}, representations have dimension {1}",
            w.dim(),
            z.d_rep()
        )));
    }
    RepMatrix::new(linalg::matmul(w.as_mat(), z.as_mat()))
}
