//! Brute-force verification of the closed-form correctors.
//!
//! Nothing here calls into the corrector module. Losses are evaluated from
//! raw residuals, the minimizer is plain gradient descent, and the direct
//! aggregate formula is built straight from the calibration data.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bundle::TaskData;
use crate::error::{Error, Result};
use crate::linalg;
use crate::procrustes;
use crate::types::{Preference, RepMatrix, SquareMap};

/// `‖W Z_mtl − Z_ind‖²_F + β ‖W − W_orth‖²_F`.
pub fn task_loss(
    w: &SquareMap,
    z_ind: &RepMatrix,
    z_mtl: &RepMatrix,
    w_orth: &SquareMap,
    beta: f64,
) -> Result<f64> {
    procrustes::check_pair(z_ind, z_mtl)?;
    if w.dim() != z_mtl.d_rep() || w_orth.dim() != w.dim() {
        return Err(Error::DimMismatch(format!(
            "map of dimension {} against representations of dimension {}",
            w.dim(),
            z_mtl.d_rep()
        )));
    }
    let wz = linalg::matmul(w.as_mat(), z_mtl.as_mat());
    let data = linalg::frobenius_distance(wz.as_ref(), z_ind.as_mat());
    let mut loss = data * data;
    if beta != 0.0 {
        let reg = w.distance(w_orth);
        loss += beta * reg * reg;
    }
    Ok(loss)
}

/// `Σ_t p_t L_t(W)`.
pub fn scalarized_loss(w: &SquareMap, tasks: &[TaskData], p: &Preference, beta: f64) -> Result<f64> {
    Objective::new(tasks, p, beta)?.loss(w)
}

/// Gradient of the scalarized loss:
/// `Σ_t p_t [2 W (Z_mtl Z_mtlᵀ + βI) − 2 (Z_ind Z_mtlᵀ + β W_orth)]`.
pub fn analytic_gradient(w: &SquareMap, tasks: &[TaskData], p: &Preference, beta: f64) -> Result<SquareMap> {
    Objective::new(tasks, p, beta)?.gradient(w)
}

struct OracleTask<'a> {
    weight: f64,
    z_ind: &'a RepMatrix,
    z_mtl: &'a RepMatrix,
    w_orth: SquareMap,
    gram: Mat<f64>,
    cross: Mat<f64>,
}

/// The scalarized objective for one preference, with per-task Procrustes
/// priors and second moments computed once.
pub struct Objective<'a> {
    tasks: Vec<OracleTask<'a>>,
    beta: f64,
    d_rep: usize,
}

impl<'a> Objective<'a> {
    pub fn new(tasks: &'a [TaskData], p: &Preference, beta: f64) -> Result<Self> {
        let first = tasks.first().ok_or(Error::EmptyBundle)?;
        if p.len() != tasks.len() {
            return Err(Error::DimMismatch(format!(
                "preference has {} weights for {} tasks",
                p.len(),
                tasks.len()
            )));
        }
        let d_rep = first.z_mtl.d_rep();
        let mut out = Vec::with_capacity(tasks.len());
        for (task, &weight) in tasks.iter().zip(p.weights()) {
            procrustes::check_pair(&task.z_ind, &task.z_mtl)?;
            if task.z_mtl.d_rep() != d_rep {
                return Err(Error::DimMismatch(format!("task `{}` has a different dimension", task.id)));
            }
            out.push(OracleTask {
                weight,
                z_ind: &task.z_ind,
                z_mtl: &task.z_mtl,
                w_orth: procrustes::orthogonal_procrustes(&task.z_ind, &task.z_mtl)?,
                gram: linalg::gram(task.z_mtl.as_mat()),
                cross: linalg::matmul_nt(task.z_ind.as_mat(), task.z_mtl.as_mat()),
            });
        }
        Ok(Self {
            tasks: out,
            beta,
            d_rep,
        })
    }

    pub fn d_rep(&self) -> usize {
        self.d_rep
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Individual losses `L_t(W)` in task order, ignoring the preference.
    pub fn task_losses(&self, w: &SquareMap) -> Result<Vec<f64>> {
        self.tasks
            .iter()
            .map(|t| task_loss(w, t.z_ind, t.z_mtl, &t.w_orth, self.beta))
            .collect()
    }

    pub fn loss(&self, w: &SquareMap) -> Result<f64> {
        Ok(self
            .task_losses(w)?
            .iter()
            .zip(&self.tasks)
            .map(|(l, t)| t.weight * l)
            .sum())
    }

    pub fn gradient(&self, w: &SquareMap) -> Result<SquareMap> {
        if w.dim() != self.d_rep {
            return Err(Error::DimMismatch(format!(
                "map of dimension {} for objective of dimension {}",
                w.dim(),
                self.d_rep
            )));
        }
        let (a, b) = self.quadratic_form();
        Ok(SquareMap::new(gradient_from_form(w.as_mat(), &a, &b))?)
    }

    /// `(A, B)` with `A = Σ p_t (Z_mtl Z_mtlᵀ + βI)` and
    /// `B = Σ p_t (Z_ind Z_mtlᵀ + β W_orth)`, so that `∇ = 2(W A − B)`.
    fn quadratic_form(&self) -> (Mat<f64>, Mat<f64>) {
        let d = self.d_rep;
        let mut a = Mat::<f64>::zeros(d, d);
        let mut b = Mat::<f64>::zeros(d, d);
        for t in &self.tasks {
            if t.weight == 0.0 {
                continue;
            }
            linalg::axpy(&mut a, t.weight, t.gram.as_ref());
            linalg::axpy(&mut b, t.weight, t.cross.as_ref());
            linalg::axpy(&mut b, t.weight * self.beta, t.w_orth.as_mat());
            for i in 0..d {
                a[(i, i)] += t.weight * self.beta;
            }
        }
        (a, b)
    }
}

fn gradient_from_form(w: faer::MatRef<'_, f64>, a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let mut g = linalg::matmul(w, a.as_ref());
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            g[(i, j)] = 2.0 * (g[(i, j)] - b[(i, j)]);
        }
    }
    g
}

/// Central finite differences of the scalarized loss at the given entries.
pub fn finite_difference_gradient(
    objective: &Objective<'_>,
    w: &SquareMap,
    entries: &[(usize, usize)],
    step: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(entries.len());
    let mut probe = w.as_mat().to_owned();
    for &(i, j) in entries {
        let orig = probe[(i, j)];
        probe[(i, j)] = orig + step;
        let plus = objective.loss(&SquareMap::new(probe.clone())?)?;
        probe[(i, j)] = orig - step;
        let minus = objective.loss(&SquareMap::new(probe.clone())?)?;
        probe[(i, j)] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Picks `count` distinct-ish random entries of a `dim × dim` matrix.
pub fn sample_entries(dim: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.gen_range(0..dim), rng.gen_range(0..dim)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Stop once `‖∇‖_F ≤ tol`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub w_star: SquareMap,
    pub final_loss: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

impl OracleReport {
    /// `Err(NotConverged)` if the iteration budget ran out.
    pub fn check(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                grad_norm: self.grad_norm,
            })
        }
    }
}

const ARMIJO_C: f64 = 1e-4;

/// Gradient descent with Armijo backtracking from `W = I`.
///
/// The objective is a convex quadratic `tr(W A Wᵀ) − 2 tr(W Bᵀ) + const`,
/// so the sufficient-decrease test uses the exact change
/// `f(W − s g) − f(W) = −s ‖g‖² + s² tr(g A gᵀ)` instead of differencing two
/// large loss values.
pub fn minimize(tasks: &[TaskData], p: &Preference, beta: f64, opts: &MinimizeOptions) -> Result<OracleReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let objective = Objective::new(tasks, p, beta)?;
    let d = objective.d_rep();
    let (a, b) = objective.quadratic_form();

    let mut w = Mat::<f64>::identity(d, d);
    let mut step = 1.0 / linalg::trace(a.as_ref()).max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    let mut g = gradient_from_form(w.as_ref(), &a, &b);
    let mut grad_norm = g.norm_l2();

    while grad_norm > opts.tol && iterations < opts.max_iters {
        let g_sq = grad_norm * grad_norm;
        let curvature = {
            let ga = linalg::matmul(g.as_ref(), a.as_ref());
            let mut acc = 0.0;
            for j in 0..d {
                for i in 0..d {
                    acc += ga[(i, j)] * g[(i, j)];
                }
            }
            acc
        };
        step *= 2.0;
        loop {
            let change = -step * g_sq + step * step * curvature;
            if change <= -ARMIJO_C * step * g_sq {
                break;
            }
            step *= 0.5;
            if step < f64::MIN_POSITIVE {
                break;
            }
        }
        linalg::axpy(&mut w, -step, g.as_ref());
        g = gradient_from_form(w.as_ref(), &a, &b);
        grad_norm = g.norm_l2();
        iterations += 1;
    }

    let w_star = SquareMap::new(w)?;
    let final_loss = objective.loss(&w_star)?;
    Ok(OracleReport {
        w_star,
        final_loss,
        iterations,
        grad_norm,
        converged: grad_norm <= opts.tol,
    })
}

/// Builds `(Σ p_t (S_t + β W_orth,t)) (Σ p_t (Z_mtl Z_mtlᵀ + βI))⁻¹` directly
/// from the calibration data.
pub fn direct_pareto(tasks: &[TaskData], p: &Preference, beta: f64) -> Result<SquareMap> {
    let objective = Objective::new(tasks, p, beta)?;
    let (a, b) = objective.quadratic_form();
    SquareMap::new(linalg::solve_spd(a.as_ref(), b.as_ref())?)
}

/// A perturbation that improved every task loss at once.
#[derive(Debug, Clone)]
pub struct Domination {
    pub epsilon: f64,
    pub sample: usize,
    pub losses: Vec<f64>,
}

/// Samples `W + ε E` for random unit-Frobenius directions `E` and reports
/// the first one that lowers every task loss by more than `tol`.
pub fn find_dominating_perturbation(
    objective: &Objective<'_>,
    w: &SquareMap,
    samples: usize,
    epsilons: &[f64],
    tol: f64,
    seed: u64,
) -> Result<Option<Domination>> {
    let base = objective.task_losses(w)?;
    let d = w.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sample in 0..samples {
        let mut dir = Mat::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let norm = dir.norm_l2();
        for j in 0..d {
            for i in 0..d {
                dir[(i, j)] /= norm;
            }
        }
        for &epsilon in epsilons {
            let mut probe = w.as_mat().to_owned();
            linalg::axpy(&mut probe, epsilon, dir.as_ref());
            let losses = objective.task_losses(&SquareMap::new(probe)?)?;
            if losses.iter().zip(&base).all(|(l, b)| *l <= b - tol) {
                return Ok(Some(Domination {
                    epsilon,
                    sample,
                    losses,
                }));
            }
        }
    }
    Ok(None)
}
