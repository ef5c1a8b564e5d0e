//! Toy model-merging simulator.
//!
//! Task models are linear feature extractors `θ_t = θ_0 + Δ_t`. Each task
//! draws Gaussian class clusters in input space whose means sit in the
//! directions `θ_0` barely sees, so a task only becomes separable once its
//! own task vector is added. Merging sums scaled task vectors; the merged
//! features are a linear distortion of each expert's features, which is the
//! setting the corrector is built for.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bundle::{Bundle, TaskData};
use crate::error::{Error, Result};
use crate::linalg;
use crate::types::RepMatrix;

/// Minimum individual accuracy each task model is tuned to reach.
pub const TARGET_ACCURACY: f64 = 0.95;
const MAX_RETRIES: usize = 10;
const MAX_SCALE_DOUBLINGS: usize = 40;
const BISECTION_STEPS: usize = 30;

/// A linear feature extractor `d_rep × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub theta: Mat<f64>,
    pub task_id: String,
}

impl ToyModel {
    pub fn new(task_id: impl Into<String>, theta: Mat<f64>) -> Result<Self> {
        if theta.nrows() == 0 || theta.ncols() == 0 {
            return Err(Error::InvalidInput("model has an empty weight matrix".into()));
        }
        linalg::ensure_finite(theta.as_ref(), "model weights")?;
        Ok(Self {
            theta,
            task_id: task_id.into(),
        })
    }

    pub fn d_rep(&self) -> usize {
        self.theta.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.theta.ncols()
    }
}

/// Parameter difference between a tuned model and its base.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskVector {
    pub delta: Mat<f64>,
}

impl TaskVector {
    pub fn between(base: &ToyModel, tuned: &ToyModel) -> Result<Self> {
        check_same_shape(&base.theta, &tuned.theta)?;
        Ok(Self {
            delta: &tuned.theta - &base.theta,
        })
    }
}

/// Nearest-centroid classifier over representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// `num_classes × d_rep`, one centroid per row.
    centroids: Mat<f64>,
    pub task_id: String,
}

impl Head {
    pub fn new(task_id: impl Into<String>, centroids: Mat<f64>) -> Result<Self> {
        if centroids.nrows() < 2 || centroids.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "head needs at least 2 classes, got {}",
                centroids.nrows()
            )));
        }
        linalg::ensure_finite(centroids.as_ref(), "head centroids")?;
        for a in 0..centroids.nrows() {
            for b in a + 1..centroids.nrows() {
                if (0..centroids.ncols()).all(|k| centroids[(a, k)] == centroids[(b, k)]) {
                    return Err(Error::InvalidInput(format!("centroids {a} and {b} coincide")));
                }
            }
        }
        Ok(Self {
            centroids,
            task_id: task_id.into(),
        })
    }

    /// Class means of the columns of `z`.
    pub fn fit(task_id: impl Into<String>, z: &RepMatrix, labels: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != z.n_samples() {
            return Err(Error::DimMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                z.n_samples()
            )));
        }
        let zm = z.as_mat();
        let mut sums = Mat::<f64>::zeros(classes, z.d_rep());
        let mut counts = vec![0usize; classes];
        for (j, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::InvalidInput(format!("label {y} out of range for {classes} classes")));
            }
            counts[y] += 1;
            for k in 0..z.d_rep() {
                sums[(y, k)] += zm[(k, j)];
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("class {empty} has no samples")));
        }
        let centroids = Mat::from_fn(classes, z.d_rep(), |c, k| sums[(c, k)] / counts[c] as f64);
        Self::new(task_id, centroids)
    }

    pub fn num_classes(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn d_rep(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn centroids(&self) -> faer::MatRef<'_, f64> {
        self.centroids.as_ref()
    }

    /// Index of the nearest centroid for every column; ties go to the lower
    /// class index.
    pub fn predict(&self, z: &RepMatrix) -> Result<Vec<usize>> {
        if z.d_rep() != self.d_rep() {
            return Err(Error::DimMismatch(format!(
                "head has dimension {}, representations have {}",
                self.d_rep(),
                z.d_rep()
            )));
        }
        let zm = z.as_mat();
        Ok((0..z.n_samples())
            .map(|j| {
                let mut best = (0, f64::INFINITY);
                for c in 0..self.num_classes() {
                    let dist: f64 = (0..self.d_rep())
                        .map(|k| {
                            let d = zm[(k, j)] - self.centroids[(c, k)];
                            d * d
                        })
                        .sum();
                    if dist < best.1 {
                        best = (c, dist);
                    }
                }
                best.0
            })
            .collect())
    }
}

/// Fraction of columns of `z` the head assigns to their label.
pub fn evaluate_accuracy(z: &RepMatrix, head: &Head, labels: &[usize]) -> Result<f64> {
    if labels.len() != z.n_samples() {
        return Err(Error::DimMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            z.n_samples()
        )));
    }
    let hits = head.predict(z)?.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `θ_0 + Σ α_t Δ_t`.
pub fn merge_models(base: &ToyModel, deltas: &[TaskVector], alphas: &[f64]) -> Result<ToyModel> {
    if deltas.len() != alphas.len() {
        return Err(Error::DimMismatch(format!(
            "{} task vectors for {} coefficients",
            deltas.len(),
            alphas.len()
        )));
    }
    let mut theta = base.theta.clone();
    for (delta, &alpha) in deltas.iter().zip(alphas) {
        check_same_shape(&theta, &delta.delta)?;
        linalg::axpy(&mut theta, alpha, delta.delta.as_ref());
    }
    ToyModel::new("merged", theta)
}

/// `Z = θ · inputs`.
pub fn extract_representations(model: &ToyModel, inputs: &Mat<f64>) -> Result<RepMatrix> {
    if inputs.nrows() != model.d_in() {
        return Err(Error::DimMismatch(format!(
            "model expects {} input features, got {}",
            model.d_in(),
            inputs.nrows()
        )));
    }
    RepMatrix::new(linalg::matmul(model.theta.as_ref(), inputs.as_ref()))
}

fn check_same_shape(a: &Mat<f64>, b: &Mat<f64>) -> Result<()> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimMismatch(format!(
            "{}x{} against {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Parameters of a generated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub tasks: usize,
    pub d_in: usize,
    pub d_rep: usize,
    pub classes: usize,
    pub n: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Merge coefficients; `1/T` each when absent.
    pub merge_coeffs: Option<Vec<f64>>,
    /// Per-task multiplier on the inputs; all ones when absent.
    pub input_scales: Option<Vec<f64>>,
    /// Distance of each class mean from the origin, in units of the
    /// within-class standard deviation.
    pub separation: f64,
}

impl ScenarioSpec {
    pub fn new(tasks: usize, d_in: usize, d_rep: usize, classes: usize, n: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            tasks,
            d_in,
            d_rep,
            classes,
            n,
            noise_sigma,
            seed,
            merge_coeffs: None,
            input_scales: None,
            separation: 6.0,
        }
    }

    pub fn with_merge_coeffs(mut self, alphas: Vec<f64>) -> Self {
        self.merge_coeffs = Some(alphas);
        self
    }

    pub fn with_input_scales(mut self, scales: Vec<f64>) -> Self {
        self.input_scales = Some(scales);
        self
    }

    pub fn with_separation(mut self, separation: f64) -> Self {
        self.separation = separation;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.tasks < 1 {
            return Err(Error::InvalidInput("need at least one task".into()));
        }
        if self.d_in < 2 || self.d_rep < 2 || self.classes < 2 {
            return Err(Error::InvalidInput("d_in, d_rep and classes must be at least 2".into()));
        }
        if self.n < self.classes {
            return Err(Error::InvalidInput(format!(
                "{} samples cannot cover {} classes",
                self.n, self.classes
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInput("noise_sigma must be finite and nonnegative".into()));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidInput("separation must be positive".into()));
        }
        if let Some(a) = &self.merge_coeffs {
            if a.len() != self.tasks || a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("merge coefficients must be T finite values".into()));
            }
        }
        if let Some(s) = &self.input_scales {
            if s.len() != self.tasks || s.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidInput("input scales must be T positive values".into()));
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<SyntheticScenario> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let std = Normal::new(0.0, 1.0 / (self.d_in as f64).sqrt()).expect("positive std");
        let theta0 = Mat::from_fn(self.d_rep, self.d_in, |_, _| std.sample(&mut rng));
        let base = ToyModel::new("base", theta0)?;
        let weak = weak_directions(&base.theta, self.classes * self.tasks)?;

        let mut tasks = Vec::with_capacity(self.tasks);
        let mut models = Vec::with_capacity(self.tasks);
        let mut deltas = Vec::with_capacity(self.tasks);
        for t in 0..self.tasks {
            let id = format!("task{t}");
            let scale = self.input_scales.as_ref().map_or(1.0, |s| s[t]);
            let (task, model) = (0..MAX_RETRIES)
                .find_map(|_| self.try_task(t, &base, &weak, scale, &mut rng).transpose())
                .transpose()?
                .ok_or_else(|| {
                    Error::GenerationFailed(format!(
                        "task {id} did not reach accuracy {TARGET_ACCURACY} after {MAX_RETRIES} attempts"
                    ))
                })?;
            deltas.push(TaskVector::between(&base, &model)?);
            models.push(model);
            tasks.push(task);
        }
        let alphas = self
            .merge_coeffs
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.tasks as f64; self.tasks]);
        let merged = merge_models(&base, &deltas, &alphas)?;
        Ok(SyntheticScenario {
            spec: self.clone(),
            base,
            models,
            deltas,
            merged,
            merge_coeffs: alphas,
            tasks,
        })
    }

    /// One attempt at a task: draw clusters and a direction for `Δ_t`, then
    /// bisect on its scale. `Ok(None)` means this draw cannot reach the
    /// target accuracy.
    fn try_task(
        &self,
        t: usize,
        base: &ToyModel,
        weak: &Mat<f64>,
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<(ScenarioTask, ToyModel)>> {
        let id = format!("task{t}");
        let id = id.as_str();
        // Each task gets its own block of weak directions while they last.
        let k = weak.ncols();
        let block = (k / self.tasks).max(self.classes).min(k);
        let first = (t * block) % k;
        let coords = orthonormal_columns(block, self.classes, rng);
        let means = Mat::from_fn(self.d_in, self.classes, |i, c| {
            self.separation
                * (0..block)
                    .map(|j| weak[(i, (first + j) % k)] * coords[(j, c)])
                    .sum::<f64>()
        });
        let mut task = ScenarioTask {
            id: id.to_string(),
            means,
            input_scale: scale,
            inputs: Mat::zeros(0, 0),
            labels: Vec::new(),
            head: None,
            individual_acc: 0.0,
        };
        let (inputs, labels) = task.draw(self.n, rng);
        task.inputs = inputs;
        task.labels = labels;

        let std = Normal::new(0.0, 1.0 / (self.d_in as f64).sqrt()).expect("positive std");
        let direction = Mat::from_fn(self.d_rep, self.d_in, |_, _| std.sample(rng));
        let accuracy_at = |s: f64| -> Result<Option<(f64, Head)>> {
            let mut theta = base.theta.clone();
            linalg::axpy(&mut theta, s, direction.as_ref());
            let z = RepMatrix::new(linalg::matmul(theta.as_ref(), task.inputs.as_ref()))?;
            match Head::fit(id, &z, &task.labels, self.classes) {
                Ok(head) => Ok(Some((evaluate_accuracy(&z, &head, &task.labels)?, head))),
                Err(Error::InvalidInput(_)) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let reaches = |s: f64| -> Result<bool> {
            Ok(accuracy_at(s)?.is_some_and(|(acc, _)| acc >= TARGET_ACCURACY))
        };

        let mut hi = 1.0;
        let mut doublings = 0;
        while !reaches(hi)? {
            doublings += 1;
            if doublings > MAX_SCALE_DOUBLINGS {
                return Ok(None);
            }
            hi *= 2.0;
        }
        let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if reaches(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (acc, head) = accuracy_at(hi)?.expect("accepted scale has a head");
        let mut theta = base.theta.clone();
        linalg::axpy(&mut theta, hi, direction.as_ref());
        task.head = Some(head);
        task.individual_acc = acc;
        Ok(Some((task, ToyModel::new(id, theta)?)))
    }
}

/// Orthonormal basis of at least `wanted` of the weakest input directions of
/// `theta` (right singular vectors with the smallest singular values), always
/// covering the null space when `d_in > d_rep`.
fn weak_directions(theta: &Mat<f64>, wanted: usize) -> Result<Mat<f64>> {
    let d_in = theta.ncols();
    let null_dim = d_in.saturating_sub(theta.nrows());
    let k = wanted.max(null_dim).min(d_in);
    // eigenvectors of θᵀθ in ascending eigenvalue order
    let gram = linalg::matmul(theta.transpose(), theta.as_ref());
    let svd = linalg::svd(gram.as_ref())?;
    let v = svd.v_transpose;
    Ok(Mat::from_fn(d_in, k, |i, j| v[(d_in - 1 - j, i)]))
}

/// `k × m` matrix whose columns are orthonormal when `m ≤ k` and unit
/// random vectors otherwise.
fn orthonormal_columns(k: usize, m: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let g = Mat::from_fn(k, m, |_, _| StandardNormal.sample(rng));
    if m <= k {
        let qr = g.qr();
        let q = qr.compute_thin_q();
        return Mat::from_fn(k, m, |i, j| q[(i, j)]);
    }
    let mut out = g;
    for j in 0..m {
        let norm = (0..k).map(|i| out[(i, j)] * out[(i, j)]).sum::<f64>().sqrt();
        for i in 0..k {
            out[(i, j)] /= norm;
        }
    }
    out
}

/// Data and evaluation head for one generated task.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTask {
    pub id: String,
    /// Class means in input space, `d_in × classes`, before scaling.
    pub means: Mat<f64>,
    pub input_scale: f64,
    /// Calibration inputs, `d_in × n`.
    pub inputs: Mat<f64>,
    pub labels: Vec<usize>,
    head: Option<Head>,
    /// Accuracy of the task's own model on its calibration inputs.
    pub individual_acc: f64,
}

impl ScenarioTask {
    pub fn head(&self) -> &Head {
        self.head.as_ref().expect("generated tasks always carry a head")
    }

    pub fn classes(&self) -> usize {
        self.means.ncols()
    }

    /// Balanced labels `j mod classes` with unit-variance clusters.
    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> (Mat<f64>, Vec<usize>) {
        let labels: Vec<usize> = (0..n).map(|j| j % self.classes()).collect();
        let inputs = Mat::from_fn(self.means.nrows(), n, |_, _| 0.0);
        let mut inputs = inputs;
        for j in 0..n {
            for i in 0..self.means.nrows() {
                let e: f64 = StandardNormal.sample(rng);
                inputs[(i, j)] = self.input_scale * (self.means[(i, labels[j])] + e);
            }
        }
        (inputs, labels)
    }
}

/// A generated set of task models, their merge, and per-task data.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub spec: ScenarioSpec,
    pub base: ToyModel,
    pub models: Vec<ToyModel>,
    pub deltas: Vec<TaskVector>,
    pub merged: ToyModel,
    pub merge_coeffs: Vec<f64>,
    pub tasks: Vec<ScenarioTask>,
}

/// Scenario with default separation and uniform merge coefficients.
pub fn generate_scenario(
    t: usize,
    d_in: usize,
    d_rep: usize,
    classes: usize,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticScenario> {
    ScenarioSpec::new(t, d_in, d_rep, classes, n, noise_sigma, seed).generate()
}

impl SyntheticScenario {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Fresh labelled inputs for task `t` from its clusters.
    pub fn sample_inputs(&self, t: usize, n: usize, seed: u64) -> Result<(Mat<f64>, Vec<usize>)> {
        let task = self
            .tasks
            .get(t)
            .ok_or_else(|| Error::InvalidInput(format!("no task with index {t}")))?;
        if n == 0 {
            return Err(Error::InvalidInput("cannot draw zero samples".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(task.draw(n, &mut rng))
    }

    /// Individual and merged representations of `inputs` for task `t`, with
    /// feature noise of the scenario's `noise_sigma` added to the merged side.
    pub fn representation_pair(&self, t: usize, inputs: &Mat<f64>, noise_seed: u64) -> Result<(RepMatrix, RepMatrix)> {
        let model = self
            .models
            .get(t)
            .ok_or_else(|| Error::InvalidInput(format!("no task with index {t}")))?;
        let z_ind = extract_representations(model, inputs)?;
        let mut z_mtl = extract_representations(&self.merged, inputs)?.into_mat();
        if self.spec.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let noise = Normal::new(0.0, self.spec.noise_sigma).expect("validated sigma");
            for j in 0..z_mtl.ncols() {
                for i in 0..z_mtl.nrows() {
                    z_mtl[(i, j)] += noise.sample(&mut rng);
                }
            }
        }
        Ok((z_ind, RepMatrix::new(z_mtl)?))
    }

    /// Packs the calibration data into a bundle. Expert accuracies are the
    /// individual models' accuracies on the same samples.
    pub fn to_bundle(&self, beta: f64) -> Result<Bundle> {
        let tasks = self
            .tasks
            .iter()
            .enumerate()
            .map(|(t, task)| {
                let noise_seed = self.spec.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(t as u64 + 1));
                let (z_ind, z_mtl) = self.representation_pair(t, &task.inputs, noise_seed)?;
                Ok(TaskData::new(task.id.clone(), z_ind, z_mtl).with_evaluation(
                    task.head().clone(),
                    task.labels.clone(),
                    Some(task.individual_acc),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Bundle::new(beta, tasks)
    }
}

/// Random calibration pairs `Z_ind = M_t Z_mtl + noise` with per-task scales
/// on `Z_mtl`, for tests that only need the correction algebra.
pub fn random_tasks(t: usize, d: usize, n: usize, seed: u64) -> Vec<TaskData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..t)
        .map(|i| {
            let scale = 1.0 + i as f64;
            let z_mtl = Mat::from_fn(d, n, |_, _| { let g: f64 = StandardNormal.sample(&mut rng); scale * g });
            let mix = Mat::from_fn(d, d, |r, c| {
                let g: f64 = StandardNormal.sample(&mut rng);
                f64::from(u8::from(r == c)) + 0.3 * g / (d as f64).sqrt()
            });
            let mut z_ind = linalg::matmul(mix.as_ref(), z_mtl.as_ref());
            for j in 0..n {
                for r in 0..d {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    z_ind[(r, j)] += 0.1 * e;
                }
            }
            TaskData::new(
                format!("task{i}"),
                RepMatrix::new(z_ind).expect("finite"),
                RepMatrix::new(z_mtl).expect("finite"),
            )
        })
        .collect()
}
