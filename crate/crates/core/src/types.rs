//! Shared numeric data model.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg;

/// A `d_rep × n_samples` feature matrix. Each column is the representation
/// of one calibration sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RepMatrix(Mat<f64>);

impl RepMatrix {
    pub fn new(data: Mat<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "representation matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        linalg::ensure_finite(data.as_ref(), "representation matrix")?;
        Ok(Self(data))
    }

    /// Builds from a row-major buffer (`d_rep` rows, `n_samples` columns).
    pub fn from_row_major(d_rep: usize, n_samples: usize, data: &[f64]) -> Result<Self> {
        Self::new(mat_from_row_major(d_rep, n_samples, data)?)
    }

    pub fn d_rep(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.0.as_ref()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        mat_to_row_major(self.0.as_ref())
    }
}

/// A square `d_rep × d_rep` linear map on representation space.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMap(Mat<f64>);

impl SquareMap {
    pub fn new(data: Mat<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(Error::DimMismatch(format!(
                "square map must be square and non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        linalg::ensure_finite(data.as_ref(), "square map")?;
        Ok(Self(data))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Mat::identity(dim, dim))
    }

    pub fn from_row_major(dim: usize, data: &[f64]) -> Result<Self> {
        Self::new(mat_from_row_major(dim, dim, data)?)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.0.as_ref()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::frobenius(self.0.as_ref())
    }

    pub fn distance(&self, other: &SquareMap) -> f64 {
        linalg::frobenius_distance(self.0.as_ref(), other.0.as_ref())
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        mat_to_row_major(self.0.as_ref())
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &SquareMap) -> bool {
        self.dim() == other.dim()
            && self
                .to_row_major()
                .iter()
                .zip(other.to_row_major())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Tolerance on the sum of a normalized preference.
pub const PREFERENCE_SUM_TOL: f64 = 1e-9;

/// A point on the probability simplex: one nonnegative weight per task.
#[derive(Debug, Clone, PartialEq)]
pub struct Preference {
    weights: Vec<f64>,
}

impl Preference {
    /// Normalizes `weights` to sum to one. Weights that already sum to one
    /// within [`PREFERENCE_SUM_TOL`] are kept verbatim, so normalization is
    /// idempotent.
    ///
    /// Rejects empty input, negative or non-finite entries, and the all-zero
    /// vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPreference("preference is empty".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidPreference(format!(
                "weights must be finite and nonnegative, got {bad}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidPreference("weights are all zero".into()));
        }
        if (sum - 1.0).abs() <= PREFERENCE_SUM_TOL {
            return Ok(Self { weights });
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(tasks: usize) -> Result<Self> {
        Self::new(vec![1.0; tasks])
    }

    pub fn one_hot(tasks: usize, index: usize) -> Result<Self> {
        if index >= tasks {
            return Err(Error::InvalidPreference(format!(
                "one-hot index {index} out of range for {tasks} tasks"
            )));
        }
        let mut w = vec![0.0; tasks];
        w[index] = 1.0;
        Self::new(w)
    }

    /// `mass` on task `index`, the remainder spread evenly over the others.
    pub fn priority(tasks: usize, index: usize, mass: f64) -> Result<Self> {
        if index >= tasks || !(0.0..=1.0).contains(&mass) {
            return Err(Error::InvalidPreference(format!(
                "priority preference needs index < {tasks} and mass in [0, 1]"
            )));
        }
        if tasks == 1 {
            return Self::new(vec![1.0]);
        }
        let rest = (1.0 - mass) / (tasks - 1) as f64;
        let w = (0..tasks).map(|i| if i == index { mass } else { rest }).collect();
        Self::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }
}

/// Regularization strength and seed shared by the offline computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub beta: f64,
    pub seed: u64,
}

impl Config {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_seed(beta, 0)
    }

    pub fn with_seed(beta: f64, seed: u64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidInput(format!(
                "beta must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(Self { beta, seed })
    }
}

pub(crate) fn mat_from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Mat<f64>> {
    if data.len() != rows * cols {
        return Err(Error::DimMismatch(format!(
            "buffer of {} values cannot fill a {rows}x{cols} matrix",
            data.len()
        )));
    }
    Ok(Mat::from_fn(rows, cols, |i, j| data[i * cols + j]))
}

pub(crate) fn mat_to_row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}
