//! One-class kernel extreme learning machine.
//!
//! Training fits a kernel ridge regression of the constant target 1 on normal
//! data only. The dual coefficients are `a = (I/C + Ω)⁻¹ 1`, so the output for
//! any instance is `k(x)ᵀ a` where `k(x)` holds its kernel values against the
//! training rows. Instances whose output strays from 1 by at least the
//! threshold `δ` are flagged as outliers. `δ` is the `k`-th largest training
//! deviation with `k = max(1, ⌈θN⌉)`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Label};
use crate::kernels::{self, KernelError, KernelSpec};

#[derive(Debug, Error)]
pub enum OckelmError {
    #[error("regularization C must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("outlier fraction theta must lie in (0, 1), got {0}")]
    InvalidTheta(f64),
    #[error("at least 2 training rows are required, got {0}")]
    TooFewRows(usize),
    #[error("system (I/C + Ω) is not positive definite even after jitter {jitter:e}; condition estimate {condition:e}")]
    Singular { jitter: f64, condition: f64 },
    #[error("error vector is empty")]
    EmptyErrors,
    #[error("errors must be sorted in descending order")]
    Unsorted,
    #[error("model is inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T, E = OckelmError> = std::result::Result<T, E>;

/// Per-instance model outputs and their distance from the target value 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub outputs: Vec<f64>,
    pub errors: Vec<f64>,
}

impl ScoreVector {
    fn from_outputs(outputs: Vec<f64>) -> Self {
        let errors = outputs.iter().map(|o| (o - 1.0).abs()).collect();
        ScoreVector { outputs, errors }
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

/// Solution of the regularised system for a precomputed Gram matrix.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub coefficients: Vec<f64>,
    pub train_scores: ScoreVector,
    pub delta: f64,
    /// Diagonal jitter that had to be added for the factorization (0 if none).
    pub jitter: f64,
}

fn check_hyper(c: f64, theta: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(OckelmError::InvalidC(c));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(OckelmError::InvalidTheta(theta));
    }
    Ok(())
}

/// Number of training errors at or above the threshold: `max(1, ⌈θN⌉)`.
pub fn threshold_rank(theta: f64, n: usize) -> usize {
    // guard against θN landing a hair above an integer through rounding
    let k = (theta * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n)
}

/// Threshold `δ = D̂[k]` (1-based) over errors sorted in descending order.
pub fn threshold(errors_desc: &[f64], theta: f64) -> Result<f64> {
    if errors_desc.is_empty() {
        return Err(OckelmError::EmptyErrors);
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(OckelmError::InvalidTheta(theta));
    }
    if errors_desc.windows(2).any(|w| w[1] > w[0]) {
        return Err(OckelmError::Unsorted);
    }
    Ok(errors_desc[threshold_rank(theta, errors_desc.len()) - 1])
}

/// Labels each instance: target iff its error is strictly below `delta`.
pub fn decide(errors: &[f64], delta: f64) -> Vec<Label> {
    errors
        .iter()
        .map(|&e| if e < delta { Label::Target } else { Label::Outlier })
        .collect()
}

/// `Σ_j k[i, j] a[j]` for every row, summed in column order.
fn outputs(kernel: &DMatrix<f64>, a: &[f64]) -> Vec<f64> {
    (0..kernel.nrows())
        .map(|i| {
            let mut s = 0.0;
            for (j, aj) in a.iter().enumerate() {
                s += kernel[(i, j)] * aj;
            }
            s
        })
        .collect()
}

/// Solves `(I/C + Ω) a = 1` by Cholesky factorization, escalating a diagonal
/// jitter from `1e-12·tr/N` to `1e-6·tr/N` if the factorization fails.
pub fn solve_dual(gram: &DMatrix<f64>, c: f64, theta: f64) -> Result<DualSolution> {
    check_hyper(c, theta)?;
    let n = gram.nrows();
    if n < 2 {
        return Err(OckelmError::TooFewRows(n));
    }
    assert_eq!(n, gram.ncols(), "Gram matrix must be square");
    let mut system = gram.clone();
    for i in 0..n {
        system[(i, i)] += 1.0 / c;
    }
    let scale = system.trace() / n as f64;
    let mut jitter = 0.0;
    let chol = loop {
        let mut m = system.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        if let Some(ch) = Cholesky::new(m) {
            break ch;
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
        if jitter > 1e-6 * scale * (1.0 + 1e-9) {
            let eig = SymmetricEigen::new(system.clone()).eigenvalues;
            let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            return Err(OckelmError::Singular {
                jitter: jitter / 10.0,
                condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
            });
        }
    };
    let a = chol.solve(&DVector::from_element(n, 1.0));
    let coefficients: Vec<f64> = a.iter().copied().collect();
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(OckelmError::Singular {
            jitter,
            condition: f64::INFINITY,
        });
    }
    let train_scores = ScoreVector::from_outputs(outputs(gram, &coefficients));
    let mut sorted = train_scores.errors.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let delta = threshold(&sorted, theta)?;
    Ok(DualSolution {
        coefficients,
        train_scores,
        delta,
        jitter,
    })
}

/// Scores a batch from its cross-kernel matrix against the training rows.
pub fn score_from_kernel(cross: &DMatrix<f64>, coefficients: &[f64]) -> ScoreVector {
    ScoreVector::from_outputs(outputs(cross, coefficients))
}

/// A fitted one-class model. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OckelmModel {
    train_rows: Dataset,
    spec: KernelSpec,
    c: f64,
    theta: f64,
    coefficients: Vec<f64>,
    delta: f64,
}

/// Fits the model on target-class rows.
pub fn fit(train: &Dataset, spec: &KernelSpec, c: f64, theta: f64) -> Result<OckelmModel> {
    check_hyper(c, theta)?;
    spec.validate()?;
    if train.n_rows() < 2 {
        return Err(OckelmError::TooFewRows(train.n_rows()));
    }
    let gram = kernels::gram_symmetric(train, spec)?;
    let sol = solve_dual(&gram, c, theta)?;
    Ok(OckelmModel {
        train_rows: train.clone().without_labels(),
        spec: *spec,
        c,
        theta,
        coefficients: sol.coefficients,
        delta: sol.delta,
    })
}

impl OckelmModel {
    /// Reassembles a model from stored parts, checking their consistency.
    pub fn from_parts(
        train_rows: Dataset,
        spec: KernelSpec,
        c: f64,
        theta: f64,
        coefficients: Vec<f64>,
        delta: f64,
    ) -> Result<Self> {
        check_hyper(c, theta)?;
        spec.validate()?;
        if coefficients.len() != train_rows.n_rows() {
            return Err(OckelmError::Corrupt(format!(
                "{} coefficients for {} training rows",
                coefficients.len(),
                train_rows.n_rows()
            )));
        }
        if delta.is_nan() || delta < 0.0 {
            return Err(OckelmError::Corrupt(format!("negative threshold {delta}")));
        }
        Ok(OckelmModel {
            train_rows,
            spec,
            c,
            theta,
            coefficients,
            delta,
        })
    }

    /// Checks a deserialized model the same way [`OckelmModel::from_parts`] does.
    pub fn validate(&self) -> Result<()> {
        Self::from_parts(
            self.train_rows.clone(),
            self.spec,
            self.c,
            self.theta,
            self.coefficients.clone(),
            self.delta,
        )
        .map(|_| ())
    }

    pub fn train_rows(&self) -> &Dataset {
        &self.train_rows
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.train_rows.n_cols()
    }

    pub fn score(&self, batch: &Dataset) -> Result<ScoreVector> {
        batch.check_dim(self.dim())?;
        let cross = kernels::gram(batch, &self.train_rows, &self.spec)?;
        Ok(score_from_kernel(&cross, &self.coefficients))
    }

    pub fn predict(&self, batch: &Dataset) -> Result<Vec<Label>> {
        Ok(decide(&self.score(batch)?.errors, self.delta))
    }
}
