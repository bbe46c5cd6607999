//! FastICA feature reconstruction.
//!
//! Data is centred and whitened through the eigendecomposition of its
//! covariance, optionally keeping only the leading components. The unmixing
//! matrix is then found by the parallel fixed-point iteration
//!
//! ```text
//! w ← E{x̃ g(wᵀx̃)} − E{g'(wᵀx̃)} w
//! ```
//!
//! applied to every row, followed by symmetric decorrelation
//! `W ← (WWᵀ)^{-1/2} W` and row normalisation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::seed;

#[derive(Debug, Error)]
pub enum IcaError {
    #[error("at least 2 rows are required, got {0}")]
    TooFewRows(usize),
    #[error("n_components must be in 1..={d}, got {requested}")]
    BadComponentCount { requested: usize, d: usize },
    #[error("covariance is rank deficient: kept eigenvalue {eigenvalue:e} at component {index}")]
    RankDeficient { index: usize, eigenvalue: f64 },
    #[error("fixed-point update produced non-finite values at iteration {0}")]
    Diverged(usize),
    #[error("max_iter must be >= 1 and epsilon > 0")]
    BadConfig,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T, E = IcaError> = std::result::Result<T, E>;

/// Non-quadratic contrast function `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contrast {
    /// `G(u) = log cosh u`
    #[default]
    LogCosh,
    /// `G(u) = -exp(-u²/2)`
    Exp,
    /// `G(u) = u⁴/4`
    Cube,
}

impl Contrast {
    pub fn value(self, u: f64) -> f64 {
        match self {
            // log cosh u = |u| + ln(1 + e^{-2|u|}) - ln 2, stable for large |u|
            Contrast::LogCosh => u.abs() + (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2,
            Contrast::Exp => -(-0.5 * u * u).exp(),
            Contrast::Cube => 0.25 * u.powi(4),
        }
    }

    /// First and second derivatives `(G'(u), G''(u))`.
    pub fn derivatives(self, u: f64) -> (f64, f64) {
        match self {
            Contrast::LogCosh => {
                let t = u.tanh();
                (t, 1.0 - t * t)
            }
            Contrast::Exp => {
                let e = (-0.5 * u * u).exp();
                (u * e, (1.0 - u * u) * e)
            }
            Contrast::Cube => (u.powi(3), 3.0 * u * u),
        }
    }
}

/// `(G'(u), G''(u))` for the given contrast.
pub fn contrast_eval(kind: Contrast, u: f64) -> (f64, f64) {
    kind.derivatives(u)
}

/// How iteration stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    /// `max_i (1 - |<w_i_new, w_i_old>|) < ε`; indifferent to sign flips.
    #[default]
    AbsCosine,
    /// Frobenius norm `||W_new - W_old|| < ε`, as literally stated; can stall
    /// on rows that flip sign between sweeps.
    MatrixDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaConfig {
    /// Defaults to the input dimension.
    pub n_components: Option<usize>,
    pub max_iter: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub contrast: Contrast,
    pub convergence: Convergence,
}

impl Default for IcaConfig {
    fn default() -> Self {
        IcaConfig {
            n_components: None,
            max_iter: 200,
            epsilon: 1e-6,
            seed: 0,
            contrast: Contrast::LogCosh,
            convergence: Convergence::AbsCosine,
        }
    }
}

impl IcaConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_components(mut self, n: Option<usize>) -> Self {
        self.n_components = n;
        self
    }
}

mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        (m.ncols(), rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let (ncols, rows): (usize, Vec<Vec<f64>>) = Deserialize::deserialize(d)?;
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
    }
}

/// Fitted centring, whitening and unmixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaTransform {
    pub mean: Vec<f64>,
    /// `n × d`
    #[serde(with = "rows_serde")]
    pub whiten: DMatrix<f64>,
    /// `n × n`
    #[serde(with = "rows_serde")]
    pub unmixing: DMatrix<f64>,
    pub n_components: usize,
    pub iterations_used: usize,
    pub converged: bool,
}

fn centered(data: &Dataset) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (data.n_rows(), data.n_cols());
    let mut mean = vec![0.0; d];
    for row in data.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| data.row(i)[j] - mean[j]);
    (mean, x)
}

/// `(WWᵀ)^{-1/2} W`
pub fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// One fixed-point step for a single unmixing row over whitened samples
/// (rows of `z`): `E{z g(wᵀz)} − E{g'(wᵀz)} w`.
pub fn fixed_point_update(w: &DVector<f64>, z: &DMatrix<f64>, contrast: Contrast) -> DVector<f64> {
    let n = z.nrows() as f64;
    let proj = z * w;
    let mut g = DVector::zeros(proj.len());
    let mut mean_dg = 0.0;
    for (k, &u) in proj.iter().enumerate() {
        let (d1, d2) = contrast.derivatives(u);
        g[k] = d1;
        mean_dg += d2;
    }
    mean_dg /= n;
    z.transpose() * g / n - w * mean_dg
}

pub fn ica_fit(train: &Dataset, config: &IcaConfig) -> Result<IcaTransform> {
    let (n, d) = (train.n_rows(), train.n_cols());
    if n < 2 {
        return Err(IcaError::TooFewRows(n));
    }
    if config.max_iter == 0 || config.epsilon.is_nan() || config.epsilon <= 0.0 {
        return Err(IcaError::BadConfig);
    }
    let k = config.n_components.unwrap_or(d);
    if k == 0 || k > d {
        return Err(IcaError::BadComponentCount { requested: k, d });
    }

    let (mean, x) = centered(train);
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let kept = &order[..k];
    for (index, &c) in kept.iter().enumerate() {
        let eigenvalue = eig.eigenvalues[c];
        if eigenvalue <= 1e-12 {
            return Err(IcaError::RankDeficient { index, eigenvalue });
        }
    }
    // D^{-1/2} Eᵀ restricted to the kept components; with all components kept
    // the symmetric form E D^{-1/2} Eᵀ is used.
    let reduced = DMatrix::from_fn(k, d, |r, j| {
        let c = kept[r];
        eig.eigenvectors[(j, c)] / eig.eigenvalues[c].sqrt()
    });
    let whiten = if k == d {
        let e = DMatrix::from_fn(d, d, |i, r| eig.eigenvectors[(i, kept[r])]);
        e * reduced
    } else {
        reduced
    };
    let z = &x * whiten.transpose();

    let mut rng = seed::rng_for(config.seed, "ica/init");
    let init = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);
    let mut converged = false;
    let mut iterations_used = 0;
    for it in 1..=config.max_iter {
        iterations_used = it;
        let mut next = DMatrix::zeros(k, k);
        for r in 0..k {
            let row = w.row(r).transpose();
            let upd = fixed_point_update(&row, &z, config.contrast);
            next.set_row(r, &upd.transpose());
        }
        let mut next = symmetric_decorrelation(&next);
        for mut row in next.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(IcaError::Diverged(it));
        }
        let change = match config.convergence {
            Convergence::AbsCosine => (0..k)
                .map(|r| 1.0 - next.row(r).dot(&w.row(r)).abs())
                .fold(0.0, f64::max),
            Convergence::MatrixDelta => (&next - &w).norm(),
        };
        w = next;
        if change < config.epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("FastICA did not converge within {} iterations", config.max_iter);
    }
    Ok(IcaTransform {
        mean,
        whiten,
        unmixing: w,
        n_components: k,
        iterations_used,
        converged,
    })
}

impl IcaTransform {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Whitened samples `whiten · (x − mean)`, one per row.
    pub fn whitened(&self, batch: &Dataset) -> Result<DMatrix<f64>> {
        batch.check_dim(self.input_dim())?;
        let x = DMatrix::from_fn(batch.n_rows(), self.input_dim(), |i, j| batch.row(i)[j] - self.mean[j]);
        Ok(x * self.whiten.transpose())
    }

    /// Source estimates `S = W · whiten · (x − mean)`.
    pub fn transform(&self, batch: &Dataset) -> Result<Dataset> {
        let s = self.whitened(batch)? * self.unmixing.transpose();
        let values: Vec<f64> = s.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
        let names = (0..self.n_components).map(|i| format!("ic{i}")).collect();
        Ok(batch.map_values(values, names))
    }

    /// Structural checks for a deserialized transform.
    pub fn validate(&self) -> Result<()> {
        let (k, d) = (self.n_components, self.input_dim());
        if self.whiten.shape() != (k, d) || self.unmixing.shape() != (k, k) || k == 0 || k > d {
            return Err(IcaError::BadComponentCount { requested: k, d });
        }
        Ok(())
    }
}

/// Fits on `train` and returns it transformed.
pub fn ica_fit_transform(train: &Dataset, config: &IcaConfig) -> Result<(IcaTransform, Dataset)> {
    let t = ica_fit(train, config)?;
    let s = t.transform(train)?;
    Ok((t, s))
}
