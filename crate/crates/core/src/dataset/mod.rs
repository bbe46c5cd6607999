//! Tabular data model, z-score normalisation and the one-class split protocol.
//!
//! A [`Dataset`] is a dense row-major matrix of finite reals with optional
//! per-row [`Label`]s. Every stage of the pipeline consumes and produces it.

mod io;
mod telemetry;

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub use io::{load_csv, read_csv, write_csv, write_csv_to, LabelColumn};
pub use telemetry::{
    bucket_edges, resample, resample_alfa, Bucket, TelemetrySeries, ALFA_FEATURES,
    DEFAULT_INTERVAL,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: non-finite value `{value}`")]
    NonFinite {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label `{value}` is not +1 or -1")]
    BadLabel { row: usize, value: String },
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("dataset is empty")]
    Empty,
    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dataset has no labels")]
    MissingLabels,
    #[error("{count} rows labelled {label}; at least 2 are required")]
    TooFewRows { label: Label, count: usize },
    #[error("feature `{0}` has no readings")]
    EmptySeries(String),
    #[error("feature `{feature}`: timestamps not strictly increasing at index {index}")]
    NonMonotonic { feature: String, index: usize },
    #[error("feature `{feature}`: non-finite reading at index {index}")]
    NonFiniteReading { feature: String, index: usize },
    #[error("telemetry is missing feature `{0}`")]
    MissingFeature(String),
    #[error("feature `{0}` supplied more than once")]
    DuplicateFeature(String),
    #[error("feature `{0}` is not part of the telemetry schema")]
    UnknownFeature(String),
    #[error("fault time {fault} lies outside the recorded span [{start}, {end}]")]
    FaultOutsideSpan { fault: f64, start: f64, end: f64 },
    #[error("resampling interval must be positive, got {0}")]
    BadInterval(f64),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// One-class label: the target (normal) class is `+1`, outliers are `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Target,
    Outlier,
}

impl Label {
    pub fn value(self) -> i8 {
        match self {
            Label::Target => 1,
            Label::Outlier => -1,
        }
    }

    pub fn from_value(v: f64) -> Option<Label> {
        if v == 1.0 {
            Some(Label::Target)
        } else if v == -1.0 {
            Some(Label::Outlier)
        } else {
            None
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.value()
    }
}

impl TryFrom<i8> for Label {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        Label::from_value(f64::from(v)).ok_or_else(|| format!("label {v} is not +1 or -1"))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Row-major matrix of finite reals with optional labels and feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    values: Vec<f64>,
    n_cols: usize,
    labels: Option<Vec<Label>>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row-major `values`. Fails on ragged shape or a
    /// non-finite cell.
    pub fn new(values: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let n_cols = feature_names.len();
        if n_cols == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if !values.len().is_multiple_of(n_cols) {
            return Err(DatasetError::Ragged {
                row: values.len() / n_cols + 1,
                expected: n_cols,
                found: values.len() % n_cols,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite {
                row: pos / n_cols + 1,
                column: feature_names[pos % n_cols].clone(),
                value: values[pos].to_string(),
            });
        }
        Ok(Dataset {
            values,
            n_cols,
            labels: None,
            feature_names,
        })
    }

    /// Builds a dataset from rows, naming features `x0, x1, ...`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(DatasetError::Ragged {
                    row: i + 1,
                    expected: d,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Dataset::new(values, default_names(d))
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.n_rows() {
            return Err(DatasetError::DimensionMismatch {
                expected: self.n_rows(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Copies the listed rows (with their labels) into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            values,
            n_cols: self.n_cols,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Stacks `other` under `self`. Labels survive only if both sides carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        self.check_dim(other.n_cols)?;
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Dataset {
            values,
            n_cols: self.n_cols,
            labels,
            feature_names: self.feature_names.clone(),
        })
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.n_cols != expected {
            return Err(DatasetError::DimensionMismatch {
                expected,
                found: self.n_cols,
            });
        }
        Ok(())
    }

    /// Replaces the values, keeping labels, with a new column layout.
    pub(crate) fn map_values(&self, values: Vec<f64>, feature_names: Vec<String>) -> Dataset {
        debug_assert_eq!(values.len(), self.n_rows() * feature_names.len());
        Dataset {
            values,
            n_cols: feature_names.len(),
            labels: self.labels.clone(),
            feature_names,
        }
    }
}

pub(crate) fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Column means and population (divide-by-N) standard deviations.
    pub fn fit(data: &Dataset) -> Result<NormStats> {
        if data.is_empty() {
            return Err(DatasetError::Empty);
        }
        let n = data.n_rows() as f64;
        let d = data.n_cols();
        let mut mean = vec![0.0; d];
        for row in data.rows() {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in data.rows() {
            for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(row) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(NormStats { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std` per cell; zero-variance columns map to 0.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        data.check_dim(self.dim())?;
        let values = data
            .rows()
            .flat_map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(&x, (&m, &s))| if s > 0.0 { (x - m) / s } else { 0.0 })
            })
            .collect();
        Ok(data.map_values(values, data.feature_names().to_vec()))
    }
}

/// Result of [`one_class_split`].
#[derive(Debug, Clone)]
pub struct OneClassSplit {
    /// Half of the target rows, unlabelled.
    pub train: Dataset,
    /// Remaining targets followed by half of the outliers, labelled.
    pub test: Dataset,
    /// The other outlier half, reserved for cross-validated tuning.
    pub cv_pool: Dataset,
}

/// Splits a labelled dataset following the one-class protocol: targets are
/// shuffled and halved (floor share to training), outliers are shuffled and
/// halved between the test set (floor share) and the tuning pool.
pub fn one_class_split(data: &Dataset, seed: u64) -> Result<OneClassSplit> {
    let labels = data.labels().ok_or(DatasetError::MissingLabels)?;
    let mut targets: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == Label::Target)
        .collect();
    let mut outliers: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == Label::Outlier)
        .collect();
    for (label, count) in [(Label::Target, targets.len()), (Label::Outlier, outliers.len())] {
        if count < 2 {
            return Err(DatasetError::TooFewRows { label, count });
        }
    }
    targets.shuffle(&mut seed::rng_for(seed, "split/targets"));
    outliers.shuffle(&mut seed::rng_for(seed, "split/outliers"));

    let (train_idx, test_targets) = targets.split_at(targets.len() / 2);
    let (test_outliers, pool_idx) = outliers.split_at(outliers.len() / 2);
    let test_idx: Vec<usize> = test_targets.iter().chain(test_outliers).copied().collect();

    Ok(OneClassSplit {
        train: data.select(train_idx).without_labels(),
        test: data.select(&test_idx),
        cv_pool: data.select(pool_idx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn column(xs: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        Dataset::from_rows(&rows).unwrap()
    }

    #[test]
    fn zscore_population_std() {
        let s = NormStats::fit(&column(&[1.0, 2.0, 3.0])).unwrap();
        assert_abs_diff_eq!(s.mean[0], 2.0);
        // sqrt(((1-2)^2 + 0 + (3-2)^2) / 3) = sqrt(2/3)
        assert_abs_diff_eq!(s.std[0], (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.std[0], 0.8165, epsilon = 1e-4);
    }

    #[test]
    fn zscore_apply_values() {
        let d = column(&[1.0, 2.0, 3.0]);
        let z = NormStats::fit(&d).unwrap().apply(&d).unwrap();
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(z.values()[0], -expect, epsilon = 1e-15);
        assert_abs_diff_eq!(z.values()[1], 0.0);
        assert_abs_diff_eq!(z.values()[2], expect, epsilon = 1e-15);
        assert_abs_diff_eq!(expect, 1.2247, epsilon = 1e-4);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let d = column(&[5.0, 5.0, 5.0]);
        let s = NormStats::fit(&d).unwrap();
        assert_eq!(s.mean[0], 5.0);
        assert_eq!(s.std[0], 0.0);
        assert!(s.apply(&d).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardized_column_is_fixed_point() {
        let d = column(&[0.3, -1.7, 2.2, 0.9, -0.4]);
        let z = NormStats::fit(&d).unwrap().apply(&d).unwrap();
        let s = NormStats::fit(&z).unwrap();
        assert!(s.mean[0].abs() < 1e-12);
        assert!((s.std[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn train_mean_maps_to_origin() {
        let d = Dataset::from_rows(&[[1.0, 10.0], [3.0, 30.0], [5.0, 20.0]]).unwrap();
        let s = NormStats::fit(&d).unwrap();
        let probe = Dataset::from_rows(std::slice::from_ref(&s.mean)).unwrap();
        assert!(s.apply(&probe).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_rejects_empty_and_apply_checks_dim() {
        let empty = Dataset::new(vec![], vec!["a".into()]).unwrap();
        assert!(matches!(NormStats::fit(&empty), Err(DatasetError::Empty)));
        let s = NormStats::fit(&column(&[1.0, 2.0])).unwrap();
        let wide = Dataset::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            s.apply(&wide),
            Err(DatasetError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    fn labelled(n_target: usize, n_outlier: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n_target + n_outlier).map(|i| vec![i as f64]).collect();
        let labels = (0..n_target + n_outlier)
            .map(|i| if i < n_target { Label::Target } else { Label::Outlier })
            .collect();
        Dataset::from_rows(&rows).unwrap().with_labels(labels).unwrap()
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        // (targets, outliers, train, test) as listed for Iris, BreastCancer,
        // Ionosphere and Colposcopy.
        for (t, o, train, test) in [(50, 100, 25, 75), (458, 241, 229, 349), (126, 225, 63, 175), (82, 15, 41, 48)] {
            let s = one_class_split(&labelled(t, o), 3).unwrap();
            assert_eq!(s.train.n_rows(), train);
            assert_eq!(s.test.n_rows(), test);
            assert_eq!(s.cv_pool.n_rows(), o - o / 2);
        }
    }

    #[test]
    fn split_is_disjoint_and_label_clean() {
        let data = labelled(20, 13);
        let s = one_class_split(&data, 11).unwrap();
        assert!(s.train.labels().is_none());
        // every training value comes from a target row (values 0..20)
        assert!(s.train.values().iter().all(|&v| v < 20.0));
        assert!(s.cv_pool.labels().unwrap().iter().all(|&l| l == Label::Outlier));
        let mut all: Vec<f64> = s
            .train
            .values()
            .iter()
            .chain(s.test.values())
            .chain(s.cv_pool.values())
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        let expect: Vec<f64> = (0..33).map(|i| i as f64).collect();
        assert_eq!(all, expect);
        let again = one_class_split(&data, 11).unwrap();
        assert_eq!(again.train, s.train);
        assert_eq!(again.test, s.test);
        let other = one_class_split(&data, 12).unwrap();
        assert_ne!(other.train, s.train);
    }

    #[test]
    fn split_errors() {
        let unlabelled = Dataset::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(matches!(one_class_split(&unlabelled, 0), Err(DatasetError::MissingLabels)));
        assert!(matches!(
            one_class_split(&labelled(5, 1), 0),
            Err(DatasetError::TooFewRows { label: Label::Outlier, count: 1 })
        ));
    }
}
