//! Fixed-interval resampling of asynchronous telemetry streams.
//!
//! Each sensor reports at its own rate, so readings are bucketed on a common
//! time grid. The grid is cut at the fault time, and each side is tiled
//! separately so that no bucket straddles the fault. Every bucket yields one row.

use rand::Rng;

use super::{Dataset, DatasetError, Label, Result};
use crate::seed;

pub const DEFAULT_INTERVAL: f64 = 0.25;

/// The 18 telemetry features, in output column order.
pub const ALFA_FEATURES: [&str; 18] = [
    "velocity_x",
    "velocity_y",
    "velocity_z",
    "angular_velocity_x",
    "angular_velocity_y",
    "angular_velocity_z",
    "linear_acceleration_x",
    "linear_acceleration_y",
    "linear_acceleration_z",
    "magnetic_field_x",
    "magnetic_field_y",
    "magnetic_field_z",
    "fluid_pressure",
    "temperature",
    "altitude_error",
    "airspeed_error",
    "tracking_error_x",
    "wp_distance",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySeries {
    feature_name: String,
    timestamps: Vec<f64>,
    values: Vec<f64>,
}

impl TelemetrySeries {
    pub fn new(feature_name: impl Into<String>, timestamps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let feature_name = feature_name.into();
        if timestamps.len() != values.len() {
            return Err(DatasetError::DimensionMismatch {
                expected: timestamps.len(),
                found: values.len(),
            });
        }
        for (i, (t, v)) in timestamps.iter().zip(&values).enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(DatasetError::NonFiniteReading {
                    feature: feature_name,
                    index: i,
                });
            }
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DatasetError::NonMonotonic {
                feature: feature_name,
                index: i + 1,
            });
        }
        Ok(TelemetrySeries {
            feature_name,
            timestamps,
            values,
        })
    }

    pub fn feature_name(&self) -> &str {
        &self.feature_name
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Index range of readings with `lo <= t < hi` (or `<= hi` when `closed`).
    fn range(&self, lo: f64, hi: f64, closed: bool) -> std::ops::Range<usize> {
        let a = self.timestamps.partition_point(|&t| t < lo);
        let b = if closed {
            self.timestamps.partition_point(|&t| t <= hi)
        } else {
            self.timestamps.partition_point(|&t| t < hi)
        };
        a..b.max(a)
    }
}

/// A half-open time bucket `[lo, hi)`; the final bucket of a grid is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    pub label: Label,
}

fn tile(start: f64, end: f64, interval: f64, label: Label, out: &mut Vec<Bucket>) {
    let tol = 1e-9 * interval;
    let mut k = 1u64;
    let mut lo = start;
    loop {
        let edge = start + k as f64 * interval;
        if edge >= end - tol {
            out.push(Bucket { lo, hi: end, label });
            return;
        }
        out.push(Bucket { lo, hi: edge, label });
        lo = edge;
        k += 1;
    }
}

/// Buckets covering `[start, end]`, split at `fault` when given.
///
/// Buckets before the fault are labelled target, those from the fault on are
/// labelled outlier.
pub fn bucket_edges(start: f64, end: f64, fault: Option<f64>, interval: f64) -> Result<Vec<Bucket>> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(DatasetError::BadInterval(interval));
    }
    let mut out = Vec::new();
    match fault {
        Some(f) => {
            if !(f > start && f < end) {
                return Err(DatasetError::FaultOutsideSpan { fault: f, start, end });
            }
            tile(start, f, interval, Label::Target, &mut out);
            tile(f, end, interval, Label::Outlier, &mut out);
        }
        None => tile(start, end, interval, Label::Target, &mut out),
    }
    Ok(out)
}

/// Resamples arbitrary series into one row per bucket, columns in input order.
///
/// Within a bucket one reading is drawn uniformly at random, independently per
/// feature. Empty buckets repeat the previous bucket's value; leading empty
/// buckets take the first value that becomes available.
pub fn resample(series: &[TelemetrySeries], fault_time: Option<f64>, interval: f64, seed: u64) -> Result<Dataset> {
    if series.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    if let Some(s) = series.iter().find(|s| s.is_empty()) {
        return Err(DatasetError::EmptySeries(s.feature_name.clone()));
    }
    let start = series.iter().map(|s| s.timestamps[0]).fold(f64::INFINITY, f64::min);
    let end = series
        .iter()
        .map(|s| *s.timestamps.last().expect("non-empty"))
        .fold(f64::NEG_INFINITY, f64::max);
    let buckets = bucket_edges(start, end, fault_time, interval)?;
    let n = buckets.len();
    let d = series.len();

    let mut values = vec![0.0; n * d];
    for (c, s) in series.iter().enumerate() {
        let mut rng = seed::rng_for(seed, &format!("resample/{}", s.feature_name));
        let mut chosen: Vec<Option<f64>> = Vec::with_capacity(n);
        for (b, bucket) in buckets.iter().enumerate() {
            let r = s.range(bucket.lo, bucket.hi, b + 1 == n);
            chosen.push(if r.is_empty() {
                None
            } else {
                Some(s.values[rng.random_range(r)])
            });
        }
        let first = chosen.iter().flatten().next().copied().expect("series is non-empty and inside the span");
        let mut prev = first;
        for (b, v) in chosen.into_iter().enumerate() {
            let v = v.unwrap_or(prev);
            values[b * d + c] = v;
            prev = v;
        }
    }
    let names = series.iter().map(|s| s.feature_name.clone()).collect();
    Dataset::new(values, names)?.with_labels(buckets.iter().map(|b| b.label).collect())
}

/// Resamples a full telemetry log into the 18-column schema of [`ALFA_FEATURES`].
pub fn resample_alfa(series: &[TelemetrySeries], fault_time: Option<f64>, interval: f64, seed: u64) -> Result<Dataset> {
    let mut ordered: Vec<Option<&TelemetrySeries>> = vec![None; ALFA_FEATURES.len()];
    for s in series {
        let idx = ALFA_FEATURES
            .iter()
            .position(|&f| f == s.feature_name)
            .ok_or_else(|| DatasetError::UnknownFeature(s.feature_name.clone()))?;
        if ordered[idx].replace(s).is_some() {
            return Err(DatasetError::DuplicateFeature(s.feature_name.clone()));
        }
    }
    let ordered: Vec<TelemetrySeries> = ordered
        .into_iter()
        .zip(ALFA_FEATURES)
        .map(|(s, name)| s.cloned().ok_or_else(|| DatasetError::MissingFeature(name.to_string())))
        .collect::<Result<_>>()?;
    resample(&ordered, fault_time, interval, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(buckets: &[Bucket]) -> Vec<f64> {
        let mut e: Vec<f64> = buckets.iter().map(|b| b.lo).collect();
        e.push(buckets.last().unwrap().hi);
        e
    }

    #[test]
    fn grid_is_cut_at_fault() {
        let b = bucket_edges(0.0, 2.0, Some(1.2), 0.25).unwrap();
        let e = edges(&b);
        let expect = [0.0, 0.25, 0.5, 0.75, 1.0, 1.2, 1.45, 1.7, 1.95, 2.0];
        assert_eq!(e.len(), expect.len());
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
        let labels: Vec<i8> = b.iter().map(|b| b.label.value()).collect();
        assert_eq!(labels, [1, 1, 1, 1, 1, -1, -1, -1, -1]);
    }

    #[test]
    fn exact_multiple_does_not_leave_sliver() {
        let b = bucket_edges(0.0, 1.0, None, 0.25).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|b| b.label == Label::Target));
    }

    #[test]
    fn bad_fault_or_interval() {
        assert!(matches!(
            bucket_edges(0.0, 2.0, Some(3.0), 0.25),
            Err(DatasetError::FaultOutsideSpan { .. })
        ));
        assert!(matches!(bucket_edges(0.0, 2.0, None, 0.0), Err(DatasetError::BadInterval(_))));
    }

    #[test]
    fn singleton_buckets_are_deterministic() {
        let s = TelemetrySeries::new("a", vec![0.0, 0.3, 0.55, 1.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        for seed in 0..5 {
            let d = resample(std::slice::from_ref(&s), None, 0.25, seed).unwrap();
            assert_eq!(d.values(), &[1.0, 2.0, 3.0, 4.0]);
        }
    }

    #[test]
    fn empty_middle_bucket_copies_previous() {
        // one reading per bucket except [0.5, 0.75)
        let s = TelemetrySeries::new("a", vec![0.0, 0.3, 0.8, 1.0], vec![1.0, 2.0, 4.0, 5.0]).unwrap();
        let d = resample(std::slice::from_ref(&s), None, 0.25, 9).unwrap();
        assert_eq!(&d.values()[..3], &[1.0, 2.0, 2.0]);
        // final bucket [0.75, 1.0] is closed and holds both 0.8 and 1.0
        let picks: std::collections::HashSet<u64> =
            (0..40).map(|seed| resample(std::slice::from_ref(&s), None, 0.25, seed).unwrap().values()[3] as u64).collect();
        assert_eq!(picks, [4u64, 5].into_iter().collect());
    }

    #[test]
    fn leading_gap_takes_first_available() {
        let a = TelemetrySeries::new("a", vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let b = TelemetrySeries::new("b", vec![0.6, 0.9], vec![7.0, 8.0]).unwrap();
        let d = resample(&[a, b], None, 0.25, 1).unwrap();
        let col_b: Vec<f64> = d.rows().map(|r| r[1]).collect();
        assert_eq!(col_b, [7.0, 7.0, 7.0, 8.0]);
    }

    #[test]
    fn label_flip_at_fault_bucket() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let s = TelemetrySeries::new("a", t.clone(), t.clone()).unwrap();
        let d = resample(&[s], Some(1.2), 0.25, 0).unwrap();
        assert_eq!(d.n_rows(), bucket_edges(0.0, 1.99, Some(1.2), 0.25).unwrap().len());
        let labels = d.labels().unwrap();
        let flip = labels.iter().position(|&l| l == Label::Outlier).unwrap();
        assert_eq!(flip, 5);
        assert!(labels[flip..].iter().all(|&l| l == Label::Outlier));
        // rows before the flip only draw readings taken before the fault
        assert!(d.rows().take(flip).all(|r| r[0] < 1.2));
        assert!(d.rows().skip(flip).all(|r| r[0] >= 1.2));
    }

    #[test]
    fn series_validation() {
        assert!(matches!(
            TelemetrySeries::new("a", vec![0.0, 0.0], vec![1.0, 2.0]),
            Err(DatasetError::NonMonotonic { index: 1, .. })
        ));
        assert!(matches!(
            TelemetrySeries::new("a", vec![0.0], vec![f64::NAN]),
            Err(DatasetError::NonFiniteReading { .. })
        ));
        let empty = TelemetrySeries::new("a", vec![], vec![]).unwrap();
        assert!(matches!(resample(&[empty], None, 0.25, 0), Err(DatasetError::EmptySeries(_))));
    }

    #[test]
    fn alfa_schema_is_enforced() {
        let mk = |name: &str| TelemetrySeries::new(name, vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let mut all: Vec<TelemetrySeries> = ALFA_FEATURES.iter().rev().map(|n| mk(n)).collect();
        let d = resample_alfa(&all, None, 0.25, 0).unwrap();
        assert_eq!(d.n_cols(), 18);
        assert_eq!(d.feature_names()[0], "velocity_x");
        all.pop();
        match resample_alfa(&all, None, 0.25, 0) {
            Err(DatasetError::MissingFeature(f)) => assert_eq!(f, "velocity_x"),
            other => panic!("{other:?}"),
        }
        all.push(mk("bogus"));
        assert!(matches!(resample_alfa(&all, None, 0.25, 0), Err(DatasetError::UnknownFeature(_))));
    }
}
