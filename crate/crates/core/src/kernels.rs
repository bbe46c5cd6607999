//! Similarity functions: the RBF kernel, the triangular global alignment kernel
//! (TGAK), dynamic time warping, and Gram-matrix assembly.
//!
//! Every instance vector is read as a univariate sequence indexed by feature
//! position, so the alignment kernels compare two rows of a [`Dataset`] as two
//! time series of length `d`.
//!
//! The global alignment kernel sums, over every monotone alignment path from
//! `(1, 1)` to `(m, n)`, the product of local kernel values along the path. It
//! is evaluated exactly by the recurrence
//!
//! ```text
//! M(i, j) = κ(i, j) · (M(i-1, j) + M(i, j-1) + M(i-1, j-1)),   M(0, 0) = 1
//! ```
//!
//! carried out in log space, because path counts grow exponentially while local
//! values can be arbitrarily small.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("sequences must be non-empty")]
    EmptySequence,
    #[error("kernel width sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("triangle parameter T must be positive, got {0}")]
    InvalidTriangle(f64),
    #[error("alignment enumeration limited to m + n <= {max}, got {m} + {n}")]
    EnumerationTooLarge { m: usize, n: usize, max: usize },
}

pub type Result<T, E = KernelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelKind {
    /// Gaussian kernel on whole instance vectors.
    Rbf,
    /// Triangular global alignment kernel with triangle parameter `triangle`.
    /// `f64::INFINITY` disables the positional truncation.
    Tgak { triangle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: f64,
    /// Geometric normalisation `k(x,y) / sqrt(k(x,x) k(y,y))` of the sequence kernel.
    pub normalize: bool,
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Rbf,
            sigma,
            normalize: true,
        }
    }

    pub fn tgak(sigma: f64, triangle: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Tgak { triangle },
            sigma,
            normalize: true,
        }
    }

    pub fn normalized(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn triangle(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Rbf => None,
            KernelKind::Tgak { triangle } => Some(triangle),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(KernelError::InvalidSigma(self.sigma));
        }
        if let KernelKind::Tgak { triangle } = self.kind {
            if triangle.is_nan() || triangle <= 0.0 {
                return Err(KernelError::InvalidTriangle(triangle));
            }
        }
        Ok(())
    }

    /// Log of the local kernel between position `i` of one sequence and `j`
    /// of the other (1-based); `-inf` where the local kernel vanishes.
    #[inline]
    fn log_local(&self, i: usize, xi: f64, j: usize, yj: f64) -> f64 {
        let diff = xi - yj;
        let log_rbf = -(diff * diff) / (2.0 * self.sigma * self.sigma);
        match self.kind {
            KernelKind::Rbf => log_rbf,
            KernelKind::Tgak { triangle } => {
                let w = triangular_weight(i, j, triangle);
                if w <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let t = w * log_rbf.exp();
                w.ln() + log_rbf - (2.0 - t).ln()
            }
        }
    }

    /// Local kernel value in linear space.
    pub fn local(&self, i: usize, xi: f64, j: usize, yj: f64) -> f64 {
        match self.kind {
            KernelKind::Rbf => gaussian(xi - yj, self.sigma),
            KernelKind::Tgak { triangle } => tgak_local(i, xi, j, yj, self.sigma, triangle),
        }
    }
}

#[inline]
fn gaussian(diff: f64, sigma: f64) -> f64 {
    (-(diff * diff) / (2.0 * sigma * sigma)).exp()
}

/// `exp(-||x - y||² / (2σ²))`.
pub fn rbf(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(KernelError::DimensionMismatch(x.len(), y.len()));
    }
    Ok(rbf_unchecked(x, y, sigma))
}

#[inline]
fn rbf_unchecked(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// `max(1 - |i - j| / T, 0)` for 1-based positions.
#[inline]
pub fn triangular_weight(i: usize, j: usize, triangle: f64) -> f64 {
    (1.0 - i.abs_diff(j) as f64 / triangle).max(0.0)
}

/// TGAK local kernel `t / (2 - t)` with `t = ω(i, j) · k_σ(x_i, y_j)`.
pub fn tgak_local(i: usize, xi: f64, j: usize, yj: f64, sigma: f64, triangle: f64) -> f64 {
    let w = triangular_weight(i, j, triangle);
    if w == 0.0 {
        return 0.0;
    }
    let t = w * gaussian(xi - yj, sigma);
    t / (2.0 - t)
}

/// A monotone alignment between two sequences, as 1-based index pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
}

impl AlignmentPath {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Largest `m + n` accepted by [`enumerate_alignments`].
pub const ENUMERATION_LIMIT: usize = 12;

/// Every alignment path between sequences of lengths `m` and `n`.
///
/// Paths start at `(1, 1)`, end at `(m, n)` and advance each index by 0 or 1
/// per step, never standing still. Exponential; meant as a test oracle.
pub fn enumerate_alignments(m: usize, n: usize) -> Result<Vec<AlignmentPath>> {
    if m == 0 || n == 0 {
        return Err(KernelError::EmptySequence);
    }
    if m + n > ENUMERATION_LIMIT {
        return Err(KernelError::EnumerationTooLarge {
            m,
            n,
            max: ENUMERATION_LIMIT,
        });
    }
    fn walk(m: usize, n: usize, path: &mut Vec<(usize, usize)>, out: &mut Vec<AlignmentPath>) {
        let (i, j) = *path.last().expect("path starts non-empty");
        if (i, j) == (m, n) {
            out.push(AlignmentPath { pairs: path.clone() });
            return;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            if i + di <= m && j + dj <= n {
                path.push((i + di, j + dj));
                walk(m, n, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(m, n, &mut vec![(1, 1)], &mut out);
    Ok(out)
}

/// Dynamic time warping distance with squared-difference local cost.
pub fn dtw(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(KernelError::EmptySequence);
    }
    let n = y.len();
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut cur = vec![f64::INFINITY; n + 1];
    prev[0] = 0.0;
    for &xi in x {
        cur[0] = f64::INFINITY;
        for j in 1..=n {
            let cost = (xi - y[j - 1]) * (xi - y[j - 1]);
            cur[j] = cost + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[n])
}

/// `ln(e^a + e^b + e^c)`, exact when all three are `-inf`.
#[inline]
fn log_sum3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

fn check_pair(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(KernelError::EmptySequence);
    }
    spec.validate()
}

/// Natural log of the unnormalised global alignment kernel.
pub fn log_gak(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_pair(x, y, spec)?;
    Ok(log_gak_unchecked(x, y, spec))
}

fn log_gak_unchecked(x: &[f64], y: &[f64], spec: &KernelSpec) -> f64 {
    let (x, y) = canonical(x, y);
    scaled_log_gak(x, y, spec, false).unwrap_or_else(|| log_space_gak(x, y, spec))
}

/// Like [`log_gak_unchecked`] but treats local kernels below `e^-700` as zero.
/// Each dropped path weighs less than `e^-700`, far below anything a Gram
/// matrix entry can resolve, so only tiny unnormalised values lose accuracy.
fn log_gak_gram(x: &[f64], y: &[f64], spec: &KernelSpec) -> f64 {
    let (x, y) = canonical(x, y);
    scaled_log_gak(x, y, spec, true).expect("negligible locals are dropped")
}

/// Fixed argument order, so every kernel value is bitwise symmetric.
fn canonical<'a>(x: &'a [f64], y: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    let order = x.len().cmp(&y.len()).then_with(|| {
        x.iter()
            .zip(y)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if order.is_gt() {
        (y, x)
    } else {
        (x, y)
    }
}

fn band(spec: &KernelSpec) -> usize {
    // Positions farther apart than the triangle never contribute.
    match spec.kind {
        KernelKind::Tgak { triangle } if triangle.is_finite() => triangle.ceil() as usize,
        _ => usize::MAX,
    }
}

/// `2^k` built from its bit pattern, for `k` in the normal exponent range.
#[inline]
fn pow2(k: i32) -> f64 {
    f64::from_bits(((1023 + k) as u64) << 52)
}

/// Linear-space recurrence with power-of-two row rescaling. Unless
/// `drop_negligible` is set, returns `None` as soon as a local kernel or a
/// cell leaves the normal range, where only the log-space recurrence keeps
/// relative accuracy.
fn scaled_log_gak(x: &[f64], y: &[f64], spec: &KernelSpec, drop_negligible: bool) -> Option<f64> {
    let n = y.len();
    let band = band(spec);
    let inv = -1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut prev = vec![0.0; n + 1];
    let mut cur = vec![0.0; n + 1];
    prev[0] = 1.0;
    let mut log2_scale = 0i64;
    for (i0, &xi) in x.iter().enumerate() {
        let i = i0 + 1;
        cur.fill(0.0);
        let lo = i.saturating_sub(band.saturating_sub(1)).max(1);
        let hi = i.saturating_add(band.saturating_sub(1)).min(n);
        let mut top = 0.0f64;
        for j in lo..=hi {
            let diff = xi - y[j - 1];
            let arg = diff * diff * inv;
            if arg < -700.0 {
                if drop_negligible {
                    continue;
                }
                return None;
            }
            let g = arg.exp();
            let k = match spec.kind {
                KernelKind::Rbf => g,
                KernelKind::Tgak { triangle } => {
                    let t = triangular_weight(i, j, triangle) * g;
                    t / (2.0 - t)
                }
            };
            let sum = prev[j] + cur[j - 1] + prev[j - 1];
            cur[j] = k * sum;
            if !drop_negligible && cur[j] < f64::MIN_POSITIVE && sum > 0.0 {
                return None;
            }
            top = top.max(cur[j]);
        }
        if top == 0.0 {
            return Some(f64::NEG_INFINITY);
        }
        if !(pow2(-64)..pow2(64)).contains(&top) {
            let e = top.log2().floor() as i32;
            let f = pow2(-e);
            cur[lo..=hi].iter_mut().for_each(|v| *v *= f);
            log2_scale += i64::from(e);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let l = if prev[n] == 0.0 {
        f64::NEG_INFINITY
    } else {
        prev[n].ln() + log2_scale as f64 * std::f64::consts::LN_2
    };
    Some(l)
}

fn log_space_gak(x: &[f64], y: &[f64], spec: &KernelSpec) -> f64 {
    let n = y.len();
    let band = band(spec);
    let mut prev = vec![f64::NEG_INFINITY; n + 1];
    let mut cur = vec![f64::NEG_INFINITY; n + 1];
    prev[0] = 0.0;
    for (i0, &xi) in x.iter().enumerate() {
        let i = i0 + 1;
        cur.fill(f64::NEG_INFINITY);
        let lo = i.saturating_sub(band.saturating_sub(1)).max(1);
        let hi = i.saturating_add(band.saturating_sub(1)).min(n);
        for j in lo..=hi {
            let lk = spec.log_local(i, xi, j, y[j - 1]);
            if lk == f64::NEG_INFINITY {
                continue;
            }
            cur[j] = lk + log_sum3(prev[j], cur[j - 1], prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// Global alignment kernel value; normalised when `spec.normalize` is set.
pub fn gak(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_pair(x, y, spec)?;
    let lxy = log_gak_unchecked(x, y, spec);
    if !spec.normalize {
        return Ok(lxy.exp());
    }
    let lxx = log_gak_unchecked(x, x, spec);
    let lyy = log_gak_unchecked(y, y, spec);
    assert!(lxx.is_finite() && lyy.is_finite(), "self-alignment kernel vanished");
    Ok(normalized(lxy, lxx, lyy))
}

#[inline]
fn normalized(lxy: f64, lxx: f64, lyy: f64) -> f64 {
    if lxy == f64::NEG_INFINITY {
        return 0.0;
    }
    (lxy - 0.5 * (lxx + lyy)).exp()
}

/// Linear-space evaluation of the same recurrence, unnormalised. Underflows
/// for long or dissimilar sequences; kept as a reference for short inputs.
pub fn gak_linear(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_pair(x, y, spec)?;
    let (m, n) = (x.len(), y.len());
    let mut table = vec![vec![0.0; n + 1]; m + 1];
    table[0][0] = 1.0;
    for i in 1..=m {
        for j in 1..=n {
            let k = spec.local(i, x[i - 1], j, y[j - 1]);
            table[i][j] = k * (table[i - 1][j] + table[i][j - 1] + table[i - 1][j - 1]);
        }
    }
    Ok(table[m][n])
}

/// Rows of a dataset together with what the kernel needs per row.
struct Prepared<'a> {
    data: &'a Dataset,
    log_self: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(data: &'a Dataset, spec: &KernelSpec) -> Self {
        let log_self = match spec.kind {
            KernelKind::Tgak { .. } if spec.normalize => {
                data.rows().map(|r| log_gak_gram(r, r, spec)).collect()
            }
            _ => Vec::new(),
        };
        Prepared { data, log_self }
    }

    #[inline]
    fn entry(&self, i: usize, other: &Prepared<'_>, j: usize, spec: &KernelSpec) -> f64 {
        let (x, y) = (self.data.row(i), other.data.row(j));
        match spec.kind {
            KernelKind::Rbf => rbf_unchecked(x, y, spec.sigma),
            KernelKind::Tgak { .. } => {
                let l = log_gak_gram(x, y, spec);
                if spec.normalize {
                    normalized(l, self.log_self[i], other.log_self[j])
                } else {
                    l.exp()
                }
            }
        }
    }

    fn self_entry(&self, i: usize, spec: &KernelSpec) -> f64 {
        match spec.kind {
            KernelKind::Rbf => 1.0,
            KernelKind::Tgak { .. } if spec.normalize => 1.0,
            KernelKind::Tgak { .. } => {
                let r = self.data.row(i);
                log_gak_gram(r, r, spec).exp()
            }
        }
    }
}

fn check_gram(a: &Dataset, b: &Dataset, spec: &KernelSpec) -> Result<()> {
    spec.validate()?;
    if a.n_cols() != b.n_cols() {
        return Err(KernelError::DimensionMismatch(a.n_cols(), b.n_cols()));
    }
    Ok(())
}

fn assemble_rows(a: &Prepared<'_>, b: &Prepared<'_>, spec: &KernelSpec, parallel: bool) -> Vec<Vec<f64>> {
    let row = |i: usize| (0..b.data.n_rows()).map(|j| a.entry(i, b, j, spec)).collect::<Vec<f64>>();
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..a.data.n_rows()).into_par_iter().map(row).collect();
    }
    let _ = parallel;
    (0..a.data.n_rows()).map(row).collect()
}

fn cross(a: &Dataset, b: &Dataset, spec: &KernelSpec, parallel: bool) -> Result<DMatrix<f64>> {
    check_gram(a, b, spec)?;
    let pa = Prepared::new(a, spec);
    let pb = Prepared::new(b, spec);
    let rows = assemble_rows(&pa, &pb, spec, parallel);
    Ok(DMatrix::from_fn(a.n_rows(), b.n_rows(), |i, j| rows[i][j]))
}

/// Kernel matrix between every row of `a` and every row of `b`.
///
/// Rows are evaluated concurrently when the `parallel` feature is enabled; the
/// result does not depend on evaluation order.
pub fn gram(a: &Dataset, b: &Dataset, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    cross(a, b, spec, true)
}

/// Single-threaded [`gram`].
pub fn gram_serial(a: &Dataset, b: &Dataset, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    cross(a, b, spec, false)
}

/// Symmetric kernel matrix of `a` against itself. Only the upper triangle is
/// evaluated; the diagonal is exactly 1 for normalised kernels.
pub fn gram_symmetric(a: &Dataset, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    check_gram(a, a, spec)?;
    let p = Prepared::new(a, spec);
    let n = a.n_rows();
    let upper = |i: usize| {
        let mut row = Vec::with_capacity(n - i);
        row.push(p.self_entry(i, spec));
        row.extend((i + 1..n).map(|j| p.entry(i, &p, j, spec)));
        row
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(upper).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..n).map(upper).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i <= j {
            rows[i][j - i]
        } else {
            rows[j][i - j]
        }
    }))
}
