//! Precision/recall/F1 with the target class as positive, the one-class
//! evaluation protocol, and cross-validated grid search.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{one_class_split, Dataset, Label};
use crate::fastica::IcaConfig;
use crate::kernels::{self, KernelSpec};
use crate::ockelm::{self, decide, score_from_kernel};
use crate::pipeline::{preprocess_fit, preprocess_apply, Hyperparameters, Pipeline};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1; each is 0 when its denominator is 0.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> Metrics {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics { precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// Tallies with [`Label::Target`] as the positive class.
    pub fn tally(truth: &[Label], predicted: &[Label]) -> Confusion {
        assert_eq!(truth.len(), predicted.len());
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Target, Label::Target) => c.tp += 1,
                (Label::Outlier, Label::Target) => c.fp += 1,
                (Label::Target, Label::Outlier) => c.fn_ += 1,
                (Label::Outlier, Label::Outlier) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> Metrics {
        f1_from_counts(self.tp, self.fp, self.fn_)
    }
}

fn f1_of(truth: &[Label], predicted: &[Label]) -> f64 {
    Confusion::tally(truth, predicted).metrics().f1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl EvalReport {
    pub fn new(confusion: Confusion, hyperparameters: Hyperparameters, seed: u64) -> Self {
        let m = confusion.metrics();
        EvalReport {
            confusion,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            hyperparameters,
            seed,
        }
    }
}

/// Predicts `test` and scores against its labels.
pub fn evaluate(pipeline: &Pipeline, test: &Dataset, seed: u64) -> Result<EvalReport> {
    let truth = test.labels().ok_or(crate::dataset::DatasetError::MissingLabels)?;
    let predicted = pipeline.predict(test)?;
    Ok(EvalReport::new(
        Confusion::tally(truth, &predicted),
        pipeline.hyperparameters,
        seed,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKernel {
    Tgak,
    Rbf,
}

/// Hyperparameter axes for the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kernel: GridKernel,
    /// Triangle parameters (ignored for RBF).
    pub t_values: Vec<f64>,
    pub c_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub theta: f64,
    pub folds: usize,
    pub normalize: bool,
}

fn powers(base: f64, exps: impl Iterator<Item = f64>) -> Vec<f64> {
    exps.map(|e| base.powf(e)).collect()
}

impl GridSpec {
    /// T ∈ {2^0, 2^0.5, …, 2^8}, C ∈ {10^-5, …, 10^5}, σ ∈ {2^-6, …, 2^6}, θ = 0.01, 5 folds.
    pub fn full(kernel: GridKernel) -> GridSpec {
        GridSpec {
            kernel,
            t_values: powers(2.0, (0..=16).map(|i| i as f64 * 0.5)),
            c_values: powers(10.0, (-5..=5).map(f64::from)),
            sigma_values: powers(2.0, (-6..=6).map(f64::from)),
            theta: 0.01,
            folds: 5,
            normalize: true,
        }
    }

    /// Every other value of each axis of [`GridSpec::full`].
    pub fn coarse(kernel: GridKernel) -> GridSpec {
        let every_other = |v: Vec<f64>| v.into_iter().step_by(2).collect::<Vec<_>>();
        let full = GridSpec::full(kernel);
        GridSpec {
            t_values: every_other(full.t_values),
            c_values: every_other(full.c_values),
            sigma_values: every_other(full.sigma_values),
            ..full
        }
    }

    fn triangles(&self) -> Vec<Option<f64>> {
        match self.kernel {
            GridKernel::Tgak => self.t_values.iter().map(|&t| Some(t)).collect(),
            GridKernel::Rbf => vec![None],
        }
    }

    pub fn cardinality(&self) -> usize {
        self.triangles().len() * self.c_values.len() * self.sigma_values.len()
    }

    pub fn kernel_spec(&self, triangle: Option<f64>, sigma: f64) -> KernelSpec {
        match triangle {
            Some(t) => KernelSpec::tgak(sigma, t),
            None => KernelSpec::rbf(sigma),
        }
        .normalized(self.normalize)
    }

    fn validate(&self) -> Result<()> {
        let all = self.c_values.iter().chain(&self.sigma_values).chain(&self.t_values);
        if self.folds < 2 || self.c_values.is_empty() || self.sigma_values.is_empty() {
            return Err(Error::InvalidGrid("need at least 2 folds and non-empty C and sigma axes".into()));
        }
        if self.kernel == GridKernel::Tgak && self.t_values.is_empty() {
            return Err(Error::InvalidGrid("TGAK grid needs triangle values".into()));
        }
        if all.into_iter().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::InvalidGrid("all grid values must be positive".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidGrid(format!("theta {} outside (0, 1)", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub triangle: Option<f64>,
    pub c: f64,
    pub sigma: f64,
    pub fold_f1s: Vec<f64>,
    pub mean_f1: f64,
    /// The solver failed on at least one fold; the cell scores 0.
    pub failed: bool,
}

impl CellReport {
    /// Parsimony order among equal scores: smaller C, then σ, then T.
    fn preferred_over(&self, other: &CellReport) -> bool {
        if self.mean_f1 != other.mean_f1 {
            return self.mean_f1 > other.mean_f1;
        }
        let key = |c: &CellReport| (c.c, c.sigma, c.triangle.unwrap_or(0.0));
        let (a, b) = (key(self), key(other));
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .is_lt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: usize,
    /// Ordered by triangle, then C, then σ.
    pub cells: Vec<CellReport>,
}

impl GridResult {
    pub fn best_cell(&self) -> &CellReport {
        &self.cells[self.best]
    }

    pub fn best_hyperparameters(&self, grid: &GridSpec, ica: Option<&IcaConfig>) -> Hyperparameters {
        let b = self.best_cell();
        Hyperparameters {
            kernel: grid.kernel_spec(b.triangle, b.sigma),
            c: b.c,
            theta: grid.theta,
            ica: ica.copied(),
        }
    }
}

/// One cross-validation fold, already passed through preprocessing fitted
/// on its own training targets.
struct Fold {
    train: Dataset,
    validation: Dataset,
    truth: Vec<Label>,
}

/// Cross-validated search over `grid`.
///
/// Targets are dealt into `grid.folds` seeded folds. Each fold fits
/// normalisation (and ICA when configured) and the model on the other folds'
/// targets only, then validates on its own targets plus the whole outlier
/// pool. Outliers never enter a training fold.
pub fn grid_search(
    train_targets: &Dataset,
    cv_outliers: &Dataset,
    grid: &GridSpec,
    ica: Option<&IcaConfig>,
    seed: u64,
) -> Result<GridResult> {
    grid.validate()?;
    let n_t = train_targets.n_rows();
    if grid.folds > n_t {
        return Err(Error::InvalidGrid(format!("{} folds for {n_t} target rows", grid.folds)));
    }
    if cv_outliers.is_empty() {
        log::warn!("empty outlier pool: validation uses held-out targets only");
    } else {
        train_targets.check_dim(cv_outliers.n_cols())?;
    }
    let targets = train_targets.clone().without_labels();
    let outliers = cv_outliers.clone().without_labels();

    let mut order: Vec<usize> = (0..n_t).collect();
    order.shuffle(&mut seed::rng_for(seed, "grid/folds"));
    let mut fold_of = vec![0; n_t];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % grid.folds;
    }
    let folds = (0..grid.folds)
        .map(|f| {
            let train_idx: Vec<usize> = (0..n_t).filter(|&i| fold_of[i] != f).collect();
            let held_idx: Vec<usize> = (0..n_t).filter(|&i| fold_of[i] == f).collect();
            let (norm, ica_t, train) = preprocess_fit(&targets.select(&train_idx), ica)?;
            let mut validation = targets.select(&held_idx);
            if !outliers.is_empty() {
                validation = validation.concat(&outliers)?;
            }
            let validation = preprocess_apply(&norm, ica_t.as_ref(), &validation)?;
            let truth = held_idx
                .iter()
                .map(|_| Label::Target)
                .chain((0..outliers.n_rows()).map(|_| Label::Outlier))
                .collect();
            Ok(Fold { train, validation, truth })
        })
        .collect::<Result<Vec<Fold>>>()?;

    let triangles = grid.triangles();
    let kernel_params: Vec<(usize, Option<f64>, usize, f64)> = triangles
        .iter()
        .enumerate()
        .flat_map(|(ti, &t)| grid.sigma_values.iter().enumerate().map(move |(si, &s)| (ti, t, si, s)))
        .collect();

    let evaluate_params = |&(_, t, _, sigma): &(usize, Option<f64>, usize, f64)| -> Result<Vec<CellReport>> {
        let spec = grid.kernel_spec(t, sigma);
        let per_fold = folds
            .iter()
            .map(|f| Ok((kernels::gram_symmetric(&f.train, &spec)?, kernels::gram(&f.validation, &f.train, &spec)?)))
            .collect::<Result<Vec<(DMatrix<f64>, DMatrix<f64>)>>>()?;
        Ok(grid
            .c_values
            .iter()
            .map(|&c| {
                let mut fold_f1s = Vec::with_capacity(folds.len());
                let mut failed = false;
                for (f, (gt, cross)) in folds.iter().zip(&per_fold) {
                    match ockelm::solve_dual(gt, c, grid.theta) {
                        Ok(sol) => {
                            let s = score_from_kernel(cross, &sol.coefficients);
                            fold_f1s.push(f1_of(&f.truth, &decide(&s.errors, sol.delta)));
                        }
                        Err(e) => {
                            log::debug!("cell T={t:?} C={c} sigma={sigma} failed: {e}");
                            failed = true;
                            fold_f1s.push(0.0);
                        }
                    }
                }
                let mean_f1 = if failed {
                    0.0
                } else {
                    fold_f1s.iter().sum::<f64>() / fold_f1s.len() as f64
                };
                CellReport {
                    triangle: t,
                    c,
                    sigma,
                    fold_f1s,
                    mean_f1,
                    failed,
                }
            })
            .collect())
    };

    #[cfg(feature = "parallel")]
    let computed: Vec<Result<Vec<CellReport>>> = {
        use rayon::prelude::*;
        kernel_params.par_iter().map(evaluate_params).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let computed: Vec<Result<Vec<CellReport>>> = kernel_params.iter().map(evaluate_params).collect();

    // reorder into (triangle, C, σ) cell order
    let (n_c, n_s) = (grid.c_values.len(), grid.sigma_values.len());
    let mut slots: Vec<Option<CellReport>> = vec![None; grid.cardinality()];
    for (&(ti, _, si, _), cells) in kernel_params.iter().zip(computed) {
        for (ci, cell) in cells?.into_iter().enumerate() {
            slots[(ti * n_c + ci) * n_s + si] = Some(cell);
        }
    }
    let cells: Vec<CellReport> = slots.into_iter().map(|c| c.expect("every cell evaluated")).collect();
    let mut best = 0;
    for (i, c) in cells.iter().enumerate().skip(1) {
        if c.preferred_over(&cells[best]) {
            best = i;
        }
    }
    Ok(GridResult { best, cells })
}

fn fmt_value(v: f64) -> String {
    v.to_string()
}

/// Writes the cell table with columns `T,C,sigma,fold_f1s,mean_f1`; fold
/// scores are `;`-separated and `T` is empty for RBF cells.
pub fn write_cells_csv<W: Write>(writer: W, cells: &[CellReport]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| std::io::Error::other(e);
    w.write_record(["T", "C", "sigma", "fold_f1s", "mean_f1"]).map_err(io)?;
    for c in cells {
        let folds: Vec<String> = c.fold_f1s.iter().map(|&v| fmt_value(v)).collect();
        w.write_record([
            c.triangle.map(fmt_value).unwrap_or_default(),
            fmt_value(c.c),
            fmt_value(c.sigma),
            folds.join(";"),
            fmt_value(c.mean_f1),
        ])
        .map_err(io)?;
    }
    w.flush()
}

/// Outcome of one run of the one-class protocol on a labelled dataset.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub grid: GridResult,
    pub pipeline: Pipeline,
    pub report: EvalReport,
}

/// Split, tune on the training half plus the reserved outlier pool, refit the
/// best cell on the whole training half and evaluate on the test set.
pub fn run_experiment(data: &Dataset, grid: &GridSpec, ica: Option<&IcaConfig>, seed: u64) -> Result<Experiment> {
    let split = one_class_split(data, seed)?;
    let ica = ica.map(|c| IcaConfig { seed, ..*c });
    let result = grid_search(&split.train, &split.cv_pool, grid, ica.as_ref(), seed)?;
    let hp = result.best_hyperparameters(grid, ica.as_ref());
    let pipeline = Pipeline::fit(&split.train, &hp)?;
    let report = evaluate(&pipeline, &split.test, seed)?;
    Ok(Experiment {
        grid: result,
        pipeline,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_from_counts(10, 0, 0), Metrics { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(f1_from_counts(0, 3, 2), Metrics { precision: 0.0, recall: 0.0, f1: 0.0 });
        let m = f1_from_counts(8, 2, 4);
        assert_abs_diff_eq!(m.precision, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(m.recall, 2.0 / 3.0, epsilon = 1e-15);
        // 2·0.8·(2/3) / (0.8 + 2/3) = 16/22
        assert_abs_diff_eq!(m.f1, 16.0 / 22.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.f1, 0.7273, epsilon = 1e-4);
        assert_eq!(f1_from_counts(0, 0, 0).f1, 0.0);
    }

    #[test]
    fn f1_is_harmonic_mean() {
        for tp in 1..6 {
            for fp in 0..5 {
                for fn_ in 0..5 {
                    let m = f1_from_counts(tp, fp, fn_);
                    let h = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
                    assert!((m.f1 - h).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn confusion_tally() {
        use Label::*;
        let c = Confusion::tally(&[Target, Target, Outlier, Outlier], &[Target, Outlier, Target, Outlier]);
        assert_eq!(c, Confusion { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn grid_sizes() {
        let full = GridSpec::full(GridKernel::Tgak);
        assert_eq!((full.t_values.len(), full.c_values.len(), full.sigma_values.len()), (17, 11, 13));
        assert_eq!(full.cardinality(), 2431);
        assert_eq!(full.t_values[1], 2f64.sqrt());
        assert_eq!(full.t_values[16], 256.0);
        assert_eq!(full.c_values[0], 1e-5);
        assert_eq!(full.sigma_values[0], 1.0 / 64.0);
        let coarse = GridSpec::coarse(GridKernel::Tgak);
        assert_eq!(coarse.cardinality(), 9 * 6 * 7);
        assert!(coarse.t_values.iter().all(|t| full.t_values.contains(t)));
        assert_eq!(GridSpec::full(GridKernel::Rbf).cardinality(), 11 * 13);
    }

    pub(crate) fn blobs(seed: u64, n_t: usize, n_o: usize, d: usize) -> (Dataset, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mk = |n: usize, shift: f64| {
            let values: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
            Dataset::new(values, crate::dataset::default_names(d)).unwrap()
        };
        let t = mk(n_t, 0.0);
        let o = mk(n_o, 3.0);
        let labels = vec![Label::Outlier; n_o];
        (t, o.with_labels(labels).unwrap())
    }

    fn tiny_grid() -> GridSpec {
        GridSpec {
            kernel: GridKernel::Tgak,
            t_values: vec![2.0, 8.0],
            c_values: vec![0.1, 10.0],
            sigma_values: vec![0.5, 2.0],
            theta: 0.05,
            folds: 3,
            normalize: true,
        }
    }

    #[test]
    fn single_cell_grid_returns_it() {
        let (t, o) = blobs(1, 20, 10, 4);
        let grid = GridSpec {
            t_values: vec![4.0],
            c_values: vec![1.0],
            sigma_values: vec![1.0],
            ..tiny_grid()
        };
        let r = grid_search(&t, &o, &grid, None, 0).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.best, 0);
        assert_eq!(r.best_cell().fold_f1s.len(), 3);
    }

    #[test]
    fn grid_is_deterministic_and_ordered() {
        let (t, o) = blobs(2, 24, 12, 4);
        let grid = tiny_grid();
        let a = grid_search(&t, &o, &grid, None, 5).unwrap();
        let b = grid_search(&t, &o, &grid, None, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 8);
        assert_eq!((a.cells[0].triangle, a.cells[0].c, a.cells[0].sigma), (Some(2.0), 0.1, 0.5));
        assert_eq!((a.cells[1].triangle, a.cells[1].c, a.cells[1].sigma), (Some(2.0), 0.1, 2.0));
        assert_eq!((a.cells[2].triangle, a.cells[2].c), (Some(2.0), 10.0));
        let best = a.best_cell().mean_f1;
        assert!(a.cells.iter().all(|c| (0.0..=1.0).contains(&c.mean_f1) && c.mean_f1 <= best));
    }

    #[test]
    fn subset_grid_never_scores_higher() {
        let (t, o) = blobs(3, 24, 12, 3);
        let grid = tiny_grid();
        let full = grid_search(&t, &o, &grid, None, 1).unwrap();
        let sub = GridSpec {
            t_values: vec![8.0],
            c_values: vec![0.1],
            ..tiny_grid()
        };
        let part = grid_search(&t, &o, &sub, None, 1).unwrap();
        assert!(part.best_cell().mean_f1 <= full.best_cell().mean_f1);
    }

    #[test]
    fn ties_prefer_parsimony() {
        let mk = |t: f64, c: f64, s: f64, f: f64| CellReport {
            triangle: Some(t),
            c,
            sigma: s,
            fold_f1s: vec![f],
            mean_f1: f,
            failed: false,
        };
        assert!(mk(4.0, 0.1, 1.0, 0.9).preferred_over(&mk(1.0, 1.0, 0.5, 0.9)));
        assert!(mk(4.0, 1.0, 0.5, 0.9).preferred_over(&mk(1.0, 1.0, 1.0, 0.9)));
        assert!(mk(1.0, 1.0, 1.0, 0.9).preferred_over(&mk(4.0, 1.0, 1.0, 0.9)));
        assert!(mk(4.0, 10.0, 1.0, 0.95).preferred_over(&mk(1.0, 0.1, 0.5, 0.9)));
    }

    #[test]
    fn empty_pool_still_runs() {
        let (t, o) = blobs(4, 15, 0, 3);
        let r = grid_search(&t, &o, &tiny_grid(), None, 0).unwrap();
        assert_eq!(r.cells.len(), 8);
    }

    #[test]
    fn grid_validation() {
        let (t, o) = blobs(5, 4, 3, 3);
        let mut g = tiny_grid();
        g.folds = 5;
        assert!(matches!(grid_search(&t, &o, &g, None, 0), Err(Error::InvalidGrid(_))));
        g.folds = 1;
        assert!(matches!(grid_search(&t, &o, &g, None, 0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn cells_csv_layout() {
        let cells = vec![CellReport {
            triangle: None,
            c: 0.001,
            sigma: 0.25,
            fold_f1s: vec![0.5, 1.0],
            mean_f1: 0.75,
            failed: false,
        }];
        let mut buf = Vec::new();
        write_cells_csv(&mut buf, &cells).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "T,C,sigma,fold_f1s,mean_f1\n,0.001,0.25,0.5;1,0.75\n");
    }
}
