use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ockelm_core::dataset::{self, load_csv, one_class_split, LabelColumn, TelemetrySeries};
use ockelm_core::evaluation::{self, GridResult};
use ockelm_core::{Dataset, GridKernel, GridSpec, Hyperparameters, IcaConfig, KernelSpec, Label, Pipeline};
use serde::{Deserialize, Serialize};

use crate::fsutil::{self, write_atomic, write_json};
use crate::model_file::{GridCell, ModelFile, Provenance};
use crate::{Command, GridArg, KernelArg};

/// A flag combination clap cannot reject on its own; exits with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Split {
            input,
            label_col,
            target,
            seed,
            out_dir,
        } => split(&input, &label_col, &target, seed, &out_dir),
        Command::Resample {
            manifest,
            interval,
            seed,
            out,
        } => resample(&manifest, interval, seed, &out),
        Command::Fit {
            train,
            label_col,
            kernel,
            sigma,
            triangle,
            c,
            theta,
            ica,
            seed,
            out,
        } => {
            let hp = Hyperparameters {
                kernel: kernel_spec(kernel, sigma, triangle)?,
                c,
                theta,
                ica: ica_config(ica, seed),
            };
            fit(&train, label_col.as_deref(), &hp, seed, &out)
        }
        Command::Predict {
            model,
            batch,
            label_col,
            out,
        } => predict(&model, &batch, label_col.as_deref(), &out),
        Command::Eval {
            model,
            test,
            label_col,
            out,
        } => eval(&model, &test, &label_col, out.as_deref()),
        Command::Gridsearch {
            train,
            cvpool,
            label_col,
            pool_label_col,
            grid,
            kernel,
            ica,
            seed,
            out,
            summary,
            model_out,
        } => gridsearch(GridArgs {
            train,
            cvpool,
            label_col,
            pool_label_col,
            grid,
            kernel,
            ica: ica_config(ica, seed),
            seed,
            out,
            summary,
            model_out,
        }),
    }
}

fn kernel_spec(kernel: KernelArg, sigma: f64, triangle: Option<f64>) -> Result<KernelSpec> {
    match (kernel, triangle) {
        (KernelArg::Tgak, Some(t)) => Ok(KernelSpec::tgak(sigma, t)),
        (KernelArg::Tgak, None) => Err(usage("--kernel tgak needs --T")),
        (KernelArg::Rbf, None) => Ok(KernelSpec::rbf(sigma)),
        (KernelArg::Rbf, Some(_)) => Err(usage("--T only applies to --kernel tgak")),
    }
}

fn ica_config(flag: Option<Option<usize>>, seed: u64) -> Option<IcaConfig> {
    flag.map(|n| IcaConfig {
        n_components: n,
        seed,
        ..IcaConfig::default()
    })
}

/// Loads feature rows; with a label column, keeps only target rows.
fn load_targets(path: &Path, label_col: Option<&str>) -> Result<Dataset> {
    let label = label_col.map(LabelColumn::signed);
    let data = load_csv(path, label.as_ref()).with_context(|| format!("loading {}", path.display()))?;
    Ok(match data.labels() {
        Some(labels) => {
            let keep: Vec<usize> = (0..data.n_rows()).filter(|&i| labels[i] == Label::Target).collect();
            if keep.len() < data.n_rows() {
                log::info!("{}: dropped {} non-target rows", path.display(), data.n_rows() - keep.len());
            }
            data.select(&keep).without_labels()
        }
        None => data,
    })
}

fn save_csv(path: &Path, data: &Dataset) -> Result<()> {
    write_atomic(path, |w| Ok(dataset::write_csv_to(w, data)?))
}

#[derive(Debug, Serialize)]
struct SplitManifest<'a> {
    input: String,
    input_sha256: String,
    label_col: &'a str,
    target: &'a str,
    seed: u64,
    train_rows: usize,
    test_rows: usize,
    test_targets: usize,
    test_outliers: usize,
    cv_pool_rows: usize,
}

fn split(input: &Path, label_col: &str, target: &str, seed: u64, out_dir: &Path) -> Result<()> {
    let data = load_csv(input, Some(&LabelColumn::with_target(label_col, target)))
        .with_context(|| format!("loading {}", input.display()))?;
    let s = one_class_split(&data, seed)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    save_csv(&out_dir.join("train.csv"), &s.train)?;
    save_csv(&out_dir.join("test.csv"), &s.test)?;
    save_csv(&out_dir.join("cvpool.csv"), &s.cv_pool)?;
    let test_targets = s.test.labels().map_or(0, |l| l.iter().filter(|&&x| x == Label::Target).count());
    let manifest = SplitManifest {
        input: input.display().to_string(),
        input_sha256: fsutil::fingerprint(input)?,
        label_col,
        target,
        seed,
        train_rows: s.train.n_rows(),
        test_rows: s.test.n_rows(),
        test_targets,
        test_outliers: s.test.n_rows() - test_targets,
        cv_pool_rows: s.cv_pool.n_rows(),
    };
    write_json(&out_dir.join("split.json"), &manifest)?;
    println!(
        "train {} rows, test {} rows ({} target), cv pool {} rows",
        manifest.train_rows, manifest.test_rows, test_targets, manifest.cv_pool_rows
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResampleManifest {
    fault_time: Option<f64>,
    /// Feature name to a two-column CSV of timestamp, value.
    features: BTreeMap<String, PathBuf>,
}

fn read_series(name: &str, path: &Path) -> Result<TelemetrySeries> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let (mut ts, mut vs) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if record.len() != 2 {
            bail!("{}: row {} has {} columns, expected timestamp,value", path.display(), i + 1, record.len());
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("{}: row {}: cannot parse {s:?}", path.display(), i + 1))
        };
        ts.push(parse(&record[0])?);
        vs.push(parse(&record[1])?);
    }
    Ok(TelemetrySeries::new(name, ts, vs)?)
}

fn resample(manifest_path: &Path, interval: f64, seed: u64, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: ResampleManifest = toml::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let series = manifest
        .features
        .iter()
        .map(|(name, p)| read_series(name, &base.join(p)))
        .collect::<Result<Vec<_>>>()?;
    let data = dataset::resample_alfa(&series, manifest.fault_time, interval, seed)?;
    save_csv(out, &data)?;
    let normal = data.labels().map_or(0, |l| l.iter().filter(|&&x| x == Label::Target).count());
    println!("{} rows ({normal} normal, {} fault), {} features", data.n_rows(), data.n_rows() - normal, data.n_cols());
    Ok(())
}

fn fit(train_path: &Path, label_col: Option<&str>, hp: &Hyperparameters, seed: u64, out: &Path) -> Result<()> {
    let train = load_targets(train_path, label_col)?;
    let pipeline = Pipeline::fit(&train, hp)?;
    if let Some(t) = &pipeline.ica {
        if !t.converged {
            log::warn!("FastICA stopped after {} iterations without converging", t.iterations_used);
        }
    }
    let provenance = Provenance {
        seed,
        dataset_sha256: fsutil::fingerprint(train_path)?,
        grid_cell: None,
    };
    ModelFile::from_pipeline(&pipeline, train.feature_names().to_vec(), provenance).save(out)?;
    println!(
        "fitted on {} rows, delta {}",
        train.n_rows(),
        pipeline.model.delta()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<(ModelFile, Pipeline)> {
    let file = ModelFile::load(path)?;
    let pipeline = file.to_pipeline().with_context(|| format!("model {}", path.display()))?;
    Ok((file, pipeline))
}

fn load_batch(path: &Path, label_col: Option<&str>, expected: usize) -> Result<Dataset> {
    let label = label_col.map(LabelColumn::signed);
    let data = load_csv(path, label.as_ref()).with_context(|| format!("loading {}", path.display()))?;
    if data.n_cols() != expected {
        bail!(
            "{} has {} feature columns but the model expects d = {expected}",
            path.display(),
            data.n_cols()
        );
    }
    Ok(data)
}

fn predict(model: &Path, batch_path: &Path, label_col: Option<&str>, out: &Path) -> Result<()> {
    let (_, pipeline) = load_model(model)?;
    let batch = load_batch(batch_path, label_col, pipeline.input_dim())?;
    let scores = pipeline.score(&batch)?;
    let delta = pipeline.model.delta();
    write_atomic(out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["output", "error", "label"])?;
        for (o, e) in scores.outputs.iter().zip(&scores.errors) {
            let label = if *e < delta { Label::Target } else { Label::Outlier };
            csv.write_record([o.to_string(), e.to_string(), label.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let flagged = scores.errors.iter().filter(|&&e| e >= delta).count();
    println!("scored {} rows, {flagged} flagged as outliers", batch.n_rows());
    Ok(())
}

fn eval(model: &Path, test_path: &Path, label_col: &str, out: Option<&Path>) -> Result<()> {
    let (file, pipeline) = load_model(model)?;
    let test = load_batch(test_path, Some(label_col), pipeline.input_dim())?;
    let report = evaluation::evaluate(&pipeline, &test, file.provenance.seed)?;
    let c = &report.confusion;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "tp {} fp {} fn {} tn {}", c.tp, c.fp, c.fn_, c.tn)?;
    writeln!(stdout, "precision {:.6}", report.precision)?;
    writeln!(stdout, "recall {:.6}", report.recall)?;
    writeln!(stdout, "f1 {:.6}", report.f1)?;
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(())
}

struct GridArgs {
    train: PathBuf,
    cvpool: PathBuf,
    label_col: Option<String>,
    pool_label_col: String,
    grid: GridArg,
    kernel: KernelArg,
    ica: Option<IcaConfig>,
    seed: u64,
    out: PathBuf,
    summary: Option<PathBuf>,
    model_out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct GridSummary<'a> {
    grid: &'static str,
    kernel: GridKernel,
    seed: u64,
    cells: usize,
    best: &'a evaluation::CellReport,
    hyperparameters: Hyperparameters,
}

fn load_pool(path: &Path, label_col: &str) -> Result<Dataset> {
    let has_labels = fsutil::csv_header(path)?.iter().any(|h| h == label_col);
    let label = has_labels.then(|| LabelColumn::signed(label_col));
    let pool = load_csv(path, label.as_ref()).with_context(|| format!("loading {}", path.display()))?;
    if let Some(labels) = pool.labels() {
        if let Some(i) = labels.iter().position(|&l| l == Label::Target) {
            bail!("{}: row {} is a target row; the CV pool holds outliers only", path.display(), i + 1);
        }
    }
    Ok(pool.without_labels())
}

fn gridsearch(args: GridArgs) -> Result<()> {
    let train = load_targets(&args.train, args.label_col.as_deref())?;
    let pool = load_pool(&args.cvpool, &args.pool_label_col)?;
    let kind = match args.kernel {
        KernelArg::Tgak => GridKernel::Tgak,
        KernelArg::Rbf => GridKernel::Rbf,
    };
    let (grid, grid_name) = match args.grid {
        GridArg::Full => (GridSpec::full(kind), "full"),
        GridArg::Coarse => (GridSpec::coarse(kind), "coarse"),
    };
    let result: GridResult = evaluation::grid_search(&train, &pool, &grid, args.ica.as_ref(), args.seed)?;
    write_atomic(&args.out, |w| Ok(evaluation::write_cells_csv(w, &result.cells)?))?;
    let best = result.best_cell();
    let hp = result.best_hyperparameters(&grid, args.ica.as_ref());
    println!(
        "{} cells; best T={} C={} sigma={} mean F1 {:.6}",
        result.cells.len(),
        best.triangle.map_or_else(|| "-".to_string(), |t| t.to_string()),
        best.c,
        best.sigma,
        best.mean_f1
    );
    if let Some(path) = &args.summary {
        let summary = GridSummary {
            grid: grid_name,
            kernel: kind,
            seed: args.seed,
            cells: result.cells.len(),
            best,
            hyperparameters: hp,
        };
        write_json(path, &summary)?;
    }
    if let Some(path) = &args.model_out {
        let pipeline = Pipeline::fit(&train, &hp)?;
        let provenance = Provenance {
            seed: args.seed,
            dataset_sha256: fsutil::fingerprint(&args.train)?,
            grid_cell: Some(GridCell {
                grid: grid_name.to_string(),
                triangle: best.triangle,
                c: best.c,
                sigma: best.sigma,
                mean_f1: best.mean_f1,
            }),
        };
        ModelFile::from_pipeline(&pipeline, train.feature_names().to_vec(), provenance).save(path)?;
    }
    Ok(())
}
