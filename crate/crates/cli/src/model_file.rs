//! On-disk model format: one JSON document holding everything prediction
//! needs, including the training rows the dual model scores against.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ockelm_core::fastica::IcaConfig;
use ockelm_core::{Dataset, Hyperparameters, IcaTransform, KernelSpec, NormStats, OckelmModel, Pipeline};
use serde::{Deserialize, Serialize};

use crate::fsutil;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub grid: String,
    #[serde(rename = "T")]
    pub triangle: Option<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    pub sigma: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the training CSV.
    pub dataset_sha256: String,
    pub grid_cell: Option<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub norm_stats: NormStats,
    pub ica_config: Option<IcaConfig>,
    pub ica: Option<IcaTransform>,
    pub kernel: KernelSpec,
    #[serde(rename = "C")]
    pub c: f64,
    pub theta: f64,
    pub delta: f64,
    pub a: Vec<f64>,
    pub train_rows: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn from_pipeline(p: &Pipeline, feature_names: Vec<String>, provenance: Provenance) -> ModelFile {
        let m = &p.model;
        ModelFile {
            format_version: FORMAT_VERSION,
            feature_names,
            norm_stats: p.norm.clone(),
            ica_config: p.hyperparameters.ica,
            ica: p.ica.clone(),
            kernel: *m.spec(),
            c: m.c(),
            theta: m.theta(),
            delta: m.delta(),
            a: m.coefficients().to_vec(),
            train_rows: m.train_rows().rows().map(<[f64]>::to_vec).collect(),
            provenance,
        }
    }

    pub fn to_pipeline(&self) -> Result<Pipeline> {
        let names = match &self.ica {
            Some(t) => (0..t.n_components).map(|i| format!("ic{i}")).collect(),
            None => self.feature_names.clone(),
        };
        let values = self.train_rows.iter().flatten().copied().collect();
        let rows = Dataset::new(values, names).context("model training rows")?;
        let model = OckelmModel::from_parts(rows, self.kernel, self.c, self.theta, self.a.clone(), self.delta)?;
        let pipeline = Pipeline {
            norm: self.norm_stats.clone(),
            ica: self.ica.clone(),
            hyperparameters: Hyperparameters {
                kernel: self.kernel,
                c: self.c,
                theta: self.theta,
                ica: self.ica_config,
            },
            model,
        };
        pipeline.validate()?;
        if self.feature_names.len() != pipeline.input_dim() {
            bail!(
                "model lists {} feature names for {} inputs",
                self.feature_names.len(),
                pipeline.input_dim()
            );
        }
        Ok(pipeline)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
        let probe: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))?;
        match probe.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => bail!("model {} has format_version {v}, expected {FORMAT_VERSION}", path.display()),
            None => bail!("model {} has no format_version", path.display()),
        }
        Ok(serde_json::from_value(probe)?)
    }
}
