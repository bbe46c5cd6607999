//! End-to-end detector: z-score normalisation, optional FastICA reconstruction,
//! then the one-class model. All transforms are fitted on training data only
//! and frozen into the pipeline.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, NormStats};
use crate::fastica::{ica_fit, IcaConfig, IcaTransform};
use crate::kernels::KernelSpec;
use crate::ockelm::{self, OckelmModel, ScoreVector};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub kernel: KernelSpec,
    pub c: f64,
    pub theta: f64,
    pub ica: Option<IcaConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub norm: NormStats,
    pub ica: Option<IcaTransform>,
    pub hyperparameters: Hyperparameters,
    pub model: OckelmModel,
}

/// Normalisation and optional ICA fitted on `train`, plus the transformed rows.
pub(crate) fn preprocess_fit(train: &Dataset, ica: Option<&IcaConfig>) -> Result<(NormStats, Option<IcaTransform>, Dataset)> {
    let norm = NormStats::fit(train)?;
    let z = norm.apply(train)?;
    match ica {
        Some(cfg) => {
            let t = ica_fit(&z, cfg)?;
            let s = t.transform(&z)?;
            Ok((norm, Some(t), s))
        }
        None => Ok((norm, None, z)),
    }
}

pub(crate) fn preprocess_apply(norm: &NormStats, ica: Option<&IcaTransform>, batch: &Dataset) -> Result<Dataset> {
    let z = norm.apply(batch)?;
    Ok(match ica {
        Some(t) => t.transform(&z)?,
        None => z,
    })
}

impl Pipeline {
    pub fn fit(train: &Dataset, hp: &Hyperparameters) -> Result<Pipeline> {
        let (norm, ica, rows) = preprocess_fit(train, hp.ica.as_ref())?;
        let model = ockelm::fit(&rows, &hp.kernel, hp.c, hp.theta)?;
        Ok(Pipeline {
            norm,
            ica,
            hyperparameters: *hp,
            model,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.norm.dim()
    }

    /// Applies the frozen normalisation and ICA transform.
    pub fn transform(&self, batch: &Dataset) -> Result<Dataset> {
        preprocess_apply(&self.norm, self.ica.as_ref(), batch)
    }

    pub fn score(&self, batch: &Dataset) -> Result<ScoreVector> {
        Ok(self.model.score(&self.transform(batch)?)?)
    }

    pub fn predict(&self, batch: &Dataset) -> Result<Vec<Label>> {
        Ok(ockelm::decide(&self.score(batch)?.errors, self.model.delta()))
    }

    /// Structural consistency after deserialization.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let mid = match &self.ica {
            Some(t) => {
                t.validate()?;
                if t.input_dim() != self.norm.dim() {
                    return Err(crate::Error::Inconsistent(format!(
                        "ICA expects {} inputs but normalisation has {}",
                        t.input_dim(),
                        self.norm.dim()
                    )));
                }
                t.n_components
            }
            None => self.norm.dim(),
        };
        if mid != self.model.dim() || self.norm.std.len() != self.norm.dim() {
            return Err(crate::Error::Inconsistent(format!(
                "model expects {} features, preprocessing yields {mid}",
                self.model.dim()
            )));
        }
        Ok(())
    }
}
