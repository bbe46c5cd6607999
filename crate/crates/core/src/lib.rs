//! One-class extreme learning machine with the triangular global alignment
//! kernel, FastICA preprocessing and a grid-searched evaluation protocol.
//!
//! ```
//! use ockelm_core::{Dataset, KernelSpec, Label};
//!
//! let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 5) as f64, (i % 3) as f64]).collect();
//! let train = Dataset::from_rows(&rows).unwrap();
//! let model = ockelm_core::ockelm::fit(&train, &KernelSpec::tgak(1.0, 2.0), 10.0, 0.05).unwrap();
//! let far = Dataset::from_rows(&[[40.0, -40.0]]).unwrap();
//! assert_eq!(model.predict(&far).unwrap(), vec![Label::Outlier]);
//! ```

pub mod dataset;
pub mod evaluation;
pub mod fastica;
pub mod kernels;
pub mod ockelm;
pub mod pipeline;
pub mod seed;

pub use dataset::{Dataset, DatasetError, Label, NormStats};
pub use evaluation::{EvalReport, GridKernel, GridSpec};
pub use fastica::{IcaConfig, IcaError, IcaTransform};
pub use kernels::{KernelError, KernelKind, KernelSpec};
pub use ockelm::{OckelmError, OckelmModel};
pub use pipeline::{Hyperparameters, Pipeline};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Ockelm(#[from] OckelmError),
    #[error(transparent)]
    Ica(#[from] IcaError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("inconsistent pipeline: {0}")]
    Inconsistent(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
