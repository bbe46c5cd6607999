//! WebAssembly bindings behind the static page in `www/`.
//!
//! Three operations: the local-kernel matrix and kernel value for a pair of
//! sequences, a TGAK Gram matrix over a small set of sequences, and a
//! one-class detector fitted to 2-D points and rasterised over a viewport.
//! Everything crosses the boundary as flat `f64` arrays in row-major order.

use ockelm_core::dataset::Dataset;
use ockelm_core::kernels::{self, KernelSpec};
use ockelm_core::ockelm::{self, OckelmModel};
use ockelm_core::Label;
use wasm_bindgen::prelude::*;

fn spec(sigma: f64, triangle: f64) -> Result<KernelSpec, String> {
    // a triangle of 0 selects the RBF kernel
    let spec = if triangle == 0.0 {
        KernelSpec::rbf(sigma)
    } else {
        KernelSpec::tgak(sigma, triangle)
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// Local kernel values and the global kernel for two sequences.
#[wasm_bindgen]
pub struct Alignment {
    rows: usize,
    cols: usize,
    local: Vec<f64>,
    log_kernel: f64,
    normalized: f64,
}

#[wasm_bindgen]
impl Alignment {
    #[wasm_bindgen(constructor)]
    pub fn new(x: &[f64], y: &[f64], sigma: f64, triangle: f64) -> Result<Alignment, String> {
        if triangle == 0.0 {
            return Err("alignment needs a triangle parameter > 0".into());
        }
        let spec = spec(sigma, triangle)?;
        let log_kernel = kernels::log_gak(x, y, &spec).map_err(|e| e.to_string())?;
        let normalized = kernels::gak(x, y, &spec).map_err(|e| e.to_string())?;
        let local = (1..=x.len())
            .flat_map(|i| (1..=y.len()).map(move |j| (i, j)))
            .map(|(i, j)| spec.local(i, x[i - 1], j, y[j - 1]))
            .collect();
        Ok(Alignment {
            rows: x.len(),
            cols: y.len(),
            local,
            log_kernel,
            normalized,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `rows × cols` local kernel values.
    pub fn local(&self) -> Vec<f64> {
        self.local.clone()
    }

    /// Log of the unnormalised kernel.
    #[wasm_bindgen(getter, js_name = logKernel)]
    pub fn log_kernel(&self) -> f64 {
        self.log_kernel
    }

    #[wasm_bindgen(getter)]
    pub fn normalized(&self) -> f64 {
        self.normalized
    }
}

/// Normalised Gram matrix of `values.len() / len` sequences of length `len`.
#[wasm_bindgen]
pub fn gram(values: &[f64], len: usize, sigma: f64, triangle: f64) -> Result<Vec<f64>, String> {
    if len == 0 || values.is_empty() || !values.len().is_multiple_of(len) {
        return Err(format!("{} values do not split into sequences of length {len}", values.len()));
    }
    let data = Dataset::new(values.to_vec(), (0..len).map(|i| format!("t{i}")).collect()).map_err(|e| e.to_string())?;
    let g = kernels::gram_symmetric(&data, &spec(sigma, triangle)?).map_err(|e| e.to_string())?;
    // nalgebra storage is column-major; the matrix is symmetric
    Ok(g.as_slice().to_vec())
}

/// A one-class detector fitted to points in the plane.
#[wasm_bindgen]
pub struct Detector {
    model: OckelmModel,
    train: Dataset,
}

#[wasm_bindgen]
impl Detector {
    /// `points` holds `x0, y0, x1, y1, …`.
    #[wasm_bindgen(constructor)]
    pub fn new(points: &[f64], sigma: f64, triangle: f64, c: f64, theta: f64) -> Result<Detector, String> {
        if points.len() < 4 || !points.len().is_multiple_of(2) {
            return Err("need at least two (x, y) points".into());
        }
        let train = Dataset::new(points.to_vec(), vec!["x".into(), "y".into()]).map_err(|e| e.to_string())?;
        let model = ockelm::fit(&train, &spec(sigma, triangle)?, c, theta).map_err(|e| e.to_string())?;
        Ok(Detector { model, train })
    }

    /// Decision threshold on the error.
    #[wasm_bindgen(getter)]
    pub fn delta(&self) -> f64 {
        self.model.delta()
    }

    /// 1 for training points the model flags as outliers, else 0.
    pub fn flagged(&self) -> Vec<u8> {
        let labels = self.model.predict(&self.train).expect("training rows have the model's width");
        labels.iter().map(|&l| u8::from(l == Label::Outlier)).collect()
    }

    /// Error at the centre of each cell of a `width × height` raster over
    /// `[x0, x1] × [y0, y1]`, rows from `y1` down to `y0`.
    pub fn surface(&self, x0: f64, x1: f64, y0: f64, y1: f64, width: usize, height: usize) -> Vec<f64> {
        let mut values = Vec::with_capacity(2 * width * height);
        for r in 0..height {
            let y = y1 - (r as f64 + 0.5) / height as f64 * (y1 - y0);
            for c in 0..width {
                values.push(x0 + (c as f64 + 0.5) / width as f64 * (x1 - x0));
                values.push(y);
            }
        }
        if values.is_empty() {
            return Vec::new();
        }
        let grid = Dataset::new(values, vec!["x".into(), "y".into()]).expect("raster is two columns wide");
        self.model.score(&grid).expect("raster has the model's width").errors
    }
}
