//! Per-component error statistics in physical units.

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetManifest, Normalization};
use super::model::{forward, RegressorParams};
use crate::error::{Error, Result};
use crate::image::Wrench;

/// MAE and standard deviation of the absolute error for
/// (Fx, Fy, Fz) in N and (Tx, Ty, Tz) in N·m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: [f64; 6],
    pub std: [f64; 6],
    pub n: usize,
    pub selected_epoch: usize,
}

impl EvalReport {
    pub fn from_predictions(predicted: &[Wrench], truth: &[Wrench], selected_epoch: usize) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Dimension(format!("{} predictions for {} labels", predicted.len(), truth.len())));
        }
        if truth.is_empty() {
            return Err(Error::EmptyDataset("nothing to evaluate".into()));
        }
        let n = truth.len() as f64;
        let errs: Vec<[f64; 6]> = predicted
            .iter()
            .zip(truth)
            .map(|(p, t)| {
                let (p, t) = (p.to_array(), t.to_array());
                std::array::from_fn(|k| (p[k] - t[k]).abs())
            })
            .collect();
        let mae: [f64; 6] = std::array::from_fn(|k| errs.iter().map(|e| e[k]).sum::<f64>() / n);
        let std = std::array::from_fn(|k| (errs.iter().map(|e| (e[k] - mae[k]).powi(2)).sum::<f64>() / n).sqrt());
        Ok(Self { mae, std, n: truth.len(), selected_epoch })
    }

    /// Mean over components of `mae[k] / scale[k]`.
    pub fn mean_scaled_mae(&self, scale: &[f64; 6]) -> f64 {
        self.mae.iter().zip(scale).map(|(m, s)| m / s).sum::<f64>() / 6.0
    }
}

/// Denormalized predictions against the manifest's wrenches.
pub fn evaluate(
    params: &RegressorParams,
    test: &DatasetManifest,
    norm: &Normalization,
    selected_epoch: usize,
) -> Result<EvalReport> {
    let inputs = test.load_inputs()?;
    let predicted = inputs
        .iter()
        .map(|x| Ok(norm.denormalize(&forward(params, x)?)))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(&predicted, &test.wrenches(), selected_epoch)
}

/// Constant predictor at the per-component mean of the test wrenches; its
/// MAE is the mean absolute deviation of the test set.
pub fn constant_mean_baseline(test: &DatasetManifest) -> Result<EvalReport> {
    let truth = test.wrenches();
    let mean = Normalization::from_wrenches(&truth)?.mean;
    let predicted = vec![Wrench::from_array(mean); truth.len()];
    EvalReport::from_predictions(&predicted, &truth, 0)
}
