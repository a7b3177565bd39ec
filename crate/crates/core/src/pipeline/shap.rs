//! Exact SHAP values of a linear logit model.
//!
//! With independent features, `φ_j(x) = β_j (x_j − E[x_j])` in logit space and
//! the attributions sum to `logit(x) − logit(E[x])`.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::logreg::LogRegModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapRanking {
    pub features: Vec<String>,
    /// Mean |φ_j| over the evaluation rows, aligned with `features`.
    pub mean_abs: Vec<f64>,
    /// Up to `k` features with nonzero attribution, largest first.
    pub top: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearShap {
    /// Model logit at the background mean.
    pub baseline: f64,
    /// `n_eval × n_features` attributions.
    pub phi: Array2<f64>,
    pub ranking: ShapRanking,
}

pub fn linear_shap(
    model: &LogRegModel,
    eval: ArrayView2<f64>,
    background: ArrayView2<f64>,
    k: usize,
) -> Result<LinearShap> {
    if background.nrows() == 0 {
        return Err(Error::InsufficientData(
            "SHAP background set is empty".into(),
        ));
    }
    let p = model.coef.len();
    if eval.ncols() != p || background.ncols() != p {
        return Err(Error::InvalidArgument(format!(
            "SHAP: model has {p} features, data has {} / {}",
            eval.ncols(),
            background.ncols()
        )));
    }
    let mu = background.mean_axis(Axis(0)).expect("nonempty");
    let baseline = model.logit(mu.view());
    let mut phi = eval.to_owned();
    for (j, mut col) in phi.axis_iter_mut(Axis(1)).enumerate() {
        let (b, m) = (model.coef[j], mu[j]);
        col.mapv_inplace(|x| b * (x - m));
    }
    let n = eval.nrows().max(1) as f64;
    let mean_abs: Vec<f64> = phi
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n)
        .collect();
    let mut order: Vec<usize> = (0..p).filter(|&j| mean_abs[j] > 0.0).collect();
    order.sort_by(|&a, &b| {
        mean_abs[b]
            .total_cmp(&mean_abs[a])
            .then_with(|| model.features[a].cmp(&model.features[b]))
    });
    let top = order
        .into_iter()
        .take(k)
        .map(|j| model.features[j].clone())
        .collect();
    Ok(LinearShap {
        baseline,
        phi,
        ranking: ShapRanking {
            features: model.features.clone(),
            mean_abs,
            top,
        },
    })
}
