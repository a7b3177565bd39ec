//! Column standardization and ANOVA F screening.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Column means and scales fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population standard deviation; constant columns get scale 1 so they
    /// map to zero.
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InsufficientData("standardize: no rows".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty").to_vec();
        let scale = x
            .var_axis(Axis(0), 0.0)
            .iter()
            .map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

/// One-way ANOVA F statistic of a column split by binary label.
///
/// Zero within-class variance gives `+inf` when the class means differ and 0
/// when the column is constant.
pub fn anova_f(col: &[f64], y: &[bool]) -> f64 {
    let mut n = [0usize; 2];
    let mut sum = [0.0; 2];
    for (v, &c) in col.iter().zip(y) {
        n[c as usize] += 1;
        sum[c as usize] += v;
    }
    if n[0] == 0 || n[1] == 0 {
        return 0.0;
    }
    let mean = [sum[0] / n[0] as f64, sum[1] / n[1] as f64];
    let grand = (sum[0] + sum[1]) / (n[0] + n[1]) as f64;
    let ssb: f64 = (0..2)
        .map(|c| n[c] as f64 * (mean[c] - grand).powi(2))
        .sum();
    let ssw: f64 = col
        .iter()
        .zip(y)
        .map(|(v, &c)| (v - mean[c as usize]).powi(2))
        .sum();
    let df_w = (n[0] + n[1]) as f64 - 2.0;
    let f = ssb / (ssw / df_w);
    if f.is_nan() {
        0.0
    } else {
        f
    }
}

/// Indices of the `n_keep` columns with the largest F, best first. Ties are
/// broken by column name.
pub fn anova_f_select(
    x: ArrayView2<f64>,
    y: &[bool],
    names: &[String],
    n_keep: usize,
) -> Result<Vec<usize>> {
    if !y.iter().any(|v| *v) || y.iter().all(|v| *v) {
        return Err(Error::InsufficientData(
            "ANOVA selection needs both classes".into(),
        ));
    }
    let scores: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|c| anova_f(&c.to_vec(), y))
        .collect();
    let mut idx: Vec<usize> = (0..x.ncols()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| names[a].cmp(&names[b]))
    });
    idx.truncate(n_keep);
    Ok(idx)
}
