//! Feature z-scoring and parametric ComBat batch harmonization.
//!
//! ComBat follows the usual location/scale model without covariates:
//! features are standardized with the grand mean and pooled within-batch
//! variance, per-batch additive (`gamma`) and multiplicative (`delta`)
//! effects are estimated and shrunk toward normal / inverse-gamma priors by
//! iterated conditional modes, and the data are mapped back to the original
//! scale after removing the shrunk effects.
//!
//! Batch variances `delta_hat` use the population (divide by `n`) form, the
//! same normalization as the pooled variance. With that choice two batches
//! holding identical data are left exactly unchanged.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::table::FeatureTable;

/// Per-feature z-score parameters fitted on a training table.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ZScore {
    /// Population mean and standard deviation per column.
    pub fn fit(train: &FeatureTable) -> Result<ZScore> {
        if train.n_rows() == 0 {
            return Err(Error::InsufficientData(
                "z-score fit on an empty table".into(),
            ));
        }
        let v = train.values();
        let mean = v.mean_axis(Axis(0)).expect("nonempty");
        let sd: Vec<f64> = (0..v.ncols())
            .map(|j| {
                let m = mean[j];
                (v.column(j).iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.nrows() as f64).sqrt()
            })
            .collect();
        Ok(ZScore {
            columns: train.columns().to_vec(),
            mean: mean.to_vec(),
            sd,
        })
    }

    /// Columns with zero training spread; they are only centered.
    pub fn constant_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .zip(&self.sd)
            .filter(|(_, &s)| s == 0.0)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn apply(&self, table: &FeatureTable) -> Result<FeatureTable> {
        let idx: Vec<usize> = table
            .columns()
            .iter()
            .map(|c| {
                self.columns
                    .iter()
                    .position(|k| k == c)
                    .ok_or_else(|| Error::Table(format!("feature {c:?} was not seen at fit time")))
            })
            .collect::<Result<_>>()?;
        let mut out = table.values().clone();
        for (j, &k) in idx.iter().enumerate() {
            let (m, s) = (self.mean[k], self.sd[k]);
            out.column_mut(j)
                .mapv_inplace(|x| if s > 0.0 { (x - m) / s } else { x - m });
        }
        table.with_values(out)
    }
}

/// Shrunk batch effects for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEffect {
    pub n: usize,
    pub gamma_hat: Vec<f64>,
    pub delta_hat: Vec<f64>,
    pub gamma_star: Vec<f64>,
    pub delta_star: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombatModel {
    pub columns: Vec<String>,
    /// Grand mean per feature.
    pub alpha: Vec<f64>,
    /// Pooled within-batch variance per feature.
    pub var_pooled: Vec<f64>,
    pub batches: BTreeMap<String, BatchEffect>,
}

pub const COMBAT_TOL: f64 = 1e-6;
pub const COMBAT_MAX_ITER: usize = 200;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Iterated conditional modes for one batch; `z` holds the batch's
/// standardized rows.
fn shrink(
    z: &Array2<f64>,
    gamma_hat: &[f64],
    delta_hat: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let n = z.nrows() as f64;
    let g_bar = mean(gamma_hat);
    let t2 = sample_var(gamma_hat);
    let m = mean(delta_hat);
    let s2 = sample_var(delta_hat);
    // a degenerate prior (no spread across features) pins the posterior
    let flat_delta = s2 <= 1e-24 * m.max(1.0).powi(2);
    let (a, b) = if flat_delta {
        (f64::INFINITY, f64::INFINITY)
    } else {
        ((2.0 * s2 + m * m) / s2, (m * s2 + m * m * m) / s2)
    };
    let mut gamma = gamma_hat.to_vec();
    let mut delta = delta_hat.to_vec();
    let mut change = f64::INFINITY;
    for it in 1..=COMBAT_MAX_ITER {
        let g_new: Vec<f64> = gamma_hat
            .iter()
            .zip(&delta)
            .map(|(&gh, &d)| {
                if t2 == 0.0 {
                    g_bar
                } else {
                    (n * t2 * gh + d * g_bar) / (n * t2 + d)
                }
            })
            .collect();
        let d_new: Vec<f64> = (0..gamma_hat.len())
            .map(|j| {
                if flat_delta {
                    return m;
                }
                let sum2: f64 = z.column(j).iter().map(|x| (x - g_new[j]).powi(2)).sum();
                (0.5 * sum2 + b) / (n / 2.0 + a - 1.0)
            })
            .collect();
        change = g_new
            .iter()
            .zip(&gamma)
            .chain(d_new.iter().zip(&delta))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        gamma = g_new;
        delta = d_new;
        if change < COMBAT_TOL {
            return Ok((gamma, delta, it));
        }
    }
    Err(Error::NotConverged {
        iterations: COMBAT_MAX_ITER,
        residual: change,
    })
}

impl CombatModel {
    /// Fits on `table` using its `batch_id` column.
    pub fn fit(table: &FeatureTable) -> Result<CombatModel> {
        let y = table.values();
        let (n, g) = y.dim();
        let mut rows: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, b) in table.batches().iter().enumerate() {
            rows.entry(b.clone()).or_default().push(i);
        }
        for (b, r) in &rows {
            if r.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "batch {b:?} has {} row(s); ComBat needs at least 2",
                    r.len()
                )));
            }
        }
        let batch_means: BTreeMap<&str, Array1<f64>> = rows
            .iter()
            .map(|(b, r)| {
                (
                    b.as_str(),
                    y.select(Axis(0), r).mean_axis(Axis(0)).expect("rows"),
                )
            })
            .collect();
        let mut alpha = vec![0.0; g];
        let mut var_pooled = vec![0.0; g];
        for (b, r) in &rows {
            let bm = &batch_means[b.as_str()];
            for j in 0..g {
                alpha[j] += bm[j] * r.len() as f64 / n as f64;
                var_pooled[j] +=
                    r.iter().map(|&i| (y[[i, j]] - bm[j]).powi(2)).sum::<f64>() / n as f64;
            }
        }
        let mut model = CombatModel {
            columns: table.columns().to_vec(),
            alpha,
            var_pooled,
            batches: BTreeMap::new(),
        };
        if rows.len() < 2 {
            log::warn!("single batch: ComBat is the identity");
            for (b, r) in rows {
                model.batches.insert(
                    b,
                    BatchEffect {
                        n: r.len(),
                        gamma_hat: vec![0.0; g],
                        delta_hat: vec![1.0; g],
                        gamma_star: vec![0.0; g],
                        delta_star: vec![1.0; g],
                        iterations: 0,
                    },
                );
            }
            return Ok(model);
        }
        let z = model.standardize(y);
        // features with zero pooled variance carry no batch information
        let live: Vec<usize> = (0..g).filter(|&j| model.var_pooled[j] > 0.0).collect();
        for (b, r) in rows {
            let zb = z.select(Axis(0), &r);
            let mut gamma_hat = vec![0.0; g];
            let mut delta_hat = vec![1.0; g];
            for &j in &live {
                let col = zb.column(j);
                let m = col.mean().expect("rows");
                gamma_hat[j] = m;
                delta_hat[j] = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / r.len() as f64;
            }
            let mut gamma_star = vec![0.0; g];
            let mut delta_star = vec![1.0; g];
            let mut iterations = 0;
            if !live.is_empty() {
                let gh: Vec<f64> = live.iter().map(|&j| gamma_hat[j]).collect();
                let dh: Vec<f64> = live.iter().map(|&j| delta_hat[j]).collect();
                let (gs, ds, it) = shrink(&zb.select(Axis(1), &live), &gh, &dh)?;
                iterations = it;
                for (k, &j) in live.iter().enumerate() {
                    if !(ds[k] > 0.0) {
                        return Err(Error::Undefined(format!(
                            "non-positive ComBat scale for batch {b:?}, feature {}",
                            model.columns[j]
                        )));
                    }
                    gamma_star[j] = gs[k];
                    delta_star[j] = ds[k];
                }
            }
            model.batches.insert(
                b,
                BatchEffect {
                    n: r.len(),
                    gamma_hat,
                    delta_hat,
                    gamma_star,
                    delta_star,
                    iterations,
                },
            );
        }
        Ok(model)
    }

    fn standardize(&self, y: &Array2<f64>) -> Array2<f64> {
        let mut z = y.clone();
        for j in 0..y.ncols() {
            let (a, s) = (self.alpha[j], self.var_pooled[j].sqrt());
            z.column_mut(j)
                .mapv_inplace(|x| if s > 0.0 { (x - a) / s } else { 0.0 });
        }
        z
    }

    /// Removes the fitted batch effects; columns and batches must be known.
    pub fn apply(&self, table: &FeatureTable) -> Result<FeatureTable> {
        if table.columns() != self.columns.as_slice() {
            return Err(Error::Table(
                "ComBat model and table have different feature columns".into(),
            ));
        }
        if self.batches.len() < 2 {
            return Ok(table.clone());
        }
        let y = table.values();
        let z = self.standardize(y);
        let mut out = y.clone();
        for (i, b) in table.batches().iter().enumerate() {
            let eff = self
                .batches
                .get(b)
                .ok_or_else(|| Error::Table(format!("batch {b:?} was not seen at fit time")))?;
            for j in 0..y.ncols() {
                let s = self.var_pooled[j].sqrt();
                if s > 0.0 {
                    out[[i, j]] = s * (z[[i, j]] - eff.gamma_star[j]) / eff.delta_star[j].sqrt()
                        + self.alpha[j];
                }
            }
        }
        table.with_values(out)
    }
}

/// Fits and applies ComBat on one table.
pub fn combat(table: &FeatureTable) -> Result<FeatureTable> {
    CombatModel::fit(table)?.apply(table)
}

/// ComBat run separately on each mask variant's rows, preserving row order.
pub fn combat_per_variant(table: &FeatureTable) -> Result<FeatureTable> {
    let mut out = table.values().clone();
    for v in table.variants() {
        let rows: Vec<usize> = (0..table.n_rows())
            .filter(|&i| table.keys()[i].variant == v)
            .collect();
        let part = combat(&table.select_rows(&rows))?;
        for (k, &i) in rows.iter().enumerate() {
            out.row_mut(i).assign(&part.values().row(k));
        }
    }
    table.with_values(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::RowKey;
    use ndarray::array;

    fn table(values: Array2<f64>, batches: &[&str]) -> FeatureTable {
        let n = values.nrows();
        let cols = (0..values.ncols()).map(|j| format!("f{j}")).collect();
        FeatureTable::new(
            (0..n)
                .map(|i| RowKey::new(format!("p{i}"), "manual"))
                .collect(),
            (0..n).map(|i| i % 2 == 0).collect(),
            batches.iter().map(|s| s.to_string()).collect(),
            cols,
            values,
        )
        .unwrap()
    }

    #[test]
    fn zscore_hand_values() {
        let t = table(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]], &["a", "a", "a"]);
        let z = ZScore::fit(&t).unwrap();
        assert!((z.sd[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let out = z.apply(&t).unwrap();
        let want = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((out.values()[[0, 0]] + want).abs() < 1e-12);
        assert!((out.values()[[0, 0]] + 1.2247).abs() < 1e-4);
        assert_eq!(out.values()[[1, 0]], 0.0);
        assert_eq!(out.values().column(1).to_vec(), vec![0.0; 3]);
        assert_eq!(z.constant_columns(), vec!["f1"]);
    }

    #[test]
    fn zscore_rejects_unknown_columns() {
        let t = table(array![[1.0], [2.0]], &["a", "a"]);
        let z = ZScore::fit(&t).unwrap();
        let other = FeatureTable::new(
            vec![RowKey::new("p", "manual")],
            vec![true],
            vec!["a".into()],
            vec!["g".into()],
            array![[1.0]],
        )
        .unwrap();
        assert!(z.apply(&other).is_err());
    }

    #[test]
    fn combat_identity_on_copied_batches() {
        let a = array![
            [1.0, 10.0, -3.0],
            [2.0, 12.0, -1.0],
            [4.0, 11.0, 0.5],
            [3.5, 9.0, 2.0]
        ];
        let mut v = Array2::zeros((8, 3));
        v.slice_mut(ndarray::s![0..4, ..]).assign(&a);
        v.slice_mut(ndarray::s![4..8, ..]).assign(&a);
        let t = table(v.clone(), &["A", "A", "A", "A", "B", "B", "B", "B"]);
        let out = combat(&t).unwrap();
        let diff = (out.values() - &v)
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff <= 1e-6, "{diff}");
    }

    #[test]
    fn combat_errors() {
        let t = table(array![[1.0], [2.0], [3.0]], &["A", "A", "B"]);
        assert!(matches!(combat(&t), Err(Error::InsufficientData(_))));
        let single = table(array![[1.0], [2.0], [3.0]], &["A", "A", "A"]);
        assert_eq!(combat(&single).unwrap().values(), single.values());
    }
}
