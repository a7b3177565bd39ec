//! Two-sample tests, interval estimates and multiple-comparison correction.
//!
//! KS p-values use the asymptotic Kolmogorov distribution with the
//! effective-sample-size correction; chi-squared has no continuity correction.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::cohort::{ClinicalValue, CohortRecord};
use crate::error::{Error, Result};
use crate::table::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub n_comparisons: usize,
}

impl TestResult {
    fn single(statistic: f64, p_value: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestResult {
            statistic,
            p_value,
            p_adjusted: p_value,
            n_comparisons: 1,
        }
    }
}

/// `Q(λ) = 2 Σ (−1)^(k−1) exp(−2 k² λ²)`, the Kolmogorov survival function.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 2.0;
    let mut prev = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * (a2 * kf * kf).exp();
        sum += term;
        if term.abs() <= 1e-10 * prev || term.abs() <= 1e-16 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
        prev = term.abs();
    }
    // the series does not settle for tiny λ, where Q is 1
    1.0
}

/// Largest gap between the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "KS test needs 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if let Some(i) = a.iter().chain(b).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let d = ks_statistic(a, b);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let en = ne.sqrt();
    Ok(TestResult::single(
        d,
        kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    ))
}

/// Pearson chi-squared test of independence on an `r × c` count table.
pub fn chi_squared(table: &[Vec<f64>]) -> Result<TestResult> {
    let r = table.len();
    let c = table.first().map_or(0, |row| row.len());
    if r < 2 || c < 2 {
        return Err(Error::InsufficientData(format!(
            "chi-squared needs at least a 2x2 table, got {r}x{c}"
        )));
    }
    if table.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidArgument("ragged contingency table".into()));
    }
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let cols: Vec<f64> = (0..c)
        .map(|j| table.iter().map(|row| row[j]).sum())
        .collect();
    let total: f64 = rows.iter().sum();
    if rows.iter().chain(&cols).any(|m| *m <= 0.0) {
        return Err(Error::InvalidArgument(
            "contingency table has a zero marginal".into(),
        ));
    }
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, o) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            stat += (o - e).powi(2) / e;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    let dist = ChiSquared::new(df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(TestResult::single(stat, dist.sf(stat)))
}

/// Mean and the normal-approximation 95% interval `mean ± 1.96 sd/√n`.
pub fn mean_ci95(samples: &[f64]) -> Result<(f64, f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "confidence interval needs 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * (var / n).sqrt();
    Ok((mean, mean - half, mean + half))
}

/// Bonferroni adjustment over the whole slice.
pub fn bonferroni(results: &mut [TestResult]) {
    let m = results.len().max(1);
    for r in results.iter_mut() {
        r.n_comparisons = m;
        r.p_adjusted = (r.p_value * m as f64).min(1.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenRow {
    pub variable: String,
    /// `ks` or `chi2`.
    pub test: &'static str,
    #[serde(flatten)]
    pub result: TestResult,
    /// Constant column, reported with p = 1.
    pub constant: bool,
}

fn ks_row(name: &str, values: &[f64], labels: &[bool]) -> Result<ScreenRow> {
    let (pos, neg): (Vec<(f64, bool)>, Vec<(f64, bool)>) = values
        .iter()
        .copied()
        .zip(labels.iter().copied())
        .partition(|(_, y)| *y);
    let pos: Vec<f64> = pos
        .into_iter()
        .map(|(v, _)| v)
        .filter(|v| v.is_finite())
        .collect();
    let neg: Vec<f64> = neg
        .into_iter()
        .map(|(v, _)| v)
        .filter(|v| v.is_finite())
        .collect();
    let constant = pos
        .iter()
        .chain(&neg)
        .all(|v| Some(v) == pos.first().or(neg.first()));
    let result = if constant {
        TestResult::single(0.0, 1.0)
    } else {
        ks_two_sample(&pos, &neg)?
    };
    Ok(ScreenRow {
        variable: name.to_string(),
        test: "ks",
        result,
        constant,
    })
}

fn chi2_row(name: &str, values: &[String], labels: &[bool]) -> Result<ScreenRow> {
    let levels: Vec<&String> = values.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let constant = levels.len() < 2;
    let result = if constant {
        TestResult::single(0.0, 1.0)
    } else {
        let table: Vec<Vec<f64>> = levels
            .iter()
            .map(|l| {
                let mut row = vec![0.0; 2];
                for (v, y) in values.iter().zip(labels) {
                    if v == *l {
                        row[*y as usize] += 1.0;
                    }
                }
                row
            })
            .collect();
        chi_squared(&table)?
    };
    Ok(ScreenRow {
        variable: name.to_string(),
        test: "chi2",
        result,
        constant,
    })
}

/// KS test per feature column and per numeric clinical variable, chi-squared
/// per categorical clinical variable, Bonferroni over the whole family.
pub fn univariate_screen(
    features: &FeatureTable,
    clinical: &[CohortRecord],
) -> Result<Vec<ScreenRow>> {
    let labels = features.labels();
    if !labels.contains(&true) || !labels.contains(&false) {
        return Err(Error::InsufficientData("screen needs both classes".into()));
    }
    let mut rows: Vec<ScreenRow> = (0..features.n_cols())
        .into_par_iter()
        .map(|j| ks_row(&features.columns()[j], &features.column(j).to_vec(), labels))
        .collect::<Result<_>>()?;

    let names: BTreeSet<&String> = clinical.iter().flat_map(|r| r.clinical.keys()).collect();
    for name in names {
        let present: Vec<(&ClinicalValue, bool)> = clinical
            .iter()
            .filter_map(|r| r.clinical.get(name).map(|v| (v, r.label)))
            .collect();
        let y: Vec<bool> = present.iter().map(|(_, y)| *y).collect();
        if present
            .iter()
            .all(|(v, _)| matches!(v, ClinicalValue::Numeric(_)))
        {
            let x: Vec<f64> = present
                .iter()
                .map(|(v, _)| match v {
                    ClinicalValue::Numeric(x) => *x,
                    ClinicalValue::Categorical(_) => unreachable!(),
                })
                .collect();
            rows.push(ks_row(name, &x, &y)?);
        } else {
            let x: Vec<String> = present
                .iter()
                .map(|(v, _)| match v {
                    ClinicalValue::Categorical(s) => s.clone(),
                    ClinicalValue::Numeric(x) => crate::table::format_float(*x),
                })
                .collect();
            rows.push(chi2_row(name, &x, &y)?);
        }
    }
    let mut results: Vec<TestResult> = rows.iter().map(|r| r.result).collect();
    bonferroni(&mut results);
    for (row, r) in rows.iter_mut().zip(results) {
        row.result = r;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_by_hand() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
        let same = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        let apart = ks_two_sample(&[1.0, 2.0], &[5.0, 6.0]).unwrap();
        assert_eq!(apart.statistic, 1.0);
        assert!(ks_two_sample(&[], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) is the classical 5% critical point
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn chi2_by_hand() {
        let r = chi_squared(&[vec![10.0, 20.0], vec![20.0, 10.0]]).unwrap();
        assert!((r.statistic - 20.0 / 3.0).abs() < 1e-12);
        let indep = chi_squared(&[vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(indep.statistic.abs() < 1e-12);
        assert!((indep.p_value - 1.0).abs() < 1e-12);
        assert!(chi_squared(&[vec![1.0, 2.0, 3.0]]).is_err());
        assert!(chi_squared(&[vec![0.0, 0.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn ci_of_constant_is_a_point() {
        assert_eq!(mean_ci95(&[2.0; 5]).unwrap(), (2.0, 2.0, 2.0));
        assert!(mean_ci95(&[1.0]).is_err());
    }

    #[test]
    fn bonferroni_caps_at_one() {
        let mut r = vec![TestResult::single(0.0, 0.01), TestResult::single(0.0, 0.6)];
        bonferroni(&mut r);
        assert_eq!(r[0].p_adjusted, 0.02);
        assert_eq!(r[1].p_adjusted, 1.0);
        assert_eq!(r[1].n_comparisons, 2);
    }
}
