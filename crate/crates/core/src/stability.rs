//! Feature stability across segmentation variants.
//!
//! Pairwise agreement between the reference mask and each variant is summarized
//! by ICC(2,1) and Pearson's r. Per-patient `(dsc, relative error)` samples are
//! classified into reliability patterns whose population fractions form the
//! reliability scores.

use std::collections::{BTreeMap, HashMap};

use log::{debug, warn};
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::FeatureTable;

/// Single-measure two-way random-effects agreement ICC of an
/// `n_subjects × k_raters` matrix.
pub fn icc2(m: ArrayView2<f64>) -> Result<f64> {
    let (n, k) = m.dim();
    if n < 3 || k < 2 {
        return Err(Error::InsufficientData(format!(
            "ICC needs at least 3 subjects and 2 raters, got {n}x{k}"
        )));
    }
    if let Some(i) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = m.sum() / (nf * kf);
    let row_means: Vec<f64> = m.rows().into_iter().map(|r| r.sum() / kf).collect();
    let col_means: Vec<f64> = m.columns().into_iter().map(|c| c.sum() / nf).collect();
    let sst: f64 = m.iter().map(|v| (v - grand).powi(2)).sum();
    if sst <= 0.0 {
        return Err(Error::Undefined(
            "ICC of a matrix with zero total variance".into(),
        ));
    }
    let ssr = kf * row_means.iter().map(|r| (r - grand).powi(2)).sum::<f64>();
    let ssc = nf * col_means.iter().map(|c| (c - grand).powi(2)).sum::<f64>();
    let mut sse = 0.0;
    for i in 0..n {
        for j in 0..k {
            sse += (m[[i, j]] - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let msr = ssr / (nf - 1.0);
    let msc = ssc / (kf - 1.0);
    let mse = sse / ((nf - 1.0) * (kf - 1.0));
    let den = msr + (kf - 1.0) * mse + kf * (msc - mse) / nf;
    if den <= 0.0 {
        return Err(Error::Undefined("ICC denominator is not positive".into()));
    }
    Ok(((msr - mse) / den).min(1.0))
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "pearson: lengths {} and {} differ",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "pearson needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Undefined("pearson with zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilitySample {
    pub dsc: f64,
    pub rel_err: f64,
}

/// Region boundaries in `(dsc, relative error)` space.
///
/// The defaults are working values for this implementation, not published
/// constants; results depend on where the DSC values fall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub dsc_hi: f64,
    pub err_lo: f64,
    pub err_hi: f64,
    /// Minimum |r| for the anti-correlation required by `consistency`.
    pub r_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            dsc_hi: 0.8,
            err_lo: 0.1,
            err_hi: 0.5,
            r_min: 0.7,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.dsc_hi)
            && self.err_lo >= 0.0
            && self.err_hi >= self.err_lo
            && (0.0..=1.0).contains(&self.r_min);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid stability thresholds {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reliability {
    Quality,
    Robustness,
    Consistency,
    Instability,
    Unclassified,
}

/// Classify one patient's samples. Precedence is
/// quality > robustness > consistency > instability.
pub fn classify(samples: &[StabilitySample], th: &Thresholds) -> Reliability {
    let low_err = samples.iter().all(|s| s.rel_err <= th.err_lo);
    if low_err && samples.iter().all(|s| s.dsc >= th.dsc_hi) {
        return Reliability::Quality;
    }
    if low_err {
        return Reliability::Robustness;
    }
    let d: Vec<f64> = samples.iter().map(|s| s.dsc).collect();
    let e: Vec<f64> = samples.iter().map(|s| s.rel_err).collect();
    // two points give r = ±1 trivially, which is still a valid trend
    let r = if samples.len() == 2 {
        let (dd, de) = (d[1] - d[0], e[1] - e[0]);
        if dd != 0.0 && de != 0.0 {
            Some((dd * de).signum())
        } else {
            None
        }
    } else {
        pearson(&d, &e).ok()
    };
    if r.is_some_and(|r| r <= -th.r_min) {
        return Reliability::Consistency;
    }
    if samples
        .iter()
        .any(|s| s.dsc >= th.dsc_hi && s.rel_err >= th.err_hi)
    {
        return Reliability::Instability;
    }
    Reliability::Unclassified
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ReliabilityScores {
    pub quality: f64,
    pub consistency: f64,
    pub robustness: f64,
    pub instability: f64,
    pub unclassified: f64,
    /// Patients that contributed.
    pub n_patients: usize,
    /// Patients dropped for having fewer than two samples.
    pub excluded: usize,
}

impl ReliabilityScores {
    pub fn total(&self) -> f64 {
        self.quality + self.consistency + self.robustness + self.instability + self.unclassified
    }
}

pub fn reliability_scores(patients: &[Vec<StabilitySample>], th: &Thresholds) -> ReliabilityScores {
    let mut counts: HashMap<Reliability, usize> = HashMap::new();
    let mut excluded = 0;
    for s in patients {
        if s.len() < 2 {
            excluded += 1;
            continue;
        }
        *counts.entry(classify(s, th)).or_default() += 1;
    }
    let n = patients.len() - excluded;
    if n == 0 {
        return ReliabilityScores {
            unclassified: 1.0,
            excluded,
            ..Default::default()
        };
    }
    let frac = |r| counts.get(&r).copied().unwrap_or(0) as f64 / n as f64;
    let quality = frac(Reliability::Quality);
    let consistency = frac(Reliability::Consistency);
    let robustness = frac(Reliability::Robustness);
    let instability = frac(Reliability::Instability);
    ReliabilityScores {
        quality,
        consistency,
        robustness,
        instability,
        unclassified: frac(Reliability::Unclassified),
        n_patients: n,
        excluded,
    }
}

/// DSC of each `(patient, variant)` pair against the reference mask.
pub type DscTable = BTreeMap<(String, String), f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct PairStat {
    pub variant: String,
    pub n: usize,
    /// NaN when undefined.
    pub icc: f64,
    pub pearson: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub patient_id: String,
    pub variant: String,
    pub dsc: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStability {
    pub feature: String,
    pub pairs: Vec<PairStat>,
    pub scores: ReliabilityScores,
    pub points: Vec<ScatterPoint>,
    /// Patients whose reference value is zero, so relative error is undefined.
    pub zero_reference: usize,
}

fn stability_of(
    table: &FeatureTable,
    j: usize,
    reference: &str,
    variants: &[String],
    dsc: &DscTable,
    th: &Thresholds,
) -> FeatureStability {
    let feature = table.columns()[j].clone();
    let idx = table.row_index();
    let mut patients: Vec<&str> = table
        .keys()
        .iter()
        .filter(|k| k.variant == reference)
        .map(|k| k.patient_id.as_str())
        .collect();
    patients.sort_unstable();
    let value = |p: &str, v: &str| {
        idx.get(&crate::table::RowKey::new(p, v))
            .map(|&i| table.values()[[i, j]])
            .filter(|x| x.is_finite())
    };

    let mut pairs = Vec::new();
    for v in variants {
        let rows: Vec<[f64; 2]> = patients
            .iter()
            .filter_map(|p| Some([value(p, reference)?, value(p, v)?]))
            .collect();
        if rows.len() < patients.len() {
            debug!(
                "{feature}: {} of {} patients lack a {v} value",
                patients.len() - rows.len(),
                patients.len()
            );
        }
        if rows.is_empty() {
            warn!("{feature}: no {v} rows; pair skipped");
            continue;
        }
        let m = Array2::from_shape_fn((rows.len(), 2), |(i, c)| rows[i][c]);
        let a: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let b: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        pairs.push(PairStat {
            variant: v.clone(),
            n: rows.len(),
            icc: icc2(m.view()).unwrap_or(f64::NAN),
            pearson: pearson(&a, &b).unwrap_or(f64::NAN),
        });
    }

    let mut per_patient = Vec::new();
    let mut points = Vec::new();
    let mut zero_reference = 0;
    for p in &patients {
        let Some(r) = value(p, reference) else {
            continue;
        };
        if r == 0.0 {
            zero_reference += 1;
            continue;
        }
        let mut samples = Vec::new();
        for v in variants {
            let (Some(x), Some(&d)) = (value(p, v), dsc.get(&(p.to_string(), v.clone()))) else {
                continue;
            };
            let rel_err = (x - r).abs() / r.abs();
            samples.push(StabilitySample { dsc: d, rel_err });
            points.push(ScatterPoint {
                patient_id: p.to_string(),
                variant: v.clone(),
                dsc: d,
                rel_err,
            });
        }
        per_patient.push(samples);
    }
    FeatureStability {
        feature,
        pairs,
        scores: reliability_scores(&per_patient, th),
        points,
        zero_reference,
    }
}

/// Stability of each requested feature between `reference` rows and every
/// other variant in the table. An empty `features` slice means all columns.
pub fn stability_report(
    table: &FeatureTable,
    features: &[String],
    reference: &str,
    dsc: &DscTable,
    th: &Thresholds,
) -> Result<Vec<FeatureStability>> {
    th.validate()?;
    let variants: Vec<String> = table
        .variants()
        .into_iter()
        .filter(|v| v != reference)
        .collect();
    if variants.len() == table.variants().len() {
        return Err(Error::Table(format!(
            "no {reference:?} rows in feature table"
        )));
    }
    if variants.is_empty() {
        return Err(Error::InsufficientData(
            "feature table has no variant rows".into(),
        ));
    }
    let cols: Vec<usize> = if features.is_empty() {
        (0..table.n_cols()).collect()
    } else {
        features
            .iter()
            .map(|f| {
                table
                    .column_index(f)
                    .ok_or_else(|| Error::Table(format!("unknown feature {f:?}")))
            })
            .collect::<Result<_>>()?
    };
    Ok(cols
        .par_iter()
        .map(|&j| stability_of(table, j, reference, &variants, dsc, th))
        .collect())
}
