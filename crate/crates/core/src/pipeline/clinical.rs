//! Clinical reference models on demographic or biopsy variables.

use std::collections::BTreeSet;

use log::warn;
use ndarray::Array2;

use super::protocol::{run_protocol, ProtocolConfig, SplitResult, Stage};
use super::splits::SplitPlan;
use crate::cohort::{ClinicalValue, CohortRecord, BIOPSY, DEMOGRAPHIC};
use crate::error::{Error, Result};
use crate::table::{FeatureTable, RowKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClinicalSet {
    Demographic,
    Biopsy,
}

impl ClinicalSet {
    pub fn name(self) -> &'static str {
        match self {
            ClinicalSet::Demographic => "demographic",
            ClinicalSet::Biopsy => "biopsy",
        }
    }

    pub fn variables(self) -> &'static [(&'static str, bool)] {
        match self {
            ClinicalSet::Demographic => &DEMOGRAPHIC,
            ClinicalSet::Biopsy => &BIOPSY,
        }
    }
}

/// Design table of `variables`: numeric columns as is, categorical ones
/// one-hot encoded as `name=level`. Rows with a missing value are dropped;
/// the count is returned alongside.
pub fn one_hot(
    records: &[CohortRecord],
    variables: &[(&str, bool)],
    variant: &str,
) -> Result<(FeatureTable, usize)> {
    let complete: Vec<&CohortRecord> = records
        .iter()
        .filter(|r| variables.iter().all(|(v, _)| r.clinical.contains_key(*v)))
        .collect();
    let dropped = records.len() - complete.len();
    if dropped > 0 {
        warn!("{dropped} patients with missing clinical values dropped");
    }
    let mut columns = Vec::new();
    // (variable, level) per output column; level None for numeric
    let mut spec: Vec<(&str, Option<String>)> = Vec::new();
    for (v, numeric) in variables {
        if *numeric {
            columns.push(v.to_string());
            spec.push((v, None));
            continue;
        }
        let levels: BTreeSet<String> = complete
            .iter()
            .map(|r| match &r.clinical[*v] {
                ClinicalValue::Categorical(s) => s.clone(),
                ClinicalValue::Numeric(x) => crate::table::format_float(*x),
            })
            .collect();
        for l in levels {
            columns.push(format!("{v}={l}"));
            spec.push((v, Some(l)));
        }
    }
    let mut values = Array2::zeros((complete.len(), columns.len()));
    for (i, r) in complete.iter().enumerate() {
        for (j, (v, level)) in spec.iter().enumerate() {
            values[[i, j]] = match (&r.clinical[*v], level) {
                (ClinicalValue::Numeric(x), None) => *x,
                (ClinicalValue::Categorical(s), None) => {
                    return Err(Error::Table(format!("{v}: expected a number, found {s:?}")))
                }
                (ClinicalValue::Categorical(s), Some(l)) => (s == l) as u8 as f64,
                (ClinicalValue::Numeric(x), Some(l)) => {
                    (crate::table::format_float(*x) == *l) as u8 as f64
                }
            };
        }
    }
    let table = FeatureTable::new(
        complete
            .iter()
            .map(|r| RowKey::new(r.patient_id.clone(), variant))
            .collect(),
        complete.iter().map(|r| r.label).collect(),
        complete.iter().map(|r| r.batch_id.clone()).collect(),
        columns,
        values,
    )?;
    Ok((table, dropped))
}

pub fn clinical_models(
    records: &[CohortRecord],
    plan: &SplitPlan,
    set: ClinicalSet,
    cfg: &ProtocolConfig,
) -> Result<Vec<SplitResult>> {
    let (table, _) = one_hot(records, set.variables(), set.name())?;
    run_protocol(&table, plan, &Stage::Baseline, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn three_level_one_hot() {
        let records: Vec<CohortRecord> = ["a", "b", "c", "b"]
            .iter()
            .enumerate()
            .map(|(i, l)| CohortRecord {
                patient_id: format!("p{i}"),
                label: i % 2 == 0,
                batch_id: "A".into(),
                clinical: BTreeMap::from([(
                    "grade".to_string(),
                    ClinicalValue::Categorical(l.to_string()),
                )]),
            })
            .collect();
        let (t, dropped) = one_hot(&records, &[("grade", false)], "clinical").unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(t.n_cols(), 3);
        for row in t.values().rows() {
            assert_eq!(row.sum(), 1.0);
        }
    }
}
