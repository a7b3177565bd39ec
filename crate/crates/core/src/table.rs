//! Patient × feature tables and their CSV form.
//!
//! CSV layout: header `patient_id,mask_variant,label,batch_id,<feature>...`,
//! one row per `(patient, mask variant)`. Labels are written as `0`/`1`.
//! Floats use Rust's shortest round-trip formatting so a save/load cycle is
//! exact; missing values are written as `NaN`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const KEY_COLUMNS: [&str; 4] = ["patient_id", "mask_variant", "label", "batch_id"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub patient_id: String,
    pub variant: String,
}

impl RowKey {
    pub fn new(patient_id: impl Into<String>, variant: impl Into<String>) -> Self {
        RowKey {
            patient_id: patient_id.into(),
            variant: variant.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    keys: Vec<RowKey>,
    labels: Vec<bool>,
    batches: Vec<String>,
    columns: Vec<String>,
    values: Array2<f64>,
}

impl FeatureTable {
    pub fn new(
        keys: Vec<RowKey>,
        labels: Vec<bool>,
        batches: Vec<String>,
        columns: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        let n = keys.len();
        if labels.len() != n || batches.len() != n || values.nrows() != n {
            return Err(Error::Table(format!(
                "row count mismatch: {} keys, {} labels, {} batches, {} value rows",
                n,
                labels.len(),
                batches.len(),
                values.nrows()
            )));
        }
        if values.ncols() != columns.len() {
            return Err(Error::Table(format!(
                "{} column names for {} value columns",
                columns.len(),
                values.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if KEY_COLUMNS.contains(&c.as_str()) || !seen.insert(c.as_str()) {
                return Err(Error::Table(format!("duplicate column name {c:?}")));
            }
        }
        let mut seen_keys = HashSet::new();
        for k in &keys {
            if !seen_keys.insert(k) {
                return Err(Error::Table(format!(
                    "duplicate row key ({}, {})",
                    k.patient_id, k.variant
                )));
            }
        }
        Ok(FeatureTable {
            keys,
            labels,
            batches,
            columns,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn keys(&self) -> &[RowKey] {
        &self.keys
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn batches(&self) -> &[String] {
        &self.batches
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Mask variants in order of first appearance.
    pub fn variants(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.keys
            .iter()
            .filter(|k| seen.insert(k.variant.as_str()))
            .map(|k| k.variant.clone())
            .collect()
    }

    /// Same rows and columns with replaced values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        FeatureTable::new(
            self.keys.clone(),
            self.labels.clone(),
            self.batches.clone(),
            self.columns.clone(),
            values,
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            batches: rows.iter().map(|&i| self.batches[i].clone()).collect(),
            columns: self.columns.clone(),
            values: self.values.select(Axis(0), rows),
        }
    }

    pub fn select_variant(&self, variant: &str) -> FeatureTable {
        let rows: Vec<usize> = (0..self.n_rows())
            .filter(|&i| self.keys[i].variant == variant)
            .collect();
        self.select_rows(&rows)
    }

    pub fn select_columns(&self, names: &[String]) -> Result<FeatureTable> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Table(format!("unknown feature {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureTable {
            keys: self.keys.clone(),
            labels: self.labels.clone(),
            batches: self.batches.clone(),
            columns: names.to_vec(),
            values: self.values.select(Axis(1), &idx),
        })
    }

    /// Drops columns holding any non-finite value; returns the dropped names.
    pub fn drop_nonfinite_columns(&self) -> (FeatureTable, Vec<String>) {
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for (j, name) in self.columns.iter().enumerate() {
            if self.values.column(j).iter().all(|v| v.is_finite()) {
                keep.push(name.clone());
            } else {
                dropped.push(name.clone());
            }
        }
        let t = self.select_columns(&keep).expect("kept columns exist");
        (t, dropped)
    }

    /// Row index lookup by key.
    pub fn row_index(&self) -> HashMap<&RowKey, usize> {
        self.keys.iter().enumerate().map(|(i, k)| (k, i)).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header: Vec<&str> = KEY_COLUMNS.to_vec();
        header.extend(self.columns.iter().map(String::as_str));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            record.push(self.keys[i].patient_id.clone());
            record.push(self.keys[i].variant.clone());
            record.push(if self.labels[i] { "1" } else { "0" }.to_string());
            record.push(self.batches[i].clone());
            record.extend(self.values.row(i).iter().map(|v| format_float(*v)));
            w.write_record(&record)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Table(format!("csv flush: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .flexible(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let pos = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Table(format!("missing {name} column")))
        };
        let (ip, iv, il, ib) = (
            pos("patient_id")?,
            pos("mask_variant")?,
            pos("label")?,
            pos("batch_id")?,
        );
        let feature_idx: Vec<usize> = (0..header.len())
            .filter(|&j| ![ip, iv, il, ib].contains(&j))
            .collect();
        let columns: Vec<String> = feature_idx.iter().map(|&j| header[j].clone()).collect();
        let mut keys = Vec::new();
        let mut labels = Vec::new();
        let mut batches = Vec::new();
        let mut flat = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Table(format!(
                    "ragged row {}: {} fields, header has {}",
                    line + 2,
                    rec.len(),
                    header.len()
                )));
            }
            keys.push(RowKey::new(&rec[ip], &rec[iv]));
            labels.push(match &rec[il] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Table(format!(
                        "row {}: label {other:?} is not 0/1",
                        line + 2
                    )))
                }
            });
            batches.push(rec[ib].to_string());
            for &j in &feature_idx {
                let v: f64 = rec[j].trim().parse().map_err(|_| {
                    Error::Table(format!(
                        "row {}: {:?} in column {} is not a number",
                        line + 2,
                        &rec[j],
                        header[j]
                    ))
                })?;
                flat.push(v);
            }
        }
        let values = Array2::from_shape_vec((keys.len(), columns.len()), flat)
            .map_err(|e| Error::Table(e.to_string()))?;
        FeatureTable::new(keys, labels, batches, columns, values)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

pub fn load_feature_table(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FeatureTable::from_csv_str(&text)
}

pub fn save_feature_table(t: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), t.to_csv_string()?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> FeatureTable {
        FeatureTable::new(
            vec![RowKey::new("p1", "manual"), RowKey::new("p2", "manual")],
            vec![true, false],
            vec!["A".into(), "B".into()],
            vec!["f|a|x".into(), "f|a|y".into(), "f|b|z".into()],
            array![[0.1, -2.0, 1e-300], [3.5, f64::NAN, 7.0]],
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let back = FeatureTable::from_csv_str(&t.to_csv_string().unwrap()).unwrap();
        assert_eq!(back.keys(), t.keys());
        assert_eq!(back.columns(), t.columns());
        for (a, b) in back.values().iter().zip(t.values().iter()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let csv = "patient_id,mask_variant,label,batch_id,f\np,manual,1,A,1\np,manual,0,A,2\n";
        assert!(matches!(
            FeatureTable::from_csv_str(csv),
            Err(Error::Table(m)) if m.contains("duplicate row key")
        ));
    }

    #[test]
    fn missing_label_rejected() {
        let csv = "patient_id,mask_variant,batch_id,f\np,manual,A,1\n";
        assert!(matches!(
            FeatureTable::from_csv_str(csv),
            Err(Error::Table(m)) if m.contains("label")
        ));
    }

    #[test]
    fn ragged_rejected() {
        let csv = "patient_id,mask_variant,label,batch_id,f,g\np,manual,1,A,1\n";
        assert!(FeatureTable::from_csv_str(csv).is_err());
    }

    #[test]
    fn select_and_drop() {
        let t = sample();
        let (clean, dropped) = t.drop_nonfinite_columns();
        assert_eq!(dropped, vec!["f|a|y".to_string()]);
        assert_eq!(clean.n_cols(), 2);
        assert_eq!(t.select_variant("manual").n_rows(), 2);
        assert_eq!(t.select_variant("other").n_rows(), 0);
        assert!(t.select_columns(&["nope".into()]).is_err());
    }
}
