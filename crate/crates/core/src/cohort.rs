//! Cohort records and a synthetic cohort generator.
//!
//! Synthetic patients carry one irregular multi-lobed lesion inside a noisy
//! background. Positive patients have a brighter and noisier lesion, so
//! intensity and texture features carry a learnable signal. Scanner batches
//! differ in additive noise level; biopsy variables depend on the label while
//! demographic variables do not.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng::stage_rng;
use crate::volume::{BinaryMask, Dims, ImageVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClinicalValue {
    Numeric(f64),
    Categorical(String),
}

/// Demographic variables: `(name, numeric)`.
pub const DEMOGRAPHIC: [(&str, bool); 4] = [
    ("age", true),
    ("menopause", false),
    ("ethnicity", false),
    ("metastatic", false),
];

/// Biopsy variables, all ordinal categories.
pub const BIOPSY: [(&str, bool); 3] = [
    ("tubule_formation", false),
    ("nuclear_grade", false),
    ("mitotic_rate", false),
];

fn is_numeric_column(name: &str) -> bool {
    DEMOGRAPHIC
        .iter()
        .chain(BIOPSY.iter())
        .any(|(n, numeric)| *n == name && *numeric)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortRecord {
    pub patient_id: String,
    pub label: bool,
    pub batch_id: String,
    /// Missing values are absent from the map.
    pub clinical: BTreeMap<String, ClinicalValue>,
}

#[derive(Debug, Clone)]
pub struct SyntheticPatient {
    pub image: ImageVolume,
    pub mask: BinaryMask,
    pub record: CohortRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Class difference of mean lesion intensity.
    pub delta: f64,
    pub lesion_mean: f64,
    /// Per-patient jitter of the lesion mean.
    pub lesion_jitter: f64,
    pub noise_negative: f64,
    pub noise_positive: f64,
    pub n_batches: usize,
    /// Additive noise standard deviation for batch `b` is `b * batch_noise_step`.
    pub batch_noise_step: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            dims: [64, 64, 64],
            spacing: [1.0, 1.0, 1.0],
            delta: 0.5,
            lesion_mean: 2.0,
            lesion_jitter: 0.5,
            noise_negative: 0.6,
            noise_positive: 0.8,
            n_batches: 2,
            batch_noise_step: 0.3,
        }
    }
}

/// Number of positive patients for `n` patients at `ratio`.
pub fn positive_count(n: usize, ratio: f64) -> usize {
    (n as f64 * ratio).round() as usize
}

fn lesion_mask(dims: Dims, rng: &mut impl rand::Rng) -> BinaryMask {
    let c = [
        dims.nx() as f64 / 2.0 + rng.random_range(-1.5..1.5),
        dims.ny() as f64 / 2.0 + rng.random_range(-1.5..1.5),
        dims.nz() as f64 / 2.0 + rng.random_range(-1.5..1.5),
    ];
    let scale = dims.0.iter().copied().min().unwrap() as f64 / 48.0;
    let core = rng.random_range(3.5..5.0) * scale;
    let n_lobes = rng.random_range(4..8);
    let mut spheres = vec![(c, core)];
    for _ in 0..n_lobes {
        let dir: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        let dist = core + rng.random_range(2.0..8.0) * scale;
        let r = rng.random_range(1.8..3.5) * scale;
        let centre = [
            c[0] + dir[0] / norm * dist,
            c[1] + dir[1] / norm * dist,
            c[2] + dir[2] / norm * dist,
        ];
        spheres.push((centre, r));
    }
    BinaryMask::from_fn(dims, |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        spheres
            .iter()
            .any(|(s, r)| (0..3).map(|a| (p[a] - s[a]).powi(2)).sum::<f64>() <= r * r)
    })
}

fn clinical_record(label: bool, rng: &mut impl rand::Rng) -> BTreeMap<String, ClinicalValue> {
    let mut m = BTreeMap::new();
    let age: f64 = Normal::new(55.0, 11.0).unwrap().sample(rng);
    let age = age.clamp(25.0, 90.0).round();
    m.insert("age".into(), ClinicalValue::Numeric(age));
    let post = age + rng.random_range(-4.0..4.0) > 51.0;
    m.insert(
        "menopause".into(),
        ClinicalValue::Categorical(if post { "post" } else { "pre" }.into()),
    );
    let eth = ["white", "black", "asian", "other"][rng.random_range(0..4)];
    m.insert("ethnicity".into(), ClinicalValue::Categorical(eth.into()));
    let meta = rng.random_bool(0.1);
    m.insert(
        "metastatic".into(),
        ClinicalValue::Categorical(if meta { "yes" } else { "no" }.into()),
    );
    // higher grades are more likely for positives
    let weights: [f64; 3] = if label {
        [0.1, 0.3, 0.6]
    } else {
        [0.35, 0.4, 0.25]
    };
    for (name, _) in BIOPSY {
        let u: f64 = rng.random();
        let grade = if u < weights[0] {
            1
        } else if u < weights[0] + weights[1] {
            2
        } else {
            3
        };
        m.insert(name.into(), ClinicalValue::Categorical(grade.to_string()));
    }
    m
}

fn synth_patient(
    index: usize,
    label: bool,
    batch: usize,
    params: &SynthParams,
    seed: u64,
) -> Result<SyntheticPatient> {
    let mut rng = stage_rng(seed, "synth-patient", index as u64);
    let dims = Dims::new(params.dims[0], params.dims[1], params.dims[2])?;
    let mask = lesion_mask(dims, &mut rng);
    let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * params.lesion_jitter;
    let mean = params.lesion_mean + if label { params.delta } else { 0.0 } + jitter;
    let noise = if label {
        params.noise_positive
    } else {
        params.noise_negative
    };
    let batch_sd = batch as f64 * params.batch_noise_step;
    let voxels = mask
        .voxels()
        .iter()
        .map(|&inside| {
            let base = if inside {
                mean + noise * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.5 * rng.sample::<f64, _>(StandardNormal)
            };
            let v = base + batch_sd * rng.sample::<f64, _>(StandardNormal);
            v as f32 as f64
        })
        .collect();
    let image = ImageVolume::new(dims, params.spacing, voxels)?;
    let record = CohortRecord {
        patient_id: format!("P{:03}", index + 1),
        label,
        batch_id: format!("scanner_{}", (b'A' + batch as u8) as char),
        clinical: clinical_record(label, &mut rng),
    };
    Ok(SyntheticPatient {
        image,
        mask,
        record,
    })
}

/// Deterministic synthetic cohort; exactly `round(n * ratio)` positives.
pub fn synth_cohort(
    n_patients: usize,
    class_ratio: f64,
    seed: u64,
    params: &SynthParams,
) -> Result<Vec<SyntheticPatient>> {
    if n_patients < 4 {
        return Err(Error::InsufficientData(format!(
            "{n_patients} patients; at least 4 are needed"
        )));
    }
    if !(class_ratio > 0.0 && class_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "class ratio {class_ratio} outside (0, 1)"
        )));
    }
    if params.n_batches == 0 || params.n_batches > 26 {
        return Err(Error::InvalidArgument("n_batches must be in 1..=26".into()));
    }
    let n_pos = positive_count(n_patients, class_ratio);
    if n_pos < 2 || n_patients - n_pos < 2 {
        return Err(Error::InsufficientData(format!(
            "{n_pos} positive / {} negative patients; stratified splitting needs 2 per class",
            n_patients - n_pos
        )));
    }
    let mut order: Vec<usize> = (0..n_patients).collect();
    order.shuffle(&mut stage_rng(seed, "synth-labels", 0));
    let mut labels = vec![false; n_patients];
    for &i in &order[..n_pos] {
        labels[i] = true;
    }
    order.shuffle(&mut stage_rng(seed, "synth-batches", 0));
    let mut batches = vec![0usize; n_patients];
    for (rank, &i) in order.iter().enumerate() {
        batches[i] = rank % params.n_batches;
    }
    (0..n_patients)
        .into_par_iter()
        .map(|i| synth_patient(i, labels[i], batches[i], params, seed))
        .collect()
}

pub const COHORT_FILE: &str = "cohort.csv";

fn clinical_columns() -> Vec<&'static str> {
    DEMOGRAPHIC
        .iter()
        .chain(BIOPSY.iter())
        .map(|(n, _)| *n)
        .collect()
}

pub fn cohort_to_csv(records: &[CohortRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["patient_id", "label", "batch_id"];
    let clinical = clinical_columns();
    header.extend(clinical.iter());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.patient_id.clone(),
            if r.label { "1" } else { "0" }.to_string(),
            r.batch_id.clone(),
        ];
        for c in &clinical {
            row.push(match r.clinical.get(*c) {
                Some(ClinicalValue::Numeric(v)) => format!("{v}"),
                Some(ClinicalValue::Categorical(s)) => s.clone(),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Table(format!("csv flush: {e}")))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

pub fn cohort_from_csv(text: &str) -> Result<Vec<CohortRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let pos = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Table(format!("cohort file lacks {name} column")))
    };
    let (ip, il, ib) = (pos("patient_id")?, pos("label")?, pos("batch_id")?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in r.records() {
        let rec = rec?;
        let patient_id = rec[ip].to_string();
        if !seen.insert(patient_id.clone()) {
            return Err(Error::Table(format!("duplicate patient {patient_id}")));
        }
        let label = match &rec[il] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Table(format!("label {other:?} is not 0/1"))),
        };
        let mut clinical = BTreeMap::new();
        for (j, name) in header.iter().enumerate() {
            if j == ip || j == il || j == ib || rec[j].is_empty() {
                continue;
            }
            let value = if is_numeric_column(name) {
                ClinicalValue::Numeric(rec[j].parse().map_err(|_| {
                    Error::Table(format!("{name} value {:?} is not numeric", &rec[j]))
                })?)
            } else {
                ClinicalValue::Categorical(rec[j].to_string())
            };
            clinical.insert(name.clone(), value);
        }
        out.push(CohortRecord {
            patient_id,
            label,
            batch_id: rec[ib].to_string(),
            clinical,
        });
    }
    Ok(out)
}

pub fn load_cohort(dir: &Path) -> Result<Vec<CohortRecord>> {
    let path = dir.join(COHORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    cohort_from_csv(&text)
}

pub fn save_cohort(dir: &Path, records: &[CohortRecord]) -> Result<()> {
    write_atomic(&dir.join(COHORT_FILE), cohort_to_csv(records)?.as_bytes())
}

/// File stem of a patient's image inside a cohort directory.
pub fn image_stem(dir: &Path, patient: &str) -> std::path::PathBuf {
    dir.join(format!("{patient}__image"))
}

/// File stem of a patient's mask (`manual` or a variant name).
pub fn mask_stem(dir: &Path, patient: &str, variant: &str) -> std::path::PathBuf {
    dir.join(format!("{patient}__{variant}"))
}
