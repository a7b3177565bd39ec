use ndarray::{array, Array2};
use proptest::prelude::*;
use radstab_core::stability::{
    icc2, pearson, reliability_scores, stability_report, DscTable, StabilitySample, Thresholds,
};
use radstab_core::{FeatureTable, RowKey};

/// Two-way ANOVA written out cell by cell.
fn icc_by_hand(m: &[[f64; 2]; 3]) -> f64 {
    let (n, k) = (3.0, 2.0);
    let grand: f64 = m.iter().flatten().sum::<f64>() / 6.0;
    let row: Vec<f64> = m.iter().map(|r| (r[0] + r[1]) / 2.0).collect();
    let col = [
        (m[0][0] + m[1][0] + m[2][0]) / 3.0,
        (m[0][1] + m[1][1] + m[2][1]) / 3.0,
    ];
    let sst: f64 = m.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ssr: f64 = row.iter().map(|r| k * (r - grand).powi(2)).sum();
    let ssc: f64 = col.iter().map(|c| n * (c - grand).powi(2)).sum();
    let sse = sst - ssr - ssc;
    let (msr, msc, mse) = (ssr / 2.0, ssc / 1.0, sse / 2.0);
    (msr - mse) / (msr + (k - 1.0) * mse + k / n * (msc - mse))
}

#[test]
fn icc_matches_hand_anova() {
    let raw = [[1.0, 2.0], [2.0, 3.0], [3.0, 5.0]];
    let m = array![[1.0, 2.0], [2.0, 3.0], [3.0, 5.0]];
    let want = icc_by_hand(&raw);
    // MSR = 19/6, MSC = 8/3, MSE = 1/6 gives 3/5
    assert!((want - 0.6).abs() < 1e-12);
    assert!((icc2(m.view()).unwrap() - want).abs() < 1e-12);
}

#[test]
fn rater_shift_lowers_icc_but_not_pearson() {
    let a = [1.0, 3.0, 2.0, 5.0, 4.0, 6.5, 0.5, 2.5];
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let sd = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let b: Vec<f64> = a.iter().map(|x| x + 2.0 * sd).collect();
    let m = Array2::from_shape_fn((a.len(), 2), |(i, j)| if j == 0 { a[i] } else { b[i] });
    let r = pearson(&a, &b).unwrap();
    let icc = icc2(m.view()).unwrap();
    assert!((r - 1.0).abs() <= 1e-12);
    assert!(icc < 0.9, "icc {icc}");
    assert!(icc < r);
}

fn s(dsc: f64, rel_err: f64) -> StabilitySample {
    StabilitySample { dsc, rel_err }
}

#[test]
fn zero_error_splits_into_quality_and_robustness() {
    let th = Thresholds::default();
    let patients = vec![
        vec![s(0.9, 0.0), s(0.85, 0.0)],
        vec![s(0.9, 0.0), s(0.6, 0.0)],
        vec![s(0.95, 0.0), s(0.4, 0.0), s(0.7, 0.0)],
    ];
    let r = reliability_scores(&patients, &th);
    assert!((r.quality - 1.0 / 3.0).abs() < 1e-12);
    assert!((r.robustness - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.consistency, 0.0);
    assert_eq!(r.instability, 0.0);
}

#[test]
fn error_tracking_dsc_is_consistency() {
    let th = Thresholds::default();
    let patients: Vec<Vec<StabilitySample>> = (0..10)
        .map(|p| {
            [0.85, 0.75, 0.65, 0.5]
                .iter()
                .map(|d| d - 0.01 * p as f64)
                .map(|d| s(d, 1.0 - d))
                .collect()
        })
        .collect();
    let r = reliability_scores(&patients, &th);
    assert_eq!(r.consistency, 1.0);
    assert_eq!(r.n_patients, 10);
}

#[test]
fn large_error_at_high_dsc_is_instability() {
    let th = Thresholds::default();
    let patients: Vec<Vec<StabilitySample>> = (0..6)
        .map(|p| vec![s(0.95, 0.5 + 0.1 * p as f64), s(0.95, 0.8), s(0.95, 0.6)])
        .collect();
    let r = reliability_scores(&patients, &th);
    assert_eq!(r.instability, 1.0);
}

#[test]
fn short_patients_are_excluded() {
    let r = reliability_scores(
        &[vec![s(0.9, 0.0)], vec![s(0.9, 0.0), s(0.9, 0.0)]],
        &Thresholds::default(),
    );
    assert_eq!(r.excluded, 1);
    assert_eq!(r.quality, 1.0);
}

fn stacked_table(values: &[(&str, &str, f64)]) -> FeatureTable {
    let n = values.len();
    FeatureTable::new(
        values.iter().map(|(p, v, _)| RowKey::new(*p, *v)).collect(),
        vec![false; n],
        vec!["A".to_string(); n],
        vec!["f".to_string()],
        Array2::from_shape_fn((n, 1), |(i, _)| values[i].2),
    )
    .unwrap()
}

#[test]
fn mask_invariant_feature_is_fully_robust() {
    let mut rows = Vec::new();
    let mut dsc = DscTable::new();
    let pats = ["p0", "p1", "p2", "p3", "p4"];
    for (i, p) in pats.iter().enumerate() {
        for (v, d) in [("manual", 1.0), ("closing_08", 0.9), ("ellipsoid_04", 0.6)] {
            rows.push((*p, v, 10.0 + i as f64));
            if v != "manual" {
                dsc.insert((p.to_string(), v.to_string()), d);
            }
        }
    }
    let report = stability_report(
        &stacked_table(&rows),
        &[],
        "manual",
        &dsc,
        &Thresholds::default(),
    )
    .unwrap();
    assert_eq!(report.len(), 1);
    let f = &report[0];
    assert_eq!(f.pairs.len(), 2);
    for pair in &f.pairs {
        assert!((pair.icc - 1.0).abs() < 1e-12);
    }
    assert_eq!(f.scores.robustness, 1.0);
    assert_eq!(f.points.len(), 10);
}

#[test]
fn zero_reference_rows_are_counted() {
    let rows = [
        ("p0", "manual", 0.0),
        ("p0", "closing_08", 1.0),
        ("p1", "manual", 1.0),
        ("p1", "closing_08", 1.0),
        ("p2", "manual", 2.0),
        ("p2", "closing_08", 2.5),
    ];
    let dsc: DscTable = ["p0", "p1", "p2"]
        .iter()
        .map(|p| ((p.to_string(), "closing_08".to_string()), 0.9))
        .collect();
    let report = stability_report(
        &stacked_table(&rows),
        &[],
        "manual",
        &dsc,
        &Thresholds::default(),
    )
    .unwrap();
    assert_eq!(report[0].zero_reference, 1);
    assert_eq!(report[0].points.len(), 2);
    assert!(stability_report(
        &stacked_table(&rows),
        &[],
        "none",
        &dsc,
        &Thresholds::default()
    )
    .is_err());
}

proptest! {
    #[test]
    fn scores_partition_unity(
        pats in proptest::collection::vec(
            proptest::collection::vec((0.0f64..=1.0, 0.0f64..2.0), 0..6), 0..30),
    ) {
        let patients: Vec<Vec<StabilitySample>> = pats
            .into_iter()
            .map(|p| p.into_iter().map(|(d, e)| s(d, e)).collect())
            .collect();
        let r = reliability_scores(&patients, &Thresholds::default());
        prop_assert!((r.total() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pearson_invariant_to_positive_affine(
        x in proptest::collection::vec(-100.0f64..100.0, 5..20),
        noise in proptest::collection::vec(-1.0f64..1.0, 20),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(v, e)| v + 5.0 * e).collect();
        let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        if let (Ok(r1), Ok(r2)) = (pearson(&x, &y), pearson(&x2, &y)) {
            prop_assert!((r1 - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn rater_shift_strictly_lowers_icc(
        x in proptest::collection::vec(-10.0f64..10.0, 4..15),
        shift in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
    ) {
        let m = Array2::from_shape_fn((x.len(), 2), |(i, _)| x[i]);
        let shifted = Array2::from_shape_fn((x.len(), 2), |(i, j)| x[i] + if j == 1 { shift } else { 0.0 });
        if let Ok(base) = icc2(m.view()) {
            prop_assert!((base - 1.0).abs() < 1e-12);
            prop_assert!(icc2(shifted.view()).unwrap() < base);
        }
    }
}
