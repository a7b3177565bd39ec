//! Report tables and figure data from a working directory.
//!
//! Tables are CSV; each figure gets a plot-ready CSV and a static SVG.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use log::{info, warn};
use radstab_core::io::write_atomic;
use radstab_core::morphology::{Variant, MANUAL};
use radstab_core::pipeline::ClinicalSet;
use radstab_core::stats::{bonferroni, ks_two_sample, mean_ci95, TestResult};

use crate::artifacts::{
    baseline_run, best_shap_run, num, read_best_shap, read_dsc, require, CsvOut, Layout, StagedDir,
    BEST_SHAP_FILE, SKILL_FILE,
};
use crate::commands::{mask_order, scatter_file};
use crate::svg::{self, BoxStats, Series};

pub fn mask_label(mask: &str) -> &str {
    if mask == MANUAL {
        "Manual"
    } else {
        match Variant::from_name(mask) {
            Some(v) => v.label(),
            None => mask,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Clinical,
    Baseline,
    BestShap,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub label: String,
    pub run: String,
    pub kind: Kind,
}

/// The twelve experiments in table order.
pub fn experiments() -> Vec<Experiment> {
    let mut out = vec![
        Experiment {
            label: "Demographical".into(),
            run: ClinicalSet::Demographic.name().into(),
            kind: Kind::Clinical,
        },
        Experiment {
            label: "Biopsy".into(),
            run: ClinicalSet::Biopsy.name().into(),
            kind: Kind::Clinical,
        },
    ];
    for m in mask_order() {
        out.push(Experiment {
            label: format!("{} - all", mask_label(m)),
            run: baseline_run(m),
            kind: Kind::Baseline,
        });
    }
    for m in mask_order() {
        out.push(Experiment {
            label: format!("{} - best-SHAP", mask_label(m)),
            run: best_shap_run(m),
            kind: Kind::BestShap,
        });
    }
    out
}

/// Per-split scores in table column order.
pub const SKILL_COLUMNS: [(&str, &str); 5] = [
    ("Accuracy", "accuracy"),
    ("Balanced Accuracy", "balanced_accuracy"),
    ("Recall", "recall"),
    ("Specificity", "specificity"),
    ("ROC-AUC", "roc_auc"),
];

fn read_skill(path: &Path) -> Result<Vec<[f64; 5]>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let idx: Vec<usize> = SKILL_COLUMNS
        .iter()
        .map(|(_, c)| {
            header
                .iter()
                .position(|h| h == *c)
                .with_context(|| format!("{} lacks a {c} column", path.display()))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut row = [0.0; 5];
        for (k, &i) in idx.iter().enumerate() {
            row[k] = rec[i]
                .parse()
                .with_context(|| format!("{}: {:?} is not a number", path.display(), &rec[i]))?;
        }
        out.push(row);
    }
    Ok(out)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn table1(layout: &Layout, dir: &Path) -> Result<()> {
    let dsc = read_dsc(&layout.dsc())?;
    let mut csv = CsvOut::new(["Segmentation mask", "Mean DSC ± standard deviation"])?;
    for v in Variant::ALL {
        let vals: Vec<f64> = dsc
            .iter()
            .filter(|((_, var), _)| var == v.name())
            .map(|(_, d)| *d)
            .collect();
        if vals.is_empty() {
            warn!("no DSC values for {v}");
            csv.row([v.label().to_string(), "NA".into()])?;
            continue;
        }
        let (m, sd) = mean_sd(&vals);
        csv.row([v.label().to_string(), format!("{m:.2} ± {sd:.2}")])?;
    }
    csv.save(&dir.join("table1_dsc.csv"))
}

/// Best-SHAP list of each mask, in mask order.
fn best_lists(layout: &Layout) -> Result<Vec<(&'static str, Vec<String>)>> {
    mask_order()
        .into_iter()
        .map(|m| {
            let path = layout.run(&baseline_run(m)).join(BEST_SHAP_FILE);
            require(&path, "train")?;
            Ok((m, read_best_shap(&path)?))
        })
        .collect()
}

/// `(image filter, matrix, feature)` from a `filter|family|name` column.
pub fn split_feature(name: &str) -> (String, String, String) {
    let mut parts = name.splitn(3, '|');
    let filter = parts.next().unwrap_or_default();
    let family = parts.next().unwrap_or_default().to_string();
    let feature = parts.next().unwrap_or_default().to_string();
    let filter = match filter
        .strip_prefix("log-sigma-")
        .and_then(|s| s.strip_suffix("-mm"))
    {
        Some(sigma) => {
            let s = sigma.replace('-', ".");
            format!("LoG σ={}", s.strip_suffix(".0").unwrap_or(&s))
        }
        None => filter.to_string(),
    };
    (filter, family, feature)
}

fn table2(lists: &[(&str, Vec<String>)], dir: &Path) -> Result<()> {
    let mut header = vec![
        "Image Filter".to_string(),
        "Matrix".into(),
        "Feature Name".into(),
    ];
    header.extend(lists.iter().map(|(m, _)| mask_label(m).to_string()));
    header.push("Common".into());
    let mut rows: Vec<((String, String, String), String)> = lists
        .iter()
        .flat_map(|(_, l)| l.iter())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|f| (split_feature(f), f.clone()))
        .collect();
    rows.sort();
    let mut csv = CsvOut::new(&header)?;
    for ((filter, family, feature), name) in rows {
        let marks: Vec<bool> = lists.iter().map(|(_, l)| l.contains(&name)).collect();
        let mut row = vec![filter, family, feature];
        row.extend(marks.iter().map(|&x| if x { "X" } else { "-" }.to_string()));
        row.push(if marks.iter().all(|&x| x) { "*" } else { "" }.to_string());
        csv.row(&row)?;
    }
    csv.save(&dir.join("table2_best_shap.csv"))
}

type Scores = Vec<(Experiment, Option<Vec<[f64; 5]>>)>;

fn load_scores(layout: &Layout, lists: &[(&str, Vec<String>)]) -> Result<Scores> {
    experiments()
        .into_iter()
        .map(|e| {
            let path = layout.run(&e.run).join(SKILL_FILE);
            let skipped = e.kind == Kind::BestShap
                && lists
                    .iter()
                    .any(|(m, l)| best_shap_run(m) == e.run && l.is_empty());
            if skipped {
                return Ok((e, None));
            }
            require(&path, "train")?;
            let rows = read_skill(&path)?;
            Ok((e, Some(rows)))
        })
        .collect()
}

fn ci_cell(v: &[f64]) -> String {
    match mean_ci95(v) {
        Ok((m, lo, hi)) => format!("{m:.3} ({lo:.3}, {hi:.3})"),
        Err(_) if !v.is_empty() => format!("{:.3} (NA, NA)", v[0]),
        Err(_) => "NA".into(),
    }
}

fn table3(scores: &Scores, dir: &Path) -> Result<()> {
    let mut header = vec!["Experiment"];
    header.extend(SKILL_COLUMNS.iter().map(|(h, _)| *h));
    let mut csv = CsvOut::new(header)?;
    for (e, rows) in scores {
        let mut row = vec![e.label.clone()];
        for k in 0..5 {
            row.push(match rows {
                Some(r) => ci_cell(&r.iter().map(|s| s[k]).collect::<Vec<_>>()),
                None => "NA".into(),
            });
        }
        csv.row(&row)?;
    }
    csv.save(&dir.join("table3_skill_scores.csv"))
}

fn auc(rows: &Option<Vec<[f64; 5]>>) -> Option<Vec<f64>> {
    rows.as_ref().map(|r| r.iter().map(|s| s[4]).collect())
}

fn fig4(scores: &Scores, dir: &Path) -> Result<()> {
    let mut csv = CsvOut::new([
        "experiment",
        "n",
        "min",
        "q1",
        "median",
        "q3",
        "max",
        "whisker_low",
        "whisker_high",
        "mean",
    ])?;
    let mut boxes = Vec::new();
    for (e, rows) in scores {
        let b = auc(rows).and_then(|v| BoxStats::from_values(&v));
        match b {
            Some(b) => csv.row([
                e.label.clone(),
                b.n.to_string(),
                num(b.min),
                num(b.q1),
                num(b.median),
                num(b.q3),
                num(b.max),
                num(b.whisker_lo),
                num(b.whisker_hi),
                num(b.mean),
            ])?,
            None => {
                let mut row = vec![e.label.clone(), "0".into()];
                row.extend(std::iter::repeat_n("NA".to_string(), 8));
                csv.row(&row)?;
            }
        }
        boxes.push((e.label.clone(), b));
    }
    csv.save(&dir.join("fig4_roc_auc_boxplot.csv"))?;
    let chart = svg::boxplot("ROC-AUC over splits", "ROC-AUC", &boxes);
    write_atomic(&dir.join("fig4_roc_auc_boxplot.svg"), chart.as_bytes())?;
    Ok(())
}

const GROUP_LABELS: [(&str, &str); 3] = [
    ("baseline model (any mask)", "best-SHAP model (any mask)"),
    ("biopsy model", "best-SHAP model (any mask)"),
    ("best-SHAP model (any mask)", "best-SHAP model (any mask)"),
];

fn table4(scores: &Scores, dir: &Path) -> Result<()> {
    let pick = |kind: Kind| -> Vec<(&str, Vec<f64>)> {
        scores
            .iter()
            .filter(|(e, _)| e.kind == kind)
            .filter_map(|(e, r)| auc(r).map(|a| (e.label.as_str(), a)))
            .collect()
    };
    let (base, best) = (pick(Kind::Baseline), pick(Kind::BestShap));
    let biopsy: Vec<(&str, Vec<f64>)> = scores
        .iter()
        .filter(|(e, _)| e.run == ClinicalSet::Biopsy.name())
        .filter_map(|(e, r)| auc(r).map(|a| (e.label.as_str(), a)))
        .collect();

    let mut pairs: Vec<(usize, &str, &str, &[f64], &[f64])> = Vec::new();
    for (a, va) in &base {
        for (b, vb) in &best {
            pairs.push((0, a, b, va, vb));
        }
    }
    for (a, va) in &biopsy {
        for (b, vb) in &best {
            pairs.push((1, a, b, va, vb));
        }
    }
    for (i, (a, va)) in best.iter().enumerate() {
        for (b, vb) in &best[i + 1..] {
            pairs.push((2, a, b, va, vb));
        }
    }
    let mut results: Vec<TestResult> = pairs
        .iter()
        .map(|(_, a, b, va, vb)| {
            ks_two_sample(va, vb).with_context(|| format!("KS test {a} vs {b}"))
        })
        .collect::<Result<_>>()?;
    bonferroni(&mut results);

    let mut csv = CsvOut::new([
        "Model 1",
        "Model 2",
        "KS statistic",
        "p-value",
        "Adjusted p-value",
        "Significance",
    ])?;
    for ((_, a, b, _, _), r) in pairs.iter().zip(&results) {
        let mark = if r.p_adjusted < 0.05 { "*" } else { "-" };
        csv.row([
            a.to_string(),
            b.to_string(),
            num(r.statistic),
            num(r.p_value),
            num(r.p_adjusted),
            mark.into(),
        ])?;
    }
    csv.save(&dir.join("table4_ks_tests.csv"))?;

    let mut summary = CsvOut::new(["Model 1", "Model 2", "Significance", "Exceptions"])?;
    for (g, (m1, m2)) in GROUP_LABELS.iter().enumerate() {
        let group: Vec<(&str, &str, bool)> = pairs
            .iter()
            .zip(&results)
            .filter(|((k, ..), _)| *k == g)
            .map(|((_, a, b, _, _), r)| (*a, *b, r.p_adjusted < 0.05))
            .collect();
        if group.is_empty() {
            summary.row([*m1, *m2, "NA", ""])?;
            continue;
        }
        let sig = group.iter().filter(|(_, _, s)| *s).count();
        let majority = 2 * sig > group.len();
        let exceptions: Vec<String> = group
            .iter()
            .filter(|(_, _, s)| *s != majority)
            .map(|(a, b, _)| format!("{a} vs {b}"))
            .collect();
        summary.row([
            *m1,
            *m2,
            if majority { "*" } else { "-" },
            &exceptions.join("; "),
        ])?;
    }
    summary.save(&dir.join("table4_summary.csv"))
}

/// Features in every mask's best-SHAP list, or failing that the ones in the
/// most lists. The second field says which rule applied.
pub fn common_features(lists: &[(&str, Vec<String>)]) -> (Vec<String>, usize) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, l) in lists {
        for f in l.iter().collect::<BTreeSet<_>>() {
            *counts.entry(f.as_str()).or_default() += 1;
        }
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let picked = counts
        .iter()
        .filter(|(_, c)| **c == top && top > 0)
        .map(|(f, _)| f.to_string())
        .collect();
    (picked, top)
}

fn nan_median(v: &mut [f64]) -> f64 {
    let mut f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if f.is_empty() {
        return f64::NAN;
    }
    f.sort_by(f64::total_cmp);
    svg::quantile(&f, 0.5)
}

fn parse_num(s: &str, path: &Path) -> Result<f64> {
    s.parse()
        .with_context(|| format!("{}: {s:?} is not a number", path.display()))
}

fn fig5(layout: &Layout, common: &[String], dir: &Path) -> Result<()> {
    let path = layout.stability();
    require(&path, "stability")?;
    let mut r = csv::Reader::from_path(&path)?;
    let mut by_key: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        by_key.insert(
            (rec[0].to_string(), rec[1].to_string()),
            (parse_num(&rec[3], &path)?, parse_num(&rec[4], &path)?),
        );
    }
    let variants: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
    let x: Vec<String> = Variant::ALL.iter().map(|v| v.label().to_string()).collect();
    let mut icc_series = Vec::new();
    let mut r_series = Vec::new();
    let mut csv = CsvOut::new(["series", "variant", "icc", "pearson"])?;
    for f in common {
        let vals: Vec<(f64, f64)> = variants
            .iter()
            .map(|v| {
                by_key
                    .get(&(f.clone(), v.to_string()))
                    .copied()
                    .unwrap_or((f64::NAN, f64::NAN))
            })
            .collect();
        for (v, (icc, r)) in variants.iter().zip(&vals) {
            csv.row([f.clone(), v.to_string(), num(*icc), num(*r)])?;
        }
        icc_series.push(Series {
            name: f.clone(),
            values: vals.iter().map(|p| p.0).collect(),
            dashed: false,
        });
        r_series.push(Series {
            name: f.clone(),
            values: vals.iter().map(|p| p.1).collect(),
            dashed: false,
        });
    }
    let label = "median (all features)";
    let mut med = Vec::new();
    for v in &variants {
        let (mut iccs, mut rs): (Vec<f64>, Vec<f64>) = by_key
            .iter()
            .filter(|((_, var), _)| var == v)
            .map(|(_, p)| *p)
            .unzip();
        let m = (nan_median(&mut iccs), nan_median(&mut rs));
        csv.row([label.to_string(), v.to_string(), num(m.0), num(m.1)])?;
        med.push(m);
    }
    icc_series.push(Series {
        name: label.into(),
        values: med.iter().map(|p| p.0).collect(),
        dashed: true,
    });
    r_series.push(Series {
        name: label.into(),
        values: med.iter().map(|p| p.1).collect(),
        dashed: true,
    });
    csv.save(&dir.join("fig5_icc_pearson.csv"))?;
    write_atomic(
        &dir.join("fig5_icc.svg"),
        svg::lines("ICC(2,1) against the manual mask", "ICC", &x, &icc_series).as_bytes(),
    )?;
    write_atomic(
        &dir.join("fig5_pearson.svg"),
        svg::lines(
            "Pearson correlation against the manual mask",
            "Pearson r",
            &x,
            &r_series,
        )
        .as_bytes(),
    )?;
    Ok(())
}

const SCORE_NAMES: [&str; 5] = [
    "quality",
    "consistency",
    "robustness",
    "instability",
    "unclassified",
];

fn fig6(layout: &Layout, common: &[String], dir: &Path) -> Result<()> {
    let path = layout.reliability();
    require(&path, "stability")?;
    let mut r = csv::Reader::from_path(&path)?;
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        if common.iter().any(|f| f == &rec[0]) {
            let v = (1..=5)
                .map(|i| parse_num(&rec[i], &path))
                .collect::<Result<Vec<_>>>()?;
            rows.insert(rec[0].to_string(), v);
        }
    }
    let mut header = vec!["feature"];
    header.extend(SCORE_NAMES);
    let mut csv = CsvOut::new(header)?;
    let mut groups = Vec::new();
    for f in common {
        let v = rows
            .get(f)
            .with_context(|| format!("{} has no row for {f}", path.display()))?;
        let mut row = vec![f.clone()];
        row.extend(v.iter().map(|x| num(*x)));
        csv.row(&row)?;
        groups.push((f.clone(), v.clone()));
    }
    csv.save(&dir.join("fig6_reliability_scores.csv"))?;
    let chart = svg::grouped_bars(
        "Reliability scores of the common best-SHAP features",
        &SCORE_NAMES,
        &groups,
    );
    write_atomic(&dir.join("fig6_reliability_scores.svg"), chart.as_bytes())?;
    Ok(())
}

fn fig7(layout: &Layout, common: &[String], dir: &Path) -> Result<()> {
    let variants: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
    let mut csv = CsvOut::new(["feature", "variant", "patient_id", "dsc", "rel_err"])?;
    let mut grid = Vec::new();
    for f in common {
        let path = layout.scatter().join(scatter_file(f));
        require(&path, "stability")?;
        let mut r = csv::Reader::from_path(&path)?;
        let mut panels = vec![Vec::new(); variants.len()];
        for rec in r.records() {
            let rec = rec?;
            let (d, e) = (parse_num(&rec[2], &path)?, parse_num(&rec[3], &path)?);
            csv.row([f.as_str(), &rec[1], &rec[0], &rec[2], &rec[3]])?;
            if let Some(c) = variants.iter().position(|v| *v == &rec[1]) {
                panels[c].push((d, e));
            }
        }
        grid.push(panels);
    }
    csv.save(&dir.join("fig7_scatter.csv"))?;
    let cols: Vec<String> = Variant::ALL.iter().map(|v| v.label().to_string()).collect();
    let chart = svg::scatter_grid("Relative error against DSC", common, &cols, &grid);
    write_atomic(&dir.join("fig7_scatter.svg"), chart.as_bytes())?;
    Ok(())
}

pub fn report(work: &Path, out: &Path) -> Result<()> {
    let layout = Layout::new(work);
    require(&layout.dsc(), "variants")?;
    let lists = best_lists(&layout)?;
    let scores = load_scores(&layout, &lists)?;
    let (common, hits) = common_features(&lists);

    let staged = StagedDir::new(out)?;
    let dir = staged.path();
    table1(&layout, dir)?;
    table2(&lists, dir)?;
    table3(&scores, dir)?;
    table4(&scores, dir)?;
    fig4(&scores, dir)?;
    let note = if hits == lists.len() {
        format!("# selected by all {} models\n", lists.len())
    } else {
        warn!(
            "no feature is in every best-SHAP list; figures use those in {hits} of {}",
            lists.len()
        );
        format!(
            "# no feature is selected by all models; these are selected by {hits} of {}\n",
            lists.len()
        )
    };
    let text: String = std::iter::once(note)
        .chain(common.iter().map(|f| format!("{f}\n")))
        .collect();
    write_atomic(&dir.join("common_features.txt"), text.as_bytes())?;
    fig5(&layout, &common, dir)?;
    fig6(&layout, &common, dir)?;
    fig7(&layout, &common, dir)?;
    staged.commit()?;
    info!("report: written to {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_experiments_in_table_order() {
        let labels: Vec<String> = experiments().into_iter().map(|e| e.label).collect();
        assert_eq!(labels.len(), 12);
        assert_eq!(labels[0], "Demographical");
        assert_eq!(labels[2], "Manual - all");
        assert_eq!(labels[3], "Closing 08 - all");
        assert_eq!(labels[11], "Ellipsoid 04 - best-SHAP");
    }

    #[test]
    fn feature_names_split_into_table_columns() {
        let (f, m, n) = split_feature("log-sigma-3-0-mm|glszm|HighGrayLevelZoneEmphasis");
        assert_eq!(
            (f.as_str(), m.as_str(), n.as_str()),
            ("LoG σ=3", "glszm", "HighGrayLevelZoneEmphasis")
        );
        assert_eq!(
            split_feature("wavelet-HLH|firstorder|Skewness").0,
            "wavelet-HLH"
        );
        assert_eq!(split_feature("log-sigma-1-5-mm|glcm|Idm").0, "LoG σ=1.5");
    }

    #[test]
    fn common_falls_back_to_most_frequent() {
        let l = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let lists = vec![
            ("manual", l(&["a", "b"])),
            ("closing_08", l(&["a"])),
            ("closing_07", l(&["b", "c"])),
        ];
        assert_eq!(common_features(&lists), (l(&["a", "b"]), 2));
        let all = vec![("manual", l(&["a"])), ("closing_08", l(&["a"]))];
        assert_eq!(common_features(&all), (l(&["a"]), 2));
    }
}
