//! Per-split training protocol and best-SHAP aggregation.

use std::collections::{BTreeMap, HashMap};

use log::{debug, warn};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logreg::{fit_l1_logreg, FitOptions, LogRegModel};
use super::select::{anova_f_select, Standardizer};
use super::shap::{linear_shap, ShapRanking};
use super::skill::{roc_auc, skill, SkillScores};
use super::smote::smote;
use super::splits::{Split, SplitPlan};
use crate::error::{Error, Result};
use crate::harmonize::CombatModel;
use crate::rng::{stage_rng, Rng};
use crate::table::FeatureTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub fit: FitOptions,
    pub smote_k: usize,
    /// Columns kept by ANOVA F screening in the baseline stage.
    pub n_keep: usize,
    /// SHAP features recorded per split.
    pub top_k: usize,
    /// Folds of the within-split sanity CV; 0 or 1 disables it.
    pub cv_folds: usize,
    pub threshold: f64,
    /// Attribute SHAP on training rows instead of held-out rows.
    pub shap_on_train: bool,
    /// Oversample raw values and standardize afterwards.
    pub smote_before_standardize: bool,
    /// Fit ComBat on each training split and apply it to both sides.
    pub combat_in_split: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            fit: FitOptions::default(),
            smote_k: 5,
            n_keep: 50,
            top_k: 10,
            cv_folds: 5,
            threshold: 0.5,
            shap_on_train: false,
            smote_before_standardize: false,
            combat_in_split: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    /// ANOVA F screening followed by the L1 model.
    Baseline,
    /// A fixed feature list, no screening.
    Features(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub model: LogRegModel,
    pub skill: SkillScores,
    pub cv_auc: Option<f64>,
    pub shap: ShapRanking,
    /// Largest `|Σφ + baseline − logit|` over the attributed rows.
    pub local_accuracy: f64,
    /// Held-out probabilities, aligned with `test_ids`.
    pub test_ids: Vec<String>,
    pub test_prob: Vec<f64>,
}

struct Fitted {
    scaler: Standardizer,
    selected: Vec<usize>,
    model: LogRegModel,
    /// Standardized, selected training rows the model saw.
    background: Array2<f64>,
}

impl Fitted {
    fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.scaler.apply(x).select(Axis(1), &self.selected)
    }
}

fn fit_pipeline(
    x: ArrayView2<f64>,
    y: &[bool],
    names: &[String],
    baseline: bool,
    cfg: &ProtocolConfig,
    rng: &mut Rng,
) -> Result<Fitted> {
    let (scaler, xs, ys) = if cfg.smote_before_standardize {
        let (xo, yo) = smote(x, y, cfg.smote_k, rng)?;
        let scaler = Standardizer::fit(xo.view())?;
        (scaler.clone(), scaler.apply(xo.view()), yo)
    } else {
        let scaler = Standardizer::fit(x)?;
        let (xo, yo) = smote(scaler.apply(x).view(), y, cfg.smote_k, rng)?;
        (scaler, xo, yo)
    };
    let selected = if baseline {
        anova_f_select(xs.view(), &ys, names, cfg.n_keep)?
    } else {
        (0..names.len()).collect()
    };
    let background = xs.select(Axis(1), &selected);
    let sel_names: Vec<String> = selected.iter().map(|&j| names[j].clone()).collect();
    let model = fit_l1_logreg(background.view(), &ys, &sel_names, &cfg.fit)?;
    Ok(Fitted {
        scaler,
        selected,
        model,
        background,
    })
}

/// Stratified fold index of each row.
fn fold_ids(y: &[bool], k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut fold = vec![0; y.len()];
    for class in [false, true] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(rng);
        for (n, i) in rows.into_iter().enumerate() {
            fold[i] = n % k;
        }
    }
    fold
}

fn cross_validate(
    x: ArrayView2<f64>,
    y: &[bool],
    names: &[String],
    baseline: bool,
    cfg: &ProtocolConfig,
    rng: &mut Rng,
) -> Result<Option<f64>> {
    if cfg.cv_folds < 2 {
        return Ok(None);
    }
    let fold = fold_ids(y, cfg.cv_folds, rng);
    let mut aucs = Vec::new();
    for f in 0..cfg.cv_folds {
        let tr: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
        let te: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
        let ytr: Vec<bool> = tr.iter().map(|&i| y[i]).collect();
        let yte: Vec<bool> = te.iter().map(|&i| y[i]).collect();
        if !yte.contains(&true) || !yte.contains(&false) || ytr.iter().filter(|v| **v).count() < 2 {
            continue;
        }
        let fitted = fit_pipeline(
            x.select(Axis(0), &tr).view(),
            &ytr,
            names,
            baseline,
            cfg,
            rng,
        )?;
        let prob = fitted
            .model
            .predict_proba(fitted.transform(x.select(Axis(0), &te).view()).view());
        aucs.push(roc_auc(&yte, &prob)?);
    }
    Ok((!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64))
}

fn run_split(
    index: usize,
    split: &Split,
    table: &FeatureTable,
    row_of: &HashMap<&str, usize>,
    baseline: bool,
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<SplitResult> {
    let (y, names) = (table.labels(), table.columns());
    let pick = |ids: &[String]| -> (Vec<usize>, Vec<String>) {
        ids.iter()
            .filter_map(|id| row_of.get(id.as_str()).map(|&r| (r, id.clone())))
            .unzip()
    };
    let (tr, _) = pick(&split.train);
    let (te, test_ids) = pick(&split.test);
    let missing = split.train.len() + split.test.len() - tr.len() - te.len();
    if missing > 0 {
        debug!("split {index}: {missing} planned patients not in table");
    }
    let ytr: Vec<bool> = tr.iter().map(|&i| y[i]).collect();
    let yte: Vec<bool> = te.iter().map(|&i| y[i]).collect();
    if !yte.contains(&true) || !yte.contains(&false) {
        return Err(Error::InsufficientData(format!(
            "split {index}: test set has a single class"
        )));
    }
    let (xtr, xte) = if cfg.combat_in_split {
        let (ttr, tte) = (table.select_rows(&tr), table.select_rows(&te));
        let combat = CombatModel::fit(&ttr)?;
        (
            combat.apply(&ttr)?.values().clone(),
            combat.apply(&tte)?.values().clone(),
        )
    } else {
        (
            table.values().select(Axis(0), &tr),
            table.values().select(Axis(0), &te),
        )
    };

    let mut rng = stage_rng(seed, "smote", index as u64);
    let fitted = fit_pipeline(xtr.view(), &ytr, names, baseline, cfg, &mut rng)?;
    let eval = fitted.transform(xte.view());
    let prob = fitted.model.predict_proba(eval.view());
    let scores = skill(&yte, &prob, cfg.threshold)?;

    let attributed = if cfg.shap_on_train {
        fitted.background.clone()
    } else {
        eval
    };
    let shap = linear_shap(
        &fitted.model,
        attributed.view(),
        fitted.background.view(),
        cfg.top_k,
    )?;
    let local_accuracy = attributed
        .rows()
        .into_iter()
        .zip(shap.phi.rows())
        .map(|(row, phi)| (phi.sum() + shap.baseline - fitted.model.logit(row)).abs())
        .fold(0.0, f64::max);

    let mut cv_rng = stage_rng(seed, "cv", index as u64);
    let cv_auc = cross_validate(xtr.view(), &ytr, names, baseline, cfg, &mut cv_rng)?;
    Ok(SplitResult {
        split: index,
        model: fitted.model,
        skill: scores,
        cv_auc,
        shap: shap.ranking,
        local_accuracy,
        test_ids,
        test_prob: prob,
    })
}

/// Train and evaluate one model per split on a single mask-variant slice.
///
/// Columns with non-finite values are dropped first. Splits run in parallel;
/// results come back in split order.
pub fn run_protocol(
    table: &FeatureTable,
    plan: &SplitPlan,
    stage: &Stage,
    cfg: &ProtocolConfig,
) -> Result<Vec<SplitResult>> {
    if table.variants().len() != 1 {
        return Err(Error::Table(format!(
            "protocol expects a single mask variant, found {:?}",
            table.variants()
        )));
    }
    let table = match stage {
        Stage::Baseline => table.clone(),
        Stage::Features(list) => {
            if list.is_empty() {
                return Err(Error::InsufficientData("empty feature list".into()));
            }
            table.select_columns(list)?
        }
    };
    let (table, dropped) = table.drop_nonfinite_columns();
    if !dropped.is_empty() {
        warn!("{} columns with non-finite values dropped", dropped.len());
    }
    if table.n_cols() == 0 {
        return Err(Error::InsufficientData("no finite feature columns".into()));
    }
    let row_of: HashMap<&str, usize> = table
        .keys()
        .iter()
        .enumerate()
        .map(|(i, k)| (k.patient_id.as_str(), i))
        .collect();
    let baseline = matches!(stage, Stage::Baseline);
    plan.splits
        .par_iter()
        .enumerate()
        .map(|(s, split)| run_split(s, split, &table, &row_of, baseline, cfg, plan.seed))
        .collect()
}

/// Features appearing in at least `min_count` of the per-split lists, by
/// count (descending) and then name.
pub fn best_shap_aggregate(lists: &[Vec<String>], min_count: usize) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in lists {
        for f in l {
            *counts.entry(f.as_str()).or_default() += 1;
        }
    }
    let mut out: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(f, c)| (f.to_string(), c))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if out.is_empty() {
        warn!("no feature reached {min_count} SHAP top-k appearances");
    }
    out
}
