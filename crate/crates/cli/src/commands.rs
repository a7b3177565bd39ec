//! One function per subcommand plus the `run` orchestration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use ndarray::Array2;
use radstab_core::cohort::{
    image_stem, load_cohort, mask_stem, save_cohort, synth_cohort, CohortRecord, COHORT_FILE,
};
use radstab_core::features::{extract_from_filtered, filtered_images};
use radstab_core::harmonize::combat_per_variant;
use radstab_core::io::{file_pair, load_mask, load_volume, save_mask, save_volume, write_atomic};
use radstab_core::morphology::{make_variants, Variant, MANUAL};
use radstab_core::pipeline::{
    best_shap_aggregate, clinical_models, make_splits, run_protocol, ClinicalSet, SplitPlan,
    SplitResult, Stage,
};
use radstab_core::stability::stability_report;
use radstab_core::stats::univariate_screen;
use radstab_core::table::{load_feature_table, save_feature_table};
use radstab_core::{FeatureTable, RowKey};
use rayon::prelude::*;

use crate::artifacts::{
    baseline_run, best_shap_run, file_safe, num, read_best_shap, read_dsc, require,
    write_best_shap, write_dsc, CsvOut, Layout, StagedDir, BEST_SHAP_FILE, DSC_FILE, PLAN_FILE,
    SHAP_FILE, SKILL_FILE,
};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report;

/// Reference mask first, then the variants in table order.
pub fn mask_order() -> Vec<&'static str> {
    std::iter::once(MANUAL)
        .chain(Variant::ALL.iter().map(|v| v.name()))
        .collect()
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = &cfg.synth;
    let patients = synth_cohort(s.n_patients, s.class_ratio, cfg.seed, &s.params)?;
    let staged = StagedDir::new(out)?;
    patients.par_iter().try_for_each(|p| -> Result<()> {
        let id = &p.record.patient_id;
        save_volume(&p.image, image_stem(staged.path(), id))?;
        save_mask(
            &p.mask,
            p.image.spacing(),
            mask_stem(staged.path(), id, MANUAL),
        )?;
        Ok(())
    })?;
    let records: Vec<CohortRecord> = patients.into_iter().map(|p| p.record).collect();
    save_cohort(staged.path(), &records)?;
    staged.commit()?;
    let pos = records.iter().filter(|r| r.label).count();
    info!(
        "synth: {} patients ({pos} positive) in {}",
        records.len(),
        out.display()
    );
    Ok(())
}

fn load_records(cohort: &Path) -> Result<Vec<CohortRecord>> {
    require(&cohort.join(COHORT_FILE), "synth")?;
    let records = load_cohort(cohort)?;
    if records.is_empty() {
        anyhow::bail!("cohort {} has no patients", cohort.display());
    }
    Ok(records)
}

pub fn variants(cfg: &RunConfig, cohort: &Path, out: &Path) -> Result<()> {
    let records = load_records(cohort)?;
    let staged = StagedDir::new(out)?;
    let rows: Vec<Vec<(String, String, f64)>> = records
        .par_iter()
        .map(|r| -> Result<_> {
            let id = &r.patient_id;
            let (mask, spacing) = load_mask(mask_stem(cohort, id, MANUAL))
                .with_context(|| format!("patient {id}"))?;
            let set =
                make_variants(&mask, &cfg.variants).with_context(|| format!("patient {id}"))?;
            for v in &set.dropped {
                warn!("{id}: {v} mask came out empty and is skipped");
            }
            let mut rows = Vec::new();
            for vm in &set.variants {
                if vm.border_contact {
                    warn!("{id}: {} touches the volume border", vm.variant);
                }
                save_mask(
                    &vm.mask,
                    spacing,
                    mask_stem(staged.path(), id, vm.variant.name()),
                )?;
                rows.push((id.clone(), vm.variant.name().to_string(), vm.dsc));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    write_dsc(&staged.path().join(DSC_FILE), &rows.concat())?;
    staged.commit()?;
    info!("variants: {} patients in {}", records.len(), out.display());
    Ok(())
}

pub fn extract(
    cfg: &RunConfig,
    cohort: &Path,
    variants: Option<&Path>,
    out: &Path,
    dump: Option<(&Path, Option<&str>)>,
) -> Result<()> {
    let records = load_records(cohort)?;
    if let Some(dir) = variants {
        require(&dir.join(DSC_FILE), "variants")?;
    }
    let fc = &cfg.extraction;
    let names = fc.feature_names();
    let per_patient: Vec<Vec<(String, Vec<f64>)>> = records
        .par_iter()
        .map(|r| -> Result<_> {
            let id = &r.patient_id;
            let image =
                load_volume(image_stem(cohort, id)).with_context(|| format!("patient {id}"))?;
            let filtered = filtered_images(&image, fc).with_context(|| format!("patient {id}"))?;
            let mut masks = vec![(MANUAL, load_mask(mask_stem(cohort, id, MANUAL))?.0)];
            if let Some(dir) = variants {
                for v in Variant::ALL {
                    let stem = mask_stem(dir, id, v.name());
                    if file_pair(&stem).0.exists() {
                        masks.push((v.name(), load_mask(stem)?.0));
                    } else {
                        warn!("{id}: no {v} mask; row skipped");
                    }
                }
            }
            masks
                .into_iter()
                .map(|(v, m)| {
                    if m.is_empty() {
                        return Err(radstab_core::Error::EmptyMask)
                            .with_context(|| format!("patient {id}, {v} mask"));
                    }
                    let fv = extract_from_filtered(&filtered, &m, fc)
                        .with_context(|| format!("patient {id}, {v} mask"))?;
                    for f in &fv.flags {
                        log::debug!("{id}/{v}: {f}");
                    }
                    Ok((v.to_string(), fv.values))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut keys = Vec::new();
    let mut labels = Vec::new();
    let mut batches = Vec::new();
    let mut flat = Vec::new();
    for (r, rows) in records.iter().zip(per_patient) {
        for (v, values) in rows {
            keys.push(RowKey::new(r.patient_id.clone(), v));
            labels.push(r.label);
            batches.push(r.batch_id.clone());
            flat.extend(values);
        }
    }
    let values = Array2::from_shape_vec((keys.len(), names.len()), flat)?;
    let table = FeatureTable::new(keys, labels, batches, names, values)?;
    save_feature_table(&table, out)?;
    info!(
        "extract: {} rows x {} features in {}",
        table.n_rows(),
        table.n_cols(),
        out.display()
    );

    if let Some((dir, patient)) = dump {
        let id = patient.unwrap_or(&records[0].patient_id);
        if !records.iter().any(|r| r.patient_id == id) {
            return Err(
                CliError::Usage(format!("--dump-patient {id} is not in the cohort")).into(),
            );
        }
        let image = load_volume(image_stem(cohort, id))?;
        let staged = StagedDir::new(dir)?;
        for (fid, img) in filtered_images(&image, fc)? {
            save_volume(&img, staged.path().join(format!("{id}__{fid}")))?;
        }
        staged.commit()?;
    }
    Ok(())
}

fn load_table(path: &Path) -> Result<FeatureTable> {
    require(path, "extract")?;
    load_feature_table(path).with_context(|| format!("reading {}", path.display()))
}

pub fn harmonize(input: &Path, batch_col: &str, out: &Path) -> Result<()> {
    if batch_col != "batch_id" {
        return Err(CliError::Usage(format!(
            "--batch-col {batch_col:?}: batches are read from the batch_id key column"
        ))
        .into());
    }
    let table = load_table(input)?;
    let harmonized = combat_per_variant(&table)?;
    save_feature_table(&harmonized, out)?;
    info!(
        "harmonize: {} rows in {}",
        harmonized.n_rows(),
        out.display()
    );
    Ok(())
}

fn variant_slice(table: &FeatureTable, variant: &str, path: &Path) -> Result<FeatureTable> {
    let slice = table.select_variant(variant);
    if slice.n_rows() == 0 {
        return Err(CliError::Usage(format!(
            "{} has no rows for mask variant {variant:?} (found {:?})",
            path.display(),
            table.variants()
        ))
        .into());
    }
    Ok(slice)
}

pub fn screen(input: &Path, cohort: Option<&Path>, variant: &str, out: &Path) -> Result<()> {
    let table = variant_slice(&load_table(input)?, variant, input)?;
    let records = match cohort {
        Some(c) => load_records(c)?,
        None => Vec::new(),
    };
    let rows = univariate_screen(&table, &records)?;
    let mut csv = CsvOut::new([
        "variable",
        "test",
        "statistic",
        "p_value",
        "p_adjusted",
        "n_comparisons",
        "constant",
    ])?;
    for r in &rows {
        csv.row([
            r.variable.clone(),
            r.test.to_string(),
            num(r.result.statistic),
            num(r.result.p_value),
            num(r.result.p_adjusted),
            r.result.n_comparisons.to_string(),
            r.constant.to_string(),
        ])?;
    }
    csv.save(out)?;
    let hits = rows.iter().filter(|r| r.result.p_adjusted < 0.05).count();
    info!(
        "screen: {hits} of {} variables significant after correction",
        rows.len()
    );
    Ok(())
}

pub enum TrainSource {
    Features {
        input: PathBuf,
        variant: String,
        best_shap_from: Option<PathBuf>,
    },
    Clinical {
        cohort: PathBuf,
        set: ClinicalSet,
    },
}

fn plan_for(cfg: &RunConfig, ids: &[(String, bool)]) -> Result<SplitPlan> {
    Ok(make_splits(
        ids,
        cfg.pipeline.n_splits,
        cfg.pipeline.train_frac,
        cfg.seed,
    )?)
}

pub fn train(cfg: &RunConfig, source: &TrainSource, out: &Path) -> Result<()> {
    let protocol = &cfg.pipeline.protocol;
    let (plan, results, baseline) = match source {
        TrainSource::Clinical { cohort, set } => {
            let records = load_records(cohort)?;
            let ids: Vec<(String, bool)> = records
                .iter()
                .map(|r| (r.patient_id.clone(), r.label))
                .collect();
            let plan = plan_for(cfg, &ids)?;
            let results = clinical_models(&records, &plan, *set, protocol)
                .with_context(|| format!("{} model", set.name()))?;
            (plan, results, false)
        }
        TrainSource::Features {
            input,
            variant,
            best_shap_from,
        } => {
            let table = variant_slice(&load_table(input)?, variant, input)?;
            let ids: Vec<(String, bool)> = table
                .keys()
                .iter()
                .zip(table.labels())
                .map(|(k, y)| (k.patient_id.clone(), *y))
                .collect();
            let plan = plan_for(cfg, &ids)?;
            let stage = match best_shap_from {
                Some(f) => {
                    require(f, "train")?;
                    let list = read_best_shap(f)?;
                    if list.is_empty() {
                        return Err(
                            CliError::Usage(format!("{} lists no features", f.display())).into(),
                        );
                    }
                    Stage::Features(list)
                }
                None => Stage::Baseline,
            };
            let baseline = stage == Stage::Baseline;
            let results = run_protocol(&table, &plan, &stage, protocol)
                .with_context(|| format!("training on {variant} features"))?;
            (plan, results, baseline)
        }
    };
    let best = baseline.then(|| {
        let lists: Vec<Vec<String>> = results.iter().map(|r| r.shap.top.clone()).collect();
        best_shap_aggregate(&lists, cfg.pipeline.min_count)
    });
    write_run(out, &plan, &results, best.as_deref())?;
    let mean_auc = results.iter().map(|r| r.skill.roc_auc).sum::<f64>() / results.len() as f64;
    info!(
        "train: {} splits, mean ROC-AUC {mean_auc:.3}, outputs in {}",
        results.len(),
        out.display()
    );
    Ok(())
}

fn write_run(
    out: &Path,
    plan: &SplitPlan,
    results: &[SplitResult],
    best: Option<&[(String, usize)]>,
) -> Result<()> {
    let staged = StagedDir::new(out)?;
    let dir = staged.path();
    write_atomic(
        &dir.join(PLAN_FILE),
        serde_json::to_string_pretty(plan)?.as_bytes(),
    )?;
    for r in results {
        let path = dir
            .join("models")
            .join(format!("split_{:03}.json", r.split));
        write_atomic(&path, serde_json::to_string_pretty(r)?.as_bytes())?;
    }

    let mut skill = CsvOut::new([
        "split",
        "accuracy",
        "recall",
        "specificity",
        "balanced_accuracy",
        "roc_auc",
        "cv_auc",
        "n_features",
        "nonzero",
        "kkt_residual",
        "local_accuracy",
    ])?;
    let mut shap = CsvOut::new(["split", "rank", "feature", "mean_abs_shap"])?;
    let mut pred = CsvOut::new(["split", "patient_id", "probability"])?;
    for r in results {
        let s = &r.skill;
        skill.row([
            r.split.to_string(),
            num(s.accuracy),
            num(s.recall),
            num(s.specificity),
            num(s.balanced_accuracy),
            num(s.roc_auc),
            r.cv_auc.map_or_else(String::new, num),
            r.model.features.len().to_string(),
            r.model.nonzero().to_string(),
            num(r.model.kkt),
            num(r.local_accuracy),
        ])?;
        for (rank, f) in r.shap.top.iter().enumerate() {
            let j = r
                .shap
                .features
                .iter()
                .position(|x| x == f)
                .expect("top feature is ranked");
            shap.row([
                r.split.to_string(),
                (rank + 1).to_string(),
                f.clone(),
                num(r.shap.mean_abs[j]),
            ])?;
        }
        for (id, p) in r.test_ids.iter().zip(&r.test_prob) {
            pred.row([r.split.to_string(), id.clone(), num(*p)])?;
        }
    }
    skill.save(&dir.join(SKILL_FILE))?;
    shap.save(&dir.join(SHAP_FILE))?;
    pred.save(&dir.join("predictions.csv"))?;
    if let Some(best) = best {
        write_best_shap(&dir.join(BEST_SHAP_FILE), best)?;
    }
    staged.commit()
}

pub struct StabilityPaths {
    pub input: PathBuf,
    pub dsc: PathBuf,
    pub out: PathBuf,
    pub scores: PathBuf,
    pub scatter_dir: Option<PathBuf>,
}

pub fn stability(
    cfg: &RunConfig,
    paths: &StabilityPaths,
    features: &[String],
    scatter_features: &[String],
) -> Result<()> {
    let table = load_table(&paths.input)?;
    require(&paths.dsc, "variants")?;
    let dsc = read_dsc(&paths.dsc)?;
    let st = &cfg.stability;
    let report = stability_report(&table, features, &st.reference, &dsc, &st.thresholds)?;

    let mut pairs = CsvOut::new(["feature", "variant", "n", "icc", "pearson"])?;
    let mut scores = CsvOut::new([
        "feature",
        "quality",
        "consistency",
        "robustness",
        "instability",
        "unclassified",
        "n_patients",
        "excluded",
        "zero_reference",
    ])?;
    for f in &report {
        for p in &f.pairs {
            pairs.row([
                f.feature.clone(),
                p.variant.clone(),
                p.n.to_string(),
                num(p.icc),
                num(p.pearson),
            ])?;
        }
        let s = &f.scores;
        scores.row([
            f.feature.clone(),
            num(s.quality),
            num(s.consistency),
            num(s.robustness),
            num(s.instability),
            num(s.unclassified),
            s.n_patients.to_string(),
            s.excluded.to_string(),
            f.zero_reference.to_string(),
        ])?;
    }
    pairs.save(&paths.out)?;
    scores.save(&paths.scores)?;

    if let Some(dir) = &paths.scatter_dir {
        let keep: BTreeSet<&str> = scatter_features.iter().map(String::as_str).collect();
        let staged = StagedDir::new(dir)?;
        for f in report
            .iter()
            .filter(|f| keep.is_empty() || keep.contains(f.feature.as_str()))
        {
            let mut csv = CsvOut::new(["patient_id", "variant", "dsc", "rel_err"])?;
            for p in &f.points {
                csv.row([
                    p.patient_id.clone(),
                    p.variant.clone(),
                    num(p.dsc),
                    num(p.rel_err),
                ])?;
            }
            csv.save(&staged.path().join(scatter_file(&f.feature)))?;
        }
        staged.commit()?;
    }
    info!(
        "stability: {} features against {:?}",
        report.len(),
        st.reference
    );
    Ok(())
}

pub fn scatter_file(feature: &str) -> String {
    format!("{}.csv", file_safe(feature))
}

/// Every stage in order under `cfg.paths.out`.
pub fn run(cfg: &RunConfig) -> Result<()> {
    cfg.validate().map_err(CliError::Usage)?;
    let layout = Layout::new(&cfg.paths.out);
    fs::create_dir_all(&layout.root)
        .with_context(|| format!("creating {}", layout.root.display()))?;
    write_atomic(&layout.root.join("config.toml"), cfg.to_toml().as_bytes())?;

    let cohort = match &cfg.paths.cohort {
        Some(c) => c.clone(),
        None => {
            synth(cfg, &layout.cohort())?;
            layout.cohort()
        }
    };
    variants(cfg, &cohort, &layout.variants())?;
    extract(
        cfg,
        &cohort,
        Some(&layout.variants()),
        &layout.features(),
        None,
    )?;

    let train_input = if cfg.harmonization.enabled && !cfg.pipeline.protocol.combat_in_split {
        harmonize(&layout.features(), "batch_id", &layout.features_combat())?;
        layout.features_combat()
    } else {
        layout.features()
    };
    screen(&train_input, Some(&cohort), MANUAL, &layout.univariate())?;

    for set in [ClinicalSet::Demographic, ClinicalSet::Biopsy] {
        let source = TrainSource::Clinical {
            cohort: cohort.clone(),
            set,
        };
        train(cfg, &source, &layout.run(set.name()))?;
    }
    let present = load_feature_table(&train_input)?.variants();
    let masks: Vec<&str> = mask_order()
        .into_iter()
        .filter(|m| present.iter().any(|p| p == m))
        .collect();
    for m in &masks {
        let source = TrainSource::Features {
            input: train_input.clone(),
            variant: m.to_string(),
            best_shap_from: None,
        };
        train(cfg, &source, &layout.run(&baseline_run(m)))?;
    }
    let mut union = BTreeSet::new();
    for m in &masks {
        let best = layout.run(&baseline_run(m)).join(BEST_SHAP_FILE);
        let list = read_best_shap(&best)?;
        let dest = layout.run(&best_shap_run(m));
        if list.is_empty() {
            warn!("{m}: empty best-SHAP list; best-SHAP model skipped");
            if dest.exists() {
                fs::remove_dir_all(&dest)?;
            }
            continue;
        }
        union.extend(list);
        let source = TrainSource::Features {
            input: train_input.clone(),
            variant: m.to_string(),
            best_shap_from: Some(best),
        };
        train(cfg, &source, &dest)?;
    }

    let paths = StabilityPaths {
        input: layout.features(),
        dsc: layout.dsc(),
        out: layout.stability(),
        scores: layout.reliability(),
        scatter_dir: Some(layout.scatter()),
    };
    let union: Vec<String> = union.into_iter().collect();
    if union.is_empty() {
        // an empty filter would mean every feature
        stability(
            cfg,
            &StabilityPaths {
                scatter_dir: None,
                ..paths
            },
            &[],
            &[],
        )?;
        let staged = StagedDir::new(&layout.scatter())?;
        staged.commit()?;
    } else {
        stability(cfg, &paths, &[], &union)?;
    }
    report::report(&layout.root, &layout.report())
}
