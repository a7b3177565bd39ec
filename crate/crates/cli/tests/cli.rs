use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str =
    "seed = 3\n\n[synth]\nn_patients = 12\n\n[synth.params]\ndims = [24, 24, 24]\n\n\
[pipeline]\nn_splits = 4\nmin_count = 2\n\n[pipeline.protocol]\ncv_folds = 0\n";

fn radstab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radstab"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("RADSTAB_THREADS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) {
    let o = radstab(dir, args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(radstab(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(radstab(d.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(radstab(d.path(), &["synth"]).status.code(), Some(2));
    assert_eq!(radstab(d.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        radstab(d.path(), &["train", "--out", "x", "--clinical", "biopsy"])
            .status
            .code(),
        Some(2)
    );

    fs::write(d.path().join("bad.toml"), "[synth]\nn_patient = 4\n").unwrap();
    let o = radstab(d.path(), &["--config", "bad.toml", "synth", "--out", "c"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_patient"), "{}", stderr(&o));

    let o = radstab(d.path(), &["synth", "--out", "c", "--ratio", "1.5"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_radstab"))
        .current_dir(d.path())
        .args(["synth", "--out", "c"])
        .env("RADSTAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("c").exists());
}

#[test]
fn stage_out_of_order_names_the_missing_artifact() {
    let d = tempfile::tempdir().unwrap();
    let o = radstab(
        d.path(),
        &["train", "--in", "features.csv", "--out", "runs/base"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("features.csv"), "{}", stderr(&o));
    assert!(stderr(&o).contains("radstab extract"), "{}", stderr(&o));
    assert!(!d.path().join("runs").exists());

    let o = radstab(d.path(), &["report", "--work", "."]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn harmonize_rejects_other_batch_columns() {
    let d = tempfile::tempdir().unwrap();
    let o = radstab(
        d.path(),
        &[
            "harmonize",
            "--in",
            "f.csv",
            "--batch-col",
            "site",
            "--out",
            "g.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

fn with<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    ["--config", "small.toml"]
        .into_iter()
        .chain(rest.iter().copied())
        .collect()
}

#[test]
fn stages_chain_by_hand() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("small.toml"), SMALL).unwrap();

    ok(p, &with(&["synth", "--out", "cohort"]));
    ok(
        p,
        &with(&["variants", "--cohort", "cohort", "--out", "variants"]),
    );
    ok(
        p,
        &with(&[
            "extract",
            "--cohort",
            "cohort",
            "--variants",
            "variants",
            "--out",
            "features.csv",
        ]),
    );
    ok(
        p,
        &with(&[
            "harmonize",
            "--in",
            "features.csv",
            "--out",
            "features_combat.csv",
        ]),
    );
    ok(
        p,
        &with(&[
            "screen",
            "--in",
            "features_combat.csv",
            "--cohort",
            "cohort",
            "--out",
            "univariate.csv",
        ]),
    );
    ok(
        p,
        &with(&["train", "--in", "features_combat.csv", "--out", "runs/base"]),
    );
    ok(
        p,
        &with(&[
            "train",
            "--clinical",
            "biopsy",
            "--cohort",
            "cohort",
            "--out",
            "runs/biopsy",
        ]),
    );
    ok(
        p,
        &with(&[
            "train",
            "--in",
            "features.csv",
            "--per-split",
            "--splits",
            "2",
            "--out",
            "runs/split",
        ]),
    );
    ok(
        p,
        &with(&[
            "train",
            "--in",
            "features_combat.csv",
            "--variant",
            "closing_08",
            "--best-shap-from",
            "runs/base/best_shap_features.txt",
            "--out",
            "runs/best",
        ]),
    );
    ok(
        p,
        &with(&[
            "stability",
            "--in",
            "features.csv",
            "--dsc",
            "variants/dsc.csv",
            "--out",
            "stability.csv",
        ]),
    );

    let features = fs::read_to_string(p.join("features.csv")).unwrap();
    let header = features.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 4 + 1130, "{}", &header[..80]);
    assert!(p.join("reliability.csv").exists());
    for f in [
        "splits.json",
        "skill_scores.csv",
        "shap_top10.csv",
        "predictions.csv",
    ] {
        assert!(p.join("runs/base").join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(p.join("runs/split/skill_scores.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    // no staging directories left behind
    for e in fs::read_dir(p).unwrap() {
        let name = e.unwrap().file_name();
        assert!(!name.to_string_lossy().starts_with('.'), "{name:?}");
    }
}
