//! Artifact layout, staged output directories and small file formats.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use radstab_core::io::write_atomic;
use radstab_core::stability::DscTable;
use radstab_core::table::format_float;

use crate::error::CliError;

/// Locations inside a `run` working directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn cohort(&self) -> PathBuf {
        self.root.join("cohort")
    }

    pub fn variants(&self) -> PathBuf {
        self.root.join("variants")
    }

    pub fn dsc(&self) -> PathBuf {
        self.variants().join(DSC_FILE)
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features.csv")
    }

    pub fn features_combat(&self) -> PathBuf {
        self.root.join("features_combat.csv")
    }

    pub fn univariate(&self) -> PathBuf {
        self.root.join("univariate.csv")
    }

    pub fn run(&self, name: &str) -> PathBuf {
        self.root.join("runs").join(name)
    }

    pub fn stability(&self) -> PathBuf {
        self.root.join("stability.csv")
    }

    pub fn reliability(&self) -> PathBuf {
        self.root.join("reliability.csv")
    }

    pub fn scatter(&self) -> PathBuf {
        self.root.join("scatter")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

pub const DSC_FILE: &str = "dsc.csv";
pub const SKILL_FILE: &str = "skill_scores.csv";
pub const SHAP_FILE: &str = "shap_top10.csv";
pub const BEST_SHAP_FILE: &str = "best_shap_features.txt";
pub const PLAN_FILE: &str = "splits.json";

pub fn baseline_run(variant: &str) -> String {
    format!("baseline-{variant}")
}

pub fn best_shap_run(variant: &str) -> String {
    format!("best-shap-{variant}")
}

/// Fails with a message naming the missing file and the stage that makes it.
pub fn require(path: &Path, producer: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            hint: format!("run `radstab {producer}` first"),
        })
    }
}

/// Output directory built under a hidden sibling and renamed into place on
/// [`StagedDir::commit`]. Dropping it uncommitted removes the partial tree.
#[derive(Debug)]
pub struct StagedDir {
    tmp: PathBuf,
    dest: PathBuf,
    done: bool,
}

impl StagedDir {
    pub fn new(dest: &Path) -> Result<StagedDir> {
        let name = dest
            .file_name()
            .with_context(|| format!("output directory {} has no name", dest.display()))?
            .to_string_lossy()
            .into_owned();
        let parent = dest
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let tmp = parent.join(format!(".{name}.partial{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).with_context(|| format!("clearing {}", tmp.display()))?;
        }
        fs::create_dir_all(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(StagedDir {
            tmp,
            dest: dest.to_path_buf(),
            done: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.tmp
    }

    pub fn commit(mut self) -> Result<()> {
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest)
                .with_context(|| format!("replacing {}", self.dest.display()))?;
        }
        fs::rename(&self.tmp, &self.dest)
            .with_context(|| format!("renaming into {}", self.dest.display()))?;
        self.done = true;
        Ok(())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

/// Buffered CSV that lands on disk atomically.
pub struct CsvOut {
    w: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    pub fn new<I, S>(header: I) -> Result<CsvOut>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        Ok(CsvOut { w })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn save(self, path: &Path) -> Result<()> {
        let bytes = self
            .w
            .into_inner()
            .map_err(|e| anyhow::anyhow!("csv flush: {e}"))?;
        write_atomic(path, &bytes)?;
        Ok(())
    }
}

/// Shortest round-trip text, `NaN` for undefined values.
pub fn num(v: f64) -> String {
    format_float(v)
}

pub fn write_dsc(path: &Path, rows: &[(String, String, f64)]) -> Result<()> {
    let mut out = CsvOut::new(["patient_id", "variant", "dsc"])?;
    for (p, v, d) in rows {
        out.row([p.clone(), v.clone(), num(*d)])?;
    }
    out.save(path)
}

pub fn read_dsc(path: &Path) -> Result<DscTable> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = DscTable::new();
    for rec in r.records() {
        let rec = rec?;
        let dsc: f64 = rec[2]
            .parse()
            .with_context(|| format!("{}: dsc {:?} is not a number", path.display(), &rec[2]))?;
        out.insert((rec[0].to_string(), rec[1].to_string()), dsc);
    }
    Ok(out)
}

/// One `name<TAB>count` line per feature.
pub fn write_best_shap(path: &Path, list: &[(String, usize)]) -> Result<()> {
    let text: String = list.iter().map(|(f, c)| format!("{f}\t{c}\n")).collect();
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Feature names from a best-SHAP file; counts and `#` comments are ignored.
pub fn read_best_shap(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split('\t').next())
        .map(|f| f.trim().to_string())
        .collect())
}

/// File-name-safe form of a feature name.
pub fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_dir_commits_or_vanishes() {
        let tmp = tempfile::tempdir().unwrap();
        let dest = tmp.path().join("out");
        {
            let s = StagedDir::new(&dest).unwrap();
            fs::write(s.path().join("a"), "1").unwrap();
        }
        assert!(!dest.exists());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
        let s = StagedDir::new(&dest).unwrap();
        fs::write(s.path().join("a"), "2").unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read_to_string(dest.join("a")).unwrap(), "2");
    }

    #[test]
    fn best_shap_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("b.txt");
        write_best_shap(
            &p,
            &[("original|gldm|X".into(), 20), ("log|glcm|Y".into(), 15)],
        )
        .unwrap();
        assert_eq!(
            read_best_shap(&p).unwrap(),
            vec!["original|gldm|X", "log|glcm|Y"]
        );
    }
}
