//! `radstab` command line: argument parsing and dispatch.
//!
//! Each subcommand reads the artifacts of the stage before it and writes its
//! own outputs atomically; `run` chains all of them in one working directory.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::debug;
use radstab_core::morphology::MANUAL;
use radstab_core::pipeline::ClinicalSet;

pub use config::RunConfig;
pub use error::{exit_code, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "radstab",
    version,
    about = "Segmentation-perturbation radiomics: feature stability and explainable prediction"
)]
pub struct Cli {
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort: images, manual masks and clinical records.
    Synth(SynthArgs),
    /// Derive the perturbed masks of every patient and their DSC.
    Variants(VariantsArgs),
    /// Extract radiomic features for every (patient, mask) pair.
    Extract(ExtractArgs),
    /// ComBat harmonization per mask variant.
    Harmonize(HarmonizeArgs),
    /// Univariate KS and chi-squared screening with Bonferroni correction.
    Screen(ScreenArgs),
    /// Train and evaluate L1 logistic models over repeated splits.
    Train(TrainArgs),
    /// ICC, Pearson and reliability scores against the reference mask.
    Stability(StabilityArgs),
    /// Tables and figure data from a working directory.
    Report(ReportArgs),
    /// Every stage in order inside one working directory.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "patients")]
    pub n_patients: Option<usize>,
    /// Fraction of positive patients.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VariantsArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    /// Directory written by `variants`; only manual masks are used without it.
    #[arg(long)]
    pub variants: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the filtered images of one patient for inspection.
    #[arg(long, value_name = "DIR")]
    pub dump_filtered: Option<PathBuf>,
    /// Patient for `--dump-filtered`; defaults to the first one.
    #[arg(long, requires = "dump_filtered")]
    pub dump_patient: Option<String>,
}

#[derive(Debug, Args)]
pub struct HarmonizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "batch_id")]
    pub batch_col: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = MANUAL)]
    pub variant: String,
    /// Cohort directory whose clinical variables join the screen.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClinicalArg {
    Demographic,
    Biopsy,
}

impl From<ClinicalArg> for ClinicalSet {
    fn from(a: ClinicalArg) -> Self {
        match a {
            ClinicalArg::Demographic => ClinicalSet::Demographic,
            ClinicalArg::Biopsy => ClinicalSet::Biopsy,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature table; not needed with `--clinical`.
    #[arg(long = "in", required_unless_present = "clinical")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = MANUAL)]
    pub variant: String,
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Train on a fixed feature list instead of ANOVA screening.
    #[arg(long, value_name = "FILE", conflicts_with = "clinical")]
    pub best_shap_from: Option<PathBuf>,
    /// Fit ComBat inside each training split (expects unharmonized input).
    #[arg(long)]
    pub per_split: bool,
    /// Train on clinical variables from `--cohort` instead of features.
    #[arg(long, value_enum, requires = "cohort")]
    pub clinical: Option<ClinicalArg>,
    #[arg(long)]
    pub cohort: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Unharmonized feature table with reference and variant rows.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// DSC file written by `variants`.
    #[arg(long)]
    pub dsc: PathBuf,
    #[arg(long)]
    pub ref_variant: Option<String>,
    /// ICC and Pearson per (feature, variant).
    #[arg(long)]
    pub out: PathBuf,
    /// Reliability scores per feature; defaults to `reliability.csv` beside `--out`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Directory of per-feature (dsc, rel_err) scatter files.
    #[arg(long, value_name = "DIR")]
    pub scatter_dir: Option<PathBuf>,
    /// Restrict the analysis to these features (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Restrict scatter files to these features (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub scatter_features: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Working directory laid out as by `run`.
    #[arg(long)]
    pub work: PathBuf,
    /// Defaults to `<work>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Working directory; overrides `paths.out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Existing cohort; overrides `paths.cohort`.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
}

/// Caps the global worker pool from `RADSTAB_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RADSTAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Usage(format!("RADSTAB_THREADS={raw:?} is not a positive integer"))
    })?;
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
    {
        debug!("worker pool already configured: {e}");
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => {
            if let Some(n) = a.n_patients {
                cfg.synth.n_patients = n;
            }
            if let Some(r) = a.ratio {
                cfg.synth.class_ratio = r;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            check(&cfg)?;
            commands::synth(&cfg, &a.out)
        }
        Command::Variants(a) => commands::variants(&cfg, &a.cohort, &a.out),
        Command::Extract(a) => {
            let dump = a
                .dump_filtered
                .as_deref()
                .map(|d| (d, a.dump_patient.as_deref()));
            commands::extract(&cfg, &a.cohort, a.variants.as_deref(), &a.out, dump)
        }
        Command::Harmonize(a) => commands::harmonize(&a.input, &a.batch_col, &a.out),
        Command::Screen(a) => commands::screen(&a.input, a.cohort.as_deref(), &a.variant, &a.out),
        Command::Train(a) => {
            if let Some(n) = a.splits {
                cfg.pipeline.n_splits = n;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if a.per_split {
                cfg.pipeline.protocol.combat_in_split = true;
            }
            check(&cfg)?;
            let source = match a.clinical {
                Some(set) => commands::TrainSource::Clinical {
                    cohort: a.cohort.expect("clap enforces --cohort"),
                    set: set.into(),
                },
                None => commands::TrainSource::Features {
                    input: a.input.expect("clap enforces --in"),
                    variant: a.variant,
                    best_shap_from: a.best_shap_from,
                },
            };
            commands::train(&cfg, &source, &a.out)
        }
        Command::Stability(a) => {
            if let Some(r) = a.ref_variant {
                cfg.stability.reference = r;
            }
            let scores = a.scores.unwrap_or_else(|| {
                a.out.parent().map_or_else(
                    || PathBuf::from("reliability.csv"),
                    |p| p.join("reliability.csv"),
                )
            });
            commands::stability(
                &cfg,
                &commands::StabilityPaths {
                    input: a.input,
                    dsc: a.dsc,
                    out: a.out,
                    scores,
                    scatter_dir: a.scatter_dir,
                },
                &a.features,
                &a.scatter_features,
            )
        }
        Command::Report(a) => {
            let out = a.out.unwrap_or_else(|| a.work.join("report"));
            report::report(&a.work, &out)
        }
        Command::Run(a) => {
            if let Some(o) = a.out {
                cfg.paths.out = o;
            }
            if let Some(c) = a.cohort {
                cfg.paths.cohort = Some(c);
            }
            commands::run(&cfg)
        }
    }
}

fn check(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate().map_err(CliError::Usage)
}
