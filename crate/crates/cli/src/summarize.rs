//! `cnvassoc summarize`: select at an FDR target, score against the truth.

use std::path::{Path, PathBuf};

use clap::Args;
use cnvassoc_core::inference::{bfdr_select, q_values};
use cnvassoc_core::io::config::RunConfig;
use cnvassoc_core::io::manifest::{Manifest, MANIFEST_FILE};
use cnvassoc_core::io::tsv::{format_real, read_associations, read_states, read_table};
use cnvassoc_core::io::write_atomic;
use cnvassoc_core::simulate::{evaluate, Metrics};
use log::{info, warn};

use crate::output::*;
use crate::simulate::{R_TRUE_FILE, XI_TRUE_FILE};
use crate::{create_dir, CliError, CliResult};

pub const SUMMARY_FILE: &str = "summary.tsv";
pub const PPI_CSV_FILE: &str = "ppi.csv";

const REQUIRED: &[&str] = &[MANIFEST_FILE, CONFIG_FILE, PPI_FILE, XI_MODAL_FILE];

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Output directory of a finished `fit`.
    #[arg(long)]
    pub run: PathBuf,
    /// Directory holding `R_true.tsv` (and optionally `xi_true.tsv`).
    /// Defaults to the directory of the fitted data when it has them.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Bayesian FDR target (default: the fit's `inference.fdr`).
    #[arg(long)]
    pub fdr: Option<f64>,
    /// Proceed even when configuration or data hashes disagree.
    #[arg(long)]
    pub force: bool,
    /// Output directory (default: `<run>/summary`).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn mismatch(force: bool, msg: String) -> CliResult<()> {
    if force {
        warn!("{msg}; continuing because of --force");
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{msg}; use --force to summarize anyway"
        )))
    }
}

/// Row of the summary table; metric columns are empty without a truth.
fn summary_table(
    fdr: f64,
    threshold: f64,
    realized: f64,
    detections: usize,
    m: Option<&Metrics>,
) -> String {
    let mut cols = vec!["fdr_target", "ppi_threshold", "estimated_fdr", "detections"];
    let mut vals = vec![
        format_real(fdr),
        format_real(threshold),
        format_real(realized),
        detections.to_string(),
    ];
    if let Some(m) = m {
        cols.extend([
            "specificity",
            "sensitivity",
            "false_positives",
            "false_negatives",
            "true_positives",
            "xi_misclassified_percent",
        ]);
        vals.extend([
            format_real(m.specificity),
            format_real(m.sensitivity),
            m.false_positives.to_string(),
            m.false_negatives.to_string(),
            m.true_positives.to_string(),
            m.xi_misclassified_percent
                .map(format_real)
                .unwrap_or_else(|| "NA".into()),
        ]);
    }
    format!("{}\n{}\n", cols.join("\t"), vals.join("\t"))
}

fn truth_dir(args: &SummarizeArgs, cfg: &RunConfig) -> Option<PathBuf> {
    if let Some(dir) = &args.truth {
        return Some(dir.clone());
    }
    let dir = cfg.data.y.parent().unwrap_or(Path::new("."));
    dir.join(R_TRUE_FILE).is_file().then(|| dir.to_path_buf())
}

pub fn run(args: &SummarizeArgs) -> CliResult<()> {
    let missing = missing_files(&args.run, REQUIRED);
    if !missing.is_empty() {
        return Err(CliError::Usage(format!(
            "{} is not a finished fit: missing {} (expected {})",
            args.run.display(),
            missing.join(", "),
            REQUIRED.join(", ")
        )));
    }
    let manifest = Manifest::read(&args.run)?;
    let cfg = RunConfig::from_file(&args.run.join(CONFIG_FILE))?;
    if manifest.config_hash.as_deref() != Some(cfg.hash().as_str()) {
        mismatch(
            args.force,
            format!(
                "{CONFIG_FILE} in {} does not match the manifest hash",
                args.run.display()
            ),
        )?;
    }
    let fdr = args.fdr.unwrap_or(cfg.fdr);
    let ppi = read_table(&args.run.join(PPI_FILE))?.values;
    let selection = bfdr_select(&ppi, fdr).map_err(|e| CliError::Usage(e.to_string()))?;
    let q = q_values(&ppi);

    let metrics = match truth_dir(args, &cfg) {
        Some(dir) => {
            match Manifest::read(&dir) {
                Ok(truth) if truth.data_hash != manifest.data_hash => mismatch(
                    args.force,
                    format!(
                        "truth in {} was generated for different data",
                        dir.display()
                    ),
                )?,
                Ok(_) => {}
                Err(e) => mismatch(
                    args.force,
                    format!("cannot verify truth in {}: {e}", dir.display()),
                )?,
            }
            let r_true = read_associations(&dir.join(R_TRUE_FILE))?;
            let xi_path = dir.join(XI_TRUE_FILE);
            let xi_pair = if xi_path.is_file() {
                Some((
                    read_states(&args.run.join(XI_MODAL_FILE))?,
                    read_states(&xi_path)?,
                ))
            } else {
                None
            };
            Some(evaluate(
                &selection.selected,
                &r_true,
                xi_pair.as_ref().map(|(a, b)| (a, b)),
            )?)
        }
        None => {
            info!("no truth files found; metrics omitted");
            None
        }
    };

    let out = args.out.clone().unwrap_or_else(|| args.run.join("summary"));
    create_dir(&out)?;
    let detections = selection.selected.count_ones();
    let table = summary_table(
        fdr,
        selection.threshold,
        selection.realized_fdr,
        detections,
        metrics.as_ref(),
    );
    write_atomic(&out.join(SUMMARY_FILE), table.as_bytes())?;
    write_ppi_csv(&out.join(PPI_CSV_FILE), &ppi)?;
    write_gene_probe(&out.join(QVALUES_FILE), &q)?;
    write_selected(&out.join(SELECTED_FILE), &selection, &ppi, &q)?;
    match &metrics {
        Some(m) => info!(
            "FDR {fdr}: {detections} detections, sensitivity {:.3}, specificity {:.4}",
            m.sensitivity, m.specificity
        ),
        None => info!("FDR {fdr}: {detections} detections"),
    }
    Ok(())
}
