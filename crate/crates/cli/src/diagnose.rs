//! `cnvassoc diagnose`: convergence checks for every recorded scalar.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use cnvassoc_core::diagnostics::{geweke_default, heidelberger_welch, TraceDiagnostics};
use cnvassoc_core::io::tsv::read_table;
use cnvassoc_core::io::write_atomic;
use cnvassoc_core::Error;
use log::info;

use crate::output::{missing_files, TRACE_FILE};
use crate::{create_dir, CliError, CliResult};

pub const REPORT_FILE: &str = "diagnostics.txt";
pub const CSV_FILE: &str = "diagnostics.csv";

/// Geweke scores beyond this are reported as a failure.
pub const GEWEKE_LIMIT: f64 = 3.0;

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Output directory of a `fit` (must contain `trace.tsv`).
    #[arg(long)]
    pub run: PathBuf,
    /// Significance level of the stationarity test.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory (default: the run directory).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// One-word verdict for a trace.
pub fn status(d: &TraceDiagnostics) -> &'static str {
    match (&d.geweke, &d.heidelberger_welch) {
        (Err(Error::DegenerateTrace(_)), _) | (_, Err(Error::DegenerateTrace(_))) => "degenerate",
        (Err(Error::TraceTooShort { .. }), _) | (_, Err(Error::TraceTooShort { .. })) => {
            "too_short"
        }
        (Ok(z), Ok(hw)) if z.abs() < GEWEKE_LIMIT && hw.passed => "pass",
        _ => "fail",
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into())
}

pub fn render_csv(rows: &[(TraceDiagnostics, usize)]) -> String {
    let mut out = String::from(
        "label,length,status,geweke_z,hw_stationary,hw_discarded_fraction,hw_p_value,hw_mean,hw_halfwidth,hw_halfwidth_passed\n",
    );
    for (d, len) in rows {
        let hw = d.heidelberger_welch.as_ref().ok();
        let _ = writeln!(
            out,
            "{},{len},{},{},{},{},{},{},{},{}",
            d.label,
            status(d),
            num(d.geweke.as_ref().ok().copied()),
            hw.map(|h| h.passed.to_string())
                .unwrap_or_else(|| "NA".into()),
            num(hw.map(|h| h.discarded_fraction)),
            num(hw.map(|h| h.p_value)),
            num(hw.map(|h| h.mean)),
            num(hw.map(|h| h.halfwidth)),
            hw.map(|h| h.halfwidth_passed.to_string())
                .unwrap_or_else(|| "NA".into()),
        );
    }
    out
}

pub fn render_report(rows: &[(TraceDiagnostics, usize)]) -> String {
    let width = rows
        .iter()
        .map(|(d, _)| d.label.len())
        .max()
        .unwrap_or(5)
        .max(5);
    let mut out = format!(
        "{:width$}  {:>7}  {:>10}  {:>10}  {:>9}  {:>8}  status\n",
        "trace", "length", "geweke z", "stationary", "discarded", "p-value"
    );
    for (d, len) in rows {
        let z = match &d.geweke {
            Ok(z) => format!("{z:.3}"),
            Err(_) => "-".into(),
        };
        let (stationary, discarded, p) = match &d.heidelberger_welch {
            Ok(h) => (
                if h.passed { "yes" } else { "no" }.to_string(),
                format!("{:.0}%", 100.0 * h.discarded_fraction),
                format!("{:.4}", h.p_value),
            ),
            Err(_) => ("-".into(), "-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:width$}  {len:>7}  {z:>10}  {stationary:>10}  {discarded:>9}  {p:>8}  {}",
            d.label,
            status(d)
        );
    }
    let failing = rows.iter().filter(|(d, _)| status(d) != "pass").count();
    let _ = writeln!(out, "\n{} traces, {failing} not passing", rows.len());
    out
}

pub fn run(args: &DiagnoseArgs) -> CliResult<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha must be in (0, 1), got {}",
            args.alpha
        )));
    }
    if !missing_files(&args.run, &[TRACE_FILE]).is_empty() {
        return Err(CliError::Usage(format!(
            "{} has no {TRACE_FILE}; run `fit` to completion first",
            args.run.display()
        )));
    }
    let table = read_table(&args.run.join(TRACE_FILE))?;
    let rows: Vec<(TraceDiagnostics, usize)> = table
        .col_labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let x: Vec<f64> = table.values.column(c).iter().copied().collect();
            let d = TraceDiagnostics {
                label: label.clone(),
                geweke: geweke_default(&x),
                heidelberger_welch: heidelberger_welch(&x, args.alpha),
            };
            (d, x.len())
        })
        .collect();
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    create_dir(&out)?;
    write_atomic(&out.join(REPORT_FILE), render_report(&rows).as_bytes())?;
    write_atomic(&out.join(CSV_FILE), render_csv(&rows).as_bytes())?;
    for (d, _) in &rows {
        if let Err(e) = &d.geweke {
            info!("{}: {e}", d.label);
        }
    }
    info!("diagnostics for {} traces in {}", rows.len(), out.display());
    Ok(())
}
