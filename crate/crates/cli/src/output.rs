//! Writers for the result tables shared by `fit` and `summarize`.

use std::path::Path;

use cnvassoc_core::inference::{HmmEstimates, Selection};
use cnvassoc_core::io::tsv::{format_real, labels, render, write_real_matrix};
use cnvassoc_core::io::write_atomic;
use cnvassoc_core::sampler::AcceptanceStats;
use cnvassoc_core::{ChainTrace, Result, NUM_STATES};
use nalgebra::DMatrix;

pub const PPI_FILE: &str = "ppi.tsv";
pub const QVALUES_FILE: &str = "qvalues.tsv";
pub const SELECTED_FILE: &str = "selected.tsv";
pub const XI_MODAL_FILE: &str = "xi_modal.tsv";
pub const HMM_FILE: &str = "hmm_estimates.tsv";
pub const TRACE_FILE: &str = "trace.tsv";
pub const ACCEPTANCE_FILE: &str = "acceptance.tsv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

pub fn write_gene_probe(path: &Path, values: &DMatrix<f64>) -> Result<()> {
    write_real_matrix(
        path,
        "gene",
        &labels("g", values.nrows()),
        &labels("p", values.ncols()),
        values,
    )
}

/// Selected pairs (1-based) with their PPI and q-value, gene-major.
pub fn write_selected(
    path: &Path,
    selection: &Selection,
    ppi: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<()> {
    let mut text = String::from("gene\tprobe\tppi\tq_value\n");
    let r = &selection.selected;
    for g in 0..r.n_genes() {
        for m in r.included(g) {
            text.push_str(&format!(
                "g{}\tp{}\t{}\t{}\n",
                g + 1,
                m + 1,
                format_real(ppi[(g, m)]),
                format_real(q[(g, m)])
            ));
        }
    }
    write_atomic(path, text.as_bytes())
}

/// `g,m,ppi` rows for plotting.
pub fn write_ppi_csv(path: &Path, ppi: &DMatrix<f64>) -> Result<()> {
    let mut text = String::from("g,m,ppi\n");
    for g in 0..ppi.nrows() {
        for m in 0..ppi.ncols() {
            text.push_str(&format!(
                "{},{},{}\n",
                g + 1,
                m + 1,
                format_real(ppi[(g, m)])
            ));
        }
    }
    write_atomic(path, text.as_bytes())
}

pub fn write_hmm(path: &Path, hmm: &HmmEstimates) -> Result<()> {
    let mut cols = vec!["mean".to_string(), "sd".to_string()];
    cols.extend((1..=NUM_STATES).map(|j| format!("a_{j}")));
    let rows: Vec<String> = (1..=NUM_STATES).map(|j| j.to_string()).collect();
    let text = render("state", &rows, &cols, |h, c| {
        format_real(match c {
            0 => hmm.means[h],
            1 => hmm.sds[h],
            _ => hmm.transition[h][c - 2],
        })
    });
    write_atomic(path, text.as_bytes())
}

/// One row per retained sweep, labelled by the number of completed sweeps.
pub fn write_trace(path: &Path, trace: &ChainTrace) -> Result<()> {
    let series = trace.scalar_series();
    let cols: Vec<String> = series.iter().map(|(l, _)| l.clone()).collect();
    let rows: Vec<String> = trace
        .iterations
        .iter()
        .map(|t| (t + 1).to_string())
        .collect();
    let text = render("iteration", &rows, &cols, |r, c| {
        format_real(series[c].1[r])
    });
    write_atomic(path, text.as_bytes())
}

pub fn write_acceptance(path: &Path, stats: &AcceptanceStats) -> Result<()> {
    let mut text = String::from("move\tproposed\taccepted\trate\n");
    for (label, proposed, accepted) in stats.rows() {
        let rate = if proposed == 0 {
            "NA".to_string()
        } else {
            format!("{:.6}", accepted as f64 / proposed as f64)
        };
        text.push_str(&format!("{label}\t{proposed}\t{accepted}\t{rate}\n"));
    }
    write_atomic(path, text.as_bytes())
}

/// Names of `files` missing from `dir`.
pub fn missing_files<'a>(dir: &Path, files: &[&'a str]) -> Vec<&'a str> {
    files
        .iter()
        .copied()
        .filter(|f| !dir.join(f).is_file())
        .collect()
}
