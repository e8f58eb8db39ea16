//! Posterior summaries of a chain: inclusion probabilities, Bayesian FDR
//! selection, q-values, modal state calls and HMM point estimates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssociationMatrix, LatentStateMatrix, NEUTRAL, NUM_STATES};
use crate::sampler::ChainTrace;

/// Default Bayesian FDR target.
pub const DEFAULT_FDR: f64 = 0.05;

fn require_samples(trace: &ChainTrace) -> Result<()> {
    if trace.retained == 0 {
        Err(Error::EmptyTrace)
    } else {
        Ok(())
    }
}

/// Fraction of retained samples with each association switched on (`G x M`).
pub fn ppi(trace: &ChainTrace) -> Result<DMatrix<f64>> {
    require_samples(trace)?;
    let total = trace.retained as f64;
    Ok(DMatrix::from_row_iterator(
        trace.n_genes,
        trace.n_probes,
        trace.r_counts.iter().map(|&c| c as f64 / total),
    ))
}

/// Outcome of thresholding PPIs at a Bayesian FDR target.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Entries with `1 - PPI <= threshold` are selected; `-inf` when none are.
    pub threshold: f64,
    pub selected: AssociationMatrix,
    /// Mean of `1 - PPI` over the selection (0 when empty).
    pub realized_fdr: f64,
}

/// Candidate thresholds `1 - PPI` in increasing order, each paired with the
/// Bayesian FDR of the selection it induces. Tied values form one candidate.
fn fdr_curve(values: &mut [f64]) -> Vec<(f64, f64)> {
    values.sort_by(f64::total_cmp);
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let mut sum = 0.0;
    for (k, &v) in values.iter().enumerate() {
        sum += v;
        let fdr = sum / (k + 1) as f64;
        match curve.last_mut() {
            Some(last) if last.0 == v => last.1 = fdr,
            _ => curve.push((v, fdr)),
        }
    }
    curve
}

/// Bayesian FDR of the selection `{1 - PPI <= k}`: the mean of `1 - PPI`
/// over the selected entries, or 0 when nothing is selected. Entries that
/// were never included are not selectable.
pub fn bayesian_fdr(ppi: &DMatrix<f64>, k: f64) -> f64 {
    let (sum, count) = ppi
        .iter()
        .filter(|&&p| p > 0.0 && 1.0 - p <= k)
        .fold((0.0, 0usize), |(s, c), &p| (s + (1.0 - p), c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Largest candidate threshold whose Bayesian FDR stays within `target`.
/// Entries that were never included are not candidates.
pub fn bfdr_select(ppi: &DMatrix<f64>, target: f64) -> Result<Selection> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Invalid(format!(
            "FDR target must be in (0, 1], got {target}"
        )));
    }
    let mut values: Vec<f64> = ppi.iter().filter(|&&p| p > 0.0).map(|p| 1.0 - p).collect();
    let curve = fdr_curve(&mut values);
    let (threshold, realized_fdr) = curve
        .iter()
        .rev()
        .find(|(_, fdr)| *fdr <= target)
        .copied()
        .unwrap_or((f64::NEG_INFINITY, 0.0));
    let mut selected = AssociationMatrix::zeros(ppi.nrows(), ppi.ncols());
    for g in 0..ppi.nrows() {
        for m in 0..ppi.ncols() {
            let p = ppi[(g, m)];
            if p > 0.0 && 1.0 - p <= threshold {
                selected.set(g, m, true);
            }
        }
    }
    Ok(Selection {
        threshold,
        selected,
        realized_fdr,
    })
}

/// Smallest Bayesian FDR at which each entry is selected. Entries never
/// included get 1.
pub fn q_values(ppi: &DMatrix<f64>) -> DMatrix<f64> {
    let mut values: Vec<f64> = ppi.iter().filter(|&&p| p > 0.0).map(|p| 1.0 - p).collect();
    let mut curve = fdr_curve(&mut values);
    for k in (0..curve.len().saturating_sub(1)).rev() {
        curve[k].1 = curve[k].1.min(curve[k + 1].1);
    }
    ppi.map(|p| {
        if p > 0.0 {
            let v = 1.0 - p;
            let k = curve.partition_point(|c| c.0 < v);
            curve[k].1
        } else {
            1.0
        }
    })
}

/// Most visited state; ties go to the state closer to neutral, then the lower one.
pub fn modal_state(counts: &[u64; NUM_STATES]) -> u8 {
    (1..=NUM_STATES as u8)
        .max_by(|&a, &b| {
            let (ca, cb) = (counts[usize::from(a - 1)], counts[usize::from(b - 1)]);
            ca.cmp(&cb)
                .then_with(|| a.abs_diff(NEUTRAL).cmp(&b.abs_diff(NEUTRAL)).reverse())
                .then_with(|| a.cmp(&b).reverse())
        })
        .expect("four states")
}

pub fn modal_states(trace: &ChainTrace) -> Result<LatentStateMatrix> {
    require_samples(trace)?;
    let n = trace.n_samples;
    LatentStateMatrix::from_fn(n, trace.n_probes, |i, m| {
        modal_state(&trace.xi_counts[m * n + i])
    })
}

/// Posterior means of the HMM parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmEstimates {
    pub means: [f64; NUM_STATES],
    pub sds: [f64; NUM_STATES],
    /// Rows renormalized to sum to one.
    pub transition: [[f64; NUM_STATES]; NUM_STATES],
}

pub fn point_estimates(trace: &ChainTrace) -> Result<HmmEstimates> {
    require_samples(trace)?;
    let count = trace.means.len() as f64;
    let average = |series: &[[f64; NUM_STATES]]| -> [f64; NUM_STATES] {
        std::array::from_fn(|j| series.iter().map(|v| v[j]).sum::<f64>() / count)
    };
    let mut transition = [[0.0; NUM_STATES]; NUM_STATES];
    for a in &trace.transitions {
        for h in 0..NUM_STATES {
            for j in 0..NUM_STATES {
                transition[h][j] += a[h][j];
            }
        }
    }
    for row in transition.iter_mut() {
        let total: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    Ok(HmmEstimates {
        means: average(&trace.means),
        sds: average(&trace.sds),
        transition,
    })
}

/// Everything reported for a finished chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub ppi: DMatrix<f64>,
    pub selection: Selection,
    pub q_values: DMatrix<f64>,
    pub xi_modal: LatentStateMatrix,
    pub hmm: HmmEstimates,
}

impl PosteriorSummary {
    pub fn new(trace: &ChainTrace, fdr_target: f64) -> Result<Self> {
        let ppi = ppi(trace)?;
        let selection = bfdr_select(&ppi, fdr_target)?;
        let q_values = q_values(&ppi);
        Ok(PosteriorSummary {
            selection,
            q_values,
            xi_modal: modal_states(trace)?,
            hmm: point_estimates(trace)?,
            ppi,
        })
    }
}
