//! Starting values for a chain.

use rand::Rng;

use super::state::{ChainState, Model};
use crate::error::Result;
use crate::model::{AssociationMatrix, HmmParams, LatentStateMatrix, NUM_STATES};
use crate::priors::{sample_truncated_gamma, sample_truncated_normal};

/// Log-ratio thresholds: a probe is put in the highest state whose threshold
/// it exceeds.
pub const INIT_THRESHOLDS: [f64; NUM_STATES] = [f64::NEG_INFINITY, -0.5, 0.29, 0.79];

/// Initial state call for one log-ratio.
pub fn threshold_state(x: f64) -> u8 {
    INIT_THRESHOLDS
        .iter()
        .rposition(|&t| x > t)
        .map_or(1, |j| j as u8 + 1)
}

/// Transition proportions of `xi` with `dirichlet` added as pseudo-counts.
pub fn transition_proportions(
    xi: &LatentStateMatrix,
    dirichlet: &[f64; NUM_STATES],
) -> [[f64; NUM_STATES]; NUM_STATES] {
    let mut counts = [[0.0; NUM_STATES]; NUM_STATES];
    for m in 1..xi.n_probes() {
        for (a, b) in xi.column(m - 1).iter().zip(xi.column(m)) {
            counts[usize::from(a - 1)][usize::from(b - 1)] += 1.0;
        }
    }
    counts.map(|row| {
        let total: f64 = row.iter().zip(dirichlet).map(|(c, p)| c + p).sum();
        let mut out = [0.0; NUM_STATES];
        for j in 0..NUM_STATES {
            out[j] = (row[j] + dirichlet[j]) / total;
        }
        out
    })
}

/// Thresholded states, transition proportions, no associations, and
/// emission parameters drawn from their truncated priors.
pub fn initialize_state<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> Result<ChainState> {
    let data = &model.ctx.data;
    let h = &model.ctx.hmm_hyper;
    let x = data.x();
    let xi = LatentStateMatrix::from_fn(data.n_samples(), data.n_probes(), |i, m| {
        threshold_state(x[(i, m)])
    })?;
    let transition = transition_proportions(&xi, &h.dirichlet);

    let mut means = [0.0; NUM_STATES];
    for j in 0..3 {
        means[j] = sample_truncated_normal(
            rng,
            h.mean_loc[j],
            h.mean_scale[j],
            h.mean_low[j],
            h.mean_high[j],
        )?;
    }
    let mut sds = [0.0; NUM_STATES];
    for j in 0..NUM_STATES {
        let precision = sample_truncated_gamma(
            rng,
            h.precision_shape[j],
            h.precision_rate[j],
            h.precision_floor(j),
        )?;
        sds[j] = precision.sqrt().recip();
    }
    let mut low4 = h.mean_low[3];
    if h.gain_floor_from_state3 {
        low4 = low4.max(means[2] + sds[2]);
    }
    means[3] = sample_truncated_normal(rng, h.mean_loc[3], h.mean_scale[3], low4, h.mean_high[3])?;

    let hmm = HmmParams::new(transition, means, sds)?;
    let r = AssociationMatrix::zeros(data.n_genes(), data.n_probes());
    ChainState::new(model, xi, r, hmm)
}
