//! The five updates of one sweep.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Geometric};
use serde::{Deserialize, Serialize};

use super::state::{ChainState, Model};
use crate::error::Result;
use crate::likelihood::{log_normal_density, stationary_distribution};
use crate::model::{SamplerConfig, NUM_STATES};
use crate::priors::{sample_truncated_gamma_tail, sample_truncated_normal_tail};

/// Proposal and acceptance counts per move type.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub add_proposed: u64,
    pub add_accepted: u64,
    pub delete_proposed: u64,
    pub delete_accepted: u64,
    pub swap_proposed: u64,
    pub swap_accepted: u64,
    /// Gene moves with nothing to propose (empty eligible set or impossible swap).
    pub association_noop: u64,
    pub state_proposed: u64,
    pub state_accepted: u64,
    /// Proposals that drew the current state.
    pub state_unchanged: u64,
    pub transition_proposed: u64,
    pub transition_accepted: u64,
    /// Proposals rejected because the stationary law could not be computed.
    pub transition_failed: u64,
}

impl AcceptanceStats {
    /// `(label, proposed, accepted)` rows for reporting.
    pub fn rows(&self) -> Vec<(&'static str, u64, u64)> {
        vec![
            ("add", self.add_proposed, self.add_accepted),
            ("delete", self.delete_proposed, self.delete_accepted),
            ("swap", self.swap_proposed, self.swap_accepted),
            ("state", self.state_proposed, self.state_accepted),
            (
                "transition",
                self.transition_proposed,
                self.transition_accepted,
            ),
        ]
    }
}

/// Geometric on `{1, 2, ...}` with success probability `p`, redrawn until at most `cap`.
pub(crate) fn truncated_geometric<R: Rng + ?Sized>(rng: &mut R, p: f64, cap: usize) -> usize {
    let geo = Geometric::new(p).expect("validated geometric parameter");
    loop {
        let k = geo.sample(rng) + 1;
        if k <= cap as u64 {
            return k as usize;
        }
    }
}

/// Categorical draw over states `1..=4`.
pub(crate) fn draw_state<R: Rng + ?Sized>(rng: &mut R, probs: &[f64; NUM_STATES]) -> u8 {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j as u8 + 1;
        }
    }
    NUM_STATES as u8
}

fn neighbourhood(cols: &[usize], m_total: usize) -> Vec<usize> {
    let mut sites = Vec::with_capacity(3 * cols.len());
    for &m in cols {
        for s in m.saturating_sub(1)..=(m + 1).min(m_total - 1) {
            if !sites.contains(&s) {
                sites.push(s);
            }
        }
    }
    sites
}

/// Metropolis update of the association matrix over a geometric number of genes.
pub fn update_associations<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &SamplerConfig,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) -> Result<()> {
    let (g_total, m_total) = (model.n_genes(), model.n_probes());
    let n_genes = truncated_geometric(rng, cfg.p_r, g_total);
    for g in index::sample(rng, g_total, n_genes) {
        let add_delete = rng.random::<f64>() < cfg.rho;
        // Proposed changes and the size ratio of the forward and reverse
        // candidate sets, which differs from one when a masked probe leaves.
        let (changes, log_hastings): (Vec<(usize, bool)>, f64) = if add_delete {
            let eligible: Vec<usize> = (0..m_total)
                .filter(|&m| state.r.get(g, m) || state.proposable(model, m))
                .collect();
            if eligible.is_empty() {
                stats.association_noop += 1;
                continue;
            }
            let m = eligible[rng.random_range(0..eligible.len())];
            let on = !state.r.get(g, m);
            let after = if !on && !state.proposable(model, m) {
                eligible.len() - 1
            } else {
                eligible.len()
            };
            if on {
                stats.add_proposed += 1;
            } else {
                stats.delete_proposed += 1;
            }
            let hastings = if after == 0 {
                // The reverse move is impossible from an empty candidate set.
                f64::NEG_INFINITY
            } else {
                (eligible.len() as f64 / after as f64).ln()
            };
            (vec![(m, on)], hastings)
        } else {
            let inc = &state.included[g];
            let exc: Vec<usize> = (0..m_total)
                .filter(|&m| !state.r.get(g, m) && state.proposable(model, m))
                .collect();
            if inc.is_empty() || exc.is_empty() {
                stats.association_noop += 1;
                continue;
            }
            stats.swap_proposed += 1;
            let out = inc[rng.random_range(0..inc.len())];
            let into = exc[rng.random_range(0..exc.len())];
            let after = exc.len() - 1 + usize::from(state.proposable(model, out));
            let hastings = if after == 0 {
                f64::NEG_INFINITY
            } else {
                (exc.len() as f64 / after as f64).ln()
            };
            (vec![(out, false), (into, true)], hastings)
        };
        let cols: Vec<usize> = changes.iter().map(|c| c.0).collect();
        let sites = neighbourhood(&cols, m_total);
        let prior_before = state.gene_prior_at(model, g, &sites);
        let ll_before = state.gene_loglik[g];
        for &(m, on) in &changes {
            state.set_association(g, m, on);
        }
        let ll_after = model.gene_loglik(g, &state.xi, &state.included[g])?;
        let prior_after = state.gene_prior_at(model, g, &sites);
        let log_ratio = ll_after - ll_before + prior_after - prior_before + log_hastings;
        if rng.random::<f64>().ln() < log_ratio {
            state.gene_loglik[g] = ll_after;
            match changes.as_slice() {
                [(_, true)] => stats.add_accepted += 1,
                [(_, false)] => stats.delete_accepted += 1,
                _ => stats.swap_accepted += 1,
            }
        } else {
            for &(m, on) in changes.iter().rev() {
                state.set_association(g, m, !on);
            }
        }
    }
    Ok(())
}

/// Components of the log acceptance ratio for changing one latent state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StateMoveRatio {
    /// Collapsed likelihood change of the genes selecting the probe.
    pub outcome: f64,
    pub emission: f64,
    /// Markov chain terms into and out of the probe.
    pub markov: f64,
    /// Change in the association prior through the persistence weights.
    pub selection_prior: f64,
    /// `log q(old | new) - log q(new | old)`.
    pub proposal: f64,
    /// New likelihoods of the affected genes, `(gene, value)`.
    pub gene_loglik: Vec<(usize, f64)>,
}

impl StateMoveRatio {
    pub fn total(&self) -> f64 {
        self.outcome + self.emission + self.markov + self.selection_prior + self.proposal
    }
}

/// Log acceptance ratio for setting `xi_im` to `new` when proposals come
/// from the transition row of the left neighbour (the stationary law at the
/// first probe).
pub fn state_move_ratio(
    state: &mut ChainState,
    model: &Model,
    i: usize,
    m: usize,
    new: u8,
) -> Result<StateMoveRatio> {
    let old = state.xi.get(i, m);
    let m_total = state.xi.n_probes();
    let (o, w) = (usize::from(old - 1), usize::from(new - 1));
    let hmm = &state.hmm;
    let x = model.ctx.data.x()[(i, m)];

    let emission = log_normal_density(x, hmm.means[w], hmm.sds[w])
        - log_normal_density(x, hmm.means[o], hmm.sds[o]);

    let into = match m {
        0 => &hmm.stationary,
        _ => &hmm.transition[usize::from(state.xi.get(i, m - 1) - 1)],
    };
    let mut markov = into[w].ln() - into[o].ln();
    let proposal = into[o].ln() - into[w].ln();
    let right = (m + 1 < m_total).then(|| usize::from(state.xi.get(i, m + 1) - 1));
    if let Some(rr) = right {
        markov += hmm.transition[w][rr].ln() - hmm.transition[o][rr].ln();
    }

    let selection_prior = if model.ctx.hyper.is_independent() {
        0.0
    } else {
        selection_prior_change(state, model, i, m, old, new)
    };

    let genes: Vec<usize> = (0..model.n_genes())
        .filter(|&g| state.r.get(g, m))
        .collect();
    let mut outcome = 0.0;
    let mut gene_loglik = Vec::with_capacity(genes.len());
    if !genes.is_empty() {
        state.xi.set(i, m, new);
        let fresh: Result<Vec<f64>> = genes
            .iter()
            .map(|&g| model.gene_loglik(g, &state.xi, &state.included[g]))
            .collect();
        state.xi.set(i, m, old);
        for (&g, v) in genes.iter().zip(fresh?) {
            outcome += v - state.gene_loglik[g];
            gene_loglik.push((g, v));
        }
    }
    Ok(StateMoveRatio {
        outcome,
        emission,
        markov,
        selection_prior,
        proposal,
        gene_loglik,
    })
}

/// Change in the association prior when `xi_im` goes from `old` to `new`:
/// only the persistences on the two gaps next to `m` move, which affects the
/// weights at sites `m - 1`, `m` and `m + 1`.
fn selection_prior_change(
    state: &ChainState,
    model: &Model,
    i: usize,
    m: usize,
    old: u8,
    new: u8,
) -> f64 {
    let m_total = state.xi.n_probes();
    let persist_after = |k: usize, other: u8| -> u32 {
        let mut c = state.persist[k];
        if other == old {
            c -= 1;
        }
        if other == new {
            c += 1;
        }
        c
    };
    let s_now = |k: usize| model.persistence(k, state.persist[k]);
    let mut s_left_new = None;
    let mut s_right_new = None;
    if m > 0 {
        s_left_new = Some(model.persistence(m - 1, persist_after(m - 1, state.xi.get(i, m - 1))));
    }
    if m + 1 < m_total {
        s_right_new = Some(model.persistence(m, persist_after(m, state.xi.get(i, m + 1))));
    }
    // Gap k sits between sites k and k + 1; the new value of gap m - 1 or m
    // replaces the current one.
    let s_new = |k: usize| -> f64 {
        if m > 0 && k == m - 1 {
            s_left_new.expect("left gap exists")
        } else if k == m {
            s_right_new.expect("right gap exists")
        } else {
            s_now(k)
        }
    };
    let lo = m.saturating_sub(1).max(1);
    let hi = (m + 1).min(m_total.saturating_sub(2));
    if lo > hi {
        return 0.0;
    }
    let sites: Vec<usize> = (lo..=hi).collect();
    let before: Vec<_> = sites
        .iter()
        .map(|&s| model.weights_from(s, s_now(s - 1), s_now(s)))
        .collect();
    let after: Vec<_> = sites
        .iter()
        .map(|&s| model.weights_from(s, s_new(s - 1), s_new(s)))
        .collect();
    if before == after {
        return 0.0;
    }
    let hyper = &model.ctx.hyper;
    let quiet_term = |w: crate::priors::SiteWeights| -> f64 {
        (w.gamma * hyper.f / (hyper.e + hyper.f) + w.omega_left + w.omega_right).ln()
    };
    let mut quiet = 0usize;
    let mut total = 0.0;
    let window_lo = lo - 1;
    let window_hi = (hi + 1).min(m_total - 1);
    for g in 0..model.n_genes() {
        let row = state.r.row(g);
        if row[window_lo..=window_hi].iter().all(|&b| b == 0) {
            quiet += 1;
            continue;
        }
        for (k, &s) in sites.iter().enumerate() {
            total +=
                state.site_term(model, g, s, after[k]) - state.site_term(model, g, s, before[k]);
        }
    }
    if quiet > 0 {
        for (a, b) in after.iter().zip(&before) {
            total += quiet as f64 * (quiet_term(*a) - quiet_term(*b));
        }
    }
    total
}

/// Metropolis update of a geometric number of states in one random probe.
pub fn update_states<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cfg: &SamplerConfig,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) -> Result<()> {
    let (n, m_total) = (model.n_samples(), model.n_probes());
    let m = rng.random_range(0..m_total);
    let count = truncated_geometric(rng, cfg.p_xi, n);
    for i in index::sample(rng, n, count) {
        let probs = match m {
            0 => state.hmm.stationary,
            _ => state.hmm.transition[usize::from(state.xi.get(i, m - 1) - 1)],
        };
        let new = draw_state(rng, &probs);
        stats.state_proposed += 1;
        if new == state.xi.get(i, m) {
            stats.state_accepted += 1;
            stats.state_unchanged += 1;
            continue;
        }
        let ratio = state_move_ratio(state, model, i, m, new)?;
        if rng.random::<f64>().ln() < ratio.total() {
            state.set_state(model, i, m, new);
            for &(g, v) in &ratio.gene_loglik {
                state.gene_loglik[g] = v;
            }
            stats.state_accepted += 1;
        }
    }
    Ok(())
}

/// Gibbs update of the emission means, in state order, each from its
/// truncated normal full conditional.
pub fn update_means<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    rng: &mut R,
) -> Result<()> {
    let h = &model.ctx.hmm_hyper;
    for j in 0..NUM_STATES {
        let st = state.stats[j];
        let prior_precision = h.mean_scale[j].powi(-2);
        let data_precision = st.count as f64 / (state.hmm.sds[j] * state.hmm.sds[j]);
        let precision = prior_precision + data_precision;
        let mean = (h.mean_loc[j] * prior_precision
            + st.sum / (state.hmm.sds[j] * state.hmm.sds[j]))
            / precision;
        let (low, high) = h.mean_bounds(j, &state.hmm);
        state.hmm.means[j] =
            sample_truncated_normal_tail(rng, mean, precision.sqrt().recip(), low, high)?;
    }
    Ok(())
}

/// Lowest admissible precision of state `j` given the other parameters.
pub(crate) fn precision_floor(model: &Model, state: &ChainState, j: usize) -> f64 {
    let h = &model.ctx.hmm_hyper;
    let mut floor = h.precision_floor(j);
    if h.gain_floor_from_state3 && j == 2 {
        let gap = state.hmm.means[3] - state.hmm.means[2];
        floor = floor.max(gap.powi(-2));
    }
    floor
}

/// Gibbs update of the emission sds through their precisions.
pub fn update_sds<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    rng: &mut R,
) -> Result<()> {
    let h = &model.ctx.hmm_hyper;
    for j in 0..NUM_STATES {
        let st = state.stats[j];
        let shape = h.precision_shape[j] + 0.5 * st.count as f64;
        let rate = h.precision_rate[j] + 0.5 * st.squared_deviation(state.hmm.means[j]);
        let floor = precision_floor(model, state, j);
        let precision = sample_truncated_gamma_tail(rng, shape, rate, floor)?;
        state.hmm.sds[j] = precision.sqrt().recip();
    }
    Ok(())
}

/// Independence Metropolis update of the transition matrix: rows from their
/// Dirichlet full conditionals ignoring the initial-state term, corrected by
/// the change in stationary probability of the first-probe states.
pub fn update_transitions<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) -> Result<()> {
    let phi = &model.ctx.hmm_hyper.dirichlet;
    let mut proposal = [[0.0; NUM_STATES]; NUM_STATES];
    let mut degenerate = false;
    for h in 0..NUM_STATES {
        let mut total = 0.0;
        for j in 0..NUM_STATES {
            let shape = phi[j] + state.transitions[h][j] as f64;
            let draw = Gamma::new(shape, 1.0)
                .map_err(|e| crate::Error::Numerical(e.to_string()))?
                .sample(rng);
            proposal[h][j] = draw;
            total += draw;
        }
        for p in proposal[h].iter_mut() {
            *p /= total;
            degenerate |= !(p.is_finite() && *p > 0.0);
        }
    }
    stats.transition_proposed += 1;
    let u: f64 = rng.random();
    if degenerate {
        stats.transition_failed += 1;
        log::warn!("transition proposal has a zero entry; rejected");
        return Ok(());
    }
    let stationary = match stationary_distribution(&proposal) {
        Ok(p) => p,
        Err(e) => {
            stats.transition_failed += 1;
            log::warn!("transition proposal rejected: {e}");
            return Ok(());
        }
    };
    let log_ratio: f64 = (0..NUM_STATES)
        .filter(|&j| state.initial[j] > 0)
        .map(|j| state.initial[j] as f64 * (stationary[j].ln() - state.hmm.stationary[j].ln()))
        .sum();
    if u.ln() < log_ratio {
        state.hmm.transition = proposal;
        state.hmm.stationary = stationary;
        stats.transition_accepted += 1;
    }
    Ok(())
}
