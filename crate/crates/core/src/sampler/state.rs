//! Chain state and the caches that keep every move local.

use crate::error::{Error, Result};
use crate::likelihood::{log_marginal_likelihood_design, log_normal_density, LikelihoodConstants};
use crate::model::{
    AssociationMatrix, HmmParams, LatentStateMatrix, ValidatedContext, NEUTRAL, NUM_STATES,
};
use crate::priors::{distance_factor, log_prior_r_conditional, SiteWeights};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Validated inputs plus quantities derived from them once per chain.
#[derive(Clone, Debug)]
pub struct Model {
    pub ctx: ValidatedContext,
    pub(crate) consts: LikelihoodConstants,
    /// Distance factor of each gap between neighbouring probes.
    pub(crate) distance: Vec<f64>,
    /// A probe is proposable for inclusion while its neutral count is at most this.
    pub(crate) mask_limit: f64,
}

impl Model {
    pub fn new(ctx: ValidatedContext) -> Result<Self> {
        let data = &ctx.data;
        let positions = data.positions();
        let distance = positions
            .windows(2)
            .map(|w| distance_factor(w[1] - w[0], data.fragment_length()))
            .collect::<Result<Vec<_>>>()?;
        let consts = LikelihoodConstants::new(data.n_samples(), &ctx.hyper);
        let mask_limit = data.n_samples() as f64 * ctx.cfg.p_mc;
        Ok(Model {
            ctx,
            consts,
            distance,
            mask_limit,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.ctx.data.n_samples()
    }

    pub fn n_genes(&self) -> usize {
        self.ctx.data.n_genes()
    }

    pub fn n_probes(&self) -> usize {
        self.ctx.data.n_probes()
    }

    /// Collapsed log likelihood of gene `g` given its selected columns.
    pub(crate) fn gene_loglik(
        &self,
        g: usize,
        xi: &LatentStateMatrix,
        columns: &[usize],
    ) -> Result<f64> {
        let design: Vec<&[u8]> = columns.iter().map(|&m| xi.column(m)).collect();
        log_marginal_likelihood_design(self.ctx.data.y_column(g), &design, &self.consts, g)
    }

    /// Persistence across gap `k` given how many samples keep their state there.
    #[inline]
    pub(crate) fn persistence(&self, k: usize, same: u32) -> f64 {
        self.distance[k] * f64::from(same) / self.n_samples() as f64
    }

    /// Mixture weights at site `m` from explicit persistences on either side.
    #[inline]
    pub(crate) fn weights_from(&self, m: usize, s_left: f64, s_right: f64) -> SiteWeights {
        if m == 0 || m + 1 >= self.n_probes() {
            SiteWeights::INDEPENDENT
        } else {
            SiteWeights::interior(s_left, s_right, self.ctx.hyper.alpha)
        }
    }
}

/// Sufficient statistics of the log-ratios currently assigned to one state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl StateStats {
    fn add(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn remove(&mut self, x: f64) {
        self.count -= 1;
        self.sum -= x;
        self.sum_sq -= x * x;
    }

    /// `sum (x - mean)^2` over the assigned log-ratios.
    pub fn squared_deviation(&self, mean: f64) -> f64 {
        (self.sum_sq - 2.0 * mean * self.sum + self.count as f64 * mean * mean).max(0.0)
    }
}

/// Per-cell time-in-value counters for the retained samples.
///
/// Cells are only touched when they change: the value being left is credited
/// with the number of samples recorded since the cell last changed.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Occupancy {
    /// Samples recorded so far.
    pub position: u64,
    pub r_since: Vec<u64>,
    pub r_counts: Vec<u64>,
    pub xi_since: Vec<u64>,
    pub xi_counts: Vec<[u64; NUM_STATES]>,
}

impl Occupancy {
    fn new(r_cells: usize, xi_cells: usize) -> Self {
        Occupancy {
            position: 0,
            r_since: vec![0; r_cells],
            r_counts: vec![0; r_cells],
            xi_since: vec![0; xi_cells],
            xi_counts: vec![[0; NUM_STATES]; xi_cells],
        }
    }

    #[inline]
    fn leave_r(&mut self, cell: usize, was_on: bool) {
        if was_on {
            self.r_counts[cell] += self.position - self.r_since[cell];
        }
        self.r_since[cell] = self.position;
    }

    #[inline]
    fn leave_xi(&mut self, cell: usize, state: u8) {
        self.xi_counts[cell][usize::from(state - 1)] += self.position - self.xi_since[cell];
        self.xi_since[cell] = self.position;
    }

    /// Credits every cell up to the current position.
    pub(crate) fn flush(&mut self, r: &AssociationMatrix, xi: &LatentStateMatrix) {
        for (cell, &bit) in r.as_slice().iter().enumerate() {
            self.leave_r(cell, bit == 1);
        }
        for (cell, &s) in xi.as_slice().iter().enumerate() {
            self.leave_xi(cell, s);
        }
    }
}

/// Current values of all sampled quantities plus incremental caches.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub(crate) r: AssociationMatrix,
    pub(crate) xi: LatentStateMatrix,
    pub(crate) hmm: HmmParams,
    /// Completed sweeps.
    pub(crate) iteration: u64,
    pub(crate) gene_loglik: Vec<f64>,
    /// Sorted selected columns of each gene.
    pub(crate) included: Vec<Vec<usize>>,
    pub(crate) stats: [StateStats; NUM_STATES],
    /// `transitions[h][j]`: adjacent pairs going from state `h + 1` to `j + 1`.
    pub(crate) transitions: [[u64; NUM_STATES]; NUM_STATES],
    /// State counts in the first probe.
    pub(crate) initial: [u64; NUM_STATES],
    /// Samples whose state is the same on both sides of each gap.
    pub(crate) persist: Vec<u32>,
    /// Samples in the neutral state at each probe.
    pub(crate) neutral: Vec<u32>,
    pub(crate) occupancy: Occupancy,
}

impl ChainState {
    /// Builds a state and all its caches from explicit values.
    pub fn new(
        model: &Model,
        xi: LatentStateMatrix,
        r: AssociationMatrix,
        hmm: HmmParams,
    ) -> Result<Self> {
        let (n, g_total, m_total) = (model.n_samples(), model.n_genes(), model.n_probes());
        if xi.n_samples() != n || xi.n_probes() != m_total {
            return Err(Error::Dimension(format!(
                "states are {}x{}, data needs {n}x{m_total}",
                xi.n_samples(),
                xi.n_probes()
            )));
        }
        if r.n_genes() != g_total || r.n_probes() != m_total {
            return Err(Error::Dimension(format!(
                "associations are {}x{}, data needs {g_total}x{m_total}",
                r.n_genes(),
                r.n_probes()
            )));
        }
        let included: Vec<Vec<usize>> = (0..g_total).map(|g| r.included(g)).collect();
        let gene_loglik = included
            .iter()
            .enumerate()
            .map(|(g, cols)| model.gene_loglik(g, &xi, cols))
            .collect::<Result<Vec<_>>>()?;
        let mut state = ChainState {
            occupancy: Occupancy::new(g_total * m_total, n * m_total),
            r,
            xi,
            hmm,
            iteration: 0,
            gene_loglik,
            included,
            stats: [StateStats::default(); NUM_STATES],
            transitions: [[0; NUM_STATES]; NUM_STATES],
            initial: [0; NUM_STATES],
            persist: vec![0; m_total - 1],
            neutral: vec![0; m_total],
        };
        state.rebuild_state_caches(model);
        Ok(state)
    }

    fn rebuild_state_caches(&mut self, model: &Model) {
        let x = model.ctx.data.x();
        let (n, m_total) = (self.xi.n_samples(), self.xi.n_probes());
        self.stats = [StateStats::default(); NUM_STATES];
        self.transitions = [[0; NUM_STATES]; NUM_STATES];
        self.initial = [0; NUM_STATES];
        self.persist = vec![0; m_total - 1];
        self.neutral = vec![0; m_total];
        for m in 0..m_total {
            let col = self.xi.column(m);
            for i in 0..n {
                let s = col[i];
                self.stats[usize::from(s - 1)].add(x[(i, m)]);
                if s == NEUTRAL {
                    self.neutral[m] += 1;
                }
            }
            if m == 0 {
                for &s in col {
                    self.initial[usize::from(s - 1)] += 1;
                }
            } else {
                let prev = self.xi.column(m - 1);
                for i in 0..n {
                    self.transitions[usize::from(prev[i] - 1)][usize::from(col[i] - 1)] += 1;
                    if prev[i] == col[i] {
                        self.persist[m - 1] += 1;
                    }
                }
            }
        }
    }

    pub fn associations(&self) -> &AssociationMatrix {
        &self.r
    }

    pub fn states(&self) -> &LatentStateMatrix {
        &self.xi
    }

    pub fn hmm(&self) -> &HmmParams {
        &self.hmm
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn gene_loglik(&self) -> &[f64] {
        &self.gene_loglik
    }

    pub fn state_stats(&self) -> &[StateStats; NUM_STATES] {
        &self.stats
    }

    pub fn transition_counts(&self) -> &[[u64; NUM_STATES]; NUM_STATES] {
        &self.transitions
    }

    /// Whether probe `m` may be proposed for inclusion.
    #[inline]
    pub(crate) fn proposable(&self, model: &Model, m: usize) -> bool {
        f64::from(self.neutral[m]) <= model.mask_limit
    }

    /// Sets `r_gm`, keeping the selected-column list in step. The caller owns
    /// the likelihood cache.
    pub(crate) fn set_association(&mut self, g: usize, m: usize, on: bool) {
        let was = self.r.get(g, m);
        if was == on {
            return;
        }
        self.occupancy.leave_r(g * self.r.n_probes() + m, was);
        self.r.set(g, m, on);
        let cols = &mut self.included[g];
        match (cols.binary_search(&m), on) {
            (Err(pos), true) => cols.insert(pos, m),
            (Ok(pos), false) => {
                cols.remove(pos);
            }
            _ => unreachable!("selected-column list out of step"),
        }
    }

    /// Sets `xi_im` and updates every state-derived cache except the
    /// per-gene likelihoods.
    pub(crate) fn set_state(&mut self, model: &Model, i: usize, m: usize, new: u8) {
        let old = self.xi.get(i, m);
        if old == new {
            return;
        }
        let n = self.xi.n_samples();
        let x = model.ctx.data.x()[(i, m)];
        self.occupancy.leave_xi(m * n + i, old);
        let (o, w) = (usize::from(old - 1), usize::from(new - 1));
        self.stats[o].remove(x);
        self.stats[w].add(x);
        if old == NEUTRAL {
            self.neutral[m] -= 1;
        }
        if new == NEUTRAL {
            self.neutral[m] += 1;
        }
        if m == 0 {
            self.initial[o] -= 1;
            self.initial[w] += 1;
        } else {
            let left = self.xi.get(i, m - 1);
            let l = usize::from(left - 1);
            self.transitions[l][o] -= 1;
            self.transitions[l][w] += 1;
            if left == old {
                self.persist[m - 1] -= 1;
            }
            if left == new {
                self.persist[m - 1] += 1;
            }
        }
        if m + 1 < self.xi.n_probes() {
            let right = self.xi.get(i, m + 1);
            let rr = usize::from(right - 1);
            self.transitions[o][rr] -= 1;
            self.transitions[w][rr] += 1;
            if right == old {
                self.persist[m] -= 1;
            }
            if right == new {
                self.persist[m] += 1;
            }
        }
        self.xi.set(i, m, new);
    }

    /// Current mixture weights at site `m`.
    #[inline]
    pub(crate) fn site_weights(&self, model: &Model, m: usize) -> SiteWeights {
        if m == 0 || m + 1 >= self.xi.n_probes() {
            return SiteWeights::INDEPENDENT;
        }
        model.weights_from(
            m,
            model.persistence(m - 1, self.persist[m - 1]),
            model.persistence(m, self.persist[m]),
        )
    }

    /// Log conditional prior of gene `g` at site `m` under weights `w`.
    #[inline]
    pub(crate) fn site_term(&self, model: &Model, g: usize, m: usize, w: SiteWeights) -> f64 {
        let row = self.r.row(g);
        let m_total = row.len();
        let hyper = &model.ctx.hyper;
        log_prior_r_conditional(
            row[m] == 1,
            (m > 0).then(|| row[m - 1] == 1),
            (m + 1 < m_total).then(|| row[m + 1] == 1),
            w,
            hyper.e,
            hyper.f,
        )
    }

    /// Sum of gene `g`'s site terms over `sites` under the current weights.
    pub(crate) fn gene_prior_at(&self, model: &Model, g: usize, sites: &[usize]) -> f64 {
        sites
            .iter()
            .map(|&m| self.site_term(model, g, m, self.site_weights(model, m)))
            .sum()
    }

    /// Log prior of the whole association matrix. All-zero neighbourhoods
    /// share one value per site, so only genes with nearby selections are
    /// evaluated one by one.
    pub fn log_prior_associations(&self, model: &Model) -> f64 {
        let (g_total, m_total) = (self.r.n_genes(), self.r.n_probes());
        let hyper = &model.ctx.hyper;
        let mut touched = vec![0usize; m_total];
        let mut total = 0.0;
        for g in 0..g_total {
            let mut sites: Vec<usize> = Vec::new();
            for &m in &self.included[g] {
                for s in m.saturating_sub(1)..=(m + 1).min(m_total - 1) {
                    if !sites.contains(&s) {
                        sites.push(s);
                    }
                }
            }
            for &s in &sites {
                touched[s] += 1;
            }
            total += self.gene_prior_at(model, g, &sites);
        }
        for m in 0..m_total {
            let quiet = g_total - touched[m];
            if quiet == 0 {
                continue;
            }
            let w = self.site_weights(model, m);
            let mut p = w.gamma * hyper.f / (hyper.e + hyper.f);
            if m > 0 {
                p += w.omega_left;
            }
            if m + 1 < m_total {
                p += w.omega_right;
            }
            total += quiet as f64 * p.ln();
        }
        total
    }

    /// Log emission density of all log-ratios, from the cached statistics.
    pub fn log_emission(&self) -> f64 {
        (0..NUM_STATES)
            .map(|j| {
                let st = &self.stats[j];
                let sd = self.hmm.sds[j];
                -(st.count as f64) * (0.5 * LN_2PI + sd.ln())
                    - st.squared_deviation(self.hmm.means[j]) / (2.0 * sd * sd)
            })
            .sum()
    }

    /// Log probability of all state paths under the current Markov chain.
    pub fn log_state_paths(&self) -> f64 {
        let mut total = 0.0;
        for j in 0..NUM_STATES {
            if self.initial[j] > 0 {
                total += self.initial[j] as f64 * self.hmm.stationary[j].ln();
            }
            for k in 0..NUM_STATES {
                if self.transitions[j][k] > 0 {
                    total += self.transitions[j][k] as f64 * self.hmm.transition[j][k].ln();
                }
            }
        }
        total
    }

    /// Unnormalized log prior density of the HMM parameters, with emission
    /// precisions as the parameterization of the spread.
    pub fn log_prior_hmm(&self, model: &Model) -> f64 {
        let h = &model.ctx.hmm_hyper;
        let mut total = 0.0;
        for j in 0..NUM_STATES {
            total += log_normal_density(self.hmm.means[j], h.mean_loc[j], h.mean_scale[j]);
            let precision = self.hmm.sds[j].powi(-2);
            total +=
                (h.precision_shape[j] - 1.0) * precision.ln() - h.precision_rate[j] * precision;
            for k in 0..NUM_STATES {
                total += (h.dirichlet[k] - 1.0) * self.hmm.transition[j][k].ln();
            }
        }
        total
    }

    /// Unnormalized log joint density of the current state and the data.
    pub fn log_posterior(&self, model: &Model) -> f64 {
        self.gene_loglik.iter().sum::<f64>()
            + self.log_prior_associations(model)
            + self.log_emission()
            + self.log_state_paths()
            + self.log_prior_hmm(model)
    }

    /// Recomputes every cache from scratch and reports the first mismatch.
    pub fn check_caches(&self, model: &Model) -> Result<()> {
        let fresh = ChainState::new(model, self.xi.clone(), self.r.clone(), self.hmm.clone())?;
        for (g, (a, b)) in self.gene_loglik.iter().zip(&fresh.gene_loglik).enumerate() {
            if (a - b).abs() > 1e-8 * (1.0 + b.abs()) {
                return Err(Error::Numerical(format!(
                    "cached log likelihood of gene {g} is {a}, fresh value {b}"
                )));
            }
        }
        if self.included != fresh.included {
            return Err(Error::Numerical("selected-column lists out of step".into()));
        }
        if self.transitions != fresh.transitions
            || self.initial != fresh.initial
            || self.persist != fresh.persist
            || self.neutral != fresh.neutral
        {
            return Err(Error::Numerical("state count caches out of step".into()));
        }
        for j in 0..NUM_STATES {
            let (a, b) = (&self.stats[j], &fresh.stats[j]);
            if a.count != b.count
                || (a.sum - b.sum).abs() > 1e-8 * (1.0 + b.sum_sq)
                || (a.sum_sq - b.sum_sq).abs() > 1e-8 * (1.0 + b.sum_sq)
            {
                return Err(Error::Numerical(format!(
                    "emission statistics of state {} out of step",
                    j + 1
                )));
            }
        }
        Ok(())
    }
}
