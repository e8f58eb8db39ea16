//! Chain driver and retained-sample storage.

use serde::{Deserialize, Serialize};

use super::init::initialize_state;
use super::moves::{
    update_associations, update_means, update_sds, update_states, update_transitions,
    AcceptanceStats,
};
use super::state::{ChainState, Model};
use crate::error::{Error, Result};
use crate::model::{AssociationMatrix, HmmParams, LatentStateMatrix, ValidatedContext, NUM_STATES};
use crate::ChainRng;

/// Retained output of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub n_samples: usize,
    pub n_genes: usize,
    pub n_probes: usize,
    /// Number of retained sweeps.
    pub retained: u64,
    /// Retained sweeps with `r_gm = 1`, row-major `G x M`.
    pub r_counts: Vec<u64>,
    /// Retained sweeps per state of `xi_im`, indexed `m * n + i`.
    pub xi_counts: Vec<[u64; NUM_STATES]>,
    /// Sweep index of each retained sample.
    pub iterations: Vec<u64>,
    pub r_size: Vec<u64>,
    pub occupancy: Vec<[u64; NUM_STATES]>,
    pub log_posterior: Vec<f64>,
    pub means: Vec<[f64; NUM_STATES]>,
    pub sds: Vec<[f64; NUM_STATES]>,
    pub transitions: Vec<[[f64; NUM_STATES]; NUM_STATES]>,
    pub acceptance: AcceptanceStats,
}

impl ChainTrace {
    pub(crate) fn empty(n: usize, g: usize, m: usize) -> Self {
        ChainTrace {
            n_samples: n,
            n_genes: g,
            n_probes: m,
            retained: 0,
            r_counts: vec![0; g * m],
            xi_counts: vec![[0; NUM_STATES]; n * m],
            iterations: Vec::new(),
            r_size: Vec::new(),
            occupancy: Vec::new(),
            log_posterior: Vec::new(),
            means: Vec::new(),
            sds: Vec::new(),
            transitions: Vec::new(),
            acceptance: AcceptanceStats::default(),
        }
    }

    /// Every recorded scalar series with its label.
    pub fn scalar_series(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = vec![
            (
                "r_size".to_string(),
                self.r_size.iter().map(|&v| v as f64).collect(),
            ),
            ("log_posterior".to_string(), self.log_posterior.clone()),
        ];
        for j in 0..NUM_STATES {
            out.push((
                format!("occupancy_{}", j + 1),
                self.occupancy.iter().map(|o| o[j] as f64).collect(),
            ));
        }
        for j in 0..NUM_STATES {
            out.push((
                format!("eta_{}", j + 1),
                self.means.iter().map(|v| v[j]).collect(),
            ));
        }
        for j in 0..NUM_STATES {
            out.push((
                format!("sigma_{}", j + 1),
                self.sds.iter().map(|v| v[j]).collect(),
            ));
        }
        for h in 0..NUM_STATES {
            for j in 0..NUM_STATES {
                out.push((
                    format!("a_{}{}", h + 1, j + 1),
                    self.transitions.iter().map(|a| a[h][j]).collect(),
                ));
            }
        }
        out
    }
}

/// A running chain: model, state, generator and everything recorded so far.
#[derive(Clone, Debug)]
pub struct Chain {
    pub(crate) model: Model,
    pub(crate) state: ChainState,
    pub(crate) rng: ChainRng,
    pub(crate) trace: ChainTrace,
}

impl Chain {
    /// Starts a chain from the default initialization, seeded by `cfg.seed`.
    pub fn new(ctx: ValidatedContext) -> Result<Self> {
        let mut rng = crate::seeded_rng(ctx.cfg.seed);
        let model = Model::new(ctx)?;
        let state = initialize_state(&model, &mut rng)?;
        Ok(Chain::assemble(model, state, rng))
    }

    /// Starts a chain from explicit values, seeded by `cfg.seed`.
    pub fn from_values(
        ctx: ValidatedContext,
        xi: LatentStateMatrix,
        r: AssociationMatrix,
        hmm: HmmParams,
    ) -> Result<Self> {
        let rng = crate::seeded_rng(ctx.cfg.seed);
        let model = Model::new(ctx)?;
        let state = ChainState::new(&model, xi, r, hmm)?;
        Ok(Chain::assemble(model, state, rng))
    }

    fn assemble(model: Model, state: ChainState, rng: ChainRng) -> Self {
        let trace = ChainTrace::empty(model.n_samples(), model.n_genes(), model.n_probes());
        Chain {
            model,
            state,
            rng,
            trace,
        }
    }

    pub(crate) fn from_parts(
        model: Model,
        state: ChainState,
        rng: ChainRng,
        trace: ChainTrace,
    ) -> Self {
        Chain {
            model,
            state,
            rng,
            trace,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn acceptance(&self) -> &AcceptanceStats {
        &self.trace.acceptance
    }

    /// Completed sweeps.
    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    pub fn is_finished(&self) -> bool {
        self.state.iteration >= self.model.ctx.cfg.iterations
    }

    /// Runs one sweep and records it if it is retained.
    pub fn sweep(&mut self) -> Result<()> {
        let t = self.state.iteration;
        self.sweep_moves().map_err(|e| Error::AtIteration {
            iteration: t,
            source: Box::new(e),
        })?;
        if self.model.ctx.cfg.is_retained(t) {
            self.record(t);
        }
        self.state.iteration += 1;
        Ok(())
    }

    fn sweep_moves(&mut self) -> Result<()> {
        let cfg = &self.model.ctx.cfg;
        let moves = cfg.moves;
        let stats = &mut self.trace.acceptance;
        let (state, model, rng) = (&mut self.state, &self.model, &mut self.rng);
        if moves.associations {
            update_associations(state, model, cfg, rng, stats)?;
        }
        if moves.states {
            update_states(state, model, cfg, rng, stats)?;
        }
        if moves.emission_means {
            update_means(state, model, rng)?;
        }
        if moves.emission_sds {
            update_sds(state, model, rng)?;
        }
        if moves.transitions {
            update_transitions(state, model, rng, stats)?;
        }
        Ok(())
    }

    fn record(&mut self, t: u64) {
        let st = &mut self.state;
        st.occupancy.position += 1;
        let trace = &mut self.trace;
        trace.retained += 1;
        trace.iterations.push(t);
        trace.r_size.push(st.r.count_ones() as u64);
        trace
            .occupancy
            .push(std::array::from_fn(|j| st.stats[j].count));
        trace.log_posterior.push(st.log_posterior(&self.model));
        trace.means.push(st.hmm.means);
        trace.sds.push(st.hmm.sds);
        trace.transitions.push(st.hmm.transition);
    }

    /// Sweeps until `iteration` sweeps are complete (or the configured total).
    pub fn run_until(&mut self, iteration: u64) -> Result<()> {
        let stop = iteration.min(self.model.ctx.cfg.iterations);
        while self.state.iteration < stop {
            self.sweep()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.model.ctx.cfg.iterations)
    }

    /// Inclusion and state counts so far, without consuming the chain.
    pub fn trace(&self) -> ChainTrace {
        let mut occupancy = self.state.occupancy.clone();
        occupancy.flush(&self.state.r, &self.state.xi);
        ChainTrace {
            r_counts: occupancy.r_counts,
            xi_counts: occupancy.xi_counts,
            ..self.trace.clone()
        }
    }

    pub fn into_trace(mut self) -> ChainTrace {
        self.state.occupancy.flush(&self.state.r, &self.state.xi);
        let occupancy = std::mem::take(&mut self.state.occupancy);
        ChainTrace {
            r_counts: occupancy.r_counts,
            xi_counts: occupancy.xi_counts,
            ..self.trace
        }
    }
}

/// Runs a full chain from the default initialization.
pub fn run_chain(ctx: ValidatedContext) -> Result<ChainTrace> {
    let mut chain = Chain::new(ctx)?;
    chain.run()?;
    Ok(chain.into_trace())
}
