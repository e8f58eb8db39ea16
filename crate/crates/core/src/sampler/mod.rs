//! Metropolis-within-Gibbs sampler.
//!
//! One sweep updates, in order: the association matrix, a block of latent
//! states in one probe, the emission means, the emission sds and the
//! transition matrix.

mod chain;
mod init;
mod moves;
mod state;

pub use chain::{run_chain, Chain, ChainTrace};
pub use init::{initialize_state, threshold_state, transition_proportions, INIT_THRESHOLDS};
pub use moves::{
    state_move_ratio, update_associations, update_means, update_sds, update_states,
    update_transitions, AcceptanceStats, StateMoveRatio,
};
pub use state::{ChainState, Model, StateStats};

pub(crate) use moves::draw_state;

#[cfg(test)]
mod tests;
