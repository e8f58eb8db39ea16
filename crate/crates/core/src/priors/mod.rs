//! Selection prior over the association matrix, plus the truncated samplers
//! used for the HMM emission priors.

mod selection;
mod truncated;

pub use selection::{
    distance_factor, log_prior_r, log_prior_r_conditional, mixture_weights, persistence_weights,
    PersistenceWeights, SiteWeights,
};
pub use truncated::{sample_truncated_gamma, sample_truncated_normal};
pub(crate) use truncated::{sample_truncated_gamma_tail, sample_truncated_normal_tail};
