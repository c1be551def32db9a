//! Dirichlet-Multinomial likelihood over the decision tree.

mod dm;
pub mod special;

pub use dm::{
    dm_log_pmf, dm_log_pmf_signed, dm_nll_gradient, dm_nll_loss, expected_fractions, record_nll, squash_derivative,
    squash_to_concentration, ConcentrationVector, LossValue, CONCENTRATION_MAX, CONCENTRATION_MIN,
};
