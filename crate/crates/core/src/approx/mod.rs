//! Approximations of past local objectives and the information loss they incur.
//!
//! A past objective is always summarized as an [`ApproxObjective`]: a stored
//! gradient and Hessian at an anchor point. Taylor regularization fits one
//! directly; core-set and MCMC methods fit the least-squares objective of
//! the retained or regenerated samples, which is itself quadratic and
//! therefore represented exactly.

mod coreset;
mod history;
mod mcmc;
mod taylor;

pub use coreset::{select_core_set_icarl, select_core_set_naive, CoreSet};
pub use history::{cfl_combined_gradient, HistoryBuffer, DEFAULT_HISTORY_CAPACITY};
pub use mcmc::mcmc_generate;
pub(crate) use taylor::taylor_fit_quadratic;
pub use taylor::{approx_gradient, avg_info_loss, info_loss, perturb_hessian, taylor_fit, ApproxObjective};
