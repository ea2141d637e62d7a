//! Approximate leave-one-out scores by Pareto-smoothed importance sampling,
//! and stacking weights over a menu of models.

mod psis;
mod stacking;

pub use psis::{gpd_fit, psis_loo, psis_smooth, tail_length, GpdFit, LooResult, DEGENERATE_K, HIGH_K};
pub use stacking::{
    compare, stack_weights, stacked_draws, LooComparison, StackMode, StackingWeights, STACK_MAX_ITER, STACK_TOL,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LooError {
    #[error("{0} tail points; the Pareto fit needs at least 5")]
    ShortTail(usize),
    #[error("log-likelihood matrix: {0}")]
    Shape(String),
    #[error("stacking input: {0}")]
    Stacking(String),
    #[error("stacked sampling: {0}")]
    Config(String),
}

#[cfg(test)]
mod tests;
