//! Default hyperparameters.
//!
//! Depth, ridge strength, step size and leaf RMSE threshold follow the tuned
//! values reported for each synthetic benchmark. Iteration budget,
//! tolerance and minimum node size are not part of those settings and use
//! the crate-wide values below.

use crate::boost::BoostConfig;
use crate::dataset::SyntheticFunction;
use crate::hinge::{SplitConfig, StepRule};
use crate::linalg::RidgePenalty;
use crate::tree::TreeConfig;

pub const T_MAX: usize = 1000;
pub const EPSILON: f64 = 1e-3;
pub const N_MIN: usize = 10;
pub const MIN_SUBSET: usize = 2;

/// `(max_depth, ridge_alpha, step, threshold)` for a benchmark function.
pub fn benchmark_settings(f: SyntheticFunction) -> (usize, f64, StepRule, f64) {
    match f {
        SyntheticFunction::Sinc => (6, 0.001, StepRule::fixed(0.01), 0.03),
        SyntheticFunction::TwistedSigmoid => (4, 0.001, StepRule::fixed(0.5), 0.01),
        SyntheticFunction::F1 | SyntheticFunction::F2 => (12, 0.0, StepRule::fixed(1.0), 0.01),
        SyntheticFunction::F3 => (8, 0.0, StepRule::fixed(1.0), 0.05),
        SyntheticFunction::F4 => (12, 0.0, StepRule::fixed(1.0), 0.05),
    }
}

fn tree_config(d_max: usize, alpha: f64, step: StepRule, tau: f64) -> TreeConfig {
    TreeConfig {
        d_max,
        n_min: N_MIN,
        tau_rmse: tau,
        split: SplitConfig {
            t_max: T_MAX,
            step,
            epsilon: EPSILON,
            ridge: RidgePenalty::new(alpha).expect("preset alpha is valid"),
            min_subset: MIN_SUBSET,
            seed: 0,
        },
        fallback_on_nonconvergence: true,
        keep_traces: false,
    }
}

pub fn for_function(f: SyntheticFunction) -> TreeConfig {
    let (d_max, alpha, step, tau) = benchmark_settings(f);
    tree_config(d_max, alpha, step, tau)
}

/// Defaults for data without a dedicated preset (the `sinc` settings).
pub fn tree_defaults() -> TreeConfig {
    for_function(SyntheticFunction::Sinc)
}

/// Boosting defaults: 50 stages, η = 0.1, depth-4 learners with ridge 1.0,
/// auto step and no leaf RMSE threshold.
pub fn boost_defaults() -> BoostConfig {
    BoostConfig {
        m_stages: 50,
        eta: 0.1,
        tree: tree_config(4, 1.0, StepRule::auto(), 0.0),
        record_gamma: true,
    }
}
