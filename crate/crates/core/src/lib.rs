//! Hinge regression trees (HRT) and HRT-Boost.
//!
//! An HRT is an oblique regression tree. Each internal node holds two affine
//! models combined by a `max` or `min` hinge; the side of the hyperplane
//! `x̃ᵀ(θ₁ − θ₂) = 0` a sample falls on decides its child. Node parameters
//! are fitted by damped Newton iteration, which under a frozen partition is
//! exactly a relaxation toward the per-side least-squares fits. Leaves carry
//! affine predictors, so a fitted tree is a piecewise linear function.
//!
//! HRT-Boost adds trees stage-wise on squared-loss residuals with a global
//! shrinkage factor and records the per-stage residual-fit coefficient so the
//! risk-reduction bound can be checked after training.
//!
//! Feature matrices are dense row-major [`Matrix`] values; every model works
//! with augmented vectors (features followed by a constant 1).

pub mod ablation;
pub mod boost;
pub mod dataset;
pub mod error;
pub mod hinge;
pub mod linalg;
pub mod metrics;
pub mod persist;
pub mod presets;
pub mod seed;
pub mod tree;

pub use boost::{fit_boost, predict_boost, BoostConfig, BoostModel, BoundRow};
pub use dataset::{Dataset, Matrix, Provenance, SyntheticFunction, SyntheticSpec};
pub use error::{Error, Result};
pub use hinge::{HingeKind, SplitConfig, SplitOutcome, StepRule, Subset};
pub use linalg::{predict_linear, ridge_solve, AugmentedDesign, LinearModel, RidgePenalty};
pub use metrics::{evaluate, EvalReport, FlopsMode, FlopsReport};
pub use tree::{build_tree, HrtModel, TrainStats, TreeConfig, TreeNode};
