//! Recursive hinge-tree construction and routing.
//!
//! Depth counts edges from the root (a lone leaf has depth 0). Every node
//! draws its seed from its parent via [`seed::child_seed`], so the fitted
//! tree does not depend on the order in which subtrees are built; left and
//! right subtrees are grown in parallel.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::hinge::{self, HingeKind, SplitConfig, SplitOutcome, Subset};
use crate::linalg::LinearModel;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub d_max: usize,
    pub n_min: usize,
    pub tau_rmse: f64,
    pub split: SplitConfig,
    /// Replace stalled node optimizations by a random-feature median split.
    pub fallback_on_nonconvergence: bool,
    /// Keep every node's objective trace in [`TrainStats::per_node_traces`].
    #[serde(default)]
    pub keep_traces: bool,
}

impl Default for TreeConfig {
    fn default() -> Self {
        crate::presets::tree_defaults()
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.n_min < 2 || self.n_min < 2 * self.split.min_subset {
            return Err(Error::InvalidConfig(format!(
                "n_min must be at least max(2, 2·min_subset) = {}, got {}",
                (2 * self.split.min_subset).max(2),
                self.n_min
            )));
        }
        if !(self.tau_rmse >= 0.0) {
            return Err(Error::InvalidConfig(format!("tau_rmse must be non-negative, got {}", self.tau_rmse)));
        }
        Ok(())
    }
}

/// Routing rule stored at an internal node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSplit {
    pub kind: HingeKind,
    pub theta1: LinearModel,
    pub theta2: LinearModel,
    pub used_fallback: bool,
    pub fallback_feature: Option<usize>,
    pub fallback_threshold: Option<f64>,
}

impl NodeSplit {
    #[inline]
    pub fn routes_left(&self, x: &[f64]) -> bool {
        self.kind.routes_first(self.theta1.eval(x), self.theta2.eval(x))
    }
}

impl From<SplitOutcome> for NodeSplit {
    fn from(o: SplitOutcome) -> Self {
        NodeSplit {
            kind: o.kind,
            theta1: o.theta1,
            theta2: o.theta2,
            used_fallback: o.used_fallback,
            fallback_feature: o.fallback_feature,
            fallback_threshold: o.fallback_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Leaf { model: LinearModel, n_train: usize },
    Internal { split: NodeSplit, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.internal_count() + right.internal_count(),
        }
    }

    pub fn fallback_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { split, left, right } => {
                split.used_fallback as usize + left.fallback_count() + right.fallback_count()
            }
        }
    }

    /// Number of internal nodes on each root-to-leaf path, leaves in
    /// left-to-right order.
    pub fn path_lengths(&self) -> Vec<usize> {
        fn walk(node: &TreeNode, depth: usize, out: &mut Vec<usize>) {
            match node {
                TreeNode::Leaf { .. } => out.push(depth),
                TreeNode::Internal { left, right, .. } => {
                    walk(left, depth + 1, out);
                    walk(right, depth + 1, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut out);
        out
    }

    pub fn leaves(&self) -> Vec<(&LinearModel, usize)> {
        fn walk<'a>(node: &'a TreeNode, out: &mut Vec<(&'a LinearModel, usize)>) {
            match node {
                TreeNode::Leaf { model, n_train } => out.push((model, *n_train)),
                TreeNode::Internal { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

/// Optimization record of one node, kept only with `keep_traces`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub depth: usize,
    pub n: usize,
    pub kind: HingeKind,
    pub converged: bool,
    pub used_fallback: bool,
    pub objective_trace: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub n_leaves: usize,
    pub depth: usize,
    pub n_splits: usize,
    pub n_fallbacks: usize,
    /// Node optimizations run (one per node that reached the split stage).
    pub split_attempts: usize,
    /// Newton iterations summed over both variants of every attempt.
    pub total_split_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_node_traces: Option<Vec<NodeTrace>>,
}

impl TrainStats {
    pub fn fallback_rate(&self) -> f64 {
        if self.n_splits == 0 {
            0.0
        } else {
            self.n_fallbacks as f64 / self.n_splits as f64
        }
    }

    /// Mean iterations per variant run.
    pub fn avg_iterations(&self) -> f64 {
        if self.split_attempts == 0 {
            0.0
        } else {
            self.total_split_iterations as f64 / (2 * self.split_attempts) as f64
        }
    }

    fn merge(&mut self, other: TrainStats) {
        self.n_splits += other.n_splits;
        self.n_fallbacks += other.n_fallbacks;
        self.split_attempts += other.split_attempts;
        self.total_split_iterations += other.total_split_iterations;
        if let Some(t) = other.per_node_traces {
            self.per_node_traces.get_or_insert_with(Vec::new).extend(t);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HrtModel {
    pub root: TreeNode,
    pub d: usize,
    pub config: TreeConfig,
    pub stats: TrainStats,
}

impl HrtModel {
    pub fn fit(data: &Dataset, config: &TreeConfig) -> Result<HrtModel> {
        build_tree(data.x(), data.y(), config)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        predict(self, x)
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    config: &'a TreeConfig,
}

impl Builder<'_> {
    fn grow(&self, rows: Vec<usize>, depth: usize, node_seed: u64) -> Result<(TreeNode, TrainStats)> {
        let cfg = self.config;
        let sub = Subset::new(self.x, self.y, &rows)?;
        let leaf_model = hinge::fit_or_constant(&sub, cfg.split.ridge);
        let sse: f64 = sub.iter().map(|(_, x, y)| (y - leaf_model.eval(x)).powi(2)).sum();
        let rmse = (sse / sub.len() as f64).sqrt();
        let n = rows.len();
        let leaf = |model: LinearModel| TreeNode::Leaf { model, n_train: n };

        if depth >= cfg.d_max || n < cfg.n_min || rmse < cfg.tau_rmse {
            return Ok((leaf(leaf_model), TrainStats::default()));
        }

        let split_cfg = SplitConfig { seed: node_seed, ..cfg.split.clone() };
        let selection = hinge::select_split_with_runs(&sub, &split_cfg)?;
        let mut stats = TrainStats {
            split_attempts: 1,
            total_split_iterations: selection.iterations_max + selection.iterations_min,
            ..Default::default()
        };
        let mut outcome = selection.chosen;
        let (mut s1, mut s2) = hinge::partition(&sub, &outcome.theta1, &outcome.theta2, outcome.kind);
        let min_side = cfg.split.min_subset;
        let stalled = !outcome.converged || s1.len() < min_side || s2.len() < min_side;
        if stalled && cfg.fallback_on_nonconvergence {
            match hinge::median_fallback(&sub, seed::mix(node_seed, seed::TAG_FALLBACK)) {
                Ok(fb) => {
                    outcome = fb;
                    (s1, s2) = hinge::partition(&sub, &outcome.theta1, &outcome.theta2, outcome.kind);
                }
                Err(Error::AllFeaturesConstant) => return Ok((leaf(leaf_model), stats)),
                Err(e) => return Err(e),
            }
        }
        if s1.len() < cfg.n_min || s2.len() < cfg.n_min {
            return Ok((leaf(leaf_model), stats));
        }

        if cfg.keep_traces {
            stats.per_node_traces = Some(vec![NodeTrace {
                depth,
                n,
                kind: outcome.kind,
                converged: outcome.converged,
                used_fallback: outcome.used_fallback,
                objective_trace: outcome.objective_trace.clone(),
            }]);
        }
        stats.n_splits = 1;
        stats.n_fallbacks = outcome.used_fallback as usize;
        drop(rows);

        let (left, right) = rayon::join(
            || self.grow(s1, depth + 1, seed::child_seed(node_seed, depth, 0)),
            || self.grow(s2, depth + 1, seed::child_seed(node_seed, depth, 1)),
        );
        let (left, left_stats) = left?;
        let (right, right_stats) = right?;
        stats.merge(left_stats);
        stats.merge(right_stats);
        let node = TreeNode::Internal { split: outcome.into(), left: Box::new(left), right: Box::new(right) };
        Ok((node, stats))
    }
}

/// Grows a tree on `(x, y)`.
pub fn build_tree(x: &Matrix, y: &[f64], config: &TreeConfig) -> Result<HrtModel> {
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.cols() == 0 {
        return Err(Error::InvalidConfig("need at least one feature".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
    }
    let builder = Builder { x, y, config };
    let (root, mut stats) = builder.grow((0..x.rows()).collect(), 0, config.split.seed)?;
    stats.n_leaves = root.leaf_count();
    stats.depth = root.depth();
    if config.keep_traces && stats.per_node_traces.is_none() {
        stats.per_node_traces = Some(Vec::new());
    }
    Ok(HrtModel { root, d: x.cols(), config: config.clone(), stats })
}

/// Routes `x` to a leaf (left on `S₁`) and evaluates the leaf model.
pub fn predict(model: &HrtModel, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), model.d);
    let mut node = &model.root;
    loop {
        match node {
            TreeNode::Leaf { model, .. } => return model.eval(x),
            TreeNode::Internal { split, left, right } => {
                node = if split.routes_left(x) { left } else { right };
            }
        }
    }
}

pub fn predict_checked(model: &HrtModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.d {
        return Err(Error::DimensionMismatch { expected: model.d, got: x.len() });
    }
    Ok(predict(model, x))
}

pub fn predict_batch(model: &HrtModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.rows() == 0 {
        return Ok(Vec::new());
    }
    if x.cols() != model.d {
        return Err(Error::DimensionMismatch { expected: model.d, got: x.cols() });
    }
    Ok(x.iter_rows().map(|r| predict(model, r)).collect())
}

/// Structural counts recomputed from the tree, with the iteration counters
/// carried over from training.
pub fn tree_stats(model: &HrtModel) -> TrainStats {
    TrainStats {
        n_leaves: model.root.leaf_count(),
        depth: model.root.depth(),
        n_splits: model.root.internal_count(),
        n_fallbacks: model.root.fallback_count(),
        split_attempts: model.stats.split_attempts,
        total_split_iterations: model.stats.total_split_iterations,
        per_node_traces: None,
    }
}
