//! Error metrics, structural complexity and analytic inference FLOPs.
//!
//! FLOPs counting: a length-`p` dot product costs `p` multiplications and
//! `p − 1` additions (`2p − 1`), each internal split adds one comparison,
//! and with `p = d + 1` the leaf costs one dot product. Tree costs are the
//! unweighted mean over root-to-leaf paths.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boost::BoostModel;
use crate::error::{Error, Result};
use crate::tree::HrtModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    /// NaN when the targets are constant; see `r2_defined`.
    pub r2: f64,
    pub r2_defined: bool,
    pub n: usize,
}

pub fn evaluate(predictions: &[f64], targets: &[f64]) -> Result<EvalReport> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: targets.len() });
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let (mut sse, mut sae, mut sst) = (0.0, 0.0, 0.0);
    for (p, y) in predictions.iter().zip(targets) {
        let e = p - y;
        sse += e * e;
        sae += e.abs();
        sst += (y - mean) * (y - mean);
    }
    let r2_defined = sst > 0.0;
    Ok(EvalReport {
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        r2: if r2_defined { 1.0 - sse / sst } else { f64::NAN },
        r2_defined,
        n: targets.len(),
    })
}

/// How an internal split is charged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlopsMode {
    /// Both branch predictors are evaluated: `2(2p − 1) + 1`.
    #[default]
    Two,
    /// Only the difference hyperplane `x̃ᵀ(θ₁ − θ₂)`: `(2p − 1) + 1`.
    Diff,
}

impl FromStr for FlopsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" => Ok(FlopsMode::Two),
            "diff" => Ok(FlopsMode::Diff),
            _ => Err(Error::InvalidConfig(format!("flops mode must be `two` or `diff`, got `{s}`"))),
        }
    }
}

impl fmt::Display for FlopsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlopsMode::Two => "two",
            FlopsMode::Diff => "diff",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub inference_flops_per_sample: f64,
    pub total_parameters: usize,
}

fn dot_cost(p: usize) -> usize {
    2 * p - 1
}

fn split_cost(p: usize, mode: FlopsMode) -> usize {
    match mode {
        FlopsMode::Two => 2 * dot_cost(p) + 1,
        FlopsMode::Diff => dot_cost(p) + 1,
    }
}

pub fn hrt_inference_flops(model: &HrtModel, mode: FlopsMode) -> FlopsReport {
    let p = model.d + 1;
    let paths = model.root.path_lengths();
    let total: usize = paths.iter().map(|&k| k * split_cost(p, mode) + dot_cost(p)).sum();
    let internal = model.root.internal_count();
    FlopsReport {
        inference_flops_per_sample: total as f64 / paths.len() as f64,
        total_parameters: p * (2 * internal + paths.len()),
    }
}

/// Per-learner costs plus a multiply and an add per learner and one add for
/// the constant initializer.
pub fn boost_inference_flops(model: &BoostModel, mode: FlopsMode) -> FlopsReport {
    let mut flops = 1.0;
    let mut params = 0;
    for t in &model.learners {
        let r = hrt_inference_flops(t, mode);
        flops += r.inference_flops_per_sample + 2.0;
        params += r.total_parameters;
    }
    FlopsReport { inference_flops_per_sample: flops, total_parameters: params }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Complexity {
    Hrt { depth: usize, leaves: usize },
    Boost { total_leaves: usize, max_depth: usize, stages: usize },
}

pub fn hrt_complexity(model: &HrtModel) -> Complexity {
    Complexity::Hrt { depth: model.root.depth(), leaves: model.root.leaf_count() }
}

pub fn boost_complexity(model: &BoostModel) -> Complexity {
    Complexity::Boost {
        total_leaves: model.learners.iter().map(|t| t.root.leaf_count()).sum(),
        max_depth: model.learners.iter().map(|t| t.root.depth()).max().unwrap_or(0),
        stages: model.learners.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hinge::HingeKind;
    use crate::linalg::LinearModel;
    use crate::tree::{NodeSplit, TreeConfig, TreeNode};

    fn leaf(d: usize) -> TreeNode {
        TreeNode::Leaf { model: LinearModel::constant(d, 0.0), n_train: 1 }
    }

    fn internal(d: usize, left: TreeNode, right: TreeNode) -> TreeNode {
        TreeNode::Internal {
            split: NodeSplit {
                kind: HingeKind::Max,
                theta1: LinearModel::constant(d, 1.0),
                theta2: LinearModel::constant(d, 0.0),
                used_fallback: false,
                fallback_feature: None,
                fallback_threshold: None,
            },
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn model(d: usize, root: TreeNode) -> HrtModel {
        HrtModel { root, d, config: TreeConfig::default(), stats: Default::default() }
    }

    #[test]
    fn eval_examples() {
        let r = evaluate(&[1.0, 2.0, 4.0], &[1.0, 3.0, 3.0]).unwrap();
        assert!((r.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((r.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.r2 - 0.25).abs() < 1e-15);

        let y = [1.0, 5.0, 3.0];
        let perfect = evaluate(&y, &y).unwrap();
        assert_eq!((perfect.rmse, perfect.mae, perfect.r2), (0.0, 0.0, 1.0));
        assert_eq!(evaluate(&[3.0; 3], &y).unwrap().r2, 0.0);

        let flat = evaluate(&[1.0, 2.0], &[2.0, 2.0]).unwrap();
        assert!(!flat.r2_defined && flat.r2.is_nan());
        assert!(matches!(evaluate(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(evaluate(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn hand_counted_flops() {
        assert_eq!(hrt_inference_flops(&model(2, leaf(2)), FlopsMode::Two).inference_flops_per_sample, 5.0);
        let one = model(2, internal(2, leaf(2), leaf(2)));
        assert_eq!(hrt_inference_flops(&one, FlopsMode::Two).inference_flops_per_sample, 16.0);
        let two = model(1, internal(1, internal(1, leaf(1), leaf(1)), internal(1, leaf(1), leaf(1))));
        let r = hrt_inference_flops(&two, FlopsMode::Two);
        assert_eq!(r.inference_flops_per_sample, 17.0);
        assert_eq!(r.total_parameters, 2 * (2 * 3 + 4));
        // diff mode: (2p − 1) + 1 per split
        assert_eq!(hrt_inference_flops(&one, FlopsMode::Diff).inference_flops_per_sample, 11.0);
    }

    #[test]
    fn unbalanced_paths_are_averaged() {
        // paths with 2, 2, 1 splits; d = 1 → split 7, leaf 3
        let t = model(1, internal(1, internal(1, leaf(1), leaf(1)), leaf(1)));
        let r = hrt_inference_flops(&t, FlopsMode::Two);
        assert_eq!(r.inference_flops_per_sample, (17.0 + 17.0 + 10.0) / 3.0);
    }

    #[test]
    fn complexity_of_single_leaf() {
        assert_eq!(hrt_complexity(&model(3, leaf(3))), Complexity::Hrt { depth: 0, leaves: 1 });
    }

    #[test]
    fn flops_mode_parses() {
        assert_eq!("two".parse::<FlopsMode>().unwrap(), FlopsMode::Two);
        assert_eq!("diff".parse::<FlopsMode>().unwrap(), FlopsMode::Diff);
        assert!("three".parse::<FlopsMode>().is_err());
    }
}
