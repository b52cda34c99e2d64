//! JSON model files.
//!
//! A tree document is `{format_version, d, config, root, stats}`; nodes are
//! externally tagged as `{"leaf": {...}}` or `{"internal": {...}}`. Boost
//! documents wrap a list of tree documents. Floats are written in their
//! shortest round-trip decimal form, so reading a file back reproduces every
//! parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::{BoostConfig, BoostModel};
use crate::error::{Error, Result};
use crate::hinge::HingeKind;
use crate::linalg::LinearModel;
use crate::tree::{HrtModel, NodeSplit, TrainStats, TreeConfig, TreeNode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeDoc {
    Leaf {
        theta: Vec<f64>,
        n_train: usize,
    },
    Internal {
        kind: HingeKind,
        theta1: Vec<f64>,
        theta2: Vec<f64>,
        used_fallback: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback_feature: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback_threshold: Option<f64>,
        left: Box<NodeDoc>,
        right: Box<NodeDoc>,
    },
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    format_version: u32,
    d: usize,
    config: TreeConfig,
    root: NodeDoc,
    #[serde(default)]
    stats: TrainStats,
}

#[derive(Serialize, Deserialize)]
struct BoostDoc {
    format_version: u32,
    d: usize,
    f0: f64,
    eta: f64,
    gamma_trace: Vec<f64>,
    loss_trace: Vec<f64>,
    stage_retained: Vec<bool>,
    learners: Vec<TreeDoc>,
    config: BoostConfig,
}

/// What a model file contains, detected from its top-level keys.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Hrt(HrtModel),
    Boost(BoostModel),
}

impl AnyModel {
    pub fn d(&self) -> usize {
        match self {
            AnyModel::Hrt(m) => m.d,
            AnyModel::Boost(m) => m.d,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            AnyModel::Hrt(m) => m.predict(x),
            AnyModel::Boost(m) => m.predict(x),
        }
    }
}

fn node_to_doc(node: &TreeNode) -> NodeDoc {
    match node {
        TreeNode::Leaf { model, n_train } => NodeDoc::Leaf { theta: model.theta().to_vec(), n_train: *n_train },
        TreeNode::Internal { split, left, right } => NodeDoc::Internal {
            kind: split.kind,
            theta1: split.theta1.theta().to_vec(),
            theta2: split.theta2.theta().to_vec(),
            used_fallback: split.used_fallback,
            fallback_feature: split.fallback_feature,
            fallback_threshold: split.fallback_threshold,
            left: Box::new(node_to_doc(left)),
            right: Box::new(node_to_doc(right)),
        },
    }
}

fn params(theta: Vec<f64>, d: usize) -> Result<LinearModel> {
    if theta.len() != d + 1 {
        return Err(Error::DimensionMismatch { expected: d + 1, got: theta.len() });
    }
    LinearModel::new(theta)
}

fn doc_to_node(doc: NodeDoc, d: usize) -> Result<TreeNode> {
    Ok(match doc {
        NodeDoc::Leaf { theta, n_train } => TreeNode::Leaf { model: params(theta, d)?, n_train },
        NodeDoc::Internal {
            kind,
            theta1,
            theta2,
            used_fallback,
            fallback_feature,
            fallback_threshold,
            left,
            right,
        } => TreeNode::Internal {
            split: NodeSplit {
                kind,
                theta1: params(theta1, d)?,
                theta2: params(theta2, d)?,
                used_fallback,
                fallback_feature,
                fallback_threshold,
            },
            left: Box::new(doc_to_node(*left, d)?),
            right: Box::new(doc_to_node(*right, d)?),
        },
    })
}

fn tree_doc(model: &HrtModel) -> TreeDoc {
    TreeDoc {
        format_version: FORMAT_VERSION,
        d: model.d,
        config: model.config.clone(),
        root: node_to_doc(&model.root),
        stats: model.stats.clone(),
    }
}

fn check_version(v: u32) -> Result<()> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::FormatVersion(v))
    }
}

fn tree_from_doc(doc: TreeDoc) -> Result<HrtModel> {
    check_version(doc.format_version)?;
    let root = doc_to_node(doc.root, doc.d)?;
    Ok(HrtModel { root, d: doc.d, config: doc.config, stats: doc.stats })
}

pub fn hrt_to_json(model: &HrtModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&tree_doc(model))?)
}

pub fn hrt_from_json(text: &str) -> Result<HrtModel> {
    tree_from_doc(serde_json::from_str(text)?)
}

pub fn boost_to_json(model: &BoostModel) -> Result<String> {
    let doc = BoostDoc {
        format_version: FORMAT_VERSION,
        d: model.d,
        f0: model.f0,
        eta: model.eta,
        gamma_trace: model.gamma_trace.clone(),
        loss_trace: model.loss_trace.clone(),
        stage_retained: model.stage_retained.clone(),
        learners: model.learners.iter().map(tree_doc).collect(),
        config: model.config.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn boost_from_json(text: &str) -> Result<BoostModel> {
    let doc: BoostDoc = serde_json::from_str(text)?;
    check_version(doc.format_version)?;
    let learners = doc.learners.into_iter().map(tree_from_doc).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = learners.iter().find(|t| t.d != doc.d) {
        return Err(Error::DimensionMismatch { expected: doc.d, got: bad.d });
    }
    Ok(BoostModel {
        d: doc.d,
        f0: doc.f0,
        eta: doc.eta,
        learners,
        stage_retained: doc.stage_retained,
        gamma_trace: doc.gamma_trace,
        loss_trace: doc.loss_trace,
        config: doc.config,
    })
}

pub fn model_to_json(model: &AnyModel) -> Result<String> {
    match model {
        AnyModel::Hrt(m) => hrt_to_json(m),
        AnyModel::Boost(m) => boost_to_json(m),
    }
}

pub fn model_from_json(text: &str) -> Result<AnyModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("learners").is_some() {
        boost_from_json(text).map(AnyModel::Boost)
    } else {
        hrt_from_json(text).map(AnyModel::Hrt)
    }
}

pub fn save_model(model: &AnyModel, path: impl AsRef<Path>) -> Result<()> {
    let mut text = model_to_json(model)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AnyModel> {
    model_from_json(&fs::read_to_string(path)?)
}
