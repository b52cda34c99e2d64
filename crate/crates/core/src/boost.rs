//! HRT-Boost: stage-wise squared-loss boosting with hinge trees.
//!
//! `F₀ = ȳ`, `F_m = F_{m−1} + η·T_m`, where `T_m` is a hinge tree fitted to
//! the residuals `r_m = y − F_{m−1}(X)`. Each stage records
//! `γ_m = 1 − ‖r_m − t_m‖² / ‖r_m‖²` and `L(F_m) = ½‖y − F_m(X)‖²`, which
//! together give the bound `L(F_m) ≤ (1 − ηγ_m)·L(F_{m−1})`.
//!
//! A stage whose tree fits the residuals worse than the zero predictor
//! (`γ_m < 0`), or whose update fails to lower the loss in floating point,
//! is dropped: `γ_m` is recorded as 0, the loss is carried over, and the next
//! stage proceeds with its own seed.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::seed;
use crate::tree::{self, HrtModel, TreeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub m_stages: usize,
    pub eta: f64,
    pub tree: TreeConfig,
    #[serde(default = "yes")]
    pub record_gamma: bool,
}

fn yes() -> bool {
    true
}

impl Default for BoostConfig {
    fn default() -> Self {
        crate::presets::boost_defaults()
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidConfig(format!("learning rate must lie in (0, 1], got {}", self.eta)));
        }
        self.tree.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostModel {
    pub d: usize,
    pub f0: f64,
    pub eta: f64,
    /// Retained learners in stage order.
    pub learners: Vec<HrtModel>,
    /// One entry per stage; whether that stage's tree was kept.
    pub stage_retained: Vec<bool>,
    /// `γ_m` per stage (0 for dropped stages). Empty without `record_gamma`.
    pub gamma_trace: Vec<f64>,
    /// `L(F_m)` on the training data for `m = 0..=M`.
    pub loss_trace: Vec<f64>,
    pub config: BoostConfig,
}

impl BoostModel {
    pub fn stages(&self) -> usize {
        self.stage_retained.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = self.f0;
        for t in &self.learners {
            acc += self.eta * tree::predict(t, x);
        }
        acc
    }
}

fn half_sse(y: &[f64], f: &[f64]) -> f64 {
    0.5 * y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

pub fn fit_boost(data: &Dataset, config: &BoostConfig) -> Result<BoostModel> {
    fit_boost_xy(data.x(), data.y(), config)
}

pub fn fit_boost_xy(x: &Matrix, y: &[f64], config: &BoostConfig) -> Result<BoostModel> {
    config.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    let f0 = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![f0; n];
    let l0 = half_sse(y, &fitted);
    let total = 2.0 * l0;

    let mut model = BoostModel {
        d: x.cols(),
        f0,
        eta: config.eta,
        learners: Vec::new(),
        stage_retained: Vec::new(),
        gamma_trace: Vec::new(),
        loss_trace: vec![l0],
        config: config.clone(),
    };
    let base_seed = config.tree.split.seed;

    for m in 1..=config.m_stages {
        let residual: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let rr: f64 = residual.iter().map(|r| r * r).sum();
        if rr == 0.0 || rr < 1e-24 * total {
            break;
        }
        let mut tree_cfg = config.tree.clone();
        tree_cfg.split.seed = seed::mix(base_seed, m as u64);
        let learner = tree::build_tree(x, &residual, &tree_cfg)?;
        let t = tree::predict_batch(&learner, x)?;
        let misfit: f64 = residual.iter().zip(&t).map(|(r, v)| (r - v) * (r - v)).sum();
        let gamma = 1.0 - misfit / rr;

        let prev = *model.loss_trace.last().expect("loss trace starts with L0");
        let mut keep = false;
        let mut loss = prev;
        if gamma >= 0.0 {
            let candidate: Vec<f64> = fitted.iter().zip(&t).map(|(f, v)| f + config.eta * v).collect();
            let l = half_sse(y, &candidate);
            // With gamma near zero, rounding can push the loss up by a few ulps.
            if l <= prev {
                keep = true;
                loss = l;
                fitted = candidate;
                model.learners.push(learner);
            }
        }
        model.stage_retained.push(keep);
        if config.record_gamma {
            model.gamma_trace.push(if keep { gamma } else { 0.0 });
        }
        model.loss_trace.push(loss);
    }
    Ok(model)
}

/// `f0 + η·T₁(x) + η·T₂(x) + …`, accumulated in stage order.
pub fn predict_boost(model: &BoostModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.d {
        return Err(Error::DimensionMismatch { expected: model.d, got: x.len() });
    }
    Ok(model.predict(x))
}

pub fn predict_boost_batch(model: &BoostModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.rows() == 0 {
        return Ok(Vec::new());
    }
    if x.cols() != model.d {
        return Err(Error::DimensionMismatch { expected: model.d, got: x.cols() });
    }
    Ok(x.iter_rows().map(|r| model.predict(r)).collect())
}

/// `L(F_m)` for `m = 0..=M`, recomputed from scratch on `data`.
pub fn staged_losses(model: &BoostModel, data: &Dataset) -> Result<Vec<f64>> {
    if data.d() != model.d {
        return Err(Error::DimensionMismatch { expected: model.d, got: data.d() });
    }
    let x = data.x();
    let mut acc = vec![model.f0; data.n()];
    let mut out = vec![half_sse(data.y(), &acc)];
    let mut learners = model.learners.iter();
    for &kept in &model.stage_retained {
        if kept {
            let t = learners.next().expect("retained stage has a learner");
            for (a, r) in acc.iter_mut().zip(x.iter_rows()) {
                *a += model.eta * tree::predict(t, r);
            }
        }
        out.push(half_sse(data.y(), &acc));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub stage: usize,
    pub gamma: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Checks `L(F_m) ≤ (1 − η·γ_m⁺)·L(F_{m−1}) + 1e-9·L(F_0)` at every stage.
/// Returns no rows when γ was not recorded.
pub fn gamma_bound_check(model: &BoostModel) -> Vec<BoundRow> {
    if model.gamma_trace.len() != model.stages() || model.loss_trace.len() != model.stages() + 1 {
        return Vec::new();
    }
    let l0 = model.loss_trace[0];
    model
        .gamma_trace
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let g = g.max(0.0);
            let lhs = model.loss_trace[i + 1];
            let rhs = (1.0 - model.eta * g) * model.loss_trace[i] + 1e-9 * l0;
            BoundRow { stage: i + 1, gamma: g, lhs, rhs, ok: lhs <= rhs }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_synthetic;
    use crate::dataset::SyntheticFunction;
    use crate::hinge::StepRule;
    use crate::linalg::RidgePenalty;

    fn abs_dataset() -> Dataset {
        let xs: Vec<f64> = (0..60).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / 60.0).collect();
        let y = xs.iter().map(|v| v.abs()).collect();
        Dataset::from_parts(Matrix::new(60, 1, xs).unwrap(), y).unwrap()
    }

    #[test]
    fn zero_stages_predict_mean() {
        let ds = abs_dataset();
        let cfg = BoostConfig { m_stages: 0, ..Default::default() };
        let m = fit_boost(&ds, &cfg).unwrap();
        let mean = ds.y().iter().sum::<f64>() / 60.0;
        assert_eq!(m.predict(&[0.7]), mean);
        let expected = 0.5 * ds.y().iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        assert_eq!(m.loss_trace, vec![expected]);
        assert!(gamma_bound_check(&m).is_empty());
        assert_eq!(staged_losses(&m, &ds).unwrap(), m.loss_trace);
    }

    #[test]
    fn single_exact_stage() {
        let ds = abs_dataset();
        let mut cfg = BoostConfig { m_stages: 1, eta: 1.0, ..Default::default() };
        cfg.tree.d_max = 1;
        cfg.tree.split.ridge = RidgePenalty::NONE;
        cfg.tree.split.step = StepRule::fixed(1.0);
        let m = fit_boost(&ds, &cfg).unwrap();
        assert!(m.loss_trace[1] <= 1e-10, "{:?}", m.loss_trace);
        assert!(m.gamma_trace[0] >= 1.0 - 1e-10);
        let rows = gamma_bound_check(&m);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].ok);
    }

    #[test]
    fn constant_target_stops_immediately() {
        let ds = gen_synthetic(SyntheticFunction::Sinc, 50, 0.0, 1).unwrap();
        let flat = Dataset::from_parts(ds.x().clone(), vec![2.5; 50]).unwrap();
        let m = fit_boost(&flat, &BoostConfig::default()).unwrap();
        assert_eq!(m.stages(), 0);
        assert_eq!(staged_losses(&m, &flat).unwrap(), vec![0.0]);
    }

    #[test]
    fn rejects_bad_eta() {
        let ds = abs_dataset();
        for eta in [0.0, 1.5] {
            let cfg = BoostConfig { eta, ..Default::default() };
            assert!(fit_boost(&ds, &cfg).is_err());
        }
    }

    #[test]
    fn dimension_checks() {
        let ds = abs_dataset();
        let m = fit_boost(&ds, &BoostConfig { m_stages: 2, ..Default::default() }).unwrap();
        assert!(predict_boost(&m, &[0.1, 0.2]).is_err());
        assert!(predict_boost_batch(&m, &Matrix::empty(1)).unwrap().is_empty());
    }
}
