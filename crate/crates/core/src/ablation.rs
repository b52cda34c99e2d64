//! Step-size ablation: repeat train/test runs for each candidate step rule.
//!
//! Repeat `r` of every step rule sees the same data (same seed), so rows are
//! paired comparisons. Fit time covers tree construction only.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_train_test, Dataset, SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::hinge::StepRule;
use crate::metrics::evaluate;
use crate::seed;
use crate::tree::{build_tree, TreeConfig};

pub const TRAIN_FRACTION: f64 = 0.7;

#[derive(Clone, Debug)]
pub enum DatasetSource {
    /// Regenerated with a fresh seed on every repeat.
    Synthetic(SyntheticSpec),
    /// Re-split with a fresh seed on every repeat.
    Fixed(Dataset),
}

/// Seed used by repeat `r`; repeat 0 uses the base seed unchanged.
pub fn repeat_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

/// Train/test data for one repeat.
pub fn prepare_repeat(source: &DatasetSource, run_seed: u64) -> Result<(Dataset, Dataset)> {
    let split = SplitSpec::new(TRAIN_FRACTION, seed::mix(run_seed, 3))?;
    match source {
        DatasetSource::Synthetic(spec) => split_train_test(&spec.with_seed(run_seed).generate()?, split),
        DatasetSource::Fixed(data) => split_train_test(data, split),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub rmse: f64,
    pub leaves: usize,
    pub avg_iters: f64,
    pub fit_time_s: f64,
    pub fallbacks: usize,
    pub splits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mu: String,
    pub rmse: f64,
    pub leaves: f64,
    pub avg_iters: f64,
    pub fit_time_s: f64,
    pub fallbacks: f64,
    pub splits: f64,
    /// Mean fallbacks over mean splits, as a fraction.
    pub fallback_rate: f64,
    pub runs: Vec<RunRecord>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

impl AblationRow {
    fn from_runs(mu: String, runs: Vec<RunRecord>) -> Self {
        let fallbacks = mean(runs.iter().map(|r| r.fallbacks as f64));
        let splits = mean(runs.iter().map(|r| r.splits as f64));
        AblationRow {
            mu,
            rmse: mean(runs.iter().map(|r| r.rmse)),
            leaves: mean(runs.iter().map(|r| r.leaves as f64)),
            avg_iters: mean(runs.iter().map(|r| r.avg_iters)),
            fit_time_s: mean(runs.iter().map(|r| r.fit_time_s)),
            fallbacks,
            splits,
            fallback_rate: if splits > 0.0 { fallbacks / splits } else { 0.0 },
            runs,
        }
    }
}

pub fn run_once(source: &DatasetSource, base: &TreeConfig, step: StepRule, run_seed: u64) -> Result<RunRecord> {
    let (train, test) = prepare_repeat(source, run_seed)?;
    let mut cfg = base.clone();
    cfg.split.step = step;
    cfg.split.seed = run_seed;
    let start = Instant::now();
    let model = build_tree(train.x(), train.y(), &cfg)?;
    let fit_time_s = start.elapsed().as_secs_f64();
    let pred: Vec<f64> = test.x().iter_rows().map(|x| model.predict(x)).collect();
    let report = evaluate(&pred, test.y())?;
    Ok(RunRecord {
        seed: run_seed,
        rmse: report.rmse,
        leaves: model.stats.n_leaves,
        avg_iters: model.stats.avg_iterations(),
        fit_time_s,
        fallbacks: model.stats.n_fallbacks,
        splits: model.stats.n_splits,
    })
}

/// One row per step rule, in the given order.
pub fn ablate_step(
    source: &DatasetSource,
    base: &TreeConfig,
    steps: &[StepRule],
    repeats: usize,
    base_seed: u64,
) -> Result<Vec<AblationRow>> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    for s in steps {
        s.validate()?;
    }
    steps
        .iter()
        .map(|&step| {
            let runs = (0..repeats)
                .into_par_iter()
                .map(|r| run_once(source, base, step, repeat_seed(base_seed, r)))
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow::from_runs(step.label(), runs))
        })
        .collect()
}
