//! Hyperparameter resolution: command-line flags override the `--config`
//! file, which overrides the built-in defaults.

use std::path::Path;

use clap::Args;
use serde::Deserialize;

use hrt_core::dataset::TargetColumn;
use hrt_core::{presets, BoostConfig, FlopsMode, RidgePenalty, StepRule, SyntheticFunction, TreeConfig};

use crate::failure::{CliResult, Failure};

/// A step given in a config file, either as a number or as `"auto"`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum StepValue {
    Number(f64),
    Text(String),
}

impl StepValue {
    fn into_text(self) -> String {
        match self {
            StepValue::Number(v) => v.to_string(),
            StepValue::Text(s) => s,
        }
    }
}

/// Contents of a `--config` file. Every key is optional; unknown keys are
/// rejected.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub max_depth: Option<usize>,
    pub n_min: Option<usize>,
    pub ridge: Option<f64>,
    pub step: Option<StepValue>,
    pub tau: Option<f64>,
    pub t_max: Option<usize>,
    pub epsilon: Option<f64>,
    pub min_subset: Option<usize>,
    pub no_fallback: Option<bool>,
    pub stages: Option<usize>,
    pub eta: Option<f64>,
    pub flops_mode: Option<String>,
    pub standardize: Option<bool>,
    pub target: Option<String>,
    pub no_header: Option<bool>,
    pub mu: Option<Vec<StepValue>>,
    pub repeats: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::flag("--config", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::flag("--config", format!("{}: {e}", path.display())))
    }
}

/// Tree and boosting hyperparameters shared by the training commands.
#[derive(Args, Clone, Debug, Default)]
pub struct HyperArgs {
    /// Maximum tree depth (0 gives a single leaf).
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Nodes with fewer samples become leaves.
    #[arg(long)]
    pub n_min: Option<usize>,
    /// Ridge penalty on the feature weights (the bias is not penalized).
    #[arg(long, allow_negative_numbers = true)]
    pub ridge: Option<f64>,
    /// Newton step size in (0, 1], or `auto` for backtracking.
    #[arg(long, allow_negative_numbers = true)]
    pub step: Option<String>,
    /// Stop splitting once a node's training RMSE is at most this.
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Newton iteration budget per node and variant.
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Convergence tolerance on the parameter change.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Smallest side a hinge partition may leave before falling back.
    #[arg(long)]
    pub min_subset: Option<usize>,
    /// Turn stalled nodes into leaves instead of median splits.
    #[arg(long)]
    pub no_fallback: bool,
    /// Boosting stages.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Boosting learning rate in (0, 1].
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
}

/// How a dataset argument is read when it names a CSV file.
#[derive(Args, Clone, Debug, Default)]
pub struct CsvArgs {
    /// Target column, by header name or 0-based index (default: last column).
    #[arg(long)]
    pub target: Option<String>,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
}

/// Inputs to resolution that are common to every command.
pub struct Resolver {
    pub file: FileConfig,
    pub seed_flag: Option<u64>,
    pub flops_flag: Option<String>,
}

fn positive(flag: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::flag(flag, format!("must be a positive number, got {v}")))
    }
}

fn non_negative(flag: &str, v: f64) -> CliResult<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::flag(flag, format!("must be a non-negative number, got {v}")))
    }
}

pub fn parse_step(flag: &str, text: &str) -> CliResult<StepRule> {
    StepRule::parse(text).map_err(|e| Failure::flag(flag, e))
}

impl Resolver {
    pub fn new(config: Option<&Path>, seed_flag: Option<u64>, flops_flag: Option<String>) -> CliResult<Self> {
        let file = match config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Self { file, seed_flag, flops_flag })
    }

    pub fn seed(&self) -> u64 {
        self.seed_flag.or(self.file.seed).unwrap_or(0)
    }

    pub fn seed_was_given(&self) -> bool {
        self.seed_flag.is_some() || self.file.seed.is_some()
    }

    pub fn flops_mode(&self) -> CliResult<FlopsMode> {
        match self.flops_flag.clone().or_else(|| self.file.flops_mode.clone()) {
            Some(s) => s.parse().map_err(|e| Failure::flag("--flops-mode", e)),
            None => Ok(FlopsMode::Two),
        }
    }

    pub fn standardize(&self, flag: bool) -> bool {
        flag || self.file.standardize.unwrap_or(false)
    }

    pub fn target(&self, csv: &CsvArgs) -> TargetColumn {
        match csv.target.clone().or_else(|| self.file.target.clone()) {
            Some(s) => s.parse().unwrap_or(TargetColumn::Last),
            None => TargetColumn::Last,
        }
    }

    /// Like [`Resolver::target`], but `None` if no target was named anywhere.
    pub fn explicit_target(&self, csv: &CsvArgs) -> Option<TargetColumn> {
        csv.target.clone().or_else(|| self.file.target.clone()).map(|s| s.parse().unwrap_or(TargetColumn::Last))
    }

    pub fn header(&self, csv: &CsvArgs) -> bool {
        !(csv.no_header || self.file.no_header.unwrap_or(false))
    }

    /// Starting tree configuration: the function's preset for synthetic
    /// data, the general defaults otherwise.
    pub fn base_tree(function: Option<SyntheticFunction>) -> TreeConfig {
        function.map(presets::for_function).unwrap_or_else(presets::tree_defaults)
    }

    /// Applies flag and file overrides to `cfg` and sets the seed.
    pub fn tree(&self, mut cfg: TreeConfig, h: &HyperArgs) -> CliResult<TreeConfig> {
        let f = &self.file;
        if let Some(v) = h.max_depth.or(f.max_depth) {
            cfg.d_max = v;
        }
        if let Some(v) = h.n_min.or(f.n_min) {
            cfg.n_min = v;
        }
        if let Some(v) = h.ridge.or(f.ridge) {
            cfg.split.ridge = RidgePenalty::new(non_negative("--ridge", v)?).map_err(|e| Failure::flag("--ridge", e))?;
        }
        if let Some(s) = h.step.clone().or_else(|| f.step.clone().map(StepValue::into_text)) {
            cfg.split.step = parse_step("--step", &s)?;
        }
        if let Some(v) = h.tau.or(f.tau) {
            cfg.tau_rmse = non_negative("--tau", v)?;
        }
        if let Some(v) = h.t_max.or(f.t_max) {
            if v == 0 {
                return Err(Failure::flag("--t-max", "must be at least 1"));
            }
            cfg.split.t_max = v;
        }
        if let Some(v) = h.epsilon.or(f.epsilon) {
            cfg.split.epsilon = positive("--epsilon", v)?;
        }
        if let Some(v) = h.min_subset.or(f.min_subset) {
            if v == 0 {
                return Err(Failure::flag("--min-subset", "must be at least 1"));
            }
            cfg.split.min_subset = v;
        }
        if h.no_fallback || f.no_fallback.unwrap_or(false) {
            cfg.fallback_on_nonconvergence = false;
        }
        cfg.split.seed = self.seed();
        cfg.validate().map_err(|e| Failure::config(format!("hyperparameters: {e}")))?;
        Ok(cfg)
    }

    pub fn boost(&self, h: &HyperArgs) -> CliResult<BoostConfig> {
        let mut cfg = presets::boost_defaults();
        cfg.tree = self.tree(cfg.tree, h)?;
        if let Some(v) = h.stages.or(self.file.stages) {
            cfg.m_stages = v;
        }
        if let Some(v) = h.eta.or(self.file.eta) {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Failure::flag("--eta", format!("must lie in (0, 1], got {v}")));
            }
            cfg.eta = v;
        }
        cfg.validate().map_err(|e| Failure::config(format!("hyperparameters: {e}")))?;
        Ok(cfg)
    }

    /// The ablation step list; a flag list replaces the file list entirely.
    pub fn mu_list(&self, flag: &[String]) -> CliResult<Vec<StepRule>> {
        let texts: Vec<String> = if !flag.is_empty() {
            flag.to_vec()
        } else if let Some(list) = &self.file.mu {
            list.iter().cloned().map(StepValue::into_text).collect()
        } else {
            ["0.01", "0.05", "0.1", "0.5", "1", "auto"].iter().map(|s| s.to_string()).collect()
        };
        if texts.is_empty() {
            return Err(Failure::flag("--mu", "the step list is empty"));
        }
        texts.iter().map(|t| parse_step("--mu", t.trim())).collect()
    }

    pub fn repeats(&self, flag: Option<usize>) -> CliResult<usize> {
        let r = flag.or(self.file.repeats).unwrap_or(10);
        if r == 0 {
            return Err(Failure::flag("--repeats", "must be at least 1"));
        }
        Ok(r)
    }
}
