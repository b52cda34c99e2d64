//! Oblique node splits learned as a hinge of two affine models.
//!
//! A node minimizes `V(θ) = ½ Σ (y_j − h(x_j, θ))²` with
//! `h = max(x̃ᵀθ₁, x̃ᵀθ₂)` or `min(x̃ᵀθ₁, x̃ᵀθ₂)`. For a fixed partition the
//! objective is two independent least-squares problems, so the Newton
//! direction is `p = θ_OLS − θ` and a damped step is `θ + μp`.
//!
//! Sample `j` belongs to `S₁` when `x̃ᵀθ₁ ≥ x̃ᵀθ₂` (max) or `x̃ᵀθ₁ ≤ x̃ᵀθ₂`
//! (min); ties always go to `S₁`. On `S₁` the hinge equals `ℓ₁`, on `S₂` it
//! equals `ℓ₂`.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::linalg::{LinearModel, NormalEquations, RidgePenalty};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HingeKind {
    Max,
    Min,
}

impl HingeKind {
    /// Whether a sample with branch values `(a, b)` routes to `S₁`.
    #[inline]
    pub fn routes_first(self, a: f64, b: f64) -> bool {
        match self {
            HingeKind::Max => a >= b,
            HingeKind::Min => a <= b,
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        if self.routes_first(a, b) {
            a
        } else {
            b
        }
    }
}

/// Borrowed view of some rows of a feature matrix with their targets.
#[derive(Clone, Copy, Debug)]
pub struct Subset<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    rows: &'a [usize],
}

impl<'a> Subset<'a> {
    /// `y` is indexed like the rows of `x`; `rows` selects the members.
    pub fn new(x: &'a Matrix, y: &'a [f64], rows: &'a [usize]) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(Error::InvalidConfig(format!("row index {bad} out of range")));
        }
        Ok(Self { x, y, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn rows(&self) -> &'a [usize] {
        self.rows
    }

    pub fn with_rows<'b>(&self, rows: &'b [usize]) -> Subset<'b>
    where
        'a: 'b,
    {
        Subset { x: self.x, y: self.y, rows }
    }

    /// `(row id, features, target)` for every member.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &'a [f64], f64)> + '_ {
        let (x, y) = (self.x, self.y);
        self.rows.iter().map(move |&r| (r, x.row(r), y[r]))
    }

    pub fn mean_target(&self) -> f64 {
        self.iter().map(|(_, _, y)| y).sum::<f64>() / self.len() as f64
    }
}

/// Ridge fit on the subset, or the constant mean model if the system is
/// degenerate.
pub fn fit_or_constant(data: &Subset<'_>, ridge: RidgePenalty) -> LinearModel {
    let mut ne = NormalEquations::new(data.dim());
    for (_, x, y) in data.iter() {
        ne.push(x, y);
    }
    ne.solve(ridge)
        .unwrap_or_else(|_| LinearModel::constant(data.dim(), data.mean_target()))
}

/// Step-size rule for the damped Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum StepRule {
    Fixed { mu: f64 },
    /// Backtracking over `μ₀, μ₀β, μ₀β², …` until `V` strictly decreases.
    Auto { mu0: f64, beta: f64, max_backtracks: usize },
}

impl StepRule {
    pub fn fixed(mu: f64) -> Self {
        StepRule::Fixed { mu }
    }

    pub fn auto() -> Self {
        StepRule::Auto { mu0: 1.0, beta: 0.5, max_backtracks: 30 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Fixed { mu } if !(mu > 0.0 && mu <= 1.0) => {
                Err(Error::InvalidConfig(format!("step size must lie in (0, 1], got {mu}")))
            }
            StepRule::Auto { mu0, beta, max_backtracks } => {
                if !(mu0 > 0.0 && mu0 <= 1.0) {
                    return Err(Error::InvalidConfig(format!("initial step must lie in (0, 1], got {mu0}")));
                }
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::InvalidConfig(format!("backtracking factor must lie in (0, 1), got {beta}")));
                }
                if max_backtracks == 0 {
                    return Err(Error::InvalidConfig("max_backtracks must be positive".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `"auto"` or a number in `(0, 1]`.
    pub fn parse(s: &str) -> Result<Self> {
        let rule = if s.eq_ignore_ascii_case("auto") {
            StepRule::auto()
        } else {
            let mu = s
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("step must be `auto` or a number, got `{s}`")))?;
            StepRule::fixed(mu)
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn label(&self) -> String {
        match self {
            StepRule::Fixed { mu } => format!("{mu}"),
            StepRule::Auto { .. } => "auto".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub t_max: usize,
    pub step: StepRule,
    /// Stop when `‖Δθ₁‖₂ + ‖Δθ₂‖₂ < epsilon`.
    pub epsilon: f64,
    pub ridge: RidgePenalty,
    pub min_subset: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            t_max: 100,
            step: StepRule::fixed(0.01),
            epsilon: 1e-3,
            ridge: RidgePenalty::NONE,
            min_subset: 2,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.min_subset == 0 {
            return Err(Error::InvalidConfig("min_subset must be positive".into()));
        }
        Ok(())
    }
}

/// Result of optimizing (or falling back at) one node.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitOutcome {
    pub theta1: LinearModel,
    pub theta2: LinearModel,
    pub kind: HingeKind,
    pub converged: bool,
    pub iterations: usize,
    /// `V` at initialization and after every applied update.
    pub objective_trace: Vec<f64>,
    /// Step size applied at each update.
    pub step_sizes: Vec<f64>,
    /// `(|S₁|, |S₂|)` of the partition each update was computed on.
    pub partition_sizes: Vec<(usize, usize)>,
    pub used_fallback: bool,
    pub fallback_feature: Option<usize>,
    pub fallback_threshold: Option<f64>,
}

impl SplitOutcome {
    pub fn routes_first(&self, x: &[f64]) -> bool {
        self.kind.routes_first(self.theta1.eval(x), self.theta2.eval(x))
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        hinge_value(self.kind, &self.theta1, &self.theta2, x)
    }

    /// Training RMSE of the hinge itself.
    pub fn rmse(&self, data: &Subset<'_>) -> f64 {
        (2.0 * objective(data, &self.theta1, &self.theta2, self.kind) / data.len() as f64).sqrt()
    }
}

#[inline]
pub fn hinge_value(kind: HingeKind, theta1: &LinearModel, theta2: &LinearModel, x: &[f64]) -> f64 {
    kind.apply(theta1.eval(x), theta2.eval(x))
}

/// `V(θ) = ½ Σ (y_j − h(x_j, θ))²`.
pub fn objective(data: &Subset<'_>, theta1: &LinearModel, theta2: &LinearModel, kind: HingeKind) -> f64 {
    0.5 * data
        .iter()
        .map(|(_, x, y)| {
            let r = y - hinge_value(kind, theta1, theta2, x);
            r * r
        })
        .sum::<f64>()
}

/// Row ids of `S₁` and `S₂`.
pub fn partition(
    data: &Subset<'_>,
    theta1: &LinearModel,
    theta2: &LinearModel,
    kind: HingeKind,
) -> (Vec<usize>, Vec<usize>) {
    let mut s1 = Vec::with_capacity(data.len());
    let mut s2 = Vec::new();
    for (r, x, _) in data.iter() {
        if kind.routes_first(theta1.eval(x), theta2.eval(x)) {
            s1.push(r);
        } else {
            s2.push(r);
        }
    }
    (s1, s2)
}

/// Current parameters of a node.
#[derive(Clone, Debug, PartialEq)]
pub struct HingeState {
    pub theta1: LinearModel,
    pub theta2: LinearModel,
    pub kind: HingeKind,
}

/// Per-side least-squares targets under the partition induced by a state.
/// A side with fewer than `min_subset` samples (or a degenerate system)
/// keeps its current parameters, so its direction is zero.
#[derive(Clone, Debug)]
pub struct NewtonTargets {
    pub target1: LinearModel,
    pub target2: LinearModel,
    pub n1: usize,
    pub n2: usize,
}

pub fn newton_targets(
    data: &Subset<'_>,
    state: &HingeState,
    ridge: RidgePenalty,
    min_subset: usize,
) -> NewtonTargets {
    let d = data.dim();
    let mut ne1 = NormalEquations::new(d);
    let mut ne2 = NormalEquations::new(d);
    for (_, x, y) in data.iter() {
        if state.kind.routes_first(state.theta1.eval(x), state.theta2.eval(x)) {
            ne1.push(x, y);
        } else {
            ne2.push(x, y);
        }
    }
    let solve = |ne: &NormalEquations, current: &LinearModel| {
        if ne.len() < min_subset {
            return current.clone();
        }
        ne.solve(ridge).unwrap_or_else(|_| current.clone())
    };
    NewtonTargets {
        target1: solve(&ne1, &state.theta1),
        target2: solve(&ne2, &state.theta2),
        n1: ne1.len(),
        n2: ne2.len(),
    }
}

/// One damped Newton update `θᵢ + μ(θ_OLS,ᵢ − θᵢ)` on the current partition.
pub fn newton_step(
    data: &Subset<'_>,
    state: &HingeState,
    mu: f64,
    ridge: RidgePenalty,
    min_subset: usize,
) -> Result<(LinearModel, LinearModel)> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidConfig(format!("step size must lie in (0, 1], got {mu}")));
    }
    let t = newton_targets(data, state, ridge, min_subset);
    Ok((state.theta1.step_toward(&t.target1, mu), state.theta2.step_toward(&t.target2, mu)))
}

/// Outcome of a backtracking search. `mu == 0` means no candidate strictly
/// decreased `V`; the parameters are then unchanged.
#[derive(Clone, Debug)]
pub struct LineSearch {
    pub mu: f64,
    pub theta1: LinearModel,
    pub theta2: LinearModel,
    pub objective: f64,
}

pub fn backtracking_step(data: &Subset<'_>, state: &HingeState, config: &SplitConfig) -> Result<LineSearch> {
    let t = newton_targets(data, state, config.ridge, config.min_subset);
    let v0 = objective(data, &state.theta1, &state.theta2, state.kind);
    search_along(data, state, &t, v0, config.step)
}

fn search_along(
    data: &Subset<'_>,
    state: &HingeState,
    t: &NewtonTargets,
    v0: f64,
    step: StepRule,
) -> Result<LineSearch> {
    let StepRule::Auto { mu0, beta, max_backtracks } = step else {
        return Err(Error::InvalidConfig("backtracking requires the auto step rule".into()));
    };
    let mut mu = mu0;
    for _ in 0..max_backtracks {
        let th1 = state.theta1.step_toward(&t.target1, mu);
        let th2 = state.theta2.step_toward(&t.target2, mu);
        let v = objective(data, &th1, &th2, state.kind);
        if v < v0 {
            return Ok(LineSearch { mu, theta1: th1, theta2: th2, objective: v });
        }
        mu *= beta;
    }
    Ok(LineSearch { mu: 0.0, theta1: state.theta1.clone(), theta2: state.theta2.clone(), objective: v0 })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn column(data: &Subset<'_>, k: usize) -> Vec<f64> {
    data.iter().map(|(_, x, _)| x[k]).collect()
}

fn column_range(data: &Subset<'_>, k: usize) -> f64 {
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, x, _)| (lo.min(x[k]), hi.max(x[k])));
    hi - lo
}

fn perturb(model: &LinearModel, scale: f64, rng: &mut impl Rng) -> LinearModel {
    let theta = model
        .theta()
        .iter()
        .map(|v| v + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    LinearModel::from_raw(theta)
}

/// Starting parameters for a node.
///
/// Splits at the median of the widest feature and fits each half; if a half
/// has fewer than two samples (or its fit is degenerate) both models start
/// from the global fit plus independent noise of scale
/// `1e-3·(1 + ‖θ_global‖∞)`. Nearly identical pairs are nudged apart.
/// `θ₁` comes from the upper half (`x_k ≥ median`).
pub fn initialize_params(data: &Subset<'_>, ridge: RidgePenalty, seed: u64) -> Result<(LinearModel, LinearModel)> {
    if data.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: data.len() });
    }
    let d = data.dim();
    let mut rng = seed::rng(seed);

    let mut widest = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..d {
        let r = column_range(data, k);
        if r > best {
            best = r;
            widest = k;
        }
    }
    let pivot = median(&mut column(data, widest));
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (r, x, _) in data.iter() {
        if x[widest] >= pivot {
            upper.push(r);
        } else {
            lower.push(r);
        }
    }

    let split_fit = |rows: &[usize]| {
        let sub = data.with_rows(rows);
        let mut ne = NormalEquations::new(d);
        for (_, x, y) in sub.iter() {
            ne.push(x, y);
        }
        ne.solve(ridge).ok()
    };

    let fitted = if upper.len() >= 2 && lower.len() >= 2 {
        match (split_fit(&upper), split_fit(&lower)) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    } else {
        None
    };

    let (theta1, mut theta2) = match fitted {
        Some(pair) => pair,
        None => {
            let global = fit_or_constant(data, ridge);
            let scale = 1e-3 * (1.0 + inf_norm(&global));
            (perturb(&global, scale, &mut rng), perturb(&global, scale, &mut rng))
        }
    };

    if theta1.max_abs_diff(&theta2) < 1e-9 {
        let scale = 1e-3 * (1.0 + inf_norm(&theta2));
        theta2 = perturb(&theta2, scale, &mut rng);
        if theta1.max_abs_diff(&theta2) < 1e-9 {
            theta2.theta_mut()[0] += 1e-6;
        }
    }
    Ok((theta1, theta2))
}

/// How many past states are kept when looking for an exact cycle.
const CYCLE_WINDOW: usize = 8;

fn inf_norm(m: &LinearModel) -> f64 {
    m.theta().iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Alternates partitioning and damped Newton updates for at most `t_max`
/// iterations.
///
/// `converged` is set when the summed parameter change drops below
/// `epsilon`, or, under the auto rule, when no step size decreases `V`.
/// The tree decides what to do with a non-converged outcome.
pub fn find_optimal_split(data: &Subset<'_>, kind: HingeKind, config: &SplitConfig) -> Result<SplitOutcome> {
    config.validate()?;
    let needed = 2 * config.min_subset;
    if data.len() < needed {
        return Err(Error::TooFewSamples { needed, got: data.len() });
    }
    let (theta1, theta2) = initialize_params(data, config.ridge, config.seed)?;
    let mut state = HingeState { theta1, theta2, kind };
    let mut v = objective(data, &state.theta1, &state.theta2, kind);

    let mut trace = vec![v];
    let mut step_sizes = Vec::new();
    let mut partition_sizes = Vec::new();
    let mut converged = false;
    let mut recent: VecDeque<(LinearModel, LinearModel)> = VecDeque::with_capacity(CYCLE_WINDOW);
    recent.push_back((state.theta1.clone(), state.theta2.clone()));

    for _ in 0..config.t_max {
        let t = newton_targets(data, &state, config.ridge, config.min_subset);
        let (th1, th2, v_new, mu) = match config.step {
            StepRule::Fixed { mu } => {
                let th1 = state.theta1.step_toward(&t.target1, mu);
                let th2 = state.theta2.step_toward(&t.target2, mu);
                let v_new = objective(data, &th1, &th2, kind);
                (th1, th2, v_new, mu)
            }
            StepRule::Auto { .. } => {
                let ls = search_along(data, &state, &t, v, config.step)?;
                if ls.mu == 0.0 {
                    converged = true;
                    break;
                }
                (ls.theta1, ls.theta2, ls.objective, ls.mu)
            }
        };
        let change = th1.distance(&state.theta1) + th2.distance(&state.theta2);
        state.theta1 = th1;
        state.theta2 = th2;
        v = v_new;
        trace.push(v);
        step_sizes.push(mu);
        partition_sizes.push((t.n1, t.n2));
        if change < config.epsilon {
            converged = true;
            break;
        }
        if let StepRule::Fixed { mu } = config.step {
            // A fixed step is a deterministic map of (θ₁, θ₂). Once a state
            // repeats exactly, the rest of the budget replays the same cycle,
            // so the remaining iterations are filled in without recomputing.
            if let Some(pos) = recent.iter().position(|(a, b)| *a == state.theta1 && *b == state.theta2) {
                let period = recent.len() - pos;
                let done = step_sizes.len();
                for t in done + 1..=config.t_max {
                    trace.push(trace[t - period]);
                    partition_sizes.push(partition_sizes[t - 1 - period]);
                    step_sizes.push(mu);
                }
                let (a, b) = recent[pos + (config.t_max - done) % period].clone();
                state.theta1 = a;
                state.theta2 = b;
                break;
            }
            if recent.len() == CYCLE_WINDOW {
                recent.pop_front();
            }
            recent.push_back((state.theta1.clone(), state.theta2.clone()));
        }
    }

    Ok(SplitOutcome {
        theta1: state.theta1,
        theta2: state.theta2,
        kind,
        converged,
        iterations: step_sizes.len(),
        objective_trace: trace,
        step_sizes,
        partition_sizes,
        used_fallback: false,
        fallback_feature: None,
        fallback_threshold: None,
    })
}

/// Both variant runs from [`select_split_with_runs`].
#[derive(Clone, Debug)]
pub struct SplitSelection {
    pub chosen: SplitOutcome,
    pub rmse_max: f64,
    pub rmse_min: f64,
    pub iterations_max: usize,
    pub iterations_min: usize,
}

/// Runs the max and min variants and keeps the one with lower training
/// RMSE; ties go to max.
pub fn select_split(data: &Subset<'_>, config: &SplitConfig) -> Result<SplitOutcome> {
    select_split_with_runs(data, config).map(|s| s.chosen)
}

pub fn select_split_with_runs(data: &Subset<'_>, config: &SplitConfig) -> Result<SplitSelection> {
    let max_cfg = SplitConfig { seed: seed::mix(config.seed, seed::TAG_MAX_VARIANT), ..config.clone() };
    let min_cfg = SplitConfig { seed: seed::mix(config.seed, seed::TAG_MIN_VARIANT), ..config.clone() };
    let (max_run, min_run) = rayon::join(
        || find_optimal_split(data, HingeKind::Max, &max_cfg),
        || find_optimal_split(data, HingeKind::Min, &min_cfg),
    );
    let (max_run, min_run) = (max_run?, min_run?);
    let rmse_max = max_run.rmse(data);
    let rmse_min = min_run.rmse(data);
    let (iterations_max, iterations_min) = (max_run.iterations, min_run.iterations);
    let chosen = if rmse_min < rmse_max { min_run } else { max_run };
    Ok(SplitSelection { chosen, rmse_max, rmse_min, iterations_max, iterations_min })
}

/// Axis-aligned split at the median of a uniformly chosen non-constant
/// feature, encoded as a max hinge with `θ₁ = (e_k, −m)` and
/// `θ₂ = (−e_k, m)` so that `S₁ = {x_k ≥ m}`.
pub fn median_fallback(data: &Subset<'_>, seed: u64) -> Result<SplitOutcome> {
    if data.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: data.len() });
    }
    let d = data.dim();
    let candidates: Vec<usize> = (0..d).filter(|&k| column_range(data, k) > 0.0).collect();
    if candidates.is_empty() {
        return Err(Error::AllFeaturesConstant);
    }
    let k = candidates[seed::rng(seed).random_range(0..candidates.len())];
    let m = median(&mut column(data, k));

    let mut t1 = vec![0.0; d + 1];
    let mut t2 = vec![0.0; d + 1];
    t1[k] = 1.0;
    t1[d] = -m;
    t2[k] = -1.0;
    t2[d] = m;
    Ok(SplitOutcome {
        theta1: LinearModel::from_raw(t1),
        theta2: LinearModel::from_raw(t2),
        kind: HingeKind::Max,
        converged: true,
        iterations: 0,
        objective_trace: Vec::new(),
        step_sizes: Vec::new(),
        partition_sizes: Vec::new(),
        used_fallback: true,
        fallback_feature: Some(k),
        fallback_threshold: Some(m),
    })
}
