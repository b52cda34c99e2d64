//! Ridge least squares on augmented designs.
//!
//! Every fit in the crate funnels through [`NormalEquations::solve`]:
//! `θ = (XᵀX + αI₀)⁻¹ Xᵀy`, where `I₀` is the identity with the bias entry
//! zeroed so the intercept is never shrunk.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine predictor `x ↦ wᵀx + b`, stored as `[w₀, …, w_{d-1}, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearModel {
    theta: Vec<f64>,
}

impl LinearModel {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "linear model needs at least 2 coefficients, got {}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite coefficient".into()));
        }
        Ok(Self { theta })
    }

    /// `θ = (0, …, 0, c)`.
    pub fn constant(d: usize, c: f64) -> Self {
        let mut theta = vec![0.0; d + 1];
        theta[d] = c;
        Self { theta }
    }

    pub(crate) fn from_raw(theta: Vec<f64>) -> Self {
        debug_assert!(theta.len() >= 2);
        Self { theta }
    }

    /// Number of features `d` (one less than the coefficient count).
    pub fn dim(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn weights(&self) -> &[f64] {
        &self.theta[..self.dim()]
    }

    pub fn bias(&self) -> f64 {
        self.theta[self.dim()]
    }

    /// `x̃ᵀθ`. `x` holds the `d` raw features.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut acc = 0.0;
        for (w, v) in self.theta.iter().zip(x) {
            acc += w * v;
        }
        acc + self.theta[self.dim()]
    }

    /// `θ + μ(target − θ)`, evaluated as `(1 − μ)θ + μ·target` so that
    /// `μ = 1` lands exactly on the target.
    pub fn step_toward(&self, target: &LinearModel, mu: f64) -> LinearModel {
        let keep = 1.0 - mu;
        let theta = self
            .theta
            .iter()
            .zip(&target.theta)
            .map(|(a, b)| keep * a + mu * b)
            .collect();
        LinearModel { theta }
    }

    pub fn distance(&self, other: &LinearModel) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &LinearModel) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Returns `dot(x, weights) + bias`.
pub fn predict_linear(model: &LinearModel, x: &[f64]) -> f64 {
    model.eval(x)
}

/// L2 strength `α ≥ 0` applied to the weights only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RidgePenalty(f64);

impl RidgePenalty {
    pub const NONE: RidgePenalty = RidgePenalty(0.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ridge alpha must be a finite non-negative number, got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

/// Dense `N × (d+1)` design whose last column is identically 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedDesign {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AugmentedDesign {
    /// Builds the design from raw feature rows, appending the constant column.
    pub fn from_feature_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let d = rows[0].as_ref().len();
        if d == 0 {
            return Err(Error::InvalidConfig("design needs at least one feature".into()));
        }
        let mut data = Vec::with_capacity(n * (d + 1));
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
            data.extend_from_slice(r);
            data.push(1.0);
        }
        Ok(Self { rows: n, cols: d + 1, data })
    }

    pub fn from_matrix(x: &crate::dataset::Matrix) -> Result<Self> {
        let rows: Vec<&[f64]> = x.iter_rows().collect();
        Self::from_feature_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Full augmented row, including the trailing 1.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn features(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.cols - 1]
    }
}

/// Accumulates `XᵀX` and `Xᵀy` one sample at a time without materializing `X`.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    p: usize,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    n: usize,
}

impl NormalEquations {
    /// Empty system for `d` features.
    pub fn new(d: usize) -> Self {
        let p = d + 1;
        Self { p, gram: vec![0.0; p * p], rhs: vec![0.0; p], n: 0 }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Adds one sample given its raw features.
    #[inline]
    pub fn push(&mut self, x: &[f64], y: f64) {
        let p = self.p;
        let d = p - 1;
        debug_assert_eq!(x.len(), d);
        // upper triangle only; mirrored in `solve`
        for i in 0..d {
            let xi = x[i];
            let row = &mut self.gram[i * p..(i + 1) * p];
            for j in i..d {
                row[j] += xi * x[j];
            }
            row[d] += xi;
            self.rhs[i] += xi * y;
        }
        self.gram[d * p + d] += 1.0;
        self.rhs[d] += y;
        self.n += 1;
    }

    /// Solves the ridge system by Cholesky, retrying once with a small
    /// diagonal jitter `1e-10·tr(XᵀX)/(d+1)` before giving up.
    pub fn solve(&self, penalty: RidgePenalty) -> Result<LinearModel> {
        if self.n == 0 {
            return Err(Error::DegenerateSystem);
        }
        let p = self.p;
        let mut a = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = self.gram[i * p + j];
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        for i in 0..p - 1 {
            a[(i, i)] += penalty.alpha();
        }
        let b = DVector::from_column_slice(&self.rhs);

        if let Some(theta) = cholesky_solve(a.clone(), &b) {
            return Ok(LinearModel::from_raw(theta));
        }
        let trace: f64 = (0..p).map(|i| self.gram[i * p + i]).sum();
        let jitter = 1e-10 * trace / p as f64;
        if jitter > 0.0 && jitter.is_finite() {
            let mut a = a;
            for i in 0..p {
                a[(i, i)] += jitter;
            }
            if let Some(theta) = cholesky_solve(a, &b) {
                return Ok(LinearModel::from_raw(theta));
            }
        }
        Err(Error::DegenerateSystem)
    }
}

fn cholesky_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<Vec<f64>> {
    let chol = a.cholesky()?;
    let x = chol.solve(b);
    if x.iter().all(|v| v.is_finite()) {
        Some(x.as_slice().to_vec())
    } else {
        None
    }
}

/// Ridge fit of `y` on the augmented design `x`.
///
/// Minimizes `½‖y − Xθ‖² + (α/2)‖w‖²`; the bias is unpenalized.
pub fn ridge_solve(x: &AugmentedDesign, y: &[f64], penalty: RidgePenalty) -> Result<LinearModel> {
    if y.len() != x.rows() {
        return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite target".into()));
    }
    let mut ne = NormalEquations::new(x.cols() - 1);
    for (i, &yi) in y.iter().enumerate() {
        ne.push(x.features(i), yi);
    }
    ne.solve(penalty)
}
