//! Datasets: dense matrices, synthetic benchmark functions, CSV I/O,
//! train/test splitting and optional standardization.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Dense row-major matrix. Zero rows are allowed; zero columns only when
/// there are also zero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { left: rows * cols, right: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn empty(cols: usize) -> Self {
        Self { rows: 0, cols, data: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }
}

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic { name: SyntheticFunction, noise_sigma: f64, seed: u64 },
    File { path: PathBuf, target_column: String },
    Derived,
}

/// Samples `x` (N × d) with targets `y`.
#[derive(Clone, Debug)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    feature_names: Vec<String>,
    target_name: String,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, feature_names: Vec<String>, provenance: Provenance) -> Result<Self> {
        Self::with_target_name(x, y, feature_names, "y".to_string(), provenance)
    }

    pub fn with_target_name(
        x: Matrix,
        y: Vec<f64>,
        feature_names: Vec<String>,
        target_name: String,
        provenance: Provenance,
    ) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.cols() == 0 {
            return Err(Error::InvalidConfig("dataset needs at least one feature".into()));
        }
        if y.len() != x.rows() {
            return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
        }
        if feature_names.len() != x.cols() {
            return Err(Error::LengthMismatch { left: x.cols(), right: feature_names.len() });
        }
        if x.as_slice().iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y, feature_names, target_name, provenance })
    }

    /// Dataset with default names `x0, x1, …`.
    pub fn from_parts(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let names = default_names(x.cols());
        Self::new(x, y, names, Provenance::Derived)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Same matrix, targets and names; provenance is ignored.
    pub fn same_contents(&self, other: &Dataset) -> bool {
        self.x == other.x
            && self.y.iter().map(|v| v.to_bits()).eq(other.y.iter().map(|v| v.to_bits()))
            && self.feature_names == other.feature_names
            && self.target_name == other.target_name
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

// ---------------------------------------------------------------------------
// Synthetic benchmarks
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticFunction {
    Sinc,
    TwistedSigmoid,
    F1,
    F2,
    F3,
    F4,
}

impl SyntheticFunction {
    pub const ALL: [SyntheticFunction; 6] = [
        SyntheticFunction::Sinc,
        SyntheticFunction::TwistedSigmoid,
        SyntheticFunction::F1,
        SyntheticFunction::F2,
        SyntheticFunction::F3,
        SyntheticFunction::F4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticFunction::Sinc => "sinc",
            SyntheticFunction::TwistedSigmoid => "twisted_sigmoid",
            SyntheticFunction::F1 => "f1",
            SyntheticFunction::F2 => "f2",
            SyntheticFunction::F3 => "f3",
            SyntheticFunction::F4 => "f4",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            SyntheticFunction::Sinc | SyntheticFunction::TwistedSigmoid => 1,
            _ => 2,
        }
    }

    /// Sampling box, identical for every input coordinate.
    pub fn domain(self) -> (f64, f64) {
        match self {
            SyntheticFunction::Sinc => (-1.5, 1.5),
            _ => (-3.0, 3.0),
        }
    }

    /// Conventional noise level: 0.025 for curves, 0.05 for surfaces.
    pub fn default_sigma(self) -> f64 {
        if self.dim() == 1 {
            0.025
        } else {
            0.05
        }
    }

    /// Noiseless target at `x` (length [`dim`](Self::dim)).
    pub fn eval(self, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            SyntheticFunction::Sinc => {
                let u = 5.0 * PI * x[0];
                if u == 0.0 {
                    -1.0
                } else {
                    -u.sin() / u
                }
            }
            SyntheticFunction::TwistedSigmoid => 2.0 / (1.0 + (-3.0 * x[0]).exp()) - 0.8 * x[0],
            SyntheticFunction::F1 => {
                let (a, b) = (x[0], x[1]);
                0.5 * a.powi(3) - 2.0 * a * b * b
                    + 3.0 * (4.0 * a).sin() * (2.0 * b).cos()
                    + 0.1 * (-(a * a + b * b)).exp()
            }
            SyntheticFunction::F2 => {
                let (a, b) = (x[0], x[1]);
                (3.0 * a).sin() + (2.0 * b).cos() + 0.5 * (5.0 * a).sin() * (4.0 * b).cos()
            }
            SyntheticFunction::F3 => {
                let (a, b) = (x[0], x[1]);
                let r = (a * a + b * b).sqrt() + 1e-6;
                (a * a - b * b) / (0.5 + r * r) + r.sin() * (-r).exp()
            }
            SyntheticFunction::F4 => {
                let (a, b) = (x[0], x[1]);
                2.0 * (-((a - 1.0).powi(2) + (b - 1.0).powi(2)) / 0.5).exp()
                    - 3.0 * (-((a + 1.0).powi(2) + (b + 1.5).powi(2)) / 0.3).exp()
                    + 0.5 * a
            }
        }
    }
}

impl fmt::Display for SyntheticFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown synthetic function `{s}`")))
    }
}

/// Parsed form of `name:n=<N>:sigma=<σ>:seed=<s>`. Missing keys take
/// defaults (`n = 1000`, the function's conventional σ, `seed = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub function: SyntheticFunction,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(function: SyntheticFunction, n: usize, sigma: f64, seed: u64) -> Self {
        Self { function, n, sigma, seed }
    }

    pub fn generate(&self) -> Result<Dataset> {
        gen_synthetic(self.function, self.n, self.sigma, self.seed)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let function: SyntheticFunction = parts.next().unwrap_or_default().parse()?;
        let mut spec = SyntheticSpec::new(function, 1000, function.default_sigma(), 0);
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got `{part}`")))?;
            let bad = || Error::InvalidConfig(format!("bad value for `{key}`: `{value}`"));
            match key {
                "n" => spec.n = value.parse().map_err(|_| bad())?,
                "sigma" => spec.sigma = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                _ => return Err(Error::InvalidConfig(format!("unknown synthetic key `{key}`"))),
            }
        }
        if spec.n == 0 {
            return Err(Error::InvalidConfig("synthetic n must be at least 1".into()));
        }
        if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
            return Err(Error::InvalidConfig("synthetic sigma must be non-negative".into()));
        }
        Ok(spec)
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:n={}:sigma={}:seed={}", self.function, self.n, self.sigma, self.seed)
    }
}

/// Draws `n` inputs uniformly from the function's domain and returns
/// `f(x) + σ·ε`, `ε ~ N(0, 1)`.
///
/// Inputs and noise come from independent streams, so the same seed gives
/// the same inputs for every σ.
pub fn gen_synthetic(function: SyntheticFunction, n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = function.dim();
    let (lo, hi) = function.domain();
    let mut input_rng = seed::rng(seed::mix(seed, 1));
    let mut noise_rng = seed::rng(seed::mix(seed, 2));
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = data.len();
        for _ in 0..d {
            let u: f64 = input_rng.random();
            data.push(lo + (hi - lo) * u);
        }
        let eps: f64 = noise_rng.sample(StandardNormal);
        y.push(function.eval(&data[start..]) + sigma * eps);
    }
    Dataset::new(
        Matrix::new(n, d, data)?,
        y,
        default_names(d),
        Provenance::Synthetic { name: function, noise_sigma: sigma, seed },
    )
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Which column holds the regression target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
    Last,
}

impl FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    /// A bare integer is an index; anything else is a column name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn, header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut ds = read_csv(file, target, header)?;
    ds.provenance = Provenance::File { path: path.to_path_buf(), target_column: ds.target_name.clone() };
    Ok(ds)
}

/// Header names (or `c0, c1, …`), numeric rows and the column count.
fn read_table<R: Read>(reader: R, header: bool) -> Result<(Vec<String>, Vec<Vec<f64>>, usize)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .quoting(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let mut names: Option<Vec<String>> = None;
    if header {
        match records.next() {
            Some(r) => names = Some(r?.iter().map(|s| s.trim().to_string()).collect()),
            None => return Err(Error::EmptyDataset),
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = names.as_ref().map(|n| n.len());
    for (k, rec) in records.enumerate() {
        let rec = rec?;
        let line = k + 1 + header as usize;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                row: line,
                col: rec.len().min(w) + 1,
                msg: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        let mut row = Vec::with_capacity(w);
        for (c, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                row: line,
                col: c + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row: line, col: c + 1, msg: format!("non-finite value `{cell}`") });
            }
            row.push(v);
        }
        rows.push(row);
    }
    let width = width.ok_or(Error::EmptyDataset)?;
    let names = names.unwrap_or_else(|| (0..width).map(|i| format!("c{i}")).collect());

    Ok((names, rows, width))
}

/// Comma-separated, `.` decimal point, optional single header row, no quoting.
/// Rows and columns in errors are 1-based.
pub fn read_csv<R: Read>(reader: R, target: &TargetColumn, header: bool) -> Result<Dataset> {
    let (names, rows, width) = read_table(reader, header)?;
    let t = match target {
        TargetColumn::Last => width - 1,
        TargetColumn::Index(i) if *i < width => *i,
        TargetColumn::Index(i) => return Err(Error::MissingTarget(i.to_string())),
        TargetColumn::Name(n) => names
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| Error::MissingTarget(n.clone()))?,
    };
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if width < 2 {
        return Err(Error::InvalidConfig("need at least one feature column besides the target".into()));
    }

    let n = rows.len();
    let d = width - 1;
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for row in rows {
        for (c, v) in row.into_iter().enumerate() {
            if c == t {
                y.push(v);
            } else {
                data.push(v);
            }
        }
    }
    let feature_names = names.iter().enumerate().filter(|(c, _)| *c != t).map(|(_, s)| s.clone()).collect();
    let target_name = names[t].clone();
    Dataset::with_target_name(
        Matrix::new(n, d, data)?,
        y,
        feature_names,
        target_name.clone(),
        Provenance::File { path: PathBuf::new(), target_column: target_name },
    )
}

/// Reads a CSV in which every column is a feature.
pub fn read_feature_csv<R: Read>(reader: R, header: bool) -> Result<Matrix> {
    let (_, rows, width) = read_table(reader, header)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Matrix::new(rows.len(), width, rows.concat())
}

/// Writes features followed by the target as the last column, with a header.
/// Values use the shortest representation that parses back to the same bits.
pub fn write_csv<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.push(&data.target_name);
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for (row, y) in data.x.iter_rows().zip(&data.y) {
        line.clear();
        for v in row {
            line.push_str(&format!("{v:?},"));
        }
        line.push_str(&format!("{y:?}"));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_csv_file(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(data, f)
}

// ---------------------------------------------------------------------------
// Splitting and standardization
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(Self { train_fraction, seed })
    }
}

/// Seeded permutation; the first `⌈fraction·N⌉` rows go to train.
pub fn split_train_test(data: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.n(), spec)?;
    Ok((data.subset(&train), data.subset(&test)))
}

pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (spec.train_fraction * n as f64).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::DegenerateSplit { n, fraction: spec.train_fraction });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(spec.seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Per-feature affine map `x ↦ (x − shift) / scale` fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    /// Zero-variance features, passed through unchanged.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Standardizer {
        let (n, d) = (x.rows(), x.cols());
        let mut shift = vec![0.0; d];
        let mut scale = vec![1.0; d];
        let mut constant = vec![false; d];
        for j in 0..d {
            let mean = x.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = x.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
            if var.sqrt() <= 1e-12 * mean.abs().max(1.0) {
                constant[j] = true;
            } else {
                shift[j] = mean;
                scale[j] = var.sqrt();
            }
        }
        Standardizer { shift, scale, constant }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let d = x.cols();
        let mut data = x.as_slice().to_vec();
        for row in data.chunks_mut(d.max(1)) {
            for (j, v) in row.iter_mut().enumerate() {
                if !self.constant[j] {
                    *v = (*v - self.shift[j]) / self.scale[j];
                }
            }
        }
        Matrix { rows: x.rows(), cols: d, data }
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Dataset {
        Dataset { x: self.apply(&data.x), ..data.clone() }
    }
}

/// Fits a [`Standardizer`] on `train` and applies it to both sets.
pub fn standardize(train: &Dataset, test: &Dataset) -> (Dataset, Dataset, Standardizer) {
    let t = Standardizer::fit(&train.x);
    (t.apply_dataset(train), t.apply_dataset(test), t)
}
