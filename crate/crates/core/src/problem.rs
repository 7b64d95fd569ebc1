//! Regularized logistic regression over partitioned data.
//!
//! Each node holds `m_i` datapoints `(a_j, b_j)` with labels in `{-1, +1}`
//! and minimizes the local loss
//!
//! ```text
//! f_i(x) = (1/m_i) sum_j log(1 + exp(b_j a_j' x)) + (mu/2) |x|^2,
//! ```
//!
//! whose smoothness matrix is `L_i = (1/(4 m_i)) A_i' A_i + mu I` (the
//! logistic scalar curvature bound is 1/4; the ridge term is folded into
//! `f_i`, making `L_i` positive definite for `mu > 0`).

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::optim::rng::shuffle_rng;
use crate::optim::{prox_gradient_solve, Objective, Regularizer};
use crate::psd::SmoothnessMatrix;
use crate::{Matrix, Vector};

/// Default prox-gradient residual for the reference solver.
pub const REFERENCE_TOL: f64 = 1e-12;
/// Iteration cap for the reference solver.
pub const REFERENCE_MAX_ITERS: usize = 2_000_000;
/// Datapoint norm after normalization.
pub const ROW_NORM: f64 = 0.5;

/// Sparse LibSVM-style dataset: rows of `(0-based index, value)` pairs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Labels remapped to `{-1, +1}`.
    pub labels: Vec<f64>,
    pub dim: usize,
}

/// Parses LibSVM text: one datapoint per line, `label idx:val idx:val ...`
/// with 1-based feature indices. Labels are remapped to `{-1, +1}`
/// (for two-class data the smaller raw label maps to `-1`).
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dim = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let line_1 = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|e| Error::Parse {
                line: line_1,
                reason: format!("bad label: {e}"),
            })?;
        let mut row = Vec::new();
        for tok in parts {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_1,
                reason: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx_s.parse().map_err(|e| Error::Parse {
                line: line_1,
                reason: format!("bad feature index {idx_s:?}: {e}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_1,
                    reason: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val_s.parse().map_err(|e| Error::Parse {
                line: line_1,
                reason: format!("bad feature value {val_s:?}: {e}"),
            })?;
            row.push((idx - 1, val));
            dim = dim.max(idx);
        }
        rows.push(row);
        raw_labels.push(label);
    }

    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }

    let labels = remap_labels(&raw_labels)?;
    Ok(Dataset { rows, labels, dim })
}

fn remap_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let mut distinct: Vec<f64> = raw.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    match distinct.as_slice() {
        [-1.0, 1.0] | [-1.0] | [1.0] => Ok(raw.to_vec()),
        [lo, _hi] => {
            let lo = *lo;
            Ok(raw
                .iter()
                .map(|&v| if v == lo { -1.0 } else { 1.0 })
                .collect())
        }
        _ => Err(Error::Parse {
            line: 0,
            reason: format!("expected two label classes, found {}", distinct.len()),
        }),
    }
}

/// Per-node data, loss oracle, and smoothness matrix.
#[derive(Debug, Clone)]
pub struct NodeProblem {
    a: Matrix,
    b: Vector,
    mu: f64,
    matrix: Arc<SmoothnessMatrix>,
}

impl NodeProblem {
    /// Builds a node from a dense `m x d` data matrix and `{-1,+1}` labels.
    pub fn new(a: Matrix, b: Vector, mu: f64) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimMismatch {
                left: a.nrows(),
                right: b.len(),
            });
        }
        if a.nrows() == 0 {
            return Err(Error::EmptyFile);
        }
        if b.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::invalid("labels must be -1 or +1"));
        }
        if mu < 0.0 {
            return Err(Error::invalid("mu must be nonnegative"));
        }
        let matrix = Arc::new(smoothness_from_data(&a, mu)?);
        Ok(Self { a, b, mu, matrix })
    }

    pub fn samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// The node's smoothness matrix `L_i`.
    pub fn matrix(&self) -> &Arc<SmoothnessMatrix> {
        &self.matrix
    }

    /// `grad f_i(x) = (1/m) sum_j sigmoid(b_j a_j'x) b_j a_j + mu x`.
    pub fn grad(&self, x: &Vector) -> Vector {
        let m = self.samples() as f64;
        let margins = &self.a * x;
        let weights = Vector::from_fn(self.samples(), |j, _| {
            sigmoid(self.b[j] * margins[j]) * self.b[j] / m
        });
        self.a.transpose() * weights + self.mu * x
    }

    /// `f_i(x)`, evaluated with a stable `log(1+exp(t))`.
    pub fn value(&self, x: &Vector) -> f64 {
        let m = self.samples() as f64;
        let margins = &self.a * x;
        let loss: f64 = (0..self.samples())
            .map(|j| log1p_exp(self.b[j] * margins[j]))
            .sum::<f64>()
            / m;
        loss + 0.5 * self.mu * x.norm_squared()
    }
}

impl Objective for NodeProblem {
    fn dim(&self) -> usize {
        self.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        NodeProblem::value(self, x)
    }
    fn grad(&self, x: &Vector) -> Vector {
        NodeProblem::grad(self, x)
    }
}

/// `L_i = (1/(4 m)) A'A + mu I`.
pub fn smoothness_from_data(a: &Matrix, mu: f64) -> Result<SmoothnessMatrix> {
    let m = a.nrows() as f64;
    let mut gram = a.transpose() * a;
    gram /= 4.0 * m;
    for j in 0..gram.nrows() {
        gram[(j, j)] += mu;
    }
    SmoothnessMatrix::new(&gram)
}

/// The distributed objective `f = (1/n) sum_i f_i` plus an optional
/// composite term.
#[derive(Debug, Clone)]
pub struct DistributedProblem {
    nodes: Vec<NodeProblem>,
    matrix: Arc<SmoothnessMatrix>,
    mu: f64,
    dim: usize,
    reg: Regularizer,
}

impl DistributedProblem {
    /// Builds the global problem; the global smoothness matrix is
    /// `L = (1/n) sum_i L_i`.
    pub fn from_nodes(nodes: Vec<NodeProblem>, reg: Regularizer) -> Result<Self> {
        let first = nodes.first().ok_or(Error::EmptyFile)?;
        let dim = first.dim();
        let mu = first.mu();
        for node in &nodes {
            if node.dim() != dim {
                return Err(Error::DimMismatch {
                    left: node.dim(),
                    right: dim,
                });
            }
            if node.mu() != mu {
                return Err(Error::invalid("nodes must share the same mu"));
            }
        }
        let n = nodes.len() as f64;
        let mut sum = Matrix::zeros(dim, dim);
        for node in &nodes {
            sum += node.matrix().to_dense();
        }
        sum /= n;
        let matrix = Arc::new(SmoothnessMatrix::new(&sum)?);
        Ok(Self {
            nodes,
            matrix,
            mu,
            dim,
            reg,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn reg(&self) -> &Regularizer {
        &self.reg
    }

    pub fn with_reg(mut self, reg: Regularizer) -> Self {
        self.reg = reg;
        self
    }

    pub fn node(&self, i: usize) -> &NodeProblem {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[NodeProblem] {
        &self.nodes
    }

    /// The global smoothness matrix of `f`.
    pub fn matrix(&self) -> &Arc<SmoothnessMatrix> {
        &self.matrix
    }

    pub fn grad(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(self.dim);
        for node in &self.nodes {
            g += node.grad(x);
        }
        g / self.n() as f64
    }

    /// Smooth part only (the composite term is handled by the prox).
    pub fn value(&self, x: &Vector) -> f64 {
        self.nodes.iter().map(|n| n.value(x)).sum::<f64>() / self.n() as f64
    }

    /// High-accuracy minimizer of `f + R` via proximal gradient descent with
    /// step `1/lambda_max(L)`; requires `mu > 0` for uniqueness.
    pub fn reference_solution(&self, tol: f64) -> Result<(Vector, f64)> {
        if self.mu <= 0.0 {
            return Err(Error::invalid("reference solver requires mu > 0"));
        }
        let gamma = 1.0 / self.matrix.lambda_max();
        prox_gradient_solve(
            self,
            &self.reg.clone(),
            gamma,
            Vector::zeros(self.dim),
            tol,
            REFERENCE_MAX_ITERS,
        )
    }
}

impl Objective for DistributedProblem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector) -> f64 {
        DistributedProblem::value(self, x)
    }
    fn grad(&self, x: &Vector) -> Vector {
        DistributedProblem::grad(self, x)
    }
}

/// Computes the reference solution of a distributed problem (free-function
/// form of [`DistributedProblem::reference_solution`]).
pub fn reference_solution(dp: &DistributedProblem, tol: f64) -> Result<(Vector, f64)> {
    dp.reference_solution(tol)
}

/// Splits a reshuffled dataset into `n` equal chunks, normalizes every
/// datapoint to norm 1/2, and builds the per-node problems. Tail datapoints
/// beyond `n * floor(count/n)` are dropped.
pub fn partition(data: &Dataset, n: usize, mu: f64, seed: u64) -> Result<DistributedProblem> {
    partition_opts(data, n, mu, seed, true, Regularizer::Zero)
}

pub fn partition_opts(
    data: &Dataset,
    n: usize,
    mu: f64,
    seed: u64,
    normalize: bool,
    reg: Regularizer,
) -> Result<DistributedProblem> {
    if n == 0 {
        return Err(Error::invalid("node count must be positive"));
    }
    let count = data.rows.len();
    let per_node = count / n;
    if per_node == 0 {
        return Err(Error::TooFewPoints {
            points: count,
            nodes: n,
        });
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut shuffle_rng(seed));

    let d = data.dim;
    let mut nodes = Vec::with_capacity(n);
    for chunk in 0..n {
        let mut a = Matrix::zeros(per_node, d);
        let mut b = Vector::zeros(per_node);
        for (row_out, &row_in) in order[chunk * per_node..(chunk + 1) * per_node]
            .iter()
            .enumerate()
        {
            for &(j, v) in &data.rows[row_in] {
                a[(row_out, j)] = v;
            }
            if normalize {
                let norm = a.row(row_out).norm();
                if norm > 0.0 {
                    let scale = ROW_NORM / norm;
                    a.row_mut(row_out).scale_mut(scale);
                }
            }
            b[row_out] = data.labels[row_in];
        }
        nodes.push(NodeProblem::new(a, b, mu)?);
    }
    DistributedProblem::from_nodes(nodes, reg)
}

/// Synthetic problem generator: Gaussian rows with geometric per-column
/// scaling (heterogeneous curvature), random labels, rows normalized to 1/2.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub nodes: usize,
    pub samples_per_node: usize,
    pub mu: f64,
    /// Column `j` is scaled by `col_decay^j`; 1.0 gives isotropic data.
    pub col_decay: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn build(&self) -> Result<DistributedProblem> {
        let mut rng = shuffle_rng(self.seed);
        let total = self.nodes * self.samples_per_node;
        let mut rows = Vec::with_capacity(total);
        let mut labels = Vec::with_capacity(total);
        for _ in 0..total {
            let mut row = Vec::with_capacity(self.dim);
            for j in 0..self.dim {
                let z = gaussian(&mut rng) * self.col_decay.powi(j as i32);
                row.push((j, z));
            }
            rows.push(row);
            labels.push(if rng.gen::<bool>() { 1.0 } else { -1.0 });
        }
        let data = Dataset {
            rows,
            labels,
            dim: self.dim,
        };
        partition(&data, self.nodes, self.mu, self.seed)
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; consumes two uniforms per sample.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn log1p_exp(t: f64) -> f64 {
    if t > 35.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}
