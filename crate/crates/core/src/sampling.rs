//! Coordinate samplings, probability matrices, diagonal sketches, and the
//! importance-sampling probability solvers.
//!
//! A sampling is a distribution over subsets `S ⊆ {0,..,d-1}`. It is *proper*
//! when every coordinate has positive inclusion probability. Three kinds are
//! supported:
//!
//! - `Independent`: coordinate `j` is included independently with probability
//!   `p_j`;
//! - `SerialWeighted`: exactly one coordinate is drawn, with weights `p_j`
//!   summing to one;
//! - `FullDeterministic`: all coordinates, always (no randomness consumed).

use rand::Rng;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Absolute tolerance on `sum(p) - tau` accepted by the probability solvers,
/// per unit of dimension.
pub const ROOT_TOL_PER_DIM: f64 = 1e-10;
/// Maximum bisection iterations for the probability solvers.
pub const MAX_BISECT_ITERS: usize = 200;
/// Probability floor assigned to zero-curvature coordinates, as a fraction of
/// `min(1, tau/d)`.
pub const ZERO_CURVATURE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingKind {
    Independent,
    SerialWeighted,
    FullDeterministic,
}

/// A proper distribution over coordinate subsets with per-coordinate
/// inclusion probabilities.
#[derive(Debug, Clone)]
pub struct Sampling {
    kind: SamplingKind,
    probs: Vector,
}

/// Pairwise inclusion probabilities `P`, the normalized form
/// `P̄_{jl} = p_{jl}/(p_j p_l)`, and `P̃ = P̄ - E` (`E` all-ones).
#[derive(Debug, Clone)]
pub struct ProbabilityMatrices {
    pub p: Matrix,
    pub pbar: Matrix,
    pub ptilde: Matrix,
}

/// A drawn random diagonal sketch: value `1/p_j` on the active set, zero
/// elsewhere, so that `E[Cx] = x`.
#[derive(Debug, Clone)]
pub struct DiagonalSketch {
    dim: usize,
    /// Strictly increasing active coordinates.
    active: Vec<usize>,
    /// `1/p_j` for each active coordinate.
    values: Vec<f64>,
}

impl Sampling {
    /// Independent sampling with inclusion probabilities `p` (each in (0,1]).
    pub fn independent(probs: Vector) -> Result<Self> {
        for (j, &p) in probs.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!(
                    "inclusion probability p[{j}] = {p} outside (0, 1]"
                )));
            }
        }
        Ok(Self {
            kind: SamplingKind::Independent,
            probs,
        })
    }

    /// Serial sampling: exactly one coordinate, drawn with weights `p`
    /// (positive, summing to one).
    pub fn serial_weighted(probs: Vector) -> Result<Self> {
        for (j, &p) in probs.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!(
                    "serial weight p[{j}] = {p} outside (0, 1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("serial weights sum to {sum}, not 1")));
        }
        Ok(Self {
            kind: SamplingKind::SerialWeighted,
            probs,
        })
    }

    /// The deterministic full sampling (no compression).
    pub fn full(dim: usize) -> Self {
        Self {
            kind: SamplingKind::FullDeterministic,
            probs: Vector::repeat(dim, 1.0),
        }
    }

    pub fn kind(&self) -> SamplingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    /// Per-coordinate inclusion probabilities `p_j`.
    pub fn probs(&self) -> &Vector {
        &self.probs
    }

    /// Expected number of selected coordinates `tau = sum_j p_j`.
    pub fn expected_size(&self) -> f64 {
        match self.kind {
            SamplingKind::SerialWeighted => 1.0,
            _ => self.probs.iter().sum(),
        }
    }

    /// Compression variance `omega = max_j 1/p_j - 1` of the induced sketch.
    pub fn omega(&self) -> f64 {
        match self.kind {
            SamplingKind::FullDeterministic => 0.0,
            _ => self
                .probs
                .iter()
                .map(|&p| 1.0 / p - 1.0)
                .fold(0.0_f64, f64::max),
        }
    }

    /// True when every draw returns all coordinates.
    pub fn always_full(&self) -> bool {
        match self.kind {
            SamplingKind::FullDeterministic => true,
            SamplingKind::Independent => self.probs.iter().all(|&p| p == 1.0),
            SamplingKind::SerialWeighted => self.dim() == 1,
        }
    }

    /// Draws a diagonal sketch from the sampling.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DiagonalSketch {
        let d = self.dim();
        match self.kind {
            SamplingKind::FullDeterministic => DiagonalSketch {
                dim: d,
                active: (0..d).collect(),
                values: vec![1.0; d],
            },
            SamplingKind::Independent => {
                let mut active = Vec::new();
                let mut values = Vec::new();
                for j in 0..d {
                    if rng.gen::<f64>() < self.probs[j] {
                        active.push(j);
                        values.push(1.0 / self.probs[j]);
                    }
                }
                DiagonalSketch {
                    dim: d,
                    active,
                    values,
                }
            }
            SamplingKind::SerialWeighted => {
                // Inverse-CDF draw: consumes exactly one uniform.
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                let mut pick = d - 1;
                for j in 0..d {
                    acc += self.probs[j];
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                DiagonalSketch {
                    dim: d,
                    active: vec![pick],
                    values: vec![1.0 / self.probs[pick]],
                }
            }
        }
    }

    /// The probability matrices `P`, `P̄`, `P̃` of the sampling.
    pub fn probability_matrices(&self) -> ProbabilityMatrices {
        let d = self.dim();
        let p = match self.kind {
            SamplingKind::Independent => Matrix::from_fn(d, d, |j, l| {
                if j == l {
                    self.probs[j]
                } else {
                    self.probs[j] * self.probs[l]
                }
            }),
            SamplingKind::SerialWeighted => Matrix::from_diagonal(&self.probs),
            SamplingKind::FullDeterministic => Matrix::repeat(d, d, 1.0),
        };
        let pbar = Matrix::from_fn(d, d, |j, l| p[(j, l)] / (self.probs[j] * self.probs[l]));
        let ptilde = match self.kind {
            // Exact zeros off the diagonal for independent samplings.
            SamplingKind::Independent => {
                Matrix::from_diagonal(&Vector::from_fn(d, |j, _| 1.0 / self.probs[j] - 1.0))
            }
            _ => &pbar - Matrix::repeat(d, d, 1.0),
        };
        ProbabilityMatrices { p, pbar, ptilde }
    }
}

impl DiagonalSketch {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Active coordinates, strictly increasing.
    pub fn support(&self) -> &[usize] {
        &self.active
    }

    /// `1/p_j` aligned with [`Self::support`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// `C x`: scales active coordinates by `1/p_j`, zeroes the rest.
    pub fn apply(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for (&j, &c) in self.active.iter().zip(&self.values) {
            out[j] = c * x[j];
        }
        out
    }
}

/// Uniform independent sampling with `p_j = tau/d`.
pub fn uniform_sampling(dim: usize, tau: f64) -> Result<Sampling> {
    if !(tau > 0.0 && tau <= dim as f64) {
        return Err(Error::InfeasibleTau { tau, dim });
    }
    Sampling::independent(Vector::repeat(dim, tau / dim as f64))
}

/// Optimal independent-sampling probabilities for the plain compressed step:
/// `p_j = L_j/(L_j + rho)` with `rho >= 0` the unique root of
/// `sum_j L_j/(L_j + rho) = tau`. Returns `(p, rho)`.
///
/// Coordinates with zero curvature get a tiny floor probability (properness),
/// and the remaining budget is allocated over the positive coordinates.
pub fn solve_dcgd_probs(l_diag: &Vector, tau: f64) -> Result<(Vector, f64)> {
    let d = l_diag.len();
    if !(tau > 0.0 && tau <= d as f64) {
        return Err(Error::InfeasibleTau { tau, dim: d });
    }
    if l_diag.iter().any(|&v| v < 0.0) || l_diag.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid(
            "diagonal curvatures must be nonnegative with at least one positive",
        ));
    }
    if tau == d as f64 {
        return Ok((Vector::repeat(d, 1.0), 0.0));
    }

    let positive: Vec<usize> = (0..d).filter(|&j| l_diag[j] > 0.0).collect();
    let zeros: Vec<usize> = (0..d).filter(|&j| l_diag[j] == 0.0).collect();
    let floor = (tau / d as f64).min(1.0) * ZERO_CURVATURE_FLOOR;
    let budget = tau - floor * zeros.len() as f64;

    let mut probs = Vector::zeros(d);
    for &j in &zeros {
        probs[j] = floor;
    }

    // If the budget cannot be met by the positive coordinates alone, saturate
    // them and spread the remainder over the zero-curvature ones.
    if budget >= positive.len() as f64 {
        for &j in &positive {
            probs[j] = 1.0;
        }
        if !zeros.is_empty() {
            let spread = ((tau - positive.len() as f64) / zeros.len() as f64).min(1.0);
            for &j in &zeros {
                probs[j] = spread.max(floor);
            }
        }
        return Ok((probs, 0.0));
    }

    let weights: Vec<f64> = positive.iter().map(|&j| l_diag[j]).collect();
    let rho = bisect_balance(&weights, budget, d, |w, rho| w / (w + rho))?;
    for (&j, &w) in positive.iter().zip(&weights) {
        probs[j] = w / (w + rho);
    }
    Ok((probs, rho))
}

/// Optimal probabilities for the variance-reduced step: the plain solve
/// applied to the shifted curvatures `L'_j = L_j/(mu n) + 1`.
pub fn solve_diana_probs(l_diag: &Vector, tau: f64, mu: f64, n: usize) -> Result<(Vector, f64)> {
    let lprime = shifted_curvatures(l_diag, mu, n)?;
    solve_dcgd_probs(&lprime, tau)
}

/// Optimal probabilities for the accelerated step:
/// `p_j = sqrt(L'_j/(L'_j + rho))` with `rho` the unique root of
/// `sum_j p_j = tau`.
pub fn solve_adiana_probs(l_diag: &Vector, tau: f64, mu: f64, n: usize) -> Result<(Vector, f64)> {
    let lprime = shifted_curvatures(l_diag, mu, n)?;
    let d = lprime.len();
    if !(tau > 0.0 && tau <= d as f64) {
        return Err(Error::InfeasibleTau { tau, dim: d });
    }
    if tau == d as f64 {
        return Ok((Vector::repeat(d, 1.0), 0.0));
    }
    let weights: Vec<f64> = lprime.iter().cloned().collect();
    let rho = bisect_balance(&weights, tau, d, |w, rho| (w / (w + rho)).sqrt())?;
    let probs = Vector::from_fn(d, |j, _| (weights[j] / (weights[j] + rho)).sqrt());
    Ok((probs, rho))
}

fn shifted_curvatures(l_diag: &Vector, mu: f64, n: usize) -> Result<Vector> {
    if mu <= 0.0 {
        return Err(Error::invalid("mu must be positive"));
    }
    if n == 0 {
        return Err(Error::invalid("node count must be positive"));
    }
    if l_diag.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("diagonal curvatures must be nonnegative"));
    }
    let mun = mu * n as f64;
    Ok(l_diag.map(|v| v / mun + 1.0))
}

/// Bisection on `rho` for `sum_j f(w_j, rho) = tau`, where `f` is strictly
/// decreasing in `rho`. The initial upper bracket comes from the bound
/// `rho <= sum(w)/tau` (squared for the square-root variant) and is grown
/// defensively if too tight.
fn bisect_balance<F: Fn(f64, f64) -> f64>(
    weights: &[f64],
    tau: f64,
    full_dim: usize,
    prob: F,
) -> Result<f64> {
    let tol = ROOT_TOL_PER_DIM * full_dim as f64;
    let sum: f64 = weights.iter().map(|&w| prob(w, 0.0)).sum();
    if (sum - tau).abs() <= tol {
        return Ok(0.0);
    }
    let total: f64 = weights.iter().sum();
    let linear_bound = total / tau;
    let mut hi = linear_bound.max(linear_bound * linear_bound).max(1.0);
    while weights.iter().map(|&w| prob(w, hi)).sum::<f64>() > tau {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NonFinite("probability bisection bracket"));
        }
    }
    let mut lo = 0.0;
    let mut mid = 0.5 * hi;
    for _ in 0..MAX_BISECT_ITERS {
        mid = 0.5 * (lo + hi);
        let s: f64 = weights.iter().map(|&w| prob(w, mid)).sum();
        // The root itself must be tight, not just the sum residual.
        if (s - tau).abs() <= tol && hi - lo <= 1e-12 * mid.max(1.0) {
            return Ok(mid);
        }
        if s > tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}
