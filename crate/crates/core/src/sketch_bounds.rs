//! Linear-sketch lower-bound toolkit.
//!
//! Compression operators of the form `C(x) = D(S x)` with a linear encoder
//! `S` (possibly random) and a decoder `D`, measured in the geometry of a
//! symmetric positive definite norm matrix `B`. The toolkit provides the
//! optimal Moore-Penrose decoder, the worst-case squared error `alpha`,
//! expected-rank accounting, the optimal rotated-sparsifier construction,
//! and the `alpha + E[rank]/d >= 1` trade-off audit.

use nalgebra::SymmetricEigen;
use rand::Rng;

use crate::error::{Error, Result};
use crate::psd::{lambda_min_of, DEFAULT_RANK_TOL};
use crate::{Matrix, Vector};

/// Slack tolerance when flagging the trade-off inequality as satisfied.
pub const TRADEOFF_TOL: f64 = 1e-9;

/// A symmetric positive definite matrix defining the inner product
/// `<x, y>_B = x' B y`, with cached factors.
#[derive(Debug, Clone)]
pub struct NormMatrix {
    b: Matrix,
    /// Eigenvectors (columns), eigenvalues nonincreasing.
    q: Matrix,
    eigenvalues: Vector,
    inv: Matrix,
    inv_sqrt: Matrix,
}

impl NormMatrix {
    pub fn new(b: &Matrix) -> Result<Self> {
        if b.nrows() != b.ncols() {
            return Err(Error::DimMismatch {
                left: b.nrows(),
                right: b.ncols(),
            });
        }
        let sym = (b + b.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let mut order: Vec<usize> = (0..sym.nrows()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
        let eigenvalues = Vector::from_fn(sym.nrows(), |k, _| eig.eigenvalues[order[k]]);
        let min = eigenvalues[sym.nrows() - 1];
        if min <= 0.0 {
            return Err(Error::NotSpd { eigenvalue: min });
        }
        let mut q = Matrix::zeros(sym.nrows(), sym.ncols());
        for (k, &idx) in order.iter().enumerate() {
            q.set_column(k, &eig.eigenvectors.column(idx));
        }
        let weighted = |f: &dyn Fn(f64) -> f64| -> Matrix {
            let mut scaled = q.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= f(eigenvalues[k]);
            }
            &scaled * q.transpose()
        };
        Ok(Self {
            inv: weighted(&|v| 1.0 / v),
            inv_sqrt: weighted(&|v| 1.0 / v.sqrt()),
            b: sym,
            q,
            eigenvalues,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(&Matrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.b
    }

    /// Eigenvector basis (columns), the rotation of the optimal sketches.
    pub fn rotation(&self) -> &Matrix {
        &self.q
    }

    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    pub fn inner(&self, x: &Vector, y: &Vector) -> f64 {
        (x.transpose() * &self.b * y)[(0, 0)]
    }

    pub fn norm(&self, x: &Vector) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }
}

/// Distribution over sketch matrices.
#[derive(Debug, Clone)]
pub enum SketchDistribution {
    /// A deterministic `s x d` sketch.
    Fixed(Matrix),
    /// `S = C Q'` with a 0/1 diagonal mask `C` of per-coordinate inclusion
    /// probabilities and `Q` the eigenvectors of `B`. Zero rows are retained
    /// for rank accounting.
    RotatedSparsifier { probs: Vector },
}

/// A linear compression scheme: a norm matrix and a sketch distribution.
#[derive(Debug, Clone)]
pub struct LinearSketchScheme {
    norm: NormMatrix,
    dist: SketchDistribution,
}

/// Result of the variance-vs-rank trade-off audit.
#[derive(Debug, Clone, Copy)]
pub struct TradeoffAudit {
    pub alpha: f64,
    pub expected_rank_ratio: f64,
    /// `alpha + E[rank]/d >= 1` within tolerance.
    pub satisfied: bool,
    /// `alpha + E[rank]/d - 1`.
    pub slack: f64,
}

impl LinearSketchScheme {
    pub fn fixed(norm: NormMatrix, s: Matrix) -> Result<Self> {
        if s.ncols() != norm.dim() {
            return Err(Error::DimMismatch {
                left: s.ncols(),
                right: norm.dim(),
            });
        }
        Ok(Self {
            norm,
            dist: SketchDistribution::Fixed(s),
        })
    }

    pub fn rotated_sparsifier(norm: NormMatrix, probs: Vector) -> Result<Self> {
        if probs.len() != norm.dim() {
            return Err(Error::DimMismatch {
                left: probs.len(),
                right: norm.dim(),
            });
        }
        for &p in probs.iter() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!(
                    "inclusion probability {p} outside (0, 1]"
                )));
            }
        }
        Ok(Self {
            norm,
            dist: SketchDistribution::RotatedSparsifier { probs },
        })
    }

    /// Uniform `q`-sparsifier in the eigenbasis of `B`.
    pub fn uniform_sparsifier(norm: NormMatrix, q: f64) -> Result<Self> {
        let d = norm.dim();
        Self::rotated_sparsifier(norm, Vector::repeat(d, q))
    }

    pub fn norm_matrix(&self) -> &NormMatrix {
        &self.norm
    }

    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    /// Draws one sketch matrix.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        match &self.dist {
            SketchDistribution::Fixed(s) => s.clone(),
            SketchDistribution::RotatedSparsifier { probs } => {
                let mut s = self.norm.rotation().transpose();
                for (j, mut row) in s.row_iter_mut().enumerate() {
                    if rng.gen::<f64>() >= probs[j] {
                        row.fill(0.0);
                    }
                }
                s
            }
        }
    }

    /// Worst-case expected squared error `alpha`, by closed form:
    /// `1 - min_j p_j` for rotated sparsifiers; 0/1 for fixed sketches
    /// depending on kernel triviality.
    pub fn alpha(&self) -> f64 {
        match &self.dist {
            SketchDistribution::Fixed(s) => {
                if numerical_rank(s) == self.dim() {
                    0.0
                } else {
                    1.0
                }
            }
            SketchDistribution::RotatedSparsifier { probs } => {
                1.0 - probs.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Monte-Carlo estimate of `alpha` via `1 - lambda_min(E[Z])`, the bound
    /// the optimal decoder attains.
    pub fn alpha_mc<R: Rng + ?Sized>(&self, trials: usize, rng: &mut R) -> Result<f64> {
        let d = self.dim();
        let mut mean = Matrix::zeros(d, d);
        for _ in 0..trials {
            mean += z_matrix_sym(&self.draw(rng), &self.norm)?;
        }
        mean /= trials as f64;
        Ok(1.0 - lambda_min_of(&mean)?)
    }

    /// Expected rank, by closed form: `sum_j p_j` for rotated sparsifiers,
    /// the numerical rank for fixed sketches.
    pub fn expected_rank(&self) -> f64 {
        match &self.dist {
            SketchDistribution::Fixed(s) => numerical_rank(s) as f64,
            SketchDistribution::RotatedSparsifier { probs } => probs.iter().sum(),
        }
    }

    /// Monte-Carlo mean of the numerical rank over draws.
    pub fn expected_rank_mc<R: Rng + ?Sized>(&self, trials: usize, rng: &mut R) -> f64 {
        let mut acc = 0.0;
        for _ in 0..trials {
            acc += numerical_rank(&self.draw(rng)) as f64;
        }
        acc / trials as f64
    }

    /// Audits the `alpha + E[rank]/d >= 1` lower bound (closed forms).
    pub fn tradeoff_audit(&self) -> TradeoffAudit {
        let alpha = self.alpha();
        let ratio = self.expected_rank() / self.dim() as f64;
        let slack = alpha + ratio - 1.0;
        TradeoffAudit {
            alpha,
            expected_rank_ratio: ratio,
            satisfied: slack >= -TRADEOFF_TOL,
            slack,
        }
    }
}

/// Optimal reconstruction from `y = S x`: the minimal-B-norm solution
/// `D*(y) = B^{-1} S' (S B^{-1} S')^† y`.
pub fn optimal_decode(s: &Matrix, norm: &NormMatrix, y: &Vector) -> Result<Vector> {
    if s.ncols() != norm.dim() {
        return Err(Error::DimMismatch {
            left: s.ncols(),
            right: norm.dim(),
        });
    }
    if s.nrows() != y.len() {
        return Err(Error::DimMismatch {
            left: s.nrows(),
            right: y.len(),
        });
    }
    let gram = s * &norm.inv * s.transpose();
    let pinv = sym_pinv(&gram);
    Ok(&norm.inv * s.transpose() * (pinv * y))
}

/// `Z = S^{†_B} S = B^{-1} S' (S B^{-1} S')^† S`, the idempotent whose trace
/// equals `rank(S)`.
pub fn z_matrix(s: &Matrix, norm: &NormMatrix) -> Result<Matrix> {
    if s.ncols() != norm.dim() {
        return Err(Error::DimMismatch {
            left: s.ncols(),
            right: norm.dim(),
        });
    }
    let gram = s * &norm.inv * s.transpose();
    let pinv = sym_pinv(&gram);
    Ok(&norm.inv * s.transpose() * pinv * s)
}

/// The symmetric conjugate `B^{1/2} Z B^{-1/2}` (same spectrum and trace as
/// `Z`, but symmetric PSD so eigenvalue work is stable).
pub fn z_matrix_sym(s: &Matrix, norm: &NormMatrix) -> Result<Matrix> {
    if s.ncols() != norm.dim() {
        return Err(Error::DimMismatch {
            left: s.ncols(),
            right: norm.dim(),
        });
    }
    let sb = s * &norm.inv_sqrt;
    let gram = &sb * sb.transpose();
    let pinv = sym_pinv(&gram);
    Ok(sb.transpose() * pinv * sb)
}

/// Draws one optimal sketch `S = C Q'` with 0/1 inclusion mask of
/// probability `q` (zero rows retained).
pub fn build_optimal_sketch<R: Rng + ?Sized>(
    norm: &NormMatrix,
    q: f64,
    rng: &mut R,
) -> Result<Matrix> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("q = {q} outside (0, 1]")));
    }
    let scheme = LinearSketchScheme::uniform_sparsifier(norm.clone(), q)?;
    Ok(scheme.draw(rng))
}

/// Numerical rank via singular values above `1e-10` relative.
pub fn numerical_rank(s: &Matrix) -> usize {
    let sv = s.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > DEFAULT_RANK_TOL * max).count()
}

fn sym_pinv(m: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = DEFAULT_RANK_TOL * max;
    let mut scaled = eig.eigenvectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let v = eig.eigenvalues[k];
        col *= if v > tol { 1.0 / v } else { 0.0 };
    }
    &scaled * eig.eigenvectors.transpose()
}

/// Binary entropy in bits.
pub fn binary_entropy(q: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    term(q) + term(1.0 - q)
}

/// `log2 C(d, k)` via a cumulative log-factorial table.
pub fn log2_binomial(d: usize, k: usize) -> f64 {
    assert!(k <= d);
    let table = log2_factorials(d);
    table[d] - table[k] - table[d - k]
}

fn log2_factorials(d: usize) -> Vec<f64> {
    let mut t = vec![0.0; d + 1];
    for k in 1..=d {
        t[k] = t[k - 1] + (k as f64).log2();
    }
    t
}

/// Exact `(alpha, beta)` of the uniform `q`-sparsifier under
/// information-theoretic index coding: `alpha = 1 - q` and
/// `beta = E[32 k + log2 C(d, k)] / (32 d)` with `k ~ Binomial(d, q)`,
/// the expectation taken analytically over the binomial pmf.
pub fn sparsifier_bits_audit(d: usize, q: f64) -> (f64, f64) {
    assert!(d > 0 && q > 0.0 && q <= 1.0);
    let table = log2_factorials(d);
    let ln2 = std::f64::consts::LN_2;
    let mut expected_index_bits = 0.0;
    if q < 1.0 {
        let ln_q = q.ln();
        let ln_1q = (1.0 - q).ln();
        for k in 0..=d {
            let log2_binom = table[d] - table[k] - table[d - k];
            let ln_pmf = log2_binom * ln2 + k as f64 * ln_q + (d - k) as f64 * ln_1q;
            expected_index_bits += ln_pmf.exp() * log2_binom;
        }
    }
    let beta = (32.0 * q * d as f64 + expected_index_bits) / (32.0 * d as f64);
    (1.0 - q, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let a = Matrix::from_fn(d, d, |_, _| rng.gen::<f64>() - 0.5);
        &a * a.transpose() + Matrix::identity(d, d) * 0.5
    }

    #[test]
    fn decode_identity_sketch() {
        let norm = NormMatrix::identity(3);
        let s = Matrix::identity(3, 3);
        let y = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = optimal_decode(&s, &norm, &y).unwrap();
        assert_abs_diff_eq!(x, y, epsilon = 1e-12);
    }

    #[test]
    fn decode_row_selector_minimal_norm() {
        let norm = NormMatrix::identity(4);
        let s = Matrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        let x = optimal_decode(&s, &norm, &Vector::from_vec(vec![5.0])).unwrap();
        assert_abs_diff_eq!(
            x,
            Vector::from_vec(vec![5.0, 0.0, 0.0, 0.0]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn decode_is_b_orthogonal_to_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let norm = NormMatrix::new(&random_spd(4, &mut rng)).unwrap();
            let s = Matrix::from_fn(2, 4, |_, _| rng.gen::<f64>() - 0.5);
            let x = Vector::from_fn(4, |_, _| rng.gen::<f64>() - 0.5);
            let decoded = optimal_decode(&s, &norm, &(&s * &x)).unwrap();
            // Residual S * decoded = S x.
            assert!((&s * &decoded - &s * &x).norm() <= 1e-9);
            // Kernel basis: null eigenvectors of S'S.
            let gram = s.transpose() * &s;
            let eig = SymmetricEigen::new(gram);
            let max_eig = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
            for k in 0..4 {
                if eig.eigenvalues[k] <= 1e-12 * max_eig {
                    let kernel_vec = eig.eigenvectors.column(k).into_owned();
                    assert!((&s * &kernel_vec).norm() <= 1e-7);
                    assert!(
                        norm.inner(&decoded, &kernel_vec).abs() <= 1e-9,
                        "decoded not B-orthogonal to kernel"
                    );
                }
            }
        }
    }

    #[test]
    fn alpha_closed_forms() {
        let norm = NormMatrix::identity(4);
        let full = LinearSketchScheme::uniform_sparsifier(norm.clone(), 1.0).unwrap();
        assert_eq!(full.alpha(), 0.0);
        let quarter = LinearSketchScheme::uniform_sparsifier(norm.clone(), 0.25).unwrap();
        assert_eq!(quarter.alpha(), 0.75);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let full_rank = Matrix::from_fn(4, 4, |_, _| rng.gen::<f64>() - 0.5);
        let fixed = LinearSketchScheme::fixed(norm.clone(), full_rank).unwrap();
        assert_eq!(fixed.alpha(), 0.0);
        let wide = Matrix::from_fn(2, 4, |_, _| rng.gen::<f64>() - 0.5);
        let rank_deficient = LinearSketchScheme::fixed(norm, wide).unwrap();
        assert_eq!(rank_deficient.alpha(), 1.0);
    }

    #[test]
    fn expected_rank_examples() {
        let norm = NormMatrix::identity(10);
        let s = LinearSketchScheme::uniform_sparsifier(norm, 0.5).unwrap();
        assert_abs_diff_eq!(s.expected_rank(), 5.0, epsilon = 1e-12);

        let norm = NormMatrix::identity(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fixed = Matrix::from_fn(3, 4, |_, _| rng.gen::<f64>() - 0.5);
        let scheme = LinearSketchScheme::fixed(norm, fixed).unwrap();
        assert_eq!(scheme.expected_rank(), 3.0);
    }

    #[test]
    fn expected_rank_mc_within_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let norm = NormMatrix::new(&random_spd(20, &mut rng)).unwrap();
        let scheme = LinearSketchScheme::uniform_sparsifier(norm, 0.3).unwrap();
        let trials = 100_000;
        let mc = scheme.expected_rank_mc(trials, &mut rng);
        // Binomial(20, 0.3): sigma of the mean over trials.
        let sigma = (20.0 * 0.3 * 0.7 / trials as f64).sqrt();
        assert!((mc - 6.0).abs() <= 3.0 * sigma, "{mc}");
    }

    #[test]
    fn tradeoff_uniform_is_tight() {
        let norm = NormMatrix::identity(8);
        let audit = LinearSketchScheme::uniform_sparsifier(norm, 0.5)
            .unwrap()
            .tradeoff_audit();
        assert_eq!(audit.slack, 0.0);
        assert!(audit.satisfied);

        let full = LinearSketchScheme::uniform_sparsifier(NormMatrix::identity(8), 1.0)
            .unwrap()
            .tradeoff_audit();
        assert_eq!(full.alpha, 0.0);
        assert_eq!(full.expected_rank_ratio, 1.0);
        assert_eq!(full.slack, 0.0);
    }

    #[test]
    fn tradeoff_nonuniform_slack() {
        // p = (0.1, 0.9): slack = (1 - 0.1) + 0.5 - 1 = 0.4.
        let norm = NormMatrix::identity(2);
        let audit = LinearSketchScheme::rotated_sparsifier(norm, Vector::from_vec(vec![0.1, 0.9]))
            .unwrap()
            .tradeoff_audit();
        assert_abs_diff_eq!(audit.slack, 0.4, epsilon = 1e-12);
        assert!(audit.satisfied);
    }

    #[test]
    fn optimal_sketch_shapes() {
        let norm = NormMatrix::identity(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = build_optimal_sketch(&norm, 1.0, &mut rng).unwrap();
        // q = 1 with B = I: the full rotation (identity here).
        assert_abs_diff_eq!(s, Matrix::identity(3, 3), epsilon = 1e-12);

        // With B = I each draw is a coordinate mask.
        let s = build_optimal_sketch(&norm, 0.5, &mut rng).unwrap();
        for j in 0..3 {
            let row = s.row(j);
            let is_zero = row.iter().all(|&v| v == 0.0);
            let is_unit = (row.norm() - 1.0).abs() <= 1e-12;
            assert!(is_zero || is_unit);
        }
        assert!(build_optimal_sketch(&norm, 0.0, &mut rng).is_err());
    }

    #[test]
    fn optimal_sketch_alpha_mc() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let norm = NormMatrix::new(&random_spd(3, &mut rng)).unwrap();
        let scheme = LinearSketchScheme::uniform_sparsifier(norm, 0.5).unwrap();
        let alpha = scheme.alpha_mc(100_000, &mut rng).unwrap();
        // lambda_min of the empirical mean concentrates at q = 0.5.
        assert!((alpha - 0.5).abs() <= 0.01, "{alpha}");
    }

    #[test]
    fn z_idempotent_and_trace_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let norm = NormMatrix::new(&random_spd(5, &mut rng)).unwrap();
            let rows = 1 + (rng.gen::<u32>() % 5) as usize;
            let s = Matrix::from_fn(rows, 5, |_, _| rng.gen::<f64>() - 0.5);
            let z = z_matrix(&s, &norm).unwrap();
            assert!(((&z * &z) - &z).norm() <= 1e-9, "Z not idempotent");
            assert!(
                (z.trace() - numerical_rank(&s) as f64).abs() <= 1e-8,
                "trace {} vs rank {}",
                z.trace(),
                numerical_rank(&s)
            );
            // The symmetric conjugate has the same trace.
            let zs = z_matrix_sym(&s, &norm).unwrap();
            assert!((zs.trace() - z.trace()).abs() <= 1e-8);
        }
    }

    #[test]
    fn adversarial_pair_indistinguishable() {
        // x and x^S = 2 x^{†B} - x produce the same message, and the decoder
        // error on the pair is at least |x^{†B} - x|_B.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let norm = NormMatrix::new(&random_spd(4, &mut rng)).unwrap();
            let s = Matrix::from_fn(2, 4, |_, _| rng.gen::<f64>() - 0.5);
            let mut x = Vector::from_fn(4, |_, _| rng.gen::<f64>() - 0.5);
            x /= norm.norm(&x);
            let xd = optimal_decode(&s, &norm, &(&s * &x)).unwrap();
            let xs = 2.0 * &xd - &x;
            assert!((&s * &xs - &s * &x).norm() <= 1e-9, "pair distinguishable");
            assert_abs_diff_eq!(norm.norm(&xs), 1.0, epsilon = 1e-9);
            // The minimax choice attains the midpoint error for both.
            let err = norm.norm(&(&xd - &x));
            let err2 = norm.norm(&(&xd - &xs));
            assert_abs_diff_eq!(err, err2, epsilon = 1e-9);
        }
    }

    #[test]
    fn entropy_bound_on_bits() {
        for qi in 1..=9 {
            let q = qi as f64 / 10.0;
            let (alpha, beta) = sparsifier_bits_audit(1000, q);
            assert!(
                alpha + beta <= 1.0 + binary_entropy(q) / 32.0 + 1e-12,
                "q = {q}: {} vs {}",
                alpha + beta,
                1.0 + binary_entropy(q) / 32.0
            );
            // And the linear lower bound still holds in the rank form.
            assert!(alpha + beta >= 1.0 - 1e-12);
        }
        let (alpha, beta) = sparsifier_bits_audit(100, 1.0);
        assert_eq!(alpha, 0.0);
        assert_abs_diff_eq!(beta, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_spd_norm() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(NormMatrix::new(&m), Err(Error::NotSpd { .. })));
    }
}
