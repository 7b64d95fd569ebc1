//! Symmetric positive-semidefinite matrix machinery.
//!
//! [`SmoothnessMatrix`] wraps a PSD matrix `L` together with its spectral
//! factorization and the derived operators `L^{1/2}` and `L^{†1/2}` (square
//! root of the Moore-Penrose pseudoinverse). A diagonal fast path is selected
//! automatically when the off-diagonal mass is exactly zero: only the `d`
//! diagonal entries are stored and all applies run in `O(d)`.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Relative threshold below which eigenvalues are treated as zero in the
/// pseudo-inverse.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Relative symmetry tolerance: entries may disagree by `1e-8 * max|entry|`.
pub const SYM_TOL_REL: f64 = 1e-8;
/// Relative PSD tolerance: eigenvalues in `[-1e-8 * lambda_max, 0)` are
/// clamped to zero, anything lower is an error.
pub const PSD_TOL_REL: f64 = 1e-8;

#[derive(Debug, Clone)]
enum Repr {
    /// Off-diagonal mass is exactly zero; stores only the diagonal.
    Diagonal {
        diag: Vector,
        sqrt_diag: Vector,
        pinv_sqrt_diag: Vector,
    },
    Dense {
        entries: Matrix,
        /// Eigenvalues sorted nonincreasing, clamped to `>= 0`.
        eigenvalues: Vector,
        /// Orthogonal; column `k` pairs with `eigenvalues[k]`.
        eigenvectors: Matrix,
        sqrt: Matrix,
        pinv_sqrt: Matrix,
    },
}

/// A PSD matrix with cached spectral factorization, `L^{1/2}`, `L^{†1/2}`,
/// numerical rank and largest eigenvalue.
///
/// Immutable after construction; safe to share across concurrent readers.
#[derive(Debug, Clone)]
pub struct SmoothnessMatrix {
    dim: usize,
    lambda_max: f64,
    rank: usize,
    rank_tol: f64,
    repr: Repr,
}

/// Builds a [`SmoothnessMatrix`] from a dense symmetric matrix.
///
/// The input is symmetrized as `(A + Aᵀ)/2` before factorizing, which guards
/// against floating-point asymmetry in `AᵀA` products. Eigenvalues below
/// `rank_tol * lambda_max` are treated as exactly zero in `L^{†1/2}`.
pub fn build_psd(entries: &Matrix, rank_tol: f64) -> Result<SmoothnessMatrix> {
    SmoothnessMatrix::with_rank_tol(entries, rank_tol)
}

impl SmoothnessMatrix {
    /// `build_psd` with the default rank tolerance.
    pub fn new(entries: &Matrix) -> Result<Self> {
        Self::with_rank_tol(entries, DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(entries: &Matrix, rank_tol: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimMismatch {
                left: entries.nrows(),
                right: entries.ncols(),
            });
        }
        let d = entries.nrows();
        if d == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        check_symmetric(entries)?;

        // Diagonal fast path: off-diagonal mass exactly zero.
        if is_diagonal(entries) {
            return Self::from_diagonal_with_tol(&Vector::from_fn(d, |j, _| entries[(j, j)]), rank_tol);
        }

        let sym = symmetrize(entries);
        let eig = SymmetricEigen::new(sym.clone());
        let (eigenvalues, eigenvectors) = sort_descending(eig.eigenvalues, eig.eigenvectors);

        let lambda_max = eigenvalues[0].max(0.0);
        let psd_tol = PSD_TOL_REL * lambda_max;
        let lambda_min = eigenvalues[d - 1];
        if lambda_min < -psd_tol {
            return Err(Error::NotPsd {
                eigenvalue: lambda_min,
                tol: psd_tol,
            });
        }
        // Eigenvalues below the rank threshold are treated as exactly zero in
        // both factors, so that L^{1/2} and L^{†1/2} share the same support.
        let zero_tol = rank_tol * lambda_max;
        let eigenvalues = eigenvalues.map(|v| if v > zero_tol { v } else { 0.0 });
        let rank = eigenvalues.iter().filter(|&&v| v > 0.0).count();

        let sqrt = scaled_gram(&eigenvectors, &eigenvalues.map(f64::sqrt));
        let pinv_sqrt = scaled_gram(
            &eigenvectors,
            &eigenvalues.map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }),
        );

        Ok(Self {
            dim: d,
            lambda_max,
            rank,
            rank_tol,
            repr: Repr::Dense {
                entries: sym,
                eigenvalues,
                eigenvectors,
                sqrt,
                pinv_sqrt,
            },
        })
    }

    /// Builds the diagonal representation directly from diagonal entries.
    pub fn from_diagonal(diag: &Vector) -> Result<Self> {
        Self::from_diagonal_with_tol(diag, DEFAULT_RANK_TOL)
    }

    pub fn from_diagonal_with_tol(diag: &Vector, rank_tol: f64) -> Result<Self> {
        let d = diag.len();
        if d == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        let lambda_max = diag.iter().cloned().fold(0.0_f64, f64::max);
        let psd_tol = PSD_TOL_REL * lambda_max;
        if let Some(&bad) = diag.iter().find(|&&v| v < -psd_tol) {
            return Err(Error::NotPsd {
                eigenvalue: bad,
                tol: psd_tol,
            });
        }
        let zero_tol = rank_tol * lambda_max;
        let diag = diag.map(|v| if v > zero_tol { v } else { 0.0 });
        let rank = diag.iter().filter(|&&v| v > 0.0).count();
        let sqrt_diag = diag.map(f64::sqrt);
        let pinv_sqrt_diag = diag.map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
        Ok(Self {
            dim: d,
            lambda_max,
            rank,
            rank_tol,
            repr: Repr::Diagonal {
                diag,
                sqrt_diag,
                pinv_sqrt_diag,
            },
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&Vector::repeat(dim, 1.0)).expect("identity is PSD")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Relative threshold under which eigenvalues were zeroed.
    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.repr, Repr::Diagonal { .. })
    }

    /// Eigenvalues sorted nonincreasing (clamped to `>= 0`).
    pub fn eigenvalues(&self) -> Vector {
        match &self.repr {
            Repr::Diagonal { diag, .. } => {
                let mut v: Vec<f64> = diag.iter().cloned().collect();
                v.sort_by(|a, b| b.partial_cmp(a).unwrap());
                Vector::from_vec(v)
            }
            Repr::Dense { eigenvalues, .. } => eigenvalues.clone(),
        }
    }

    /// Diagonal entries `L_{jj}` (curvature per coordinate).
    pub fn diag(&self) -> Vector {
        match &self.repr {
            Repr::Diagonal { diag, .. } => diag.clone(),
            Repr::Dense { entries, .. } => Vector::from_fn(self.dim, |j, _| entries[(j, j)]),
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        match &self.repr {
            Repr::Diagonal { diag, .. } => {
                if row == col {
                    diag[row]
                } else {
                    0.0
                }
            }
            Repr::Dense { entries, .. } => entries[(row, col)],
        }
    }

    /// Materializes the dense matrix (the symmetrized `L`).
    pub fn to_dense(&self) -> Matrix {
        match &self.repr {
            Repr::Diagonal { diag, .. } => Matrix::from_diagonal(diag),
            Repr::Dense { entries, .. } => entries.clone(),
        }
    }

    pub fn sqrt_matrix(&self) -> Matrix {
        match &self.repr {
            Repr::Diagonal { sqrt_diag, .. } => Matrix::from_diagonal(sqrt_diag),
            Repr::Dense { sqrt, .. } => sqrt.clone(),
        }
    }

    pub fn pinv_sqrt_matrix(&self) -> Matrix {
        match &self.repr {
            Repr::Diagonal { pinv_sqrt_diag, .. } => Matrix::from_diagonal(pinv_sqrt_diag),
            Repr::Dense { pinv_sqrt, .. } => pinv_sqrt.clone(),
        }
    }

    /// `L v`.
    pub fn apply(&self, v: &Vector) -> Vector {
        match &self.repr {
            Repr::Diagonal { diag, .. } => diag.component_mul(v),
            Repr::Dense { entries, .. } => entries * v,
        }
    }

    /// `L^{1/2} v`.
    pub fn apply_sqrt(&self, v: &Vector) -> Vector {
        match &self.repr {
            Repr::Diagonal { sqrt_diag, .. } => sqrt_diag.component_mul(v),
            Repr::Dense { sqrt, .. } => sqrt * v,
        }
    }

    /// `L^{†1/2} v`.
    pub fn apply_pinv_sqrt(&self, v: &Vector) -> Vector {
        match &self.repr {
            Repr::Diagonal { pinv_sqrt_diag, .. } => pinv_sqrt_diag.component_mul(v),
            Repr::Dense { pinv_sqrt, .. } => pinv_sqrt * v,
        }
    }

    /// Column `j` of `L^{1/2}`, used for sparse decompression.
    pub(crate) fn sqrt_column_axpy(&self, j: usize, scale: f64, out: &mut Vector) {
        match &self.repr {
            Repr::Diagonal { sqrt_diag, .. } => out[j] += scale * sqrt_diag[j],
            Repr::Dense { sqrt, .. } => {
                let col = sqrt.column(j);
                for (o, c) in out.iter_mut().zip(col.iter()) {
                    *o += scale * c;
                }
            }
        }
    }

    /// Weighted squared norm `‖v‖²_{L†} = ‖L^{†1/2} v‖²`.
    pub fn pinv_quadratic(&self, v: &Vector) -> f64 {
        self.apply_pinv_sqrt(v).norm_squared()
    }

    /// Orthogonal projection of `v` onto `range(L)` (idempotent).
    pub fn project_onto_range(&self, v: &Vector) -> Vector {
        match &self.repr {
            Repr::Diagonal { diag, .. } => {
                Vector::from_fn(self.dim, |j, _| if diag[j] > 0.0 { v[j] } else { 0.0 })
            }
            Repr::Dense { eigenvectors, .. } => {
                if self.rank == self.dim {
                    return v.clone();
                }
                let qr = eigenvectors.columns(0, self.rank);
                &qr * (qr.transpose() * v)
            }
        }
    }

    /// Distance from `v` to `range(L)`; zero for full-rank matrices.
    pub fn range_distance(&self, v: &Vector) -> f64 {
        if self.rank == self.dim {
            return 0.0;
        }
        (v - self.project_onto_range(v)).norm()
    }
}

/// Hadamard (element-wise) product `C_{jl} = A_{jl} B_{jl}`.
pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimMismatch {
            left: a.nrows().max(a.ncols()),
            right: b.nrows().max(b.ncols()),
        });
    }
    Ok(a.component_mul(b))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max_of(a: &Matrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(a)?[0])
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min_of(a: &Matrix) -> Result<f64> {
    let eigs = symmetric_eigenvalues(a)?;
    Ok(eigs[eigs.len() - 1])
}

/// All eigenvalues of a symmetric matrix, sorted nonincreasing.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vector> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimMismatch {
            left: a.nrows(),
            right: a.ncols(),
        });
    }
    check_symmetric(a)?;
    let mut eigs: Vec<f64> = SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(Vector::from_vec(eigs))
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    let max_entry = a.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let tol = SYM_TOL_REL * max_entry;
    let mut max_asym = 0.0_f64;
    for j in 0..a.nrows() {
        for l in (j + 1)..a.ncols() {
            max_asym = max_asym.max((a[(j, l)] - a[(l, j)]).abs());
        }
    }
    if max_asym > tol {
        return Err(Error::NotSymmetric { max_asym, tol });
    }
    Ok(())
}

fn is_diagonal(a: &Matrix) -> bool {
    for j in 0..a.nrows() {
        for l in 0..a.ncols() {
            if j != l && a[(j, l)] != 0.0 {
                return false;
            }
        }
    }
    true
}

fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

fn sort_descending(eigenvalues: Vector, eigenvectors: Matrix) -> (Vector, Matrix) {
    let d = eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eigenvalues[j].partial_cmp(&eigenvalues[i]).unwrap());
    let sorted_vals = Vector::from_fn(d, |k, _| eigenvalues[order[k]]);
    let mut sorted_vecs = Matrix::zeros(d, d);
    for (k, &idx) in order.iter().enumerate() {
        sorted_vecs.set_column(k, &eigenvectors.column(idx));
    }
    (sorted_vals, sorted_vecs)
}

/// `Q diag(w) Qᵀ` for orthogonal `Q`.
fn scaled_gram(q: &Matrix, weights: &Vector) -> Matrix {
    let mut scaled = q.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= weights[k];
    }
    &scaled * q.transpose()
}
