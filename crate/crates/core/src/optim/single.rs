//! Single-node methods: sketched gradient descent, arbitrary-sampling
//! coordinate descent, and the matrix-aware proximal variant.
//!
//! These are pure one-step updates; step-size validity (`gamma <= 1/L̄` for
//! the sketched step, `gamma <= 1/(2 L̄)` for the proximal matrix-aware one)
//! is the caller's concern — [`crate::constants::skgd_gamma`] and
//! [`crate::constants::cgd_plus_gamma`] give the theory values, and
//! [`validate_skgd_step`] warns on violations.

use rand::Rng;

use crate::compress::Compressor;
use crate::constants::lbar_of;
use crate::optim::prox::{prox, Regularizer};
use crate::optim::Objective;
use crate::psd::SmoothnessMatrix;
use crate::sampling::Sampling;
use crate::{Result, Vector};

/// One sketched-gradient step `x' = x - gamma C grad f(x)`.
pub fn step_skgd<O: Objective, R: Rng + ?Sized>(
    obj: &O,
    x: &Vector,
    sampling: &Sampling,
    gamma: f64,
    rng: &mut R,
) -> Vector {
    let g = obj.grad(x);
    let cg = sampling.draw(rng).apply(&g);
    let mut out = x.clone();
    for j in 0..out.len() {
        out[j] -= gamma * cg[j];
    }
    out
}

/// Warns (log level `warn`) when `gamma` exceeds the sketched-step bound
/// `1/lambda_max(P̄ ∘ L)`; returns the bound.
pub fn validate_skgd_step(l: &SmoothnessMatrix, sampling: &Sampling, gamma: f64) -> Result<f64> {
    let bound = 1.0 / lbar_of(l, sampling)?;
    if gamma > bound * (1.0 + 1e-12) {
        log::warn!("step size {gamma} exceeds the sketched-gradient bound {bound}");
    }
    Ok(bound)
}

/// One arbitrary-sampling coordinate-descent step: coordinates in the drawn
/// set move by `-(1/v_j) grad_j f(x)`, the rest stay.
pub fn step_nsync<O: Objective, R: Rng + ?Sized>(
    obj: &O,
    x: &Vector,
    sampling: &Sampling,
    v: &Vector,
    rng: &mut R,
) -> Vector {
    let g = obj.grad(x);
    let sketch = sampling.draw(rng);
    let mut out = x.clone();
    for &j in sketch.support() {
        out[j] -= (1.0 / v[j]) * g[j];
    }
    out
}

/// One single-node matrix-aware proximal step
/// `x' = prox_{gamma R}(x - gamma L^{1/2} C L^{†1/2} grad f(x))`.
pub fn step_cgd_plus<O: Objective, R: Rng + ?Sized>(
    obj: &O,
    x: &Vector,
    compressor: &Compressor,
    gamma: f64,
    reg: &Regularizer,
    rng: &mut R,
) -> Result<Vector> {
    let g = obj.grad(x);
    let estimate = compressor.decompress(&compressor.compress(&g, rng)?)?;
    let mut inner = x.clone();
    for j in 0..inner.len() {
        inner[j] -= gamma * estimate[j];
    }
    Ok(prox(reg, gamma, &inner))
}

/// Quadratic objective `f(x) = 1/2 (x - c)' L (x - c)`, handy wherever a
/// controlled spectrum or an exact optimum is needed.
#[derive(Debug, Clone)]
pub struct Quadratic {
    matrix: SmoothnessMatrix,
    center: Vector,
}

impl Quadratic {
    pub fn new(matrix: SmoothnessMatrix, center: Vector) -> Self {
        assert_eq!(matrix.dim(), center.len());
        Self { matrix, center }
    }

    pub fn matrix(&self) -> &SmoothnessMatrix {
        &self.matrix
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let d = x - &self.center;
        0.5 * d.dot(&self.matrix.apply(&d))
    }

    fn grad(&self, x: &Vector) -> Vector {
        self.matrix.apply(&(x - &self.center))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::nsync_eso_params;
    use crate::optim::prox_gradient_solve;
    use crate::Matrix;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn quad(diag: &[f64], center: &[f64]) -> Quadratic {
        Quadratic::new(
            SmoothnessMatrix::from_diagonal(&Vector::from_vec(diag.to_vec())).unwrap(),
            Vector::from_vec(center.to_vec()),
        )
    }

    #[test]
    fn skgd_one_dim_exact() {
        // f = x^2 (L = 2), gamma = 1/2, full inclusion: one step to zero.
        let obj = quad(&[2.0], &[0.0]);
        let s = Sampling::independent(Vector::from_vec(vec![1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = step_skgd(&obj, &Vector::from_vec(vec![1.0]), &s, 0.5, &mut rng);
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn skgd_full_sampling_is_gradient_descent() {
        let obj = quad(&[2.0, 0.5, 1.0], &[1.0, -2.0, 0.3]);
        let s = Sampling::independent(Vector::repeat(3, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = Vector::from_vec(vec![0.2, 0.4, -0.8]);
        let gamma = 0.37;
        let stepped = step_skgd(&obj, &x0, &s, gamma, &mut rng);
        let mut manual = x0.clone();
        let g = obj.grad(&x0);
        for j in 0..3 {
            manual[j] -= gamma * g[j];
        }
        assert_eq!(stepped, manual);
    }

    #[test]
    fn skgd_serial_rate_mc() {
        // Serial sampling with p_j = L_jj / sum(L): the function gap contracts
        // at least by (1 - gamma mu) per step in expectation.
        let diag = [2.0, 0.5];
        let obj = quad(&diag, &[0.0, 0.0]);
        let total: f64 = diag.iter().sum();
        let s =
            Sampling::serial_weighted(Vector::from_vec(diag.iter().map(|&v| v / total).collect()))
                .unwrap();
        let lbar = lbar_of(obj.matrix(), &s).unwrap();
        let gamma = 1.0 / lbar;
        let mu = 0.5; // min eigenvalue
        let x0 = Vector::from_vec(vec![1.0, -1.0]);
        let f0 = obj.value(&x0);

        let runs = 10_000;
        let steps = 20;
        let mut mean_gap = vec![0.0_f64; steps + 1];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..runs {
            let mut x = x0.clone();
            mean_gap[0] += f0;
            for k in 1..=steps {
                x = step_skgd(&obj, &x, &s, gamma, &mut rng);
                mean_gap[k] += obj.value(&x);
            }
        }
        for g in &mut mean_gap {
            *g /= runs as f64;
        }
        let envelope = 1.0 - gamma * mu;
        for k in 0..steps {
            // 5% slack for Monte-Carlo noise.
            assert!(
                mean_gap[k + 1] <= envelope * mean_gap[k] * 1.05 + 1e-12,
                "step {k}: {} vs {}",
                mean_gap[k + 1],
                envelope * mean_gap[k]
            );
        }
    }

    #[test]
    fn nsync_full_sampling_matches_skgd_bitwise() {
        let obj = quad(&[2.0, 0.7], &[0.4, -0.1]);
        let lambda = obj.matrix().lambda_max();
        let s = Sampling::independent(Vector::repeat(2, 1.0)).unwrap();
        let v = Vector::repeat(2, lambda);
        let x0 = Vector::from_vec(vec![1.3, 0.9]);
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a = step_nsync(&obj, &x0, &s, &v, &mut r1);
        let b = step_skgd(&obj, &x0, &s, 1.0 / lambda, &mut r2);
        assert_eq!(a, b);
    }

    #[test]
    fn nsync_serial_coordinate_decrease() {
        // Separable quadratic: the drawn coordinate's exact minimization
        // decreases f.
        let obj = quad(&[3.0, 1.0], &[0.0, 0.0]);
        let s = Sampling::serial_weighted(Vector::from_vec(vec![0.75, 0.25])).unwrap();
        let v = obj.matrix().diag(); // v_j = L_jj for serial sampling
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = Vector::from_vec(vec![1.0, 1.0]);
        for _ in 0..10 {
            let next = step_nsync(&obj, &x, &s, &v, &mut rng);
            assert!(obj.value(&next) <= obj.value(&x) + 1e-15);
            x = next;
        }
    }

    #[test]
    fn nsync_mean_decrease_rate() {
        let obj = quad(&[2.0, 0.5], &[0.0, 0.0]);
        let s = Sampling::independent(Vector::from_vec(vec![0.6, 0.4])).unwrap();
        let v = nsync_eso_params(obj.matrix(), &s).unwrap();
        let factor = 1.0
            - (0..2)
                .map(|j| s.probs()[j] * 0.5 / v[j])
                .fold(f64::INFINITY, f64::min);
        let x0 = Vector::from_vec(vec![1.0, -1.0]);
        let runs = 20_000;
        let steps = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mean = vec![0.0_f64; steps + 1];
        for _ in 0..runs {
            let mut x = x0.clone();
            mean[0] += obj.value(&x);
            for k in 1..=steps {
                x = step_nsync(&obj, &x, &s, &v, &mut rng);
                mean[k] += obj.value(&x);
            }
        }
        for m in &mut mean {
            *m /= runs as f64;
        }
        for k in 0..steps {
            assert!(
                mean[k + 1] <= factor * mean[k] * 1.05 + 1e-12,
                "step {k}: {} vs {}",
                mean[k + 1],
                factor * mean[k]
            );
        }
    }

    #[test]
    fn cgd_plus_full_sampling_is_gradient_descent() {
        // With L = I the matrix-aware path multiplies by exact identities.
        let obj = quad(&[1.0, 1.0], &[0.7, -0.2]);
        let comp = Compressor::matrix_aware(
            Arc::new(SmoothnessMatrix::identity(2)),
            Sampling::independent(Vector::repeat(2, 1.0)).unwrap(),
        )
        .unwrap();
        let x0 = Vector::from_vec(vec![0.1, 0.2]);
        let gamma = 0.4;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let stepped =
            step_cgd_plus(&obj, &x0, &comp, gamma, &Regularizer::Zero, &mut rng).unwrap();
        let g = obj.grad(&x0);
        let mut manual = x0.clone();
        for j in 0..2 {
            manual[j] -= gamma * g[j];
        }
        assert_eq!(stepped, manual);
    }

    #[test]
    fn cgd_plus_interpolation_converges_linearly() {
        // grad f(x*) = 0: no neighborhood, plain linear convergence.
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
        let l = SmoothnessMatrix::new(&m).unwrap();
        let obj = Quadratic::new(l.clone(), Vector::from_vec(vec![1.0, -1.0]));
        let s = Sampling::independent(Vector::from_vec(vec![0.7, 0.7])).unwrap();
        let comp = Compressor::matrix_aware(Arc::new(l.clone()), s.clone()).unwrap();
        let gamma = crate::constants::cgd_plus_gamma(
            &crate::constants::RateConstants {
                l: l.lambda_max(),
                l_max: l.lambda_max(),
                ltilde_i: vec![],
                ltilde_max: 0.0,
                lbar: lbar_of(&l, &s).unwrap(),
                ltilde: 0.0,
                omega_i: vec![],
                omega_max: s.omega(),
                omega_master: f64::NAN,
                nu: 1.0,
                nu1: 1.0,
                nu2: 1.0,
                sigma_star: f64::NAN,
                diana_pp: None,
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = Vector::zeros(2);
        for _ in 0..6000 {
            x = step_cgd_plus(&obj, &x, &comp, gamma, &Regularizer::Zero, &mut rng).unwrap();
            if (&x - obj.center()).norm_squared() < 1e-8 {
                return;
            }
        }
        panic!(
            "no convergence: residual {}",
            (&x - obj.center()).norm_squared()
        );
    }

    #[test]
    fn cgd_plus_l1_neighborhood_bound() {
        // With an L1 term the optimum has grad f(x*) != 0 and the iterates
        // settle in the theory neighborhood 2 gamma L̃ |grad f(x*)|^2_{L†}/mu.
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let l = SmoothnessMatrix::new(&m).unwrap();
        let obj = Quadratic::new(l.clone(), Vector::from_vec(vec![1.5, -0.8]));
        let reg = Regularizer::L1(0.2);
        let gamma_ref = 1.0 / l.lambda_max();
        let (xstar, _) =
            prox_gradient_solve(&obj, &reg, gamma_ref, Vector::zeros(2), 1e-13, 1_000_000)
                .unwrap();
        let gstar = obj.grad(&xstar);

        let s = Sampling::independent(Vector::from_vec(vec![0.6, 0.8])).unwrap();
        let comp = Compressor::matrix_aware(Arc::new(l.clone()), s.clone()).unwrap();
        let lbar = lbar_of(&l, &s).unwrap();
        let ltilde = crate::constants::expected_smoothness(&l, &s).unwrap();
        let gamma = 1.0 / (2.0 * lbar);
        let mu = l.eigenvalues()[1]; // smallest eigenvalue, both positive here
        let bound = 2.0 * gamma * ltilde * l.pinv_quadratic(&gstar) / mu;

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let runs = 300;
        let steps = 2500;
        let mut acc = 0.0;
        for _ in 0..runs {
            let mut x = xstar.clone();
            for _ in 0..steps {
                x = step_cgd_plus(&obj, &x, &comp, gamma, &reg, &mut rng).unwrap();
            }
            acc += (&x - &xstar).norm_squared();
        }
        let mean = acc / runs as f64;
        assert!(mean <= bound * 1.5, "stationary {mean} vs bound {bound}");
    }

    #[test]
    fn quadratic_center_is_solution() {
        let obj = quad(&[2.0, 1.0], &[3.0, -4.0]);
        let (x, f) = prox_gradient_solve(
            &obj,
            &Regularizer::Zero,
            0.5,
            Vector::zeros(2),
            1e-12,
            100_000,
        )
        .unwrap();
        assert_abs_diff_eq!(x, Vector::from_vec(vec![3.0, -4.0]), epsilon = 1e-9);
        assert!(f.abs() <= 1e-15);
    }
}
