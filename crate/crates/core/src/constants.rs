//! Rate constants and theory step sizes.
//!
//! Everything the step-size rules need is collected into [`RateConstants`]:
//! the smoothness constants `L`, `L_max`, the expected smoothness constants
//! `L̃_i = lambda_max(P̃_i ∘ L_i)` coupling each node's sampling with its
//! smoothness matrix, compression variances, the distribution parameters
//! `nu`, `nu_1`, `nu_2`, the optimum-gradient constant `sigma*`, and the
//! bi-directional-compression constants.

use crate::error::{Error, Result};
use crate::problem::DistributedProblem;
use crate::psd::{hadamard, lambda_max_of, SmoothnessMatrix};
use crate::sampling::{Sampling, SamplingKind};
use crate::{Matrix, Vector};

/// Method selector shared by the step-size rules and the run driver.
/// The `Plus` variants use matrix-aware sparsification; the plain ones are
/// the standard-sparsifier baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Dcgd,
    DcgdPlus,
    Diana,
    DianaPlus,
    Adiana,
    AdianaPlus,
    IsegaPlus,
    DianaPp,
}

impl MethodKind {
    pub fn is_matrix_aware(&self) -> bool {
        !matches!(self, MethodKind::Dcgd | MethodKind::Diana | MethodKind::Adiana)
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Dcgd => "dcgd",
            MethodKind::DcgdPlus => "dcgd+",
            MethodKind::Diana => "diana",
            MethodKind::DianaPlus => "diana+",
            MethodKind::Adiana => "adiana",
            MethodKind::AdianaPlus => "adiana+",
            MethodKind::IsegaPlus => "isega+",
            MethodKind::DianaPp => "diana++",
        }
    }
}

/// Constants specific to bi-directional compression.
#[derive(Debug, Clone, Copy)]
pub struct DianaPpConstants {
    /// `max_i lambda_max(P̃_i ∘ (L_i^{1/2} L^† L_i^{1/2}))`.
    pub ltilde_prime_max: f64,
    /// `theta = n L̃ / (L̃_max + 2 L̃ L̃'_max)`; zero when the master does not
    /// compress.
    pub theta: f64,
    /// `theta' = (2 theta / n) L̃'_max <= 1`.
    pub theta_prime: f64,
}

/// Every constant appearing in the rate statements.
#[derive(Debug, Clone)]
pub struct RateConstants {
    /// `lambda_max` of the global smoothness matrix.
    pub l: f64,
    /// `max_i lambda_max(L_i)`.
    pub l_max: f64,
    /// Per-node expected smoothness `L̃_i`.
    pub ltilde_i: Vec<f64>,
    pub ltilde_max: f64,
    /// `lambda_max(P̄ ∘ L)` for the master/single-node sampling (NaN without one).
    pub lbar: f64,
    /// `lambda_max(P̃ ∘ L)` for the master/single-node sampling (NaN without one).
    pub ltilde: f64,
    pub omega_i: Vec<f64>,
    pub omega_max: f64,
    /// Variance of the master sketch (NaN without one).
    pub omega_master: f64,
    /// `sum_i L_i / max_i L_i`, in `[1, n]`.
    pub nu: f64,
    /// `max_i sum_j L_{i;jj} / max_j L_{i;jj}`, in `[1, d]`.
    pub nu1: f64,
    /// Same with square roots of the diagonal entries.
    pub nu2: f64,
    /// `(1/n) sum_i L̃_i |grad f_i(x*)|^2_{L_i^†}` (NaN without `x*`).
    pub sigma_star: f64,
    pub diana_pp: Option<DianaPpConstants>,
}

/// Theory parameters per method, evaluated at the theorem's bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodParams {
    /// DCGD/DCGD+ and the plain gradient-style step.
    Dcgd { gamma: f64 },
    /// DIANA/DIANA+ shift-tracking step.
    Diana { gamma: f64, alpha: f64 },
    /// ADIANA/ADIANA+ accelerated step.
    Adiana {
        eta: f64,
        gamma: f64,
        beta: f64,
        alpha: f64,
        theta1: f64,
        theta2: f64,
        q: f64,
    },
    /// ISEGA+ projection-style shift update.
    Isega { gamma: f64 },
    /// DIANA++ bi-directional compression.
    DianaPp { gamma: f64, alpha: f64, beta: f64 },
}

impl MethodParams {
    pub fn gamma(&self) -> f64 {
        match *self {
            MethodParams::Dcgd { gamma }
            | MethodParams::Diana { gamma, .. }
            | MethodParams::Isega { gamma }
            | MethodParams::DianaPp { gamma, .. } => gamma,
            MethodParams::Adiana { eta, .. } => eta,
        }
    }
}

/// `L̃ = lambda_max(P̃ ∘ L)`: the expected-smoothness constant coupling a
/// sampling with a smoothness matrix. For independent samplings this is the
/// closed form `max_j (1/p_j - 1) L_{jj}`.
pub fn expected_smoothness(l: &SmoothnessMatrix, s: &Sampling) -> Result<f64> {
    check_dims(l.dim(), s.dim())?;
    match s.kind() {
        SamplingKind::FullDeterministic => Ok(0.0),
        SamplingKind::Independent => {
            let diag = l.diag();
            Ok(s.probs()
                .iter()
                .zip(diag.iter())
                .map(|(&p, &lj)| (1.0 / p - 1.0) * lj)
                .fold(0.0_f64, f64::max))
        }
        SamplingKind::SerialWeighted => {
            let m = hadamard(&s.probability_matrices().ptilde, &l.to_dense())?;
            lambda_max_of(&m)
        }
    }
}

/// Same as [`expected_smoothness`] but via the dense Hadamard product and an
/// eigensolve, with no independent-sampling shortcut. The two routes must
/// agree; tests hold them to that.
pub fn expected_smoothness_dense(l: &Matrix, s: &Sampling) -> Result<f64> {
    check_dims(l.nrows(), s.dim())?;
    let m = hadamard(&s.probability_matrices().ptilde, l)?;
    lambda_max_of(&m)
}

/// `L̄ = lambda_max(P̄ ∘ L)`.
pub fn lbar_of(l: &SmoothnessMatrix, s: &Sampling) -> Result<f64> {
    check_dims(l.dim(), s.dim())?;
    match s.kind() {
        SamplingKind::FullDeterministic => Ok(l.lambda_max()),
        SamplingKind::SerialWeighted => {
            // P̄ is diagonal: P̄ ∘ L = diag(L_jj / p_j).
            let diag = l.diag();
            Ok(diag
                .iter()
                .zip(s.probs().iter())
                .map(|(&lj, &p)| lj / p)
                .fold(0.0_f64, f64::max))
        }
        SamplingKind::Independent => {
            let m = hadamard(&s.probability_matrices().pbar, &l.to_dense())?;
            lambda_max_of(&m)
        }
    }
}

/// ESO parameters `v_j = lambda_max(P̄ ∘ L) p_j`, satisfying
/// `P ∘ L ⪯ Diag(p ∘ v)`.
pub fn nsync_eso_params(l: &SmoothnessMatrix, s: &Sampling) -> Result<Vector> {
    let lambda = lbar_of(l, s)?;
    Ok(s.probs().map(|p| lambda * p))
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch { left: a, right: b });
    }
    Ok(())
}

/// Computes all rate constants for a problem, per-node samplings, and an
/// optional master sampling / reference solution.
pub fn compute_constants(
    dp: &DistributedProblem,
    samplings: &[Sampling],
    master_sampling: Option<&Sampling>,
    xstar: Option<&Vector>,
) -> Result<RateConstants> {
    let n = dp.n();
    if samplings.len() != n {
        return Err(Error::DimMismatch {
            left: samplings.len(),
            right: n,
        });
    }

    let l = dp.matrix().lambda_max();
    let node_lmax: Vec<f64> = dp.nodes().iter().map(|p| p.matrix().lambda_max()).collect();
    let l_max = node_lmax.iter().cloned().fold(0.0_f64, f64::max);

    let mut ltilde_i = Vec::with_capacity(n);
    let mut omega_i = Vec::with_capacity(n);
    for (node, s) in dp.nodes().iter().zip(samplings) {
        ltilde_i.push(expected_smoothness(node.matrix(), s)?);
        omega_i.push(s.omega());
    }
    let ltilde_max = ltilde_i.iter().cloned().fold(0.0_f64, f64::max);
    let omega_max = omega_i.iter().cloned().fold(0.0_f64, f64::max);

    let (lbar, ltilde, omega_master) = match master_sampling {
        Some(s) => (
            lbar_of(dp.matrix(), s)?,
            expected_smoothness(dp.matrix(), s)?,
            s.omega(),
        ),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };

    let nu = node_lmax.iter().sum::<f64>() / l_max;
    let (nu1, nu2) = distribution_parameters(dp);

    let sigma_star = match xstar {
        Some(x) => {
            let mut acc = 0.0;
            for (node, lt) in dp.nodes().iter().zip(&ltilde_i) {
                let g = node.grad(x);
                acc += lt * node.matrix().pinv_quadratic(&g);
            }
            acc / n as f64
        }
        None => f64::NAN,
    };

    let diana_pp = match master_sampling {
        Some(_) => Some(diana_pp_constants(dp, samplings, ltilde_max, ltilde)?),
        None => None,
    };

    Ok(RateConstants {
        l,
        l_max,
        ltilde_i,
        ltilde_max,
        lbar,
        ltilde,
        omega_i,
        omega_max,
        omega_master,
        nu,
        nu1,
        nu2,
        sigma_star,
        diana_pp,
    })
}

fn distribution_parameters(dp: &DistributedProblem) -> (f64, f64) {
    let mut nu1 = 1.0_f64;
    let mut nu2 = 1.0_f64;
    for node in dp.nodes() {
        let diag = node.matrix().diag();
        let sum1: f64 = diag.iter().sum();
        let max1 = diag.iter().cloned().fold(0.0_f64, f64::max);
        if max1 > 0.0 {
            nu1 = nu1.max(sum1 / max1);
        }
        let sum2: f64 = diag.iter().map(|&v| v.sqrt()).sum();
        let max2 = diag.iter().map(|&v| v.sqrt()).fold(0.0_f64, f64::max);
        if max2 > 0.0 {
            nu2 = nu2.max(sum2 / max2);
        }
    }
    (nu1, nu2)
}

fn diana_pp_constants(
    dp: &DistributedProblem,
    samplings: &[Sampling],
    ltilde_max: f64,
    ltilde: f64,
) -> Result<DianaPpConstants> {
    // L^† of the global matrix.
    let ps = dp.matrix().pinv_sqrt_matrix();
    let global_pinv = &ps * &ps;
    let mut ltilde_prime_max = 0.0_f64;
    for (node, s) in dp.nodes().iter().zip(samplings) {
        let half = node.matrix().sqrt_matrix();
        let m = &half * &global_pinv * &half;
        let lt = match s.kind() {
            SamplingKind::FullDeterministic => 0.0,
            SamplingKind::Independent => s
                .probs()
                .iter()
                .enumerate()
                .map(|(j, &p)| (1.0 / p - 1.0) * m[(j, j)])
                .fold(0.0_f64, f64::max),
            SamplingKind::SerialWeighted => {
                lambda_max_of(&hadamard(&s.probability_matrices().ptilde, &m)?)?
            }
        };
        ltilde_prime_max = ltilde_prime_max.max(lt);
    }
    // No master compression: theta and theta' vanish and the variance
    // process reduces to the one-sided case.
    let (theta, theta_prime) = if ltilde == 0.0 {
        (0.0, 0.0)
    } else {
        let theta = dp.n() as f64 * ltilde / (ltilde_max + 2.0 * ltilde * ltilde_prime_max);
        (theta, 2.0 * theta * ltilde_prime_max / dp.n() as f64)
    };
    Ok(DianaPpConstants {
        ltilde_prime_max,
        theta,
        theta_prime,
    })
}

/// Theory step size / parameter set for a method, at the theorem's upper
/// bound.
pub fn stepsize(method: MethodKind, rc: &RateConstants, mu: f64, n: usize) -> Result<MethodParams> {
    stepsize_with_factor(method, rc, mu, n, 1.0)
}

/// Same with a practicality multiplier applied to the primal step (1.0 keeps
/// strict theory values).
pub fn stepsize_with_factor(
    method: MethodKind,
    rc: &RateConstants,
    mu: f64,
    n: usize,
    factor: f64,
) -> Result<MethodParams> {
    if factor <= 0.0 {
        return Err(Error::invalid("step-size factor must be positive"));
    }
    let nf = n as f64;
    // Baselines replace the matrix-aware constant with omega_max * L_max.
    let effective_ltilde = |matrix_aware: bool| -> f64 {
        if matrix_aware {
            rc.ltilde_max
        } else {
            rc.omega_max * rc.l_max
        }
    };
    let check = |v: f64, what: &'static str| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::MissingConstant(what))
        }
    };

    match method {
        MethodKind::Dcgd | MethodKind::DcgdPlus => {
            let lt = check(effective_ltilde(method.is_matrix_aware()), "ltilde_max")?;
            let gamma = factor / (rc.l + 2.0 / nf * lt);
            Ok(MethodParams::Dcgd { gamma })
        }
        MethodKind::Diana | MethodKind::DianaPlus => {
            let lt = check(effective_ltilde(method.is_matrix_aware()), "ltilde_max")?;
            let gamma = factor / (rc.l + 6.0 / nf * lt);
            let alpha = 1.0 / (1.0 + rc.omega_max);
            Ok(MethodParams::Diana { gamma, alpha })
        }
        MethodKind::Adiana | MethodKind::AdianaPlus => {
            let lt = check(effective_ltilde(method.is_matrix_aware()), "ltilde_max")?;
            let omega = rc.omega_max;
            let alpha = 1.0 / (1.0 + omega);
            let q = (((nf * rc.l / (32.0 * lt)).sqrt() - 1.0).max(1.0) / (2.0 * (1.0 + omega)))
                .min(1.0);
            let cap = 2.0 * q * (omega + 1.0) + 1.0;
            let eta = factor * (1.0 / (2.0 * rc.l)).min(nf / (64.0 * lt * cap * cap));
            let theta1 = 0.25_f64.min((eta * mu / q).sqrt());
            let theta2 = 0.5;
            let gamma = eta / (2.0 * (theta1 + eta * mu));
            let beta = 1.0 - gamma * mu;
            Ok(MethodParams::Adiana {
                eta,
                gamma,
                beta,
                alpha,
                theta1,
                theta2,
                q,
            })
        }
        MethodKind::IsegaPlus => {
            let gamma = factor / (4.0 * rc.ltilde_max / nf + 2.0 * rc.l + mu * (rc.omega_max + 1.0));
            Ok(MethodParams::Isega { gamma })
        }
        MethodKind::DianaPp => {
            let ltilde = check(rc.ltilde, "master ltilde")?;
            let omega_master = check(rc.omega_master, "master omega")?;
            let alpha = 1.0 / (1.0 + rc.omega_max);
            if ltilde == 0.0 {
                // Uncompressed master: exactly the one-sided parameters.
                let gamma = factor / (rc.l + 6.0 / nf * rc.ltilde_max);
                let beta = 1.0 / (1.0 + omega_master);
                return Ok(MethodParams::DianaPp { gamma, alpha, beta });
            }
            let cc = rc
                .diana_pp
                .as_ref()
                .ok_or(Error::MissingConstant("diana_pp constants"))?;
            // beta may always be decreased; keep the contraction
            // rho = min(alpha - beta theta', beta) positive.
            let mut beta = 1.0 / (1.0 + omega_master);
            if cc.theta_prime > 0.0 {
                beta = beta.min(alpha / (2.0 * cc.theta_prime));
            }
            let a = rc.l
                + 2.0 * ltilde
                + 4.0 * ltilde * cc.ltilde_prime_max / nf
                + 2.0 * rc.ltilde_max / nf;
            let b = 4.0 * ltilde * cc.ltilde_prime_max / nf + 2.0 * rc.ltilde_max / nf;
            let c = alpha + beta * cc.theta + beta * cc.theta_prime;
            let rho = (alpha - beta * cc.theta_prime).min(beta);
            let m = 2.0 * b / rho;
            let gamma = factor / (a + c * m);
            Ok(MethodParams::DianaPp { gamma, alpha, beta })
        }
    }
}

/// Theory step for the single-node sketched step: `gamma = 1/L̄`.
pub fn skgd_gamma(rc: &RateConstants) -> Result<f64> {
    if rc.lbar.is_finite() {
        Ok(1.0 / rc.lbar)
    } else {
        Err(Error::MissingConstant("lbar"))
    }
}

/// Theory step for the single-node matrix-aware proximal step:
/// `gamma = 1/(2 L̄)`.
pub fn cgd_plus_gamma(rc: &RateConstants) -> Result<f64> {
    if rc.lbar.is_finite() {
        Ok(1.0 / (2.0 * rc.lbar))
    } else {
        Err(Error::MissingConstant("lbar"))
    }
}
