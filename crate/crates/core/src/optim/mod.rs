//! Iterative methods as deterministic simulated server/node loops.
//!
//! Single-node steppers live in [`single`]; the distributed family
//! (DCGD/DCGD+, DIANA/DIANA+, ADIANA/ADIANA+, ISEGA+, DIANA++) in
//! [`methods`]; the multi-seed run driver and trace capture in [`driver`].

pub mod driver;
pub mod methods;
pub mod prox;
pub mod rng;
pub mod single;

pub use driver::{run, run_mean, MethodKind, RunConfig, RunTrace, TraceRow};
pub use methods::{AdianaPlus, DcgdPlus, DianaPlus, DianaPp, IsegaPlus, NodeState, StepStats};
pub use prox::{prox, Regularizer};
pub use single::{step_cgd_plus, step_nsync, step_skgd, Quadratic};

use crate::Vector;

/// A differentiable objective the optimizers can query.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
}

/// Plain proximal gradient descent: `x <- prox_{gamma R}(x - gamma grad f(x))`
/// until the prox-gradient residual `|x - prox_{gamma R}(x - gamma grad)|`
/// drops below `tol`. Returns the minimizer and its objective value.
pub fn prox_gradient_solve<O: Objective>(
    obj: &O,
    reg: &Regularizer,
    gamma: f64,
    x0: Vector,
    tol: f64,
    max_iters: usize,
) -> crate::Result<(Vector, f64)> {
    let mut x = x0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let g = obj.grad(&x);
        let next = prox(reg, gamma, &(&x - gamma * &g));
        residual = (&next - &x).norm();
        x = next;
        if !residual.is_finite() {
            return Err(crate::Error::NonFinite("proximal gradient iterate"));
        }
        if residual <= tol {
            let value = obj.value(&x) + reg.value(&x);
            return Ok((x, value));
        }
    }
    Err(crate::Error::NoConvergence {
        max_iters,
        residual,
    })
}
