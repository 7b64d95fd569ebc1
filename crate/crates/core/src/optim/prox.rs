//! Proximal operators for the supported regularizers.

use crate::Vector;

/// The composite term `R` in `min f(x) + R(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    Zero,
    /// `R(x) = lambda * |x|_1`.
    L1(f64),
}

impl Regularizer {
    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1(lambda) => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Regularizer::Zero)
    }
}

/// `prox_{gamma R}(v) = argmin_u R(u) + (1/(2 gamma)) |u - v|^2`.
///
/// `Zero` returns `v` unchanged (same allocation semantics as L1 for
/// call-site uniformity); `L1` soft-thresholds componentwise by
/// `gamma * lambda`.
pub fn prox(reg: &Regularizer, gamma: f64, v: &Vector) -> Vector {
    match reg {
        Regularizer::Zero => v.clone(),
        Regularizer::L1(lambda) => {
            let t = gamma * lambda;
            v.map(|x| {
                if x > t {
                    x - t
                } else if x < -t {
                    x + t
                } else {
                    0.0
                }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_identity() {
        let v = Vector::from_vec(vec![2.0, -0.5]);
        assert_eq!(prox(&Regularizer::Zero, 0.7, &v), v);
    }

    #[test]
    fn soft_threshold() {
        let v = Vector::from_vec(vec![2.0, -0.5]);
        assert_eq!(
            prox(&Regularizer::L1(1.0), 1.0, &v),
            Vector::from_vec(vec![1.0, 0.0])
        );
    }

    #[test]
    fn small_entries_vanish() {
        let v = Vector::from_vec(vec![0.3, -0.2, 0.05]);
        let out = prox(&Regularizer::L1(0.5), 1.0, &v);
        assert_eq!(out, Vector::zeros(3));
    }
}
