//! Elementwise activations and their derivatives.

use crate::tensor::Scalar;

pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn sigmoid<F: Scalar>(a: F) -> F {
    F::one() / (F::one() + (-a).exp())
}

#[inline]
pub fn leaky_relu<F: Scalar>(a: F) -> F {
    if a > F::zero() {
        a
    } else {
        F::from_f64(LEAKY_SLOPE) * a
    }
}

/// Derivative of leaky-ReLU as a function of the pre-activation.
#[inline]
pub fn leaky_relu_grad<F: Scalar>(pre: F) -> F {
    if pre > F::zero() {
        F::one()
    } else {
        F::from_f64(LEAKY_SLOPE)
    }
}

pub fn sigmoid_vec<F: Scalar>(v: &[F]) -> Vec<F> {
    v.iter().map(|&a| sigmoid(a)).collect()
}

pub fn tanh_vec<F: Scalar>(v: &[F]) -> Vec<F> {
    v.iter().map(|&a| a.tanh()).collect()
}

/// Numerically stable softmax (max subtraction before exponentiation).
pub fn softmax<F: Scalar>(v: &[F]) -> Vec<F> {
    assert!(!v.is_empty(), "softmax of empty vector");
    let max = v.iter().copied().fold(v[0], F::max);
    let exps: Vec<F> = v.iter().map(|&a| (a - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
