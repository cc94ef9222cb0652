//! Central finite differences over named parameter tensors.
//!
//! This is the independent oracle every analytic backward pass is checked
//! against; it never touches the backward code itself.

use crate::error::{Error, Result};
use crate::nn::conv::ConvParams;
use crate::nn::dense::DenseParams;
use crate::nn::gru::GruParams;
use crate::tensor::Scalar;

/// Uniform access to a parameter collection as named flat tensors. The
/// enumeration order is fixed per type; gradients, optimizer state, and
/// checkpoint manifests all rely on it.
pub trait ParamTensors<F> {
    fn tensors(&self) -> Vec<(String, &[F])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [F])>;
}

impl<F: Scalar> ParamTensors<F> for DenseParams<F> {
    fn tensors(&self) -> Vec<(String, &[F])> {
        vec![("w".into(), self.w.data()), ("b".into(), self.b.as_slice())]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [F])> {
        vec![("w".into(), self.w.data_mut()), ("b".into(), self.b.as_mut_slice())]
    }
}

impl<F: Scalar> ParamTensors<F> for ConvParams<F> {
    fn tensors(&self) -> Vec<(String, &[F])> {
        vec![("kernels".into(), self.kernels.as_slice()), ("bias".into(), self.bias.as_slice())]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [F])> {
        vec![("kernels".into(), self.kernels.as_mut_slice()), ("bias".into(), self.bias.as_mut_slice())]
    }
}

impl<F: Scalar> ParamTensors<F> for GruParams<F> {
    fn tensors(&self) -> Vec<(String, &[F])> {
        vec![
            ("w_g".into(), self.w_g.data()),
            ("w_r".into(), self.w_r.data()),
            ("w_h".into(), self.w_h.data()),
            ("u_g".into(), self.u_g.data()),
            ("u_r".into(), self.u_r.data()),
            ("u_h".into(), self.u_h.data()),
            ("b_g".into(), self.b_g.as_slice()),
            ("b_r".into(), self.b_r.as_slice()),
            ("b_h".into(), self.b_h.as_slice()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [F])> {
        vec![
            ("w_g".into(), self.w_g.data_mut()),
            ("w_r".into(), self.w_r.data_mut()),
            ("w_h".into(), self.w_h.data_mut()),
            ("u_g".into(), self.u_g.data_mut()),
            ("u_r".into(), self.u_r.data_mut()),
            ("u_h".into(), self.u_h.data_mut()),
            ("b_g".into(), self.b_g.as_mut_slice()),
            ("b_r".into(), self.b_r.as_mut_slice()),
            ("b_h".into(), self.b_h.as_mut_slice()),
        ]
    }
}

pub const DEFAULT_EPS: f64 = 1e-5;

/// Central-difference gradient of `loss` with respect to every scalar in
/// `params`, in tensor enumeration order. The parameters are restored to
/// their original values before returning.
pub fn finite_diff_grad<F: Scalar, P: ParamTensors<F>>(
    params: &mut P,
    eps: f64,
    mut loss: impl FnMut(&P) -> f64,
) -> Result<Vec<(String, Vec<f64>)>> {
    assert!(eps > 0.0, "eps must be positive");
    let layout: Vec<(String, usize)> =
        params.tensors().into_iter().map(|(name, data)| (name, data.len())).collect();
    let mut out = Vec::with_capacity(layout.len());
    for (ti, (name, len)) in layout.iter().enumerate() {
        let mut grads = Vec::with_capacity(*len);
        for j in 0..*len {
            let original = {
                let mut ts = params.tensors_mut();
                let v = ts[ti].1[j];
                ts[ti].1[j] = v + F::from_f64(eps);
                v
            };
            let up = loss(&*params);
            {
                let mut ts = params.tensors_mut();
                ts[ti].1[j] = original - F::from_f64(eps);
            }
            let down = loss(&*params);
            {
                let mut ts = params.tensors_mut();
                ts[ti].1[j] = original;
            }
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!("loss while probing {name}[{j}]")));
            }
            grads.push((up - down) / (2.0 * eps));
        }
        out.push((name.clone(), grads));
    }
    Ok(out)
}

/// Relative error between an analytic and a numerical gradient value.
/// Central differences of a loss of magnitude L carry ~L·2e-16/eps of
/// cancellation noise (≈1e-10 here), so magnitudes below a floor are
/// compared absolutely: with the 1e-3 floor, a sub-floor gradient passes a
/// 1e-4 check iff it agrees within 1e-7 — two orders above the noise and
/// far below any real missing-term bug.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-3;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Largest relative error across all parameters of `analytic` (which must be
/// enumerated in the same order as the finite-difference result).
pub fn max_rel_error<F: Scalar, P: ParamTensors<F>>(analytic: &P, numeric: &[(String, Vec<f64>)]) -> f64 {
    let mut worst = 0.0f64;
    for ((name_a, data_a), (name_n, data_n)) in analytic.tensors().iter().zip(numeric) {
        assert_eq!(name_a, name_n, "tensor order mismatch");
        assert_eq!(data_a.len(), data_n.len(), "tensor {name_a} length mismatch");
        for (&a, &n) in data_a.iter().zip(data_n) {
            worst = worst.max(rel_error(a.to_f64(), n));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar1 {
        theta: Vec<f64>,
    }

    impl ParamTensors<f64> for Scalar1 {
        fn tensors(&self) -> Vec<(String, &[f64])> {
            vec![("theta".into(), self.theta.as_slice())]
        }
        fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
            vec![("theta".into(), self.theta.as_mut_slice())]
        }
    }

    #[test]
    fn quadratic_gradient_at_three() {
        let mut p = Scalar1 { theta: vec![3.0] };
        let g = finite_diff_grad(&mut p, DEFAULT_EPS, |p| p.theta[0] * p.theta[0]).unwrap();
        assert!((g[0].1[0] - 6.0).abs() < 1e-8, "{}", g[0].1[0]);
        assert_eq!(p.theta[0], 3.0, "parameters must be restored");
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut p = Scalar1 { theta: vec![1.0, -2.0, 0.5] };
        let g = finite_diff_grad(&mut p, DEFAULT_EPS, |_| 42.0).unwrap();
        assert!(g[0].1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut p = Scalar1 { theta: vec![1.0] };
        let err = finite_diff_grad(&mut p, DEFAULT_EPS, |p| (-p.theta[0]).sqrt()).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn rel_error_uses_absolute_floor_near_zero() {
        assert!(rel_error(0.0, 1e-10) < 1e-4, "finite-difference noise must not trip the check");
        assert!(rel_error(0.0, 1e-5) > 1e-4, "a genuinely missing small gradient must trip it");
        assert!(rel_error(1.0, 1.1) > 0.05);
    }
}
