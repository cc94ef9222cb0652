//! Same-padded 2-D convolution (cross-correlation) over frequency × time.

use crate::error::{Error, Result};
use crate::nn::activ::{leaky_relu, leaky_relu_grad};
use crate::tensor::{FeatureMap, Scalar};

/// Kernel stack `C_out × C_in × kF × kT` plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<F> {
    c_out: usize,
    c_in: usize,
    kf: usize,
    kt: usize,
    pub kernels: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> ConvParams<F> {
    pub fn zeros(c_out: usize, c_in: usize, kf: usize, kt: usize) -> Self {
        assert!(kf % 2 == 1 && kt % 2 == 1, "same-padding needs odd kernel extents");
        ConvParams { c_out, c_in, kf, kt, kernels: vec![F::zero(); c_out * c_in * kf * kt], bias: vec![F::zero(); c_out] }
    }

    #[inline]
    pub fn c_out(&self) -> usize {
        self.c_out
    }

    #[inline]
    pub fn c_in(&self) -> usize {
        self.c_in
    }

    #[inline]
    pub fn kernel_shape(&self) -> (usize, usize, usize, usize) {
        (self.c_out, self.c_in, self.kf, self.kt)
    }

    #[inline]
    pub fn k(&self, co: usize, ci: usize, f: usize, t: usize) -> F {
        self.kernels[((co * self.c_in + ci) * self.kf + f) * self.kt + t]
    }

    #[inline]
    pub fn k_mut(&mut self, co: usize, ci: usize, f: usize, t: usize) -> &mut F {
        &mut self.kernels[((co * self.c_in + ci) * self.kf + f) * self.kt + t]
    }
}

/// Pre-activation output retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<F> {
    pub pre_act: FeatureMap<F>,
}

/// Convolution + bias without the nonlinearity (test hook and backward input).
pub fn conv2d_linear<F: Scalar>(input: &FeatureMap<F>, p: &ConvParams<F>) -> Result<FeatureMap<F>> {
    if input.channels() != p.c_in {
        return Err(Error::shape("conv2d", format!("{} input channels", p.c_in), format!("{}", input.channels())));
    }
    let (nf, nt) = (input.freq(), input.time());
    let pad_f = (p.kf / 2) as isize;
    let pad_t = (p.kt / 2) as isize;
    let mut out = FeatureMap::zeros(p.c_out, nf, nt);
    for co in 0..p.c_out {
        let b = p.bias[co];
        for f in 0..nf {
            out.trow_mut(co, f).iter_mut().for_each(|v| *v = b);
        }
        for ci in 0..p.c_in {
            for kf in 0..p.kf {
                for kt in 0..p.kt {
                    let w = p.k(co, ci, kf, kt);
                    let df = kf as isize - pad_f;
                    let dt = kt as isize - pad_t;
                    // out[f][t] += w * in[f+df][t+dt] over in-range indices
                    let (t_lo, t_hi) = shifted_range(nt, dt);
                    if t_lo >= t_hi {
                        continue;
                    }
                    for f in 0..nf {
                        let fi = f as isize + df;
                        if fi < 0 || fi >= nf as isize {
                            continue;
                        }
                        let in_row = input.trow(ci, fi as usize);
                        let out_row = out.trow_mut(co, f);
                        let src = &in_row[(t_lo as isize + dt) as usize..(t_hi as isize + dt) as usize];
                        crate::tensor::axpy(w, src, &mut out_row[t_lo..t_hi]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Valid output range `[lo, hi)` such that `t + dt` stays inside `[0, n)`.
#[inline]
fn shifted_range(n: usize, dt: isize) -> (usize, usize) {
    let lo = (-dt).max(0) as usize;
    let hi = ((n as isize - dt).min(n as isize)).max(0) as usize;
    (lo, hi)
}

/// Forward convolution with the leaky-ReLU nonlinearity folded in.
pub fn conv2d<F: Scalar>(input: &FeatureMap<F>, p: &ConvParams<F>) -> Result<FeatureMap<F>> {
    Ok(conv2d_linear(input, p)?.map(leaky_relu))
}

pub fn conv2d_forward<F: Scalar>(input: &FeatureMap<F>, p: &ConvParams<F>) -> Result<(FeatureMap<F>, ConvCache<F>)> {
    let pre_act = conv2d_linear(input, p)?;
    let out = pre_act.map(leaky_relu);
    Ok((out, ConvCache { pre_act }))
}

/// Backward pass. Accumulates parameter gradients into `d_params` and the
/// input gradient into `d_input` (both pre-zeroed or carrying prior sums).
pub fn conv2d_backward<F: Scalar>(
    input: &FeatureMap<F>,
    p: &ConvParams<F>,
    cache: &ConvCache<F>,
    d_out: &FeatureMap<F>,
    d_input: &mut FeatureMap<F>,
    d_params: &mut ConvParams<F>,
) {
    assert_eq!(d_out.shape(), cache.pre_act.shape(), "conv backward shapes");
    assert_eq!(d_input.shape(), input.shape(), "conv backward input shapes");
    let (nf, nt) = (input.freq(), input.time());
    let pad_f = (p.kf / 2) as isize;
    let pad_t = (p.kt / 2) as isize;

    // Gradient through the activation.
    let mut d_pre = FeatureMap::zeros(p.c_out, nf, nt);
    for ((d, &g), &pre) in d_pre.data_mut().iter_mut().zip(d_out.data()).zip(cache.pre_act.data()) {
        *d = g * leaky_relu_grad(pre);
    }

    for co in 0..p.c_out {
        let mut db = F::zero();
        for f in 0..nf {
            db += d_pre.trow(co, f).iter().copied().sum();
        }
        d_params.bias[co] += db;
        for ci in 0..p.c_in {
            for kf in 0..p.kf {
                for kt in 0..p.kt {
                    let df = kf as isize - pad_f;
                    let dt = kt as isize - pad_t;
                    let (t_lo, t_hi) = shifted_range(nt, dt);
                    if t_lo >= t_hi {
                        continue;
                    }
                    let w = p.k(co, ci, kf, kt);
                    let mut dw = F::zero();
                    for f in 0..nf {
                        let fi = f as isize + df;
                        if fi < 0 || fi >= nf as isize {
                            continue;
                        }
                        let d_row = &d_pre.trow(co, f)[t_lo..t_hi];
                        let in_row = &input.trow(ci, fi as usize)[(t_lo as isize + dt) as usize..(t_hi as isize + dt) as usize];
                        dw += crate::tensor::dot(d_row, in_row);
                        let din_row = &mut d_input.trow_mut(ci, fi as usize)
                            [(t_lo as isize + dt) as usize..(t_hi as isize + dt) as usize];
                        crate::tensor::axpy(w, d_row, din_row);
                    }
                    *d_params.k_mut(co, ci, kf, kt) += dw;
                }
            }
        }
    }
}
