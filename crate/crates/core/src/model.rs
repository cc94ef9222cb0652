//! Model assembly: a shared convolutional stack feeding a recurrent event
//! head (per-frame sigmoid posteriors) and a convolutional scene head
//! (per-clip softmax posterior).
//!
//! Shared convolutions are 1 frame × 3 mel bins with frequency-only pooling,
//! so the event path keeps full time resolution; the scene head convolves
//! the pooled `C×1×T` map with 3×3 filters and pools time down to a small
//! flattened vector.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::EventRoll;
use crate::nn::activ::{leaky_relu, sigmoid, softmax};
use crate::nn::conv::{conv2d_forward, ConvCache, ConvParams};
use crate::nn::dense::{dense, dense_cols, DenseParams};
use crate::nn::gru::{bigru_forward, BigruCache, GruParams};
use crate::nn::pool::{maxpool_forward, PoolCache};
use crate::nn::ParamTensors;
use crate::tensor::{FeatureMap, Matrix, Scalar};

/// Network hyperparameters. The default mirrors the experimental setup:
/// three shared 128-channel conv layers with 8/4/2 frequency pooling, a
/// 32-unit-per-direction recurrent event head, and a 64/16-channel scene
/// head with 10/5 time pooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub n_mels: usize,
    pub shared_channels: Vec<usize>,
    pub shared_pool_freq: Vec<usize>,
    /// Shared filter extent in time (frames).
    pub shared_filter_time: usize,
    /// Shared filter extent in frequency (mel bins).
    pub shared_filter_freq: usize,
    pub gru_hidden: usize,
    pub event_hidden: usize,
    pub n_events: usize,
    pub scene_channels: Vec<usize>,
    /// Scene filters are square, `scene_filter × scene_filter`.
    pub scene_filter: usize,
    pub scene_pool_time: Vec<usize>,
    pub n_scenes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            n_mels: 64,
            shared_channels: vec![128, 128, 128],
            shared_pool_freq: vec![8, 4, 2],
            shared_filter_time: 1,
            shared_filter_freq: 3,
            gru_hidden: 32,
            event_hidden: 32,
            n_events: 25,
            scene_channels: vec![64, 16],
            scene_filter: 3,
            scene_pool_time: vec![10, 5],
            n_scenes: 4,
        }
    }
}

impl Architecture {
    /// Minimal configuration for finite-difference gradient checks: every
    /// dimension shrunk so the full check runs in seconds.
    pub fn tiny() -> Self {
        Architecture {
            n_mels: 8,
            shared_channels: vec![4, 4, 4],
            shared_pool_freq: vec![4, 2, 1],
            shared_filter_time: 1,
            shared_filter_freq: 3,
            gru_hidden: 3,
            event_hidden: 3,
            n_events: 3,
            scene_channels: vec![4, 2],
            scene_filter: 3,
            scene_pool_time: vec![2, 2],
            n_scenes: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shared_channels.is_empty() || self.shared_channels.len() != self.shared_pool_freq.len() {
            return Err(Error::InvalidConfig("shared channel and pool lists must be non-empty and equal length".into()));
        }
        if self.scene_channels.is_empty() || self.scene_channels.len() != self.scene_pool_time.len() {
            return Err(Error::InvalidConfig("scene channel and pool lists must be non-empty and equal length".into()));
        }
        let pool_product: usize = self.shared_pool_freq.iter().product();
        if pool_product != self.n_mels {
            return Err(Error::InvalidConfig(format!(
                "frequency pooling {:?} collapses {} bins but n_mels is {}",
                self.shared_pool_freq, pool_product, self.n_mels
            )));
        }
        if self.shared_filter_time % 2 == 0 || self.shared_filter_freq % 2 == 0 || self.scene_filter % 2 == 0 {
            return Err(Error::InvalidConfig("filter extents must be odd for same padding".into()));
        }
        if self.gru_hidden == 0 || self.event_hidden == 0 || self.n_events == 0 || self.n_scenes == 0 {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// Total time pooling applied by the scene head; input frame counts must
    /// be divisible by this.
    pub fn scene_time_pool(&self) -> usize {
        self.scene_pool_time.iter().product()
    }

    /// Flattened scene feature length for `frames` input frames.
    pub fn scene_flat_len(&self, frames: usize) -> usize {
        self.scene_channels.last().unwrap() * (frames / self.scene_time_pool())
    }

    /// Serialize as `key=value` lines (checkpoint header body).
    pub fn to_header_lines(&self) -> Vec<String> {
        fn csv(v: &[usize]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        vec![
            format!("n_mels={}", self.n_mels),
            format!("shared_channels={}", csv(&self.shared_channels)),
            format!("shared_pool_freq={}", csv(&self.shared_pool_freq)),
            format!("shared_filter_time={}", self.shared_filter_time),
            format!("shared_filter_freq={}", self.shared_filter_freq),
            format!("gru_hidden={}", self.gru_hidden),
            format!("event_hidden={}", self.event_hidden),
            format!("n_events={}", self.n_events),
            format!("scene_channels={}", csv(&self.scene_channels)),
            format!("scene_filter={}", self.scene_filter),
            format!("scene_pool_time={}", csv(&self.scene_pool_time)),
            format!("n_scenes={}", self.n_scenes),
        ]
    }
}

/// All trainable tensors, grouped by layer. Doubles as the gradient
/// container: every tensor has a shape-parallel slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub arch: Architecture,
    pub shared: Vec<ConvParams<F>>,
    pub gru_fwd: GruParams<F>,
    pub gru_bwd: GruParams<F>,
    pub event_hidden: DenseParams<F>,
    pub event_out: DenseParams<F>,
    pub scene_conv: Vec<ConvParams<F>>,
    pub scene_out: DenseParams<F>,
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let mut shared = Vec::new();
        let mut c_in = 1;
        for &c_out in &arch.shared_channels {
            shared.push(ConvParams::zeros(c_out, c_in, arch.shared_filter_freq, arch.shared_filter_time));
            c_in = c_out;
        }
        let gru_input = *arch.shared_channels.last().unwrap();
        let mut scene_conv = Vec::new();
        let mut c_in = gru_input;
        for &c_out in &arch.scene_channels {
            scene_conv.push(ConvParams::zeros(c_out, c_in, arch.scene_filter, arch.scene_filter));
            c_in = c_out;
        }
        Ok(ModelParams {
            arch: arch.clone(),
            shared,
            gru_fwd: GruParams::zeros(arch.gru_hidden, gru_input),
            gru_bwd: GruParams::zeros(arch.gru_hidden, gru_input),
            event_hidden: DenseParams::zeros(arch.event_hidden, 2 * arch.gru_hidden),
            event_out: DenseParams::zeros(arch.n_events, arch.event_hidden),
            // The scene dense layer's input width depends on T; it is sized
            // at first use. Zero-width placeholder until then.
            scene_conv,
            scene_out: DenseParams::zeros(arch.n_scenes, 0),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = ModelParams::zeros(&self.arch).expect("existing params imply a valid architecture");
        z.scene_out = DenseParams::zeros(self.scene_out.out_dim(), self.scene_out.in_dim());
        z
    }

    /// Name and shape of every tensor, in enumeration order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, c) in self.shared.iter().enumerate() {
            let (co, ci, kf, kt) = c.kernel_shape();
            out.push((format!("shared{i}.kernels"), vec![co, ci, kf, kt]));
            out.push((format!("shared{i}.bias"), vec![co]));
        }
        for (label, g) in [("gru_fwd", &self.gru_fwd), ("gru_bwd", &self.gru_bwd)] {
            let (h, i) = (g.hidden(), g.input());
            for name in ["w_g", "w_r", "w_h"] {
                out.push((format!("{label}.{name}"), vec![h, i]));
            }
            for name in ["u_g", "u_r", "u_h"] {
                out.push((format!("{label}.{name}"), vec![h, h]));
            }
            for name in ["b_g", "b_r", "b_h"] {
                out.push((format!("{label}.{name}"), vec![h]));
            }
        }
        for (label, d) in [("event_hidden", &self.event_hidden), ("event_out", &self.event_out)] {
            out.push((format!("{label}.w"), vec![d.out_dim(), d.in_dim()]));
            out.push((format!("{label}.b"), vec![d.out_dim()]));
        }
        for (i, c) in self.scene_conv.iter().enumerate() {
            let (co, ci, kf, kt) = c.kernel_shape();
            out.push((format!("scene{i}.kernels"), vec![co, ci, kf, kt]));
            out.push((format!("scene{i}.bias"), vec![co]));
        }
        out.push(("scene_out.w".into(), vec![self.scene_out.out_dim(), self.scene_out.in_dim()]));
        out.push(("scene_out.b".into(), vec![self.scene_out.out_dim()]));
        out
    }

    /// Ensure the scene output layer is sized for `frames` input frames.
    pub(crate) fn scene_out_ready(&self, frames: usize) -> bool {
        self.scene_out.in_dim() == self.arch.scene_flat_len(frames)
    }
}

impl<F: Scalar> ParamTensors<F> for ModelParams<F> {
    fn tensors(&self) -> Vec<(String, &[F])> {
        let mut out: Vec<(String, &[F])> = Vec::new();
        for (i, c) in self.shared.iter().enumerate() {
            out.push((format!("shared{i}.kernels"), c.kernels.as_slice()));
            out.push((format!("shared{i}.bias"), c.bias.as_slice()));
        }
        for (label, g) in [("gru_fwd", &self.gru_fwd), ("gru_bwd", &self.gru_bwd)] {
            for (name, slice) in g.tensors() {
                out.push((format!("{label}.{name}"), slice));
            }
        }
        for (label, d) in [("event_hidden", &self.event_hidden), ("event_out", &self.event_out)] {
            for (name, slice) in d.tensors() {
                out.push((format!("{label}.{name}"), slice));
            }
        }
        for (i, c) in self.scene_conv.iter().enumerate() {
            out.push((format!("scene{i}.kernels"), c.kernels.as_slice()));
            out.push((format!("scene{i}.bias"), c.bias.as_slice()));
        }
        for (name, slice) in self.scene_out.tensors() {
            out.push((format!("scene_out.{name}"), slice));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut out: Vec<(String, &mut [F])> = Vec::new();
        for (i, c) in self.shared.iter_mut().enumerate() {
            out.push((format!("shared{i}.kernels"), c.kernels.as_mut_slice()));
            out.push((format!("shared{i}.bias"), c.bias.as_mut_slice()));
        }
        for (label, g) in [("gru_fwd", &mut self.gru_fwd), ("gru_bwd", &mut self.gru_bwd)] {
            for (name, slice) in g.tensors_mut() {
                out.push((format!("{label}.{name}"), slice));
            }
        }
        for (label, d) in [("event_hidden", &mut self.event_hidden), ("event_out", &mut self.event_out)] {
            for (name, slice) in d.tensors_mut() {
                out.push((format!("{label}.{name}"), slice));
            }
        }
        for (i, c) in self.scene_conv.iter_mut().enumerate() {
            out.push((format!("scene{i}.kernels"), c.kernels.as_mut_slice()));
            out.push((format!("scene{i}.bias"), c.bias.as_mut_slice()));
        }
        for (name, slice) in self.scene_out.tensors_mut() {
            out.push((format!("scene_out.{name}"), slice));
        }
        out
    }
}

/// Glorot-uniform initialization: weights uniform in ±√(6/(fan_in+fan_out)),
/// biases zero. `frames` fixes the scene output layer's input width (clip
/// frame counts are constant across a corpus).
pub fn init_params<F: Scalar>(arch: &Architecture, seed: u64, frames: usize) -> Result<ModelParams<F>> {
    arch.validate()?;
    if frames == 0 || frames % arch.scene_time_pool() != 0 {
        return Err(Error::InvalidConfig(format!(
            "frame count {} is not divisible by the scene time pooling {}",
            frames,
            arch.scene_time_pool()
        )));
    }
    let mut params = ModelParams::zeros(arch)?;
    params.scene_out = DenseParams::zeros(arch.n_scenes, arch.scene_flat_len(frames));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = move |limit: f64| -> F {
        // 53-bit uniform in [0, 1), mapped to ±limit.
        let raw = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        F::from_f64((raw * 2.0 - 1.0) * limit)
    };

    for conv in params.shared.iter_mut().chain(params.scene_conv.iter_mut()) {
        let (co, ci, kf, kt) = conv.kernel_shape();
        let limit = glorot_limit(ci * kf * kt, co * kf * kt);
        conv.kernels.iter_mut().for_each(|w| *w = uniform(limit));
    }
    for gru in [&mut params.gru_fwd, &mut params.gru_bwd] {
        let (h, i) = (gru.hidden(), gru.input());
        let w_limit = glorot_limit(i, h);
        let u_limit = glorot_limit(h, h);
        for m in [&mut gru.w_g, &mut gru.w_r, &mut gru.w_h] {
            m.data_mut().iter_mut().for_each(|w| *w = uniform(w_limit));
        }
        for m in [&mut gru.u_g, &mut gru.u_r, &mut gru.u_h] {
            m.data_mut().iter_mut().for_each(|w| *w = uniform(u_limit));
        }
    }
    for d in [&mut params.event_hidden, &mut params.event_out, &mut params.scene_out] {
        let limit = glorot_limit(d.in_dim(), d.out_dim());
        d.w.data_mut().iter_mut().for_each(|w| *w = uniform(limit));
    }
    Ok(params)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Per-frame event activation probabilities, `n_events × T`, entries in (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct EventPosterior<F> {
    pub probs: Matrix<F>,
}

/// Per-clip scene probabilities, length `n_scenes`, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePosterior<F> {
    pub probs: Vec<F>,
}

/// Every intermediate needed for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    pub frames: usize,
    pub shared_inputs: Vec<FeatureMap<F>>,
    pub shared_conv: Vec<ConvCache<F>>,
    pub shared_pool: Vec<PoolCache>,
    pub shared_out: FeatureMap<F>,
    pub gru_input: Matrix<F>,
    pub bigru_cache: BigruCache<F>,
    pub bigru_out: Matrix<F>,
    pub event_pre1: Matrix<F>,
    pub event_act1: Matrix<F>,
    pub event_probs: Matrix<F>,
    pub scene_inputs: Vec<FeatureMap<F>>,
    pub scene_conv: Vec<ConvCache<F>>,
    pub scene_pool: Vec<PoolCache>,
    pub scene_flat: Vec<F>,
    pub scene_probs: Vec<F>,
}

/// Run the full network on one clip's features (`n_mels × T`).
pub fn forward<F: Scalar>(
    x: &Matrix<F>,
    params: &ModelParams<F>,
) -> Result<(EventPosterior<F>, ScenePosterior<F>, ForwardCache<F>)> {
    let arch = &params.arch;
    if x.rows() != arch.n_mels {
        return Err(Error::shape("forward input", format!("{} mel rows", arch.n_mels), format!("{}", x.rows())));
    }
    let frames = x.cols();
    if frames == 0 {
        return Err(Error::EmptyInput("feature matrix"));
    }
    if frames % arch.scene_time_pool() != 0 {
        return Err(Error::shape(
            "forward input",
            format!("T divisible by {}", arch.scene_time_pool()),
            format!("T = {frames}"),
        ));
    }
    if !params.scene_out_ready(frames) {
        return Err(Error::shape(
            "scene output layer",
            format!("input width {}", arch.scene_flat_len(frames)),
            format!("{}", params.scene_out.in_dim()),
        ));
    }

    // Shared stack.
    let mut shared_inputs = Vec::with_capacity(params.shared.len());
    let mut shared_conv = Vec::with_capacity(params.shared.len());
    let mut shared_pool = Vec::with_capacity(params.shared.len());
    let mut current = FeatureMap::from_vec(1, arch.n_mels, frames, x.data().to_vec());
    for (layer, pool_f) in params.shared.iter().zip(&arch.shared_pool_freq) {
        let (act, conv_cache) = conv2d_forward(&current, layer)?;
        let (pooled, pool_cache) = maxpool_forward(&act, *pool_f, 1)?;
        shared_inputs.push(current);
        shared_conv.push(conv_cache);
        shared_pool.push(pool_cache);
        current = pooled;
    }
    let shared_out = current;
    debug_assert_eq!(shared_out.freq(), 1, "frequency axis fully pooled");

    // Event head.
    let gru_input = shared_out.to_matrix();
    let (bigru_out, bigru_cache) = bigru_forward(&gru_input, &params.gru_fwd, &params.gru_bwd)?;
    let event_pre1 = dense_cols(&bigru_out, &params.event_hidden)?;
    let event_act1 = event_pre1.map(leaky_relu);
    let event_logits = dense_cols(&event_act1, &params.event_out)?;
    let event_probs = event_logits.map(sigmoid);

    // Scene head.
    let mut scene_inputs = Vec::with_capacity(params.scene_conv.len());
    let mut scene_conv = Vec::with_capacity(params.scene_conv.len());
    let mut scene_pool = Vec::with_capacity(params.scene_conv.len());
    let mut current = shared_out.clone();
    for (layer, pool_t) in params.scene_conv.iter().zip(&arch.scene_pool_time) {
        let (act, conv_cache) = conv2d_forward(&current, layer)?;
        let (pooled, pool_cache) = maxpool_forward(&act, 1, *pool_t)?;
        scene_inputs.push(current);
        scene_conv.push(conv_cache);
        scene_pool.push(pool_cache);
        current = pooled;
    }
    let scene_flat: Vec<F> = current.data().to_vec();
    let scene_logits = dense(&scene_flat, &params.scene_out)?;
    let scene_probs = softmax(&scene_logits);

    let cache = ForwardCache {
        frames,
        shared_inputs,
        shared_conv,
        shared_pool,
        shared_out,
        gru_input,
        bigru_cache,
        bigru_out,
        event_pre1,
        event_act1,
        event_probs: event_probs.clone(),
        scene_inputs,
        scene_conv,
        scene_pool,
        scene_flat,
        scene_probs: scene_probs.clone(),
    };
    Ok((EventPosterior { probs: event_probs }, ScenePosterior { probs: scene_probs }, cache))
}

/// Threshold per-frame probabilities into a binary roll. A probability equal
/// to the threshold counts as active.
pub fn predict_events<F: Scalar>(posterior: &EventPosterior<F>, threshold: f64) -> EventRoll {
    assert!((0.0..=1.0).contains(&threshold), "threshold must lie in [0, 1]");
    let probs = &posterior.probs;
    let mut roll = EventRoll::zeros(probs.rows(), probs.cols());
    let thr = F::from_f64(threshold);
    for m in 0..probs.rows() {
        for t in 0..probs.cols() {
            if probs.get(m, t) >= thr {
                roll.set(m, t, true);
            }
        }
    }
    roll
}

/// Most probable scene; the lowest index wins exact ties.
pub fn predict_scene<F: Scalar>(posterior: &ScenePosterior<F>) -> usize {
    let mut best = 0;
    for (i, &p) in posterior.probs.iter().enumerate() {
        if p > posterior.probs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> Architecture {
        Architecture {
            n_mels: 16,
            shared_channels: vec![6, 6],
            shared_pool_freq: vec![4, 4],
            shared_filter_time: 1,
            shared_filter_freq: 3,
            gru_hidden: 5,
            event_hidden: 4,
            n_events: 3,
            scene_channels: vec![4, 3],
            scene_filter: 3,
            scene_pool_time: vec![2, 5],
            n_scenes: 4,
        }
    }

    fn pseudorandom_features(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        Matrix::from_fn(rows, cols, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) - 0.5
        })
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let arch = small_arch();
        let a: ModelParams<f64> = init_params(&arch, 7, 20).unwrap();
        let b: ModelParams<f64> = init_params(&arch, 7, 20).unwrap();
        assert_eq!(a, b);
        let c: ModelParams<f64> = init_params(&arch, 8, 20).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_are_zero() {
        let params: ModelParams<f64> = init_params(&small_arch(), 3, 20).unwrap();
        for conv in params.shared.iter().chain(&params.scene_conv) {
            assert!(conv.bias.iter().all(|&b| b == 0.0));
        }
        for gru in [&params.gru_fwd, &params.gru_bwd] {
            assert!(gru.b_g.iter().chain(&gru.b_r).chain(&gru.b_h).all(|&b| b == 0.0));
        }
        for d in [&params.event_hidden, &params.event_out, &params.scene_out] {
            assert!(d.b.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_weights_respect_glorot_bounds() {
        let params: ModelParams<f64> = init_params(&small_arch(), 11, 20).unwrap();
        for conv in params.shared.iter().chain(&params.scene_conv) {
            let (co, ci, kf, kt) = conv.kernel_shape();
            let limit = (6.0 / ((ci * kf * kt) + (co * kf * kt)) as f64).sqrt();
            assert!(conv.kernels.iter().all(|w| w.abs() <= limit), "conv kernels exceed ±{limit}");
        }
        for gru in [&params.gru_fwd, &params.gru_bwd] {
            let (h, i) = (gru.hidden(), gru.input());
            let w_limit = (6.0 / (h + i) as f64).sqrt();
            let u_limit = (6.0 / (2 * h) as f64).sqrt();
            for m in [&gru.w_g, &gru.w_r, &gru.w_h] {
                assert!(m.data().iter().all(|w| w.abs() <= w_limit));
            }
            for m in [&gru.u_g, &gru.u_r, &gru.u_h] {
                assert!(m.data().iter().all(|w| w.abs() <= u_limit));
            }
        }
        for d in [&params.event_hidden, &params.event_out, &params.scene_out] {
            let limit = (6.0 / (d.in_dim() + d.out_dim()) as f64).sqrt();
            assert!(d.w.data().iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn forward_shapes_and_normalization() {
        let arch = small_arch();
        let params: ModelParams<f64> = init_params(&arch, 5, 30).unwrap();
        let x = pseudorandom_features(16, 30, 123);
        let (events, scene, cache) = forward(&x, &params).unwrap();
        assert_eq!(events.probs.rows(), 3);
        assert_eq!(events.probs.cols(), 30);
        assert!(events.probs.data().iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(scene.probs.len(), 4);
        let sum: f64 = scene.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(cache.shared_out.shape(), (6, 1, 30));
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let arch = small_arch();
        let params: ModelParams<f64> = init_params(&arch, 5, 30).unwrap();
        assert!(forward(&pseudorandom_features(15, 30, 1), &params).is_err());
        // 25 is not divisible by the scene pooling product (10)
        assert!(forward(&pseudorandom_features(16, 25, 1), &params).is_err());
    }

    #[test]
    fn zero_input_gives_time_constant_event_posteriors() {
        let arch = small_arch();
        let params: ModelParams<f64> = init_params(&arch, 17, 20).unwrap();
        let x = Matrix::zeros(16, 20);
        let (events, _, _) = forward(&x, &params).unwrap();
        for m in 0..events.probs.rows() {
            let first = events.probs.get(m, 0);
            for t in 0..events.probs.cols() {
                assert!((events.probs.get(m, t) - first).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let arch = small_arch();
        let params: ModelParams<f64> = init_params(&arch, 2, 20).unwrap();
        let x = pseudorandom_features(16, 20, 9);
        let (a, b, _) = forward(&x, &params).unwrap();
        let (c, d, _) = forward(&x, &params).unwrap();
        assert_eq!(a.probs, c.probs);
        assert_eq!(b.probs, d.probs);
    }

    /// Shared convolutions are one frame wide and pooling is frequency-only,
    /// so circularly shifting the input in time shifts the recurrent input.
    #[test]
    fn event_path_is_time_equivariant_before_the_recurrence() {
        let arch = small_arch();
        let params: ModelParams<f64> = init_params(&arch, 23, 20).unwrap();
        let x = pseudorandom_features(16, 20, 55);
        let shift = 7usize;
        let shifted = Matrix::from_fn(16, 20, |r, c| x.get(r, (c + 20 - shift) % 20));
        let (_, _, cache_a) = forward(&x, &params).unwrap();
        let (_, _, cache_b) = forward(&shifted, &params).unwrap();
        for ch in 0..cache_a.gru_input.rows() {
            for t in 0..20 {
                let a = cache_a.gru_input.get(ch, t);
                let b = cache_b.gru_input.get(ch, (t + shift) % 20);
                assert!((a - b).abs() < 1e-12, "channel {ch} frame {t}");
            }
        }
    }

    #[test]
    fn predict_events_threshold_rules() {
        let posterior = EventPosterior { probs: Matrix::from_vec(1, 2, vec![0.6, 0.4]) };
        let roll = predict_events(&posterior, 0.5);
        assert!(roll.get(0, 0));
        assert!(!roll.get(0, 1));

        let all = predict_events(&posterior, 0.0);
        assert!(all.get(0, 0) && all.get(0, 1));

        let exact = EventPosterior { probs: Matrix::from_vec(1, 1, vec![0.5]) };
        assert!(predict_events(&exact, 0.5).get(0, 0), "probability equal to threshold is active");
    }

    #[test]
    fn predict_scene_argmax_and_ties() {
        assert_eq!(predict_scene(&ScenePosterior { probs: vec![0.1, 0.7, 0.1, 0.1] }), 1);
        assert_eq!(predict_scene(&ScenePosterior { probs: vec![0.25, 0.25, 0.25, 0.25] }), 0);
    }

    #[test]
    fn argmax_is_invariant_under_logit_shift() {
        let logits = [0.3, -1.2, 2.2, 0.9];
        let base = predict_scene(&ScenePosterior { probs: softmax(&logits) });
        for shift in [-100.0, -1.0, 0.5, 42.0] {
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            assert_eq!(predict_scene(&ScenePosterior { probs: softmax(&shifted) }), base);
        }
    }

    #[test]
    fn tiny_architecture_is_valid() {
        Architecture::tiny().validate().unwrap();
        let params: ModelParams<f64> = init_params(&Architecture::tiny(), 0, 8).unwrap();
        let x = pseudorandom_features(8, 8, 3);
        let (events, scene, _) = forward(&x, &params).unwrap();
        assert_eq!(events.probs.rows(), 3);
        assert_eq!(scene.probs.len(), 2);
    }
}
