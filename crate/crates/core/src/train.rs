//! Losses, the joint objective, the full backward pass, the Adam optimizer,
//! and the fold-based training harness.
//!
//! The event head is trained with a summed sigmoid cross-entropy over every
//! (event, frame) cell; the scene head with a softmax cross-entropy per clip.
//! The joint objective is `E = E1 + alpha * E2` per clip; batches average
//! clip-level sums so `alpha` keeps its meaning at any batch size.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{self, EventRoll, MetricCounts};
use crate::model::{
    forward, init_params, predict_events, predict_scene, Architecture, EventPosterior, ForwardCache, ModelParams,
    ScenePosterior,
};
use crate::nn::conv::conv2d_backward;
use crate::nn::dense::dense_cols_backward;
use crate::nn::gradcheck::{finite_diff_grad, max_rel_error, ParamTensors};
use crate::nn::gru::bigru_backward;
use crate::nn::pool::maxpool_backward;
use crate::nn::activ::leaky_relu_grad;
use crate::tensor::{FeatureMap, Matrix, Scalar};

/// Gradients are shape-parallel to the parameters they belong to.
pub type Gradients<F> = ModelParams<F>;

/// Numeric width of the training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "32" => Ok(Precision::F32),
            "64" => Ok(Precision::F64),
            other => Err(Error::InvalidConfig(format!("precision must be 32 or 64, got {other}"))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precision::F32 => write!(f, "32"),
            Precision::F64 => write!(f, "64"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Weight of the scene loss in the joint objective.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.01,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            precision: Precision::F64,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(Error::InvalidConfig("alpha must be non-negative".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Log arguments are floored here so saturated outputs cannot produce NaN.
pub const LOG_FLOOR: f64 = 1e-12;

/// Summed sigmoid cross-entropy over all (event, frame) cells.
pub fn event_loss<F: Scalar>(posterior: &EventPosterior<F>, targets: &EventRoll) -> Result<f64> {
    let probs = &posterior.probs;
    if probs.rows() != targets.events() || probs.cols() != targets.frames() {
        return Err(Error::shape(
            "event_loss",
            format!("{}x{}", targets.events(), targets.frames()),
            format!("{}x{}", probs.rows(), probs.cols()),
        ));
    }
    let mut total = 0.0f64;
    for m in 0..probs.rows() {
        for t in 0..probs.cols() {
            let y = probs.get(m, t).to_f64();
            if targets.get(m, t) {
                total -= y.max(LOG_FLOOR).ln();
            } else {
                total -= (1.0 - y).max(LOG_FLOOR).ln();
            }
        }
    }
    Ok(total)
}

/// Softmax cross-entropy against a one-hot target: `-log y[true]`.
pub fn scene_loss<F: Scalar>(posterior: &ScenePosterior<F>, target_one_hot: &[F]) -> Result<f64> {
    if posterior.probs.len() != target_one_hot.len() {
        return Err(Error::shape(
            "scene_loss",
            format!("{}", posterior.probs.len()),
            format!("{}", target_one_hot.len()),
        ));
    }
    let mut hot = None;
    for (i, &z) in target_one_hot.iter().enumerate() {
        if z == F::one() {
            if hot.is_some() {
                return Err(Error::InvalidConfig("scene target has more than one active class".into()));
            }
            hot = Some(i);
        } else if z != F::zero() {
            return Err(Error::InvalidConfig(format!("scene target entry {i} is {z}, not 0 or 1")));
        }
    }
    let hot = hot.ok_or_else(|| Error::InvalidConfig("scene target has no active class".into()))?;
    Ok(scene_loss_index(posterior, hot))
}

pub fn scene_loss_index<F: Scalar>(posterior: &ScenePosterior<F>, target: usize) -> f64 {
    -posterior.probs[target].to_f64().max(LOG_FLOOR).ln()
}

/// The joint objective.
pub fn total_loss(e1: f64, e2: f64, alpha: f64) -> f64 {
    e1 + alpha * e2
}

/// Event and scene loss of one clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub e1: f64,
    pub e2: f64,
}

impl LossBreakdown {
    pub fn total(&self, alpha: f64) -> f64 {
        total_loss(self.e1, self.e2, alpha)
    }
}

/// Exact gradients of `E1 + alpha * E2` for one clip, via backpropagation
/// through both heads and the shared stack. Shared-layer gradients are the
/// sum of the event-path contribution and the alpha-weighted scene-path
/// contribution.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    cache: &ForwardCache<F>,
    targets: &EventRoll,
    scene_target: usize,
    alpha: f64,
) -> Result<(LossBreakdown, Gradients<F>)> {
    let arch = &params.arch;
    if cache.event_probs.rows() != arch.n_events
        || cache.scene_probs.len() != arch.n_scenes
        || cache.gru_input.rows() != *arch.shared_channels.last().unwrap()
        || cache.frames != cache.event_probs.cols()
    {
        return Err(Error::shape(
            "backward cache",
            format!("outputs for {} events / {} scenes", arch.n_events, arch.n_scenes),
            format!("{} events / {} scenes", cache.event_probs.rows(), cache.scene_probs.len()),
        ));
    }
    if targets.events() != arch.n_events || targets.frames() != cache.frames {
        return Err(Error::shape(
            "backward targets",
            format!("{}x{}", arch.n_events, cache.frames),
            format!("{}x{}", targets.events(), targets.frames()),
        ));
    }
    if scene_target >= arch.n_scenes {
        return Err(Error::InvalidConfig(format!(
            "scene target {scene_target} out of range for {} scenes",
            arch.n_scenes
        )));
    }

    let e1 = event_loss(&EventPosterior { probs: cache.event_probs.clone() }, targets)?;
    let e2 = scene_loss_index(&ScenePosterior { probs: cache.scene_probs.clone() }, scene_target);
    let mut grads = params.zeros_like();

    // Event head: d(logit) = y - z for the summed sigmoid cross-entropy.
    let frames = cache.frames;
    let mut d_event_logits = Matrix::zeros(arch.n_events, frames);
    for m in 0..arch.n_events {
        for t in 0..frames {
            let z = if targets.get(m, t) { F::one() } else { F::zero() };
            d_event_logits.set(m, t, cache.event_probs.get(m, t) - z);
        }
    }
    let d_act1 = dense_cols_backward(&cache.event_act1, &params.event_out, &d_event_logits, &mut grads.event_out);
    let mut d_pre1 = d_act1;
    for (d, &pre) in d_pre1.data_mut().iter_mut().zip(cache.event_pre1.data()) {
        *d *= leaky_relu_grad(pre);
    }
    let d_bigru_out =
        dense_cols_backward(&cache.bigru_out, &params.event_hidden, &d_pre1, &mut grads.event_hidden);
    let mut d_shared_matrix = Matrix::zeros(cache.gru_input.rows(), frames);
    bigru_backward(
        &cache.gru_input,
        &params.gru_fwd,
        &params.gru_bwd,
        &cache.bigru_cache,
        &d_bigru_out,
        &mut d_shared_matrix,
        &mut grads.gru_fwd,
        &mut grads.gru_bwd,
    );
    let mut d_shared_out = FeatureMap::from_matrix(&d_shared_matrix);

    // Scene head: d(logit) = alpha * (y - z) for the softmax cross-entropy.
    let alpha_f = F::from_f64(alpha);
    if alpha != 0.0 {
        let mut d_scene_logits = vec![F::zero(); arch.n_scenes];
        for (n, d) in d_scene_logits.iter_mut().enumerate() {
            let z = if n == scene_target { F::one() } else { F::zero() };
            *d = alpha_f * (cache.scene_probs[n] - z);
        }
        grads.scene_out.w.add_outer(&d_scene_logits, &cache.scene_flat);
        for (b, &d) in grads.scene_out.b.iter_mut().zip(&d_scene_logits) {
            *b += d;
        }
        let mut d_flat = vec![F::zero(); cache.scene_flat.len()];
        params.scene_out.w.tr_mul_vec_acc(&d_scene_logits, &mut d_flat);

        let last = cache.scene_conv.len() - 1;
        let (c, f, t) = {
            let shape = cache.scene_conv[last].pre_act.shape();
            (shape.0, shape.1, shape.2 / arch.scene_pool_time[last])
        };
        let mut d_pooled = FeatureMap::from_vec(c, f, t, d_flat);
        for i in (0..params.scene_conv.len()).rev() {
            let (pc, pf, pt) = cache.scene_conv[i].pre_act.shape();
            let mut d_act = FeatureMap::zeros(pc, pf, pt);
            maxpool_backward(&cache.scene_pool[i], &d_pooled, &mut d_act);
            let mut d_in = FeatureMap::zeros(
                cache.scene_inputs[i].channels(),
                cache.scene_inputs[i].freq(),
                cache.scene_inputs[i].time(),
            );
            conv2d_backward(
                &cache.scene_inputs[i],
                &params.scene_conv[i],
                &cache.scene_conv[i],
                &d_act,
                &mut d_in,
                &mut grads.scene_conv[i],
            );
            d_pooled = d_in;
        }
        // Scene path enters the shared stack at its pooled output.
        for (a, &b) in d_shared_out.data_mut().iter_mut().zip(d_pooled.data()) {
            *a += b;
        }
    }

    // Shared stack.
    let mut d_pooled = d_shared_out;
    for i in (0..params.shared.len()).rev() {
        let (pc, pf, pt) = cache.shared_conv[i].pre_act.shape();
        let mut d_act = FeatureMap::zeros(pc, pf, pt);
        maxpool_backward(&cache.shared_pool[i], &d_pooled, &mut d_act);
        let mut d_in = FeatureMap::zeros(
            cache.shared_inputs[i].channels(),
            cache.shared_inputs[i].freq(),
            cache.shared_inputs[i].time(),
        );
        conv2d_backward(
            &cache.shared_inputs[i],
            &params.shared[i],
            &cache.shared_conv[i],
            &d_act,
            &mut d_in,
            &mut grads.shared[i],
        );
        d_pooled = d_in;
    }

    Ok((LossBreakdown { e1, e2 }, grads))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, shape-parallel to the parameters.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: ModelParams<F>,
    v: ModelParams<F>,
    step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. Rejects non-finite gradients,
/// naming the offending tensor.
pub fn optimizer_step<F: Scalar>(
    params: &mut ModelParams<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    hp: &Hyperparams,
) -> Result<()> {
    for (name, data) in grads.tensors() {
        if data.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient tensor {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let lr = F::from_f64(hp.learning_rate);
    let beta1 = F::from_f64(ADAM_BETA1);
    let beta2 = F::from_f64(ADAM_BETA2);
    let one_minus_beta1 = F::from_f64(1.0 - ADAM_BETA1);
    let one_minus_beta2 = F::from_f64(1.0 - ADAM_BETA2);
    let corr1 = F::from_f64(1.0 - ADAM_BETA1.powi(t));
    let corr2 = F::from_f64(1.0 - ADAM_BETA2.powi(t));
    let eps = F::from_f64(ADAM_EPS);

    let mut p_ts = params.tensors_mut();
    let g_ts = grads.tensors();
    let mut m_ts = state.m.tensors_mut();
    let mut v_ts = state.v.tensors_mut();
    for i in 0..p_ts.len() {
        let p = &mut p_ts[i].1;
        let g = &g_ts[i].1;
        let m = &mut m_ts[i].1;
        let v = &mut v_ts[i].1;
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = beta1 * m[j] + one_minus_beta1 * gj;
            v[j] = beta2 * v[j] + one_minus_beta2 * gj * gj;
            let m_hat = m[j] / corr1;
            let v_hat = v[j] / corr2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One clip of prepared training data.
#[derive(Debug, Clone)]
pub struct TrainItem<F> {
    pub clip_id: String,
    pub features: Matrix<F>,
    pub targets: EventRoll,
    pub scene: usize,
    pub fold: usize,
}

/// Per-epoch loss averages (per clip: `E1 + alpha * E2`).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub e1: f64,
    pub e2: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// CSV body: `epoch,E1,E2,E`; an optional comment line goes first.
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str("epoch,E1,E2,E\n");
        for (i, s) in self.epochs.iter().enumerate() {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", i + 1, s.e1, s.e2, s.e));
        }
        out
    }
}

/// Train on every item except those in `held_out_fold` (train on everything
/// when `None`). Clips are shuffled each epoch from the seeded generator;
/// per-batch gradients are clip-level gradients averaged in clip order, so a
/// run is bit-reproducible for a given `(items, hp)`.
///
/// The optimized objective balances the two terms per clip as
/// `E1 / (n_events * frames) + alpha * E2`: the summed event term is
/// normalized per cell so `alpha` trades off against one event cell rather
/// than against all of them at once. Without this, any sub-unity `alpha`
/// leaves the scene term numerically invisible next to a sum over hundreds
/// of cells and joint training degenerates to single-task. The gradient is
/// computed exactly, as `grad(E1 + alpha * cells * E2) / cells`. History
/// records the raw per-clip sums `E1` and `E2` alongside the optimized `E`.
pub fn train_fold<F: Scalar>(
    items: &[TrainItem<F>],
    held_out_fold: Option<usize>,
    arch: &Architecture,
    hp: &Hyperparams,
    mut on_epoch: impl FnMut(usize, &ModelParams<F>) -> Result<()>,
) -> Result<(ModelParams<F>, TrainHistory)> {
    hp.validate()?;
    arch.validate()?;
    let train_idx: Vec<usize> = items
        .iter()
        .enumerate()
        .filter(|(_, item)| held_out_fold.map_or(true, |f| item.fold != f))
        .map(|(i, _)| i)
        .collect();
    if train_idx.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    let frames = items[train_idx[0]].features.cols();
    for &i in &train_idx {
        if items[i].features.cols() != frames || items[i].features.rows() != arch.n_mels {
            return Err(Error::shape(
                "train features",
                format!("{}x{}", arch.n_mels, frames),
                format!("{}x{} ({})", items[i].features.rows(), items[i].features.cols(), items[i].clip_id),
            ));
        }
    }

    let mut params = init_params::<F>(arch, hp.seed, frames)?;
    let mut adam = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order = train_idx.clone();
    let cells = (arch.n_events * frames) as f64;
    let alpha_grad = hp.alpha * cells;

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut e1_sum = 0.0;
        let mut e2_sum = 0.0;
        for batch in order.chunks(hp.batch_size) {
            let results: Vec<(LossBreakdown, Gradients<F>)> = batch
                .par_iter()
                .map(|&i| {
                    let item = &items[i];
                    let (_, _, cache) = forward(&item.features, &params)?;
                    backward(&params, &cache, &item.targets, item.scene, alpha_grad)
                })
                .collect::<Result<Vec<_>>>()?;

            let mut grad_sum = params.zeros_like();
            for (loss, g) in &results {
                e1_sum += loss.e1;
                e2_sum += loss.e2;
                accumulate(&mut grad_sum, g);
            }
            scale_params(&mut grad_sum, F::from_f64(1.0 / (batch.len() as f64 * cells)));
            optimizer_step(&mut params, &grad_sum, &mut adam, hp)?;
        }
        let n = train_idx.len() as f64;
        let e1 = e1_sum / n;
        let e2 = e2_sum / n;
        history.epochs.push(EpochStats { e1, e2, e: total_loss(e1 / cells, e2, hp.alpha) });
        on_epoch(epoch + 1, &params)?;
    }
    Ok((params, history))
}

fn accumulate<F: Scalar>(acc: &mut ModelParams<F>, g: &ModelParams<F>) {
    let mut a_ts = acc.tensors_mut();
    let g_ts = g.tensors();
    for i in 0..a_ts.len() {
        for (a, &b) in a_ts[i].1.iter_mut().zip(g_ts[i].1.iter()) {
            *a += b;
        }
    }
}

fn scale_params<F: Scalar>(params: &mut ModelParams<F>, s: F) {
    for (_, data) in params.tensors_mut() {
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Pooled evaluation outcome over a set of clips.
#[derive(Debug, Clone)]
pub struct EvalCounts {
    pub event: MetricCounts,
    pub per_event: Vec<MetricCounts>,
    pub scene_ref: Vec<usize>,
    pub scene_pred: Vec<usize>,
}

impl EvalCounts {
    pub fn new(n_events: usize) -> Self {
        EvalCounts {
            event: MetricCounts::default(),
            per_event: vec![MetricCounts::default(); n_events],
            scene_ref: Vec::new(),
            scene_pred: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: &EvalCounts) {
        self.event.merge(&other.event);
        for (mine, theirs) in self.per_event.iter_mut().zip(&other.per_event) {
            mine.merge(theirs);
        }
        self.scene_ref.extend_from_slice(&other.scene_ref);
        self.scene_pred.extend_from_slice(&other.scene_pred);
    }

    pub fn event_f(&self) -> f64 {
        metrics::precision_recall_f(&self.event).2
    }

    pub fn event_er(&self) -> metrics::ErrorRate {
        metrics::error_rate(&self.event)
    }

    pub fn scene_f(&self, n_scenes: usize) -> Result<metrics::SceneScore> {
        metrics::scene_f(&self.scene_ref, &self.scene_pred, n_scenes)
    }
}

/// Evaluate a trained model on `items`, thresholding event posteriors at
/// `threshold` and scoring on `segment_frames`-frame segments.
pub fn evaluate_model<F: Scalar>(
    params: &ModelParams<F>,
    items: &[&TrainItem<F>],
    threshold: f64,
    segment_frames: usize,
) -> Result<EvalCounts> {
    let mut counts = EvalCounts::new(params.arch.n_events);
    let per_clip: Vec<EvalCounts> = items
        .par_iter()
        .map(|item| {
            let (events, scene, _) = forward(&item.features, params)?;
            let pred = predict_events(&events, threshold);
            let pred = metrics::segment_reduce(&pred, segment_frames);
            let reference = metrics::segment_reduce(&item.targets, segment_frames);
            let mut c = EvalCounts::new(params.arch.n_events);
            c.event = metrics::frame_counts(&reference, &pred)?;
            c.per_event = metrics::per_event_counts(&reference, &pred)?;
            c.scene_ref.push(item.scene);
            c.scene_pred.push(predict_scene(&scene));
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    for c in &per_clip {
        counts.merge(c);
    }
    Ok(counts)
}

/// One fold's held-out result.
#[derive(Debug, Clone)]
pub struct FoldReport {
    pub fold: usize,
    pub counts: EvalCounts,
    pub history: TrainHistory,
}

/// Cross-validation outcome: per-fold reports plus counts pooled across
/// folds (micro-averaging).
#[derive(Debug, Clone)]
pub struct CrossValReport {
    pub folds: Vec<FoldReport>,
    pub pooled: EvalCounts,
}

/// Train and evaluate over every fold: for each fold, train on the others
/// and score the held-out clips.
pub fn cross_validate<F: Scalar>(
    items: &[TrainItem<F>],
    n_folds: usize,
    arch: &Architecture,
    hp: &Hyperparams,
    threshold: f64,
    segment_frames: usize,
) -> Result<CrossValReport> {
    if items.is_empty() {
        return Err(Error::EmptyInput("cross-validation corpus"));
    }
    for fold in 1..=n_folds {
        if !items.iter().any(|i| i.fold == fold) {
            return Err(Error::Corpus(format!("fold {fold} has no test clips")));
        }
    }
    if let Some(bad) = items.iter().find(|i| i.fold == 0 || i.fold > n_folds) {
        return Err(Error::Corpus(format!(
            "clip {} is assigned to fold {} outside 1..={n_folds}",
            bad.clip_id, bad.fold
        )));
    }

    let mut folds = Vec::with_capacity(n_folds);
    let mut pooled = EvalCounts::new(arch.n_events);
    for fold in 1..=n_folds {
        let (params, history) = train_fold(items, Some(fold), arch, hp, |_, _| Ok(()))?;
        let test: Vec<&TrainItem<F>> = items.iter().filter(|i| i.fold == fold).collect();
        let counts = evaluate_model(&params, &test, threshold, segment_frames)?;
        pooled.merge(&counts);
        folds.push(FoldReport { fold, counts, history });
    }
    Ok(CrossValReport { folds, pooled })
}

/// Cross-validated metrics per alpha value, for the weight sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub alpha: f64,
    pub event_f: f64,
    pub event_er: metrics::ErrorRate,
    pub scene_f: f64,
}

pub fn sweep_alpha<F: Scalar>(
    items: &[TrainItem<F>],
    alphas: &[f64],
    n_folds: usize,
    arch: &Architecture,
    hp: &Hyperparams,
    threshold: f64,
    segment_frames: usize,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let hp_alpha = Hyperparams { alpha, ..hp.clone() };
        let report = cross_validate(items, n_folds, arch, &hp_alpha, threshold, segment_frames)?;
        rows.push(SweepRow {
            alpha,
            event_f: report.pooled.event_f(),
            event_er: report.pooled.event_er(),
            scene_f: report.pooled.scene_f(arch.n_scenes)?.micro_f,
        });
    }
    Ok(rows)
}

/// Outcome of a finite-difference check of the full joint gradient.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub seed: u64,
    pub alpha: f64,
    pub max_rel_error: f64,
}

/// Check analytic gradients of the joint objective against central finite
/// differences on randomly generated data, at 64-bit precision.
pub fn gradient_check(arch: &Architecture, seed: u64, alphas: &[f64], eps: f64) -> Result<Vec<GradCheckReport>> {
    use rand::Rng;
    arch.validate()?;
    let frames = 2 * arch.scene_time_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(arch.n_mels, frames, |_, _| rng.gen_range(-1.0..1.0));
    let mut targets = EventRoll::zeros(arch.n_events, frames);
    for m in 0..arch.n_events {
        for t in 0..frames {
            targets.set(m, t, rng.gen_bool(0.3));
        }
    }
    let scene_target = rng.gen_range(0..arch.n_scenes);

    let mut reports = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut params = init_params::<f64>(arch, seed, frames)?;
        let loss_fn = |p: &ModelParams<f64>| {
            let (events, scene, _) = forward(&x, p).expect("forward in gradient check");
            let e1 = event_loss(&events, &targets).expect("event loss");
            let e2 = scene_loss_index(&scene, scene_target);
            total_loss(e1, e2, alpha)
        };
        let numeric = finite_diff_grad(&mut params, eps, loss_fn)?;
        let (_, _, cache) = forward(&x, &params)?;
        let (_, analytic) = backward(&params, &cache, &targets, scene_target, alpha)?;
        reports.push(GradCheckReport { seed, alpha, max_rel_error: max_rel_error(&analytic, &numeric) });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_loss_perfect_prediction_is_zero() {
        let targets = EventRoll::from_rows(&[&[1, 0], &[0, 1]]);
        let mut probs = Matrix::zeros(2, 2);
        probs.set(0, 0, 1.0);
        probs.set(1, 1, 1.0);
        let loss = event_loss(&EventPosterior { probs }, &targets).unwrap();
        assert!(loss <= 2.0 * 2.0 * 1e-11, "loss {loss}");
    }

    #[test]
    fn event_loss_single_cell_closed_form() {
        let targets = EventRoll::from_rows(&[&[1]]);
        let probs = Matrix::from_vec(1, 1, vec![0.5]);
        let loss = event_loss(&EventPosterior { probs }, &targets).unwrap();
        assert!((loss - 0.6931471805599453).abs() < 1e-15);
    }

    #[test]
    fn event_loss_matches_term_by_term_oracle() {
        // Deterministic pseudo-random probabilities and targets on a 3x4 grid.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state as f64 / u64::MAX as f64
        };
        let probs = Matrix::from_fn(3, 4, |_, _| 0.05 + 0.9 * next());
        let mut targets = EventRoll::zeros(3, 4);
        for m in 0..3 {
            for t in 0..4 {
                targets.set(m, t, next() > 0.5);
            }
        }
        let mut expected = 0.0;
        for m in 0..3 {
            for t in 0..4 {
                let y = probs.get(m, t);
                let z = if targets.get(m, t) { 1.0 } else { 0.0 };
                expected -= z * y.ln() + (1.0 - z) * (1.0 - y).ln();
            }
        }
        let loss = event_loss(&EventPosterior { probs }, &targets).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn event_loss_shape_mismatch_errors() {
        let targets = EventRoll::zeros(2, 3);
        let probs = Matrix::<f64>::zeros(2, 4);
        assert!(event_loss(&EventPosterior { probs }, &targets).is_err());
    }

    #[test]
    fn scene_loss_uniform_closed_form() {
        let posterior = ScenePosterior { probs: vec![0.25; 4] };
        let z = [1.0, 0.0, 0.0, 0.0];
        let loss = scene_loss(&posterior, &z).unwrap();
        assert!((loss - 1.3862943611198906).abs() < 1e-15);
    }

    #[test]
    fn scene_loss_matching_one_hot_is_near_zero() {
        let posterior = ScenePosterior { probs: vec![1.0, 0.0, 0.0] };
        let loss = scene_loss(&posterior, &[1.0, 0.0, 0.0]).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn scene_loss_enumerates_all_targets() {
        let probs = vec![0.1, 0.2, 0.3, 0.4];
        for hot in 0..4 {
            let mut z = vec![0.0; 4];
            z[hot] = 1.0;
            let loss = scene_loss(&ScenePosterior { probs: probs.clone() }, &z).unwrap();
            assert!((loss + probs[hot].ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn scene_loss_rejects_non_one_hot() {
        let posterior = ScenePosterior { probs: vec![0.5, 0.5] };
        assert!(scene_loss(&posterior, &[1.0, 1.0]).is_err());
        assert!(scene_loss(&posterior, &[0.0, 0.0]).is_err());
        assert!(scene_loss(&posterior, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn losses_are_nonnegative_even_for_saturated_outputs() {
        // Saturated posteriors hit the log floor rather than producing NaN.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state as f64 / u64::MAX as f64
        };
        for _ in 0..50 {
            let probs = Matrix::from_fn(4, 6, |_, _| match (next() * 4.0) as u32 {
                0 => 0.0,
                1 => 1.0,
                _ => next(),
            });
            let mut targets = EventRoll::zeros(4, 6);
            for m in 0..4 {
                for t in 0..6 {
                    targets.set(m, t, next() > 0.5);
                }
            }
            let e1 = event_loss(&EventPosterior { probs }, &targets).unwrap();
            assert!(e1.is_finite() && e1 >= 0.0, "E1 = {e1}");
            let scene = ScenePosterior { probs: vec![next(), 0.0, 1.0, next()] };
            for hot in 0..4 {
                let e2 = scene_loss_index(&scene, hot);
                assert!(e2.is_finite() && e2 >= 0.0, "E2 = {e2}");
                assert!(total_loss(e1, e2, 0.37) >= 0.0);
            }
        }
    }

    #[test]
    fn total_loss_reductions() {
        assert_eq!(total_loss(1.0, 2.0, 0.0), 1.0);
        assert!((total_loss(1.0, 2.0, 0.01) - 1.02).abs() < 1e-15);
        // linearity in alpha
        let (e1, e2) = (0.7, 1.9);
        let lhs = total_loss(e1, e2, 0.3) + total_loss(0.0, e2, 0.2);
        let rhs = total_loss(e1, e2, 0.5);
        assert!((lhs - rhs).abs() < 1e-15);
    }

    fn tiny_setup(seed: u64) -> (Matrix<f64>, EventRoll, usize, ModelParams<f64>) {
        use rand::Rng;
        let arch = Architecture::tiny();
        let frames = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(arch.n_mels, frames, |_, _| rng.gen_range(-1.0..1.0));
        let mut targets = EventRoll::zeros(arch.n_events, frames);
        for m in 0..arch.n_events {
            for t in 0..frames {
                targets.set(m, t, rng.gen_bool(0.3));
            }
        }
        let scene = rng.gen_range(0..arch.n_scenes);
        let params = init_params::<f64>(&arch, seed, frames).unwrap();
        (x, targets, scene, params)
    }

    #[test]
    fn alpha_zero_leaves_scene_gradients_exactly_zero() {
        let (x, targets, scene, params) = tiny_setup(4);
        let (_, _, cache) = forward(&x, &params).unwrap();
        let (_, grads) = backward(&params, &cache, &targets, scene, 0.0).unwrap();
        for conv in &grads.scene_conv {
            assert!(conv.kernels.iter().all(|&g| g == 0.0));
            assert!(conv.bias.iter().all(|&g| g == 0.0));
        }
        assert!(grads.scene_out.w.data().iter().all(|&g| g == 0.0));
        assert!(grads.scene_out.b.iter().all(|&g| g == 0.0));
        // The event path still produces gradients.
        assert!(grads.gru_fwd.w_g.data().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn doubling_alpha_doubles_scene_gradients_only() {
        let (x, targets, scene, params) = tiny_setup(9);
        let (_, _, cache) = forward(&x, &params).unwrap();
        let (_, g1) = backward(&params, &cache, &targets, scene, 0.05).unwrap();
        let (_, g2) = backward(&params, &cache, &targets, scene, 0.10).unwrap();
        for ((_, a), (_, b)) in g1.scene_out.tensors().iter().zip(g2.scene_out.tensors()) {
            for (x1, x2) in a.iter().zip(b.iter()) {
                assert!((x2 - 2.0 * x1).abs() < 1e-12);
            }
        }
        // Event-head gradients are unchanged.
        for ((_, a), (_, b)) in g1.event_out.tensors().iter().zip(g2.event_out.tensors()) {
            for (x1, x2) in a.iter().zip(b.iter()) {
                assert_eq!(x1, x2);
            }
        }
    }

    #[test]
    fn full_gradient_matches_finite_differences_on_tiny_model() {
        for seed in [0u64, 1] {
            let reports = gradient_check(&Architecture::tiny(), seed, &[0.01], 1e-5).unwrap();
            for r in reports {
                assert!(r.max_rel_error < 1e-4, "seed {seed} alpha {}: {}", r.alpha, r.max_rel_error);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let arch = Architecture::tiny();
        let mut params = init_params::<f64>(&arch, 0, 8).unwrap();
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::new(&params);
        optimizer_step(&mut params, &grads, &mut state, &Hyperparams::default()).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let arch = Architecture::tiny();
        let mut params = init_params::<f64>(&arch, 0, 8).unwrap();
        let theta_before = params.shared[0].kernels[0];
        let mut grads = params.zeros_like();
        grads.shared[0].kernels[0] = 1.0;
        let mut state = AdamState::new(&params);
        let hp = Hyperparams { learning_rate: 0.1, ..Hyperparams::default() };
        optimizer_step(&mut params, &grads, &mut state, &hp).unwrap();
        let step = theta_before - params.shared[0].kernels[0];
        assert!((step - 0.1).abs() < 1e-8, "first Adam step {step}");
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        // theta^2 from theta=1 with lr 0.1 for 200 steps.
        let arch = Architecture::tiny();
        let mut params = init_params::<f64>(&arch, 0, 8).unwrap();
        params.shared[0].kernels[0] = 1.0;
        let mut state = AdamState::new(&params);
        let hp = Hyperparams { learning_rate: 0.1, ..Hyperparams::default() };
        for _ in 0..200 {
            let mut grads = params.zeros_like();
            grads.shared[0].kernels[0] = 2.0 * params.shared[0].kernels[0];
            optimizer_step(&mut params, &grads, &mut state, &hp).unwrap();
        }
        assert!(params.shared[0].kernels[0].abs() < 1e-2, "theta = {}", params.shared[0].kernels[0]);
    }

    #[test]
    fn adam_rejects_non_finite_gradients_with_tensor_name() {
        let arch = Architecture::tiny();
        let mut params = init_params::<f64>(&arch, 0, 8).unwrap();
        let mut grads = params.zeros_like();
        grads.gru_bwd.u_r.data_mut()[0] = f64::NAN;
        let mut state = AdamState::new(&params);
        let err = optimizer_step(&mut params, &grads, &mut state, &Hyperparams::default()).unwrap_err();
        assert!(err.to_string().contains("gru_bwd.u_r"), "{err}");
    }

    fn synthetic_items(n: usize, frames: usize, seed: u64) -> Vec<TrainItem<f64>> {
        use rand::Rng;
        let arch = Architecture::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let scene = i % arch.n_scenes;
                // Scene-dependent offset makes the task learnable.
                let features = Matrix::from_fn(arch.n_mels, frames, |_, _| {
                    rng.gen_range(-0.5..0.5) + scene as f64 * 0.8
                });
                let mut targets = EventRoll::zeros(arch.n_events, frames);
                for t in 0..frames {
                    targets.set(scene % arch.n_events, t, true);
                    if rng.gen_bool(0.2) {
                        targets.set((scene + 1) % arch.n_events, t, true);
                    }
                }
                TrainItem {
                    clip_id: format!("clip{i}"),
                    features,
                    targets,
                    scene,
                    fold: (i % 4) + 1,
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_initial_params_and_empty_history() {
        let items = synthetic_items(8, 8, 3);
        let hp = Hyperparams { epochs: 0, ..Hyperparams::default() };
        let arch = Architecture::tiny();
        let (params, history) = train_fold(&items, None, &arch, &hp, |_, _| Ok(())).unwrap();
        assert!(history.epochs.is_empty());
        let init = init_params::<f64>(&arch, hp.seed, 8).unwrap();
        assert_eq!(params, init);
    }

    #[test]
    fn training_is_deterministic() {
        let items = synthetic_items(8, 8, 3);
        let hp = Hyperparams { epochs: 3, ..Hyperparams::default() };
        let arch = Architecture::tiny();
        let (p1, h1) = train_fold(&items, None, &arch, &hp, |_, _| Ok(())).unwrap();
        let (p2, h2) = train_fold(&items, None, &arch, &hp, |_, _| Ok(())).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn training_reduces_the_loss() {
        let items = synthetic_items(8, 8, 5);
        let hp = Hyperparams { epochs: 15, ..Hyperparams::default() };
        let arch = Architecture::tiny();
        let (_, history) = train_fold(&items, None, &arch, &hp, |_, _| Ok(())).unwrap();
        let first = history.epochs.first().unwrap().e;
        let last = history.epochs.last().unwrap().e;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn empty_training_split_is_an_error() {
        let mut items = synthetic_items(4, 8, 1);
        for item in &mut items {
            item.fold = 1;
        }
        let err = train_fold(&items, Some(1), &Architecture::tiny(), &Hyperparams::default(), |_, _| Ok(()));
        assert!(err.is_err());
    }

    #[test]
    fn alpha_zero_training_never_touches_the_scene_head() {
        let items = synthetic_items(8, 8, 7);
        let arch = Architecture::tiny();
        let hp = Hyperparams { epochs: 3, alpha: 0.0, ..Hyperparams::default() };
        let (params, _) = train_fold(&items, None, &arch, &hp, |_, _| Ok(())).unwrap();
        let init = init_params::<f64>(&arch, hp.seed, 8).unwrap();
        assert_eq!(params.scene_out, init.scene_out);
        for (trained, fresh) in params.scene_conv.iter().zip(&init.scene_conv) {
            assert_eq!(trained, fresh);
        }
        assert_ne!(params.event_out, init.event_out, "event head must have trained");
    }

    #[test]
    fn cross_validation_pools_all_folds() {
        let items = synthetic_items(16, 8, 11);
        let hp = Hyperparams { epochs: 2, ..Hyperparams::default() };
        let report = cross_validate(&items, 4, &Architecture::tiny(), &hp, 0.5, 1).unwrap();
        assert_eq!(report.folds.len(), 4);
        assert_eq!(report.pooled.scene_ref.len(), 16);
        // fold partition is exhaustive and disjoint
        let mut seen = vec![0usize; 16];
        for fold in 1..=4 {
            for (i, item) in items.iter().enumerate() {
                if item.fold == fold {
                    seen[i] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn missing_fold_is_an_error() {
        let mut items = synthetic_items(8, 8, 2);
        for item in &mut items {
            item.fold = item.fold.min(3);
        }
        assert!(cross_validate(&items, 4, &Architecture::tiny(), &Hyperparams { epochs: 1, ..Default::default() }, 0.5, 1).is_err());
    }

    #[test]
    fn degenerate_single_scene_corpus_scores_perfect_scene_f() {
        let mut items = synthetic_items(8, 8, 13);
        for item in &mut items {
            item.scene = 0;
        }
        let hp = Hyperparams { epochs: 8, alpha: 1.0, ..Hyperparams::default() };
        let report = cross_validate(&items, 4, &Architecture::tiny(), &hp, 0.5, 1).unwrap();
        let scene = report.pooled.scene_f(2).unwrap();
        assert_eq!(scene.micro_f, 1.0);
    }

    #[test]
    fn sweep_emits_one_row_per_alpha() {
        let items = synthetic_items(8, 8, 17);
        let hp = Hyperparams { epochs: 1, ..Hyperparams::default() };
        let rows = sweep_alpha(&items, &[1.0, 0.1, 0.01, 0.001, 0.0], 4, &Architecture::tiny(), &hp, 0.5, 1).unwrap();
        assert_eq!(rows.len(), 5);
        for row in &rows {
            assert!(row.event_f.is_finite());
        }
    }
}
