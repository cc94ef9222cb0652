//! Gated recurrent unit: single step, directional sequence scan with cached
//! gates, bidirectional wrapper, and exact backpropagation through time.
//!
//! The cell follows the convention
//!
//! ```text
//! g = σ(W_g x + U_g h_adj + b_g)          update gate
//! r = σ(W_r x + U_r h_adj + b_r)          reset gate
//! h = (1 − g) ⊙ h_adj + g ⊙ tanh(W_h x + U_h (r ⊙ h_adj) + b_h)
//! ```
//!
//! where `h_adj` is the previous hidden state for the forward direction and
//! the next one for the backward direction. Initial hidden states are zero.

use crate::error::{Error, Result};
use crate::nn::activ::sigmoid;
use crate::tensor::{Matrix, Scalar};

/// Parameters of one GRU direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<F> {
    pub w_g: Matrix<F>,
    pub w_r: Matrix<F>,
    pub w_h: Matrix<F>,
    pub u_g: Matrix<F>,
    pub u_r: Matrix<F>,
    pub u_h: Matrix<F>,
    pub b_g: Vec<F>,
    pub b_r: Vec<F>,
    pub b_h: Vec<F>,
}

impl<F: Scalar> GruParams<F> {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GruParams {
            w_g: Matrix::zeros(hidden, input),
            w_r: Matrix::zeros(hidden, input),
            w_h: Matrix::zeros(hidden, input),
            u_g: Matrix::zeros(hidden, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_g: vec![F::zero(); hidden],
            b_r: vec![F::zero(); hidden],
            b_h: vec![F::zero(); hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_g.rows()
    }

    pub fn input(&self) -> usize {
        self.w_g.cols()
    }
}

/// One cell update. `h_adj` is the adjacent hidden state (previous frame for
/// a forward pass, next frame for a backward pass).
pub fn gru_step<F: Scalar>(x: &[F], h_adj: &[F], p: &GruParams<F>) -> Result<Vec<F>> {
    if x.len() != p.input() {
        return Err(Error::shape("gru_step input", format!("{}", p.input()), format!("{}", x.len())));
    }
    if h_adj.len() != p.hidden() {
        return Err(Error::shape("gru_step hidden", format!("{}", p.hidden()), format!("{}", h_adj.len())));
    }
    let (g, r, cand, h) = step_inner(x, h_adj, p);
    let _ = (g, r, cand);
    Ok(h)
}

fn step_inner<F: Scalar>(x: &[F], h_adj: &[F], p: &GruParams<F>) -> (Vec<F>, Vec<F>, Vec<F>, Vec<F>) {
    let hidden = p.hidden();
    let mut g = p.w_g.mul_vec(x);
    p.u_g.mul_vec_acc(h_adj, &mut g);
    let mut r = p.w_r.mul_vec(x);
    p.u_r.mul_vec_acc(h_adj, &mut r);
    for i in 0..hidden {
        g[i] = sigmoid(g[i] + p.b_g[i]);
        r[i] = sigmoid(r[i] + p.b_r[i]);
    }
    let gated: Vec<F> = r.iter().zip(h_adj).map(|(&ri, &hi)| ri * hi).collect();
    let mut cand = p.w_h.mul_vec(x);
    p.u_h.mul_vec_acc(&gated, &mut cand);
    for i in 0..hidden {
        cand[i] = (cand[i] + p.b_h[i]).tanh();
    }
    let h: Vec<F> = (0..hidden).map(|i| (F::one() - g[i]) * h_adj[i] + g[i] * cand[i]).collect();
    (g, r, cand, h)
}

/// Per-frame gate values retained for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruCache<F> {
    pub g: Matrix<F>,
    pub r: Matrix<F>,
    pub cand: Matrix<F>,
    pub h: Matrix<F>,
    reversed: bool,
}

/// Scan a full sequence (`input × T`) in one direction. `reversed == true`
/// runs from the last frame towards the first.
pub fn gru_sequence_forward<F: Scalar>(
    seq: &Matrix<F>,
    p: &GruParams<F>,
    reversed: bool,
) -> Result<(Matrix<F>, GruCache<F>)> {
    if seq.cols() == 0 {
        return Err(Error::EmptyInput("gru sequence"));
    }
    if seq.rows() != p.input() {
        return Err(Error::shape("gru sequence", format!("{} rows", p.input()), format!("{}", seq.rows())));
    }
    let hidden = p.hidden();
    let frames = seq.cols();
    let mut cache = GruCache {
        g: Matrix::zeros(hidden, frames),
        r: Matrix::zeros(hidden, frames),
        cand: Matrix::zeros(hidden, frames),
        h: Matrix::zeros(hidden, frames),
        reversed,
    };
    let mut h_adj = vec![F::zero(); hidden];
    let mut x = vec![F::zero(); seq.rows()];
    for k in 0..frames {
        let t = if reversed { frames - 1 - k } else { k };
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = seq.get(i, t);
        }
        let (g, r, cand, h) = step_inner(&x, &h_adj, p);
        for i in 0..hidden {
            cache.g.set(i, t, g[i]);
            cache.r.set(i, t, r[i]);
            cache.cand.set(i, t, cand[i]);
            cache.h.set(i, t, h[i]);
        }
        h_adj = h;
    }
    let out = cache.h.clone();
    Ok((out, cache))
}

/// Backpropagation through one direction. `d_h` holds the loss gradient of
/// every output column. Parameter gradients accumulate into `d_params`, input
/// gradients into `d_seq`.
pub fn gru_sequence_backward<F: Scalar>(
    seq: &Matrix<F>,
    p: &GruParams<F>,
    cache: &GruCache<F>,
    d_h: &Matrix<F>,
    d_seq: &mut Matrix<F>,
    d_params: &mut GruParams<F>,
) {
    let hidden = p.hidden();
    let frames = seq.cols();
    assert_eq!(d_h.rows(), hidden, "gru backward hidden");
    assert_eq!(d_h.cols(), frames, "gru backward frames");

    let mut carry = vec![F::zero(); hidden]; // dL/dh_adj flowing across frames
    let mut x = vec![F::zero(); seq.rows()];
    let mut h_prev = vec![F::zero(); hidden];
    for k in (0..frames).rev() {
        let t = if cache.reversed { frames - 1 - k } else { k };
        let t_prev = if k > 0 { Some(if cache.reversed { frames - k } else { k - 1 }) } else { None };
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = seq.get(i, t);
        }
        for i in 0..hidden {
            h_prev[i] = match t_prev {
                Some(tp) => cache.h.get(i, tp),
                None => F::zero(),
            };
        }

        let mut dh = vec![F::zero(); hidden];
        for i in 0..hidden {
            dh[i] = d_h.get(i, t) + carry[i];
        }

        let mut da_g = vec![F::zero(); hidden];
        let mut da_c = vec![F::zero(); hidden];
        let mut gated = vec![F::zero(); hidden];
        let mut dcarry = vec![F::zero(); hidden];
        for i in 0..hidden {
            let g = cache.g.get(i, t);
            let r = cache.r.get(i, t);
            let cand = cache.cand.get(i, t);
            let dg = dh[i] * (cand - h_prev[i]);
            let dcand = dh[i] * g;
            dcarry[i] = dh[i] * (F::one() - g);
            da_c[i] = dcand * (F::one() - cand * cand);
            da_g[i] = dg * g * (F::one() - g);
            gated[i] = r * h_prev[i];
        }

        // Candidate branch.
        d_params.w_h.add_outer(&da_c, &x);
        d_params.u_h.add_outer(&da_c, &gated);
        add_slice(&mut d_params.b_h, &da_c);
        add_tr_mul_col(&p.w_h, &da_c, d_seq, t);
        let mut d_gated = vec![F::zero(); hidden];
        p.u_h.tr_mul_vec_acc(&da_c, &mut d_gated);
        let mut da_r = vec![F::zero(); hidden];
        for i in 0..hidden {
            let r = cache.r.get(i, t);
            da_r[i] = d_gated[i] * h_prev[i] * r * (F::one() - r);
            dcarry[i] += d_gated[i] * r;
        }

        // Update gate branch.
        d_params.w_g.add_outer(&da_g, &x);
        d_params.u_g.add_outer(&da_g, &h_prev);
        add_slice(&mut d_params.b_g, &da_g);
        add_tr_mul_col(&p.w_g, &da_g, d_seq, t);
        p.u_g.tr_mul_vec_acc(&da_g, &mut dcarry);

        // Reset gate branch.
        d_params.w_r.add_outer(&da_r, &x);
        d_params.u_r.add_outer(&da_r, &h_prev);
        add_slice(&mut d_params.b_r, &da_r);
        add_tr_mul_col(&p.w_r, &da_r, d_seq, t);
        p.u_r.tr_mul_vec_acc(&da_r, &mut dcarry);

        carry = dcarry;
    }
}

fn add_slice<F: Scalar>(acc: &mut [F], v: &[F]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// `d_seq[:, t] += Wᵀ y`.
fn add_tr_mul_col<F: Scalar>(w: &Matrix<F>, y: &[F], d_seq: &mut Matrix<F>, t: usize) {
    for (r, &yr) in y.iter().enumerate() {
        let row = w.row(r);
        for (c, &wrc) in row.iter().enumerate() {
            let cur = d_seq.get(c, t);
            d_seq.set(c, t, cur + wrc * yr);
        }
    }
}

/// Bidirectional scan: output column `t` stacks the forward hidden state on
/// top of the backward one (`2H × T`).
pub fn bigru<F: Scalar>(seq: &Matrix<F>, fwd: &GruParams<F>, bwd: &GruParams<F>) -> Result<Matrix<F>> {
    bigru_forward(seq, fwd, bwd).map(|(out, _)| out)
}

#[derive(Debug, Clone)]
pub struct BigruCache<F> {
    pub fwd: GruCache<F>,
    pub bwd: GruCache<F>,
}

pub fn bigru_forward<F: Scalar>(
    seq: &Matrix<F>,
    fwd: &GruParams<F>,
    bwd: &GruParams<F>,
) -> Result<(Matrix<F>, BigruCache<F>)> {
    let (h_f, cache_f) = gru_sequence_forward(seq, fwd, false)?;
    let (h_b, cache_b) = gru_sequence_forward(seq, bwd, true)?;
    let hidden_f = h_f.rows();
    let mut out = Matrix::zeros(hidden_f + h_b.rows(), seq.cols());
    for t in 0..seq.cols() {
        for i in 0..hidden_f {
            out.set(i, t, h_f.get(i, t));
        }
        for i in 0..h_b.rows() {
            out.set(hidden_f + i, t, h_b.get(i, t));
        }
    }
    Ok((out, BigruCache { fwd: cache_f, bwd: cache_b }))
}

pub fn bigru_backward<F: Scalar>(
    seq: &Matrix<F>,
    fwd: &GruParams<F>,
    bwd: &GruParams<F>,
    cache: &BigruCache<F>,
    d_out: &Matrix<F>,
    d_seq: &mut Matrix<F>,
    d_fwd: &mut GruParams<F>,
    d_bwd: &mut GruParams<F>,
) {
    let hidden_f = fwd.hidden();
    let frames = seq.cols();
    let mut d_hf = Matrix::zeros(hidden_f, frames);
    let mut d_hb = Matrix::zeros(bwd.hidden(), frames);
    for t in 0..frames {
        for i in 0..hidden_f {
            d_hf.set(i, t, d_out.get(i, t));
        }
        for i in 0..bwd.hidden() {
            d_hb.set(i, t, d_out.get(hidden_f + i, t));
        }
    }
    gru_sequence_backward(seq, fwd, &cache.fwd, &d_hf, d_seq, d_fwd);
    gru_sequence_backward(seq, bwd, &cache.bwd, &d_hb, d_seq, d_bwd);
}
