//! Fully connected layer (affine map; callers apply the nonlinearity).

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<F> {
    /// Weight matrix, `out × in`.
    pub w: Matrix<F>,
    pub b: Vec<F>,
}

impl<F: Scalar> DenseParams<F> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        DenseParams { w: Matrix::zeros(out_dim, in_dim), b: vec![F::zero(); out_dim] }
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }
}

/// `W x + b`.
pub fn dense<F: Scalar>(x: &[F], p: &DenseParams<F>) -> Result<Vec<F>> {
    if x.len() != p.in_dim() {
        return Err(Error::shape("dense", format!("input of {}", p.in_dim()), format!("{}", x.len())));
    }
    let mut out = p.w.mul_vec(x);
    for (o, &b) in out.iter_mut().zip(&p.b) {
        *o += b;
    }
    Ok(out)
}

/// Apply the layer to every column of `x` (`in × T`), giving `out × T`.
pub fn dense_cols<F: Scalar>(x: &Matrix<F>, p: &DenseParams<F>) -> Result<Matrix<F>> {
    if x.rows() != p.in_dim() {
        return Err(Error::shape("dense", format!("{} rows", p.in_dim()), format!("{}", x.rows())));
    }
    let mut out = p.w.matmul(x);
    for (r, &b) in p.b.iter().enumerate() {
        out.row_mut(r).iter_mut().for_each(|v| *v += b);
    }
    Ok(out)
}

/// Backward for [`dense_cols`]: accumulates `dW`, `db`, and returns `dX`.
pub fn dense_cols_backward<F: Scalar>(
    x: &Matrix<F>,
    p: &DenseParams<F>,
    d_out: &Matrix<F>,
    d_params: &mut DenseParams<F>,
) -> Matrix<F> {
    assert_eq!(d_out.rows(), p.out_dim(), "dense backward rows");
    assert_eq!(d_out.cols(), x.cols(), "dense backward cols");
    let dw = d_out.matmul_bt(x);
    d_params.w.add_assign(&dw);
    for (r, db) in d_params.b.iter_mut().enumerate() {
        *db += d_out.row(r).iter().copied().sum();
    }
    p.w.matmul_at(d_out)
}
