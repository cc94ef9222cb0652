//! Dense row-major containers used throughout the network code.
//!
//! Everything is generic over [`Scalar`] so the same kernels run at 32-bit
//! (training speed) or 64-bit (gradient checks). Feature extraction always
//! works in `f64` and converts at the network boundary.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Floating-point element type for network parameters and activations.
pub trait Scalar:
    Copy
    + Debug
    + Display
    + Default
    + PartialOrd
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Send
    + Sync
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + 'static
{
    /// Tag written into checkpoint manifests.
    const DTYPE: &'static str;
    /// Size of one element in bytes (checkpoint payload stride).
    const BYTES: usize;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;
    /// Append the little-endian byte representation to `out`.
    fn write_le(self, out: &mut Vec<u8>);
    /// Decode one element from little-endian bytes (`bytes.len() == BYTES`).
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty, $tag:literal) => {
        impl Scalar for $t {
            const DTYPE: &'static str = $tag;
            const BYTES: usize = std::mem::size_of::<$t>();

            #[inline]
            fn zero() -> Self {
                0.0
            }
            #[inline]
            fn one() -> Self {
                1.0
            }
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline]
            fn tanh(self) -> Self {
                self.tanh()
            }
            #[inline]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn max(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            #[inline]
            fn min(self, other: Self) -> Self {
                <$t>::min(self, other)
            }
            #[inline]
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            #[inline]
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("scalar byte width"))
            }
        }
    };
}

impl_scalar!(f32, "f32");
impl_scalar!(f64, "f64");

/// Row-major 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<F> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `self (r×c) · x (c)` into a fresh vector.
    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.cols, "mul_vec width");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `out += self · x`.
    pub fn mul_vec_acc(&self, x: &[F], out: &mut [F]) {
        assert_eq!(x.len(), self.cols, "mul_vec_acc width");
        assert_eq!(out.len(), self.rows, "mul_vec_acc out");
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ (c×r) · y (r)`; row-major friendly transposed product.
    pub fn tr_mul_vec_acc(&self, y: &[F], out: &mut [F]) {
        assert_eq!(y.len(), self.rows, "tr_mul_vec height");
        assert_eq!(out.len(), self.cols, "tr_mul_vec out");
        for r in 0..self.rows {
            axpy(y[r], self.row(r), out);
        }
    }

    /// `self += dy ⊗ x` (rank-one update; dy indexes rows, x indexes cols).
    pub fn add_outer(&mut self, dy: &[F], x: &[F]) {
        assert_eq!(dy.len(), self.rows, "add_outer rows");
        assert_eq!(x.len(), self.cols, "add_outer cols");
        for r in 0..self.rows {
            axpy(dy[r], x, self.row_mut(r));
        }
    }

    /// `self (m×k) · other (k×n)`.
    pub fn matmul(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!(self.cols, other.rows, "matmul inner dim");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let out_row = out.row_mut(r);
            for (k, &a) in a_row.iter().enumerate() {
                axpy(a, other.row(k), out_row);
            }
        }
        out
    }

    /// `self (m×k) · otherᵀ (k×n)` where `other` is `n×k`.
    pub fn matmul_bt(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!(self.cols, other.cols, "matmul_bt inner dim");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a_row = self.row(r);
            for c in 0..other.rows {
                out.set(r, c, dot(a_row, other.row(c)));
            }
        }
        out
    }

    /// `selfᵀ (k×m) · other (m?) ` — here: `self` is `m×k`, result `k×n` for `other m×n`.
    pub fn matmul_at(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!(self.rows, other.rows, "matmul_at inner dim");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for m in 0..self.rows {
            let a_row = self.row(m);
            let b_row = other.row(m);
            for (k, &a) in a_row.iter().enumerate() {
                axpy(a, b_row, out.row_mut(k));
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix<F>) {
        assert_eq!(self.data.len(), other.data.len(), "add_assign size");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: F) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x.to_f64()).collect() }
    }

    pub fn convert<G: Scalar>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| G::from_f64(x.to_f64())).collect(),
        }
    }
}

#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `out += a * x` elementwise.
#[inline]
pub fn axpy<F: Scalar>(a: F, x: &[F], out: &mut [F]) {
    debug_assert_eq!(x.len(), out.len());
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// 3-D feature map: channels × frequency bins × time frames, time contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<F> {
    channels: usize,
    freq: usize,
    time: usize,
    data: Vec<F>,
}

impl<F: Scalar> FeatureMap<F> {
    pub fn zeros(channels: usize, freq: usize, time: usize) -> Self {
        FeatureMap { channels, freq, time, data: vec![F::zero(); channels * freq * time] }
    }

    pub fn from_vec(channels: usize, freq: usize, time: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), channels * freq * time, "feature map data length");
        FeatureMap { channels, freq, time, data }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn freq(&self) -> usize {
        self.freq
    }

    #[inline]
    pub fn time(&self) -> usize {
        self.time
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.freq, self.time)
    }

    #[inline]
    pub fn get(&self, c: usize, f: usize, t: usize) -> F {
        self.data[(c * self.freq + f) * self.time + t]
    }

    #[inline]
    pub fn set(&mut self, c: usize, f: usize, t: usize, v: F) {
        self.data[(c * self.freq + f) * self.time + t] = v;
    }

    /// Time row at (channel, frequency): contiguous slice of length `time`.
    #[inline]
    pub fn trow(&self, c: usize, f: usize) -> &[F] {
        let start = (c * self.freq + f) * self.time;
        &self.data[start..start + self.time]
    }

    #[inline]
    pub fn trow_mut(&mut self, c: usize, f: usize) -> &mut [F] {
        let start = (c * self.freq + f) * self.time;
        &mut self.data[start..start + self.time]
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        FeatureMap {
            channels: self.channels,
            freq: self.freq,
            time: self.time,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Reinterpret a `C×1×T` map as a `C×T` matrix (the recurrent-layer input).
    pub fn to_matrix(&self) -> Matrix<F> {
        assert_eq!(self.freq, 1, "to_matrix requires a fully pooled frequency axis");
        Matrix::from_vec(self.channels, self.time, self.data.clone())
    }

    /// Inverse of [`FeatureMap::to_matrix`].
    pub fn from_matrix(m: &Matrix<F>) -> Self {
        FeatureMap { channels: m.rows(), freq: 1, time: m.cols(), data: m.data().to_vec() }
    }
}
