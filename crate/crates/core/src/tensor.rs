//! Dense 2-d tensors and the scalar abstraction.
//!
//! Everything the model computes is a row-major matrix of `f32`; gradient
//! checks instantiate the same code with `f64` so central differences are not
//! drowned by single-precision rounding.

use crate::error::{Error, Result};

/// Floating-point element type for tensors and the autodiff graph.
pub trait Scalar:
    Copy + PartialEq + PartialOrd + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn neg_infinity() -> Self;

    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, o: Self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline(always)]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline(always)]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline(always)]
            fn neg_infinity() -> Self {
                <$t>::NEG_INFINITY
            }
            #[inline(always)]
            fn add(self, o: Self) -> Self {
                self + o
            }
            #[inline(always)]
            fn sub(self, o: Self) -> Self {
                self - o
            }
            #[inline(always)]
            fn mul(self, o: Self) -> Self {
                self * o
            }
            #[inline(always)]
            fn div(self, o: Self) -> Self {
                self / o
            }
            #[inline(always)]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline(always)]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline(always)]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline(always)]
            fn tanh(self) -> Self {
                self.tanh()
            }
            #[inline(always)]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline(always)]
            fn maximum(self, o: Self) -> Self {
                self.max(o)
            }
            #[inline(always)]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Row-major 2-d tensor. Scalars are `1×1`, row vectors `1×n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                details: format!("{}x{} needs {} values, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|v| v.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    details: "ragged rows".into(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Tensor { rows: r, cols: c, data })
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline(always)]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline(always)]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_scalar(&self) -> Result<T> {
        if self.rows * self.cols != 1 {
            return Err(Error::ShapeMismatch {
                op: "to_scalar",
                details: format!("expected 1x1, got {}x{}", self.rows, self.cols),
            });
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise accumulate: `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = a.add(*b);
        }
    }

    pub fn scale_in_place(&mut self, c: T) {
        for v in self.data.iter_mut() {
            *v = v.mul(c);
        }
    }

    pub fn fill(&mut self, v: T) {
        for x in self.data.iter_mut() {
            *x = v;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn convert<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// `C = op(A) · op(B)` where each operand is optionally transposed.
///
/// The three loop orders below are each written so the innermost loop walks
/// contiguous memory and autovectorizes.
#[allow(clippy::needless_range_loop)]
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, ta: bool, tb: bool) -> Result<Tensor<T>> {
    let (am, ak) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (bk, bn) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if ak != bk {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            details: format!(
                "inner dims disagree: {}x{}{} vs {}x{}{}",
                a.rows,
                a.cols,
                if ta { "^T" } else { "" },
                b.rows,
                b.cols,
                if tb { "^T" } else { "" }
            ),
        });
    }
    let (m, k, n) = (am, ak, bn);
    let mut out: Tensor<T> = Tensor::zeros(m, n);
    match (ta, tb) {
        (false, false) => {
            for i in 0..m {
                let arow = a.row(i);
                let crow = out.row_mut(i);
                for p in 0..k {
                    let aip = arow[p];
                    let brow = b.row(p);
                    for j in 0..n {
                        crow[j] = crow[j].add(aip.mul(brow[j]));
                    }
                }
            }
        }
        (false, true) => {
            // C[i][j] = dot(a.row(i), b.row(j))
            for i in 0..m {
                let arow = a.row(i);
                let crow = out.row_mut(i);
                for j in 0..n {
                    let brow = b.row(j);
                    let mut acc = T::ZERO;
                    for p in 0..k {
                        acc = acc.add(arow[p].mul(brow[p]));
                    }
                    crow[j] = acc;
                }
            }
        }
        (true, false) => {
            // C[i][j] = sum_p A[p][i] * B[p][j]
            for p in 0..k {
                let arow = a.row(p);
                let brow = b.row(p);
                for i in 0..m {
                    let api = arow[i];
                    let crow = out.row_mut(i);
                    for j in 0..n {
                        crow[j] = crow[j].add(api.mul(brow[j]));
                    }
                }
            }
        }
        (true, true) => {
            // C[i][j] = sum_p A[p][i] * B[j][p]
            for i in 0..m {
                let crow = out.row_mut(i);
                for j in 0..n {
                    let brow = b.row(j);
                    let mut acc = T::ZERO;
                    for p in 0..k {
                        acc = acc.add(a.get(p, i).mul(brow[p]));
                    }
                    crow[j] = acc;
                }
            }
        }
    }
    Ok(out)
}
