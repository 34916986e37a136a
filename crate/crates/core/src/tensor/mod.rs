//! Dense 4-D tensors in (batch, channel, row, col) order and the layer
//! operations the refiner network needs, each with a hand-written backward.
//!
//! Everything is generic over [`Real`] so the same code path can be run in
//! `f64` for finite-difference checks; production code uses `f32`.

mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, relative_error, Layer, GRAD_CHECK_MAX_ELEMENTS, GRAD_CHECK_STEP};
pub use ops::{
    activation, activation_backward, avgpool2, avgpool2_backward, bce_loss, bce_loss_backward,
    concat_c, conv2d, conv2d_backward, maxpool2, maxpool2_backward, split_c, upsample2,
    upsample2_backward, Activation, ConvGrads, ConvKernel, PoolIndices, BCE_EPS,
};

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar type usable as a tensor element.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to any Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Tensor dimensions `(n, c, h, w)`.
pub type Dims = (usize, usize, usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T: Real = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: Dims, value: T) -> Self {
        let (n, c, h, w) = dims;
        assert!(
            n > 0 && c > 0 && h > 0 && w > 0,
            "tensor dims must be >= 1, got {dims:?}"
        );
        Self {
            dims,
            data: vec![value; n * c * h * w],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        let (n, c, h, w) = dims;
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::dim(format!(
                "tensor dims must be >= 1, got {dims:?}"
            )));
        }
        if data.len() != n * c * h * w {
            return Err(Error::dim(format!(
                "tensor {dims:?} needs {} elements, got {}",
                n * c * h * w,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(dims);
        let (n, c, h, w) = dims;
        let mut i = 0;
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        t.data[i] = f(b, ch, y, x);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.dims.0
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.dims.1
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.dims.2
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.dims.3
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

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, ch: usize, y: usize, x: usize) -> usize {
        let (_, c, h, w) = self.dims;
        ((b * c + ch) * h + y) * w + x
    }

    #[inline]
    pub fn get(&self, b: usize, ch: usize, y: usize, x: usize) -> T {
        self.data[self.index(b, ch, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, ch: usize, y: usize, x: usize, v: T) {
        let i = self.index(b, ch, y, x);
        self.data[i] = v;
    }

    /// Contiguous `h * w` plane for one (batch, channel) pair.
    #[inline]
    pub fn plane(&self, b: usize, ch: usize) -> &[T] {
        let hw = self.dims.2 * self.dims.3;
        let start = (b * self.dims.1 + ch) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, b: usize, ch: usize) -> &mut [T] {
        let hw = self.dims.2 * self.dims.3;
        let start = (b * self.dims.1 + ch) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dim(format!(
                "add: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keeps batch entries `[start, start + count)`.
    pub fn batch_slice(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.n() {
            return Err(Error::dim(format!(
                "batch slice {start}..{} out of range for n = {}",
                start + count,
                self.n()
            )));
        }
        let per = self.c() * self.h() * self.w();
        Ok(Self {
            dims: (count, self.c(), self.h(), self.w()),
            data: self.data[start * per..(start + count) * per].to_vec(),
        })
    }

    /// Stacks tensors of identical `(c, h, w)` along the batch axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("stack: no tensors"))?;
        let (_, c, h, w) = first.dims;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            if (p.c(), p.h(), p.w()) != (c, h, w) {
                return Err(Error::dim(format!(
                    "stack: dims {:?} vs {:?}",
                    p.dims, first.dims
                )));
            }
            n += p.n();
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            dims: (n, c, h, w),
            data,
        })
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff: dims differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().as_f64())
            .fold(0.0, f64::max)
    }
}
