//! Reverse-mode automatic differentiation over dense `N×C×H×W` tensors.
//!
//! Training runs in `f32`. The same graph code instantiates at `f64`, which
//! [`gradcheck`] uses as a shadow precision for finite-difference checks.

mod adam;
mod conv;
pub mod gradcheck;
mod graph;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{Error, Result};
use crate::rng::Stream;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::ConvGeometry;
pub use graph::{BatchStats, Graph, Var};

pub trait Scalar: Float + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + Sum + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    fn from_f32(v: f32) -> Self {
        Self::from_f64(f64::from(v))
    }

    fn as_f32(self) -> f32 {
        self.as_f64() as f32
    }

    /// `C += A·B` for strided `m×k` `A`, `k×n` `B` and `m×n` `C`.
    fn gemm(dims: Gemm, a: &[Self], b: &[Self], c: &mut [Self]);
}

/// Shapes and element strides (row, column) of a [`Scalar::gemm`] call.
#[derive(Debug, Clone, Copy)]
pub struct Gemm {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub c: (usize, usize),
}

impl Gemm {
    fn check(&self, a: usize, b: usize, c: usize) {
        let span = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
            if rows == 0 || cols == 0 {
                0
            } else {
                (rows - 1) * rs + (cols - 1) * cs + 1
            }
        };
        assert!(span(self.m, self.k, self.a) <= a, "gemm: A out of bounds");
        assert!(span(self.k, self.n, self.b) <= b, "gemm: B out of bounds");
        assert!(span(self.m, self.n, self.c) <= c, "gemm: C out of bounds");
    }
}

macro_rules! gemm_impl {
    ($kernel:ident, $a:ident, $b:ident, $c:ident, $d:ident) => {{
        $d.check($a.len(), $b.len(), $c.len());
        if $d.m == 0 || $d.n == 0 {
            return;
        }
        let s = |x: usize| x as isize;
        // SAFETY: `check` proved every strided access stays inside its slice,
        // and `c` is a unique borrow so the output cannot alias the inputs.
        unsafe {
            matrixmultiply::$kernel(
                $d.m,
                $d.k,
                $d.n,
                1.0,
                $a.as_ptr(),
                s($d.a.0),
                s($d.a.1),
                $b.as_ptr(),
                s($d.b.0),
                s($d.b.1),
                1.0,
                $c.as_mut_ptr(),
                s($d.c.0),
                s($d.c.1),
            )
        }
    }};
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn as_f32(self) -> f32 {
        self
    }
    fn gemm(d: Gemm, a: &[Self], b: &[Self], c: &mut [Self]) {
        gemm_impl!(sgemm, a, b, c, d)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn gemm(d: Gemm, a: &[Self], b: &[Self], c: &mut [Self]) {
        gemm_impl!(dgemm, a, b, c, d)
    }
}

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape("tensor", alloc::format!("zero dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                alloc::format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// Gaussian fill from `stream`.
    pub fn randn(shape: &[usize], std: f64, stream: &mut Stream) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| T::from_f64(stream.normal() * std)).collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn uniform(shape: &[usize], lo: f64, hi: f64, stream: &mut Stream) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| T::from_f64(stream.uniform_range(lo, hi))).collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape("reshape", alloc::format!("{:?} -> {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Samples `start..start+count` along the batch axis.
    pub fn slice_batch(&self, start: usize, count: usize) -> Result<Self> {
        let n = self.shape[0];
        if count == 0 || start + count > n {
            return Err(Error::shape("slice_batch", alloc::format!("rows {start}..{} of {n}", start + count)));
        }
        let per = self.data.len() / n;
        let mut shape = self.shape.clone();
        shape[0] = count;
        Ok(Tensor { shape, data: self.data[start * per..(start + count) * per].to_vec() })
    }

    /// Concatenates along the batch axis; all trailing dims must agree.
    pub fn stack(parts: &[Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("stack"))?;
        let tail = &first.shape[1..];
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::shape("stack", alloc::format!("{:?} vs {:?}", p.shape, first.shape)));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = n;
        Ok(Tensor { shape, data })
    }

    pub fn dot(&self, other: &Tensor<T>) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn sq_norm(&self) -> T {
        self.data.iter().map(|&a| a * a).sum()
    }
}
