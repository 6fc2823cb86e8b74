//! Dense row-major tensors and reverse-mode automatic differentiation.
//!
//! Everything is generic over [`Real`] so the same code runs in f32 for
//! training and in f64 when checking gradients against finite differences.

mod check;
mod graph;

pub use check::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};

use crate::error::{Error, Result};

/// Floating-point element type for tensors.
///
/// Implemented for `f32` and `f64`. The `from_f64`/`as_f64` hooks exist so
/// generic code can mix literal constants into either width without sprinkling
/// `NumCast` calls everywhere. (`as_f64` is named to avoid colliding with
/// `ToPrimitive::to_f64`, which `Float` already pulls in.)
pub trait Real:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor. Immutable once built; operations allocate fresh
/// outputs rather than mutating inputs in place.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Wraps existing data, checking that the element count matches the shape.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                op: "from_vec",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Value of a scalar (shape `[1]`) tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise conversion to another float width.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Adds `other` into `self` elementwise. Shapes must already match.
    pub(crate) fn accumulate(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (dst, src) in self.data.iter_mut().zip(other.data.iter()) {
            *dst = *dst + *src;
        }
    }
}

/// `c += a · b` for row-major `a: [m,k]`, `b: [k,n]`, `c: [m,n]`.
///
/// The k-inner loop walks contiguous rows of `b` and `c` so the compiler can
/// vectorize it.
pub(crate) fn gemm_nn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] = c_row[j] + a_ip * b_row[j];
            }
        }
    }
}

/// `c += a · bᵀ` for `a: [m,k]`, `b: [n,k]`, `c: [m,n]`. Row-by-row dot
/// products; both operands are walked contiguously.
pub(crate) fn gemm_nt<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            // Four independent accumulators break the serial dependency of
            // the dot product so the loop can vectorize.
            let mut acc = [T::zero(); 4];
            let mut chunks_a = a_row.chunks_exact(4);
            let mut chunks_b = b_row.chunks_exact(4);
            for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
                for l in 0..4 {
                    acc[l] = acc[l] + ca[l] * cb[l];
                }
            }
            let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
            for (x, y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
                total = total + *x * *y;
            }
            c[i * n + j] = c[i * n + j] + total;
        }
    }
}

/// `c += aᵀ · b` for `a: [m,k]`, `b: [m,n]`, `c: [k,n]`.
pub(crate) fn gemm_tn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == T::zero() {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] = c_row[j] + a_ip * b_row[j];
            }
        }
    }
}

/// A named tensor with an accumulated gradient of the same shape.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = T::zero();
        }
    }
}

/// Uniform mutable traversal over a collection of parameters, in a fixed
/// deterministic order. The optimizer, the checkpoint writer, and the gradient
/// checker all iterate parameters through this trait.
pub trait ParamWalk<T> {
    fn walk_mut(&mut self, visit: &mut dyn FnMut(&mut Parameter<T>) -> Result<()>) -> Result<()>;
}

impl<T> ParamWalk<T> for Vec<Parameter<T>> {
    fn walk_mut(&mut self, visit: &mut dyn FnMut(&mut Parameter<T>) -> Result<()>) -> Result<()> {
        for p in self.iter_mut() {
            visit(p)?;
        }
        Ok(())
    }
}
