//! Dense complex tensors in row-major order.
//!
//! A 2-D image of shape `(P, Q)` stores element `(p, q)` at `p * Q + q`, so the
//! first axis is the vertical (row) index and the second the horizontal one.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{czero, Real, C};

#[derive(Debug, Clone, PartialEq)]
pub struct CTensor<T> {
    dims: Vec<usize>,
    data: Vec<C<T>>,
}

impl<T: Real> CTensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<C<T>>) -> Result<Self> {
        let len = checked_len(&dims)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "dims {:?} hold {} elements, data has {}",
                dims,
                len,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = checked_len(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![czero(); len],
        })
    }

    /// Builds a tensor from real values (imaginary parts zero).
    pub fn from_real(dims: Vec<usize>, values: &[T]) -> Result<Self> {
        Self::new(dims, values.iter().map(|&v| C::new(v, T::zero())).collect())
    }

    pub(crate) fn from_parts_unchecked(dims: Vec<usize>, data: Vec<C<T>>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C<T>> {
        self.data
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn shape2(&self) -> Result<(usize, usize)> {
        match self.dims.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Shape(format!("expected a 2-D tensor, got {other:?}"))),
        }
    }

    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        if checked_len(&dims)? != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Inner product `sum conj(self) * other`.
    pub fn dot(&self, other: &Self) -> C<T> {
        cdot(&self.data, &other.data)
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|z| z * a)
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: C<T>, x: &Self) {
        debug_assert_eq!(self.dims, x.dims);
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C<T>, C<T>) -> C<T>) -> Self {
        debug_assert_eq!(self.dims, other.dims);
        Self {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Largest element-wise `|self - other|`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Real>(&self) -> CTensor<U> {
        CTensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|z| C::new(U::of(z.re.as_f64()), U::of(z.im.as_f64())))
                .collect(),
        }
    }
}

impl<T> Index<usize> for CTensor<T> {
    type Output = C<T>;
    fn index(&self, i: usize) -> &C<T> {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for CTensor<T> {
    fn index_mut(&mut self, i: usize) -> &mut C<T> {
        &mut self.data[i]
    }
}

pub(crate) fn cdot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    let mut re = T::zero();
    let mut im = T::zero();
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C::new(re, im)
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::Shape("tensor needs at least one axis".into()));
    }
    if dims.contains(&0) {
        return Err(Error::Shape(format!("zero-sized axis in {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        let err = CTensor::<f64>::new(vec![2, 3], vec![C::new(0.0, 0.0); 5]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_zero_axis() {
        assert!(CTensor::<f64>::zeros(&[0]).is_err());
        assert!(CTensor::<f64>::zeros(&[]).is_err());
    }

    #[test]
    fn dot_conjugates_left_argument() {
        let a = CTensor::new(vec![1], vec![C::new(0.0, 1.0)]).unwrap();
        let b = CTensor::new(vec![1], vec![C::new(0.0, 1.0)]).unwrap();
        assert_eq!(a.dot(&b), C::new(1.0, 0.0));
    }
}
