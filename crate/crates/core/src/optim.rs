//! Adam optimizer over flat parameter vectors.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::scalar::Real;
use crate::sampling::{ThetaGrad, ThetaParams};
use crate::tensor::CTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub t: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: T, beta1: T, beta2: T, eps: T) -> Result<Self> {
        let unit = |b: T| b > T::zero() && b < T::one();
        if !(lr >= T::zero()) || !unit(beta1) || !unit(beta2) || !(eps > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "bad Adam hyperparameters lr={lr} beta1={beta1} beta2={beta2} eps={eps}"
            )));
        }
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn with_lr(lr: T) -> Result<Self> {
        Self::new(lr, T::of(0.9), T::of(0.999), T::of(1e-8))
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if self.m.is_empty() {
            self.m = vec![T::zero(); params.len()];
            self.v = vec![T::zero(); params.len()];
        } else if self.m.len() != params.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.m, &self.v)
    }

    /// Stores both moments as a `2 x n` real tensor (empty state is skipped).
    pub fn write(&self, path: &Path) -> Result<()> {
        if self.m.is_empty() {
            return Ok(());
        }
        let vals: Vec<T> = self.m.iter().chain(&self.v).copied().collect();
        write_tensor(&CTensor::from_real(vec![2, self.m.len()], &vals)?, path)
    }

    pub fn read_moments(&mut self, path: &Path, t: u64) -> Result<()> {
        if !path.exists() {
            return Ok(());
        }
        let tensor: CTensor<T> = read_tensor(path)?;
        let [2, n] = tensor.dims() else {
            return Err(Error::format(path, "optimizer moments must be 2 x n"));
        };
        let n = *n;
        self.m = tensor.data()[..n].iter().map(|z| z.re).collect();
        self.v = tensor.data()[n..].iter().map(|z| z.re).collect();
        self.t = t;
        Ok(())
    }
}

impl<T: Real> ThetaParams<T> {
    /// One optimizer step on the free raw parameters; fixed locations are untouched.
    pub fn apply_grad(&mut self, grad: &ThetaGrad<T>, opt: &mut Adam<T>) -> Result<()> {
        let mut raw = self.raw_flat();
        opt.step(&mut raw, &grad.to_flat())?;
        self.set_raw_flat(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = Adam::with_lr(0.1).unwrap();
        let mut p = vec![1.0f64, -2.0];
        opt.step(&mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 1.9).abs() < 1e-7);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut opt = Adam::with_lr(0.0).unwrap();
        let mut p = vec![0.25f64, 7.0];
        for _ in 0..5 {
            opt.step(&mut p, &[1.0, -4.0]).unwrap();
        }
        assert_eq!(p, vec![0.25, 7.0]);
    }

    #[test]
    fn rejects_bad_betas() {
        assert!(Adam::new(1e-3f64, 1.0, 0.999, 1e-8).is_err());
        assert!(Adam::new(-1.0f64, 0.9, 0.999, 1e-8).is_err());
    }
}
