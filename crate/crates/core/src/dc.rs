//! Data-consistency block: conjugate-gradient solution of
//! `(A^H A + I) x = z + A^H b` and its reverse-mode rule.

use crate::error::{Error, Result};
use crate::fourier::{LocationAxes, Sampler2D};
use crate::mri::{adjoint_mc, forward_mc, location_grad_mc_axes, normal_raw, CoilSet, KSpaceData};
use crate::scalar::{Real, C};
use crate::tensor::{cdot, CTensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub max_iters: usize,
    /// Relative residual `||r|| / ||rhs||` at which iteration stops early.
    pub tol: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            tol: 1e-10,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "CG needs max_iters >= 1 and tol > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome<T> {
    pub x: CTensor<T>,
    pub rel_residual: f64,
    pub iterations: usize,
    /// A search direction had non-positive curvature; `x` is the last iterate.
    pub breakdown: bool,
    /// Relative residual before the first and after every iteration.
    pub residual_history: Vec<f64>,
}

/// Plain CG for a Hermitian positive-definite operator given as a closure.
pub fn conjugate_gradient<T: Real>(
    apply: impl Fn(&[C<T>]) -> Vec<C<T>>,
    rhs: &CTensor<T>,
    x0: CTensor<T>,
    cfg: &CgConfig,
) -> Result<CgOutcome<T>> {
    cfg.validate()?;
    rhs.same_dims(&x0)?;
    let rhs_norm = rhs.norm().as_f64();
    let mut x = x0;
    let hx = apply(x.data());
    let mut r: Vec<C<T>> = rhs.data().iter().zip(&hx).map(|(&b, &h)| b - h).collect();
    let mut p = r.clone();
    let mut rs = cdot(&r, &r).re;
    let rel = |rs: T| {
        if rhs_norm == 0.0 {
            rs.as_f64().sqrt()
        } else {
            rs.as_f64().sqrt() / rhs_norm
        }
    };
    let mut history = vec![rel(rs)];
    let mut iterations = 0;
    let mut breakdown = false;
    while iterations < cfg.max_iters && rel(rs) > cfg.tol {
        let hp = apply(&p);
        let curvature = cdot(&p, &hp).re;
        if !(curvature > T::zero()) {
            breakdown = true;
            break;
        }
        let alpha = rs / curvature;
        for (xi, &pi) in x.data_mut().iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, &hi) in r.iter_mut().zip(&hp) {
            *ri -= hi * alpha;
        }
        let rs_new = cdot(&r, &r).re;
        let beta = rs_new / rs;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rs = rs_new;
        iterations += 1;
        history.push(rel(rs));
    }
    Ok(CgOutcome {
        x,
        rel_residual: rel(rs),
        iterations,
        breakdown,
        residual_history: history,
    })
}

fn ensure_finite<T: Real>(t: &CTensor<T>, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// `(A^H A + I)^{-1} (z + A^H b)`, starting CG from `x0 = z`.
pub fn dc_solve<T: Real>(
    coils: &CoilSet<T>,
    s: &Sampler2D<T>,
    b: &KSpaceData<T>,
    z: &CTensor<T>,
    cfg: &CgConfig,
) -> Result<CgOutcome<T>> {
    ensure_finite(z, "data-consistency input z")?;
    ensure_finite(&b.samples, "k-space samples")?;
    let rhs = z.add(&adjoint_mc(coils, s, &b.samples)?);
    solve_shifted(coils, s, &rhs, z.clone(), cfg)
}

/// Solves `(A^H A + I) x = rhs`.
pub fn solve_shifted<T: Real>(
    coils: &CoilSet<T>,
    s: &Sampler2D<T>,
    rhs: &CTensor<T>,
    x0: CTensor<T>,
    cfg: &CgConfig,
) -> Result<CgOutcome<T>> {
    let op = |v: &[C<T>]| {
        let mut out = normal_raw(coils, s, v);
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += vi;
        }
        out
    };
    conjugate_gradient(op, rhs, x0, cfg)
}

/// Cotangents of one data-consistency block.
#[derive(Debug, Clone)]
pub struct DcCotangents<T> {
    pub z: CTensor<T>,
    /// With respect to the k-space samples `b`.
    pub b: CTensor<T>,
    pub vertical: Vec<T>,
    pub horizontal: Vec<T>,
}

/// Reverse-mode rule for [`dc_solve`] at its solution `x`.
///
/// With `H = A^H A + I` and `lambda = H^{-1} g`, the implicit-function rule on
/// `H x = z + A^H b` gives `dz = lambda`, `db = A lambda` and, for each
/// location, `dk = d/dk [Re<b - A x, A lambda>] - d/dk [Re<A lambda, A x>]`
/// with only the operator differentiated, which reduces to two
/// location-gradient contractions.
pub fn dc_solve_vjp<T: Real>(
    coils: &CoilSet<T>,
    s: &Sampler2D<T>,
    b: &KSpaceData<T>,
    x: &CTensor<T>,
    upstream: &CTensor<T>,
    cfg: &CgConfig,
    axes: LocationAxes,
) -> Result<DcCotangents<T>> {
    ensure_finite(upstream, "data-consistency cotangent")?;
    let (mv, mh) = s.kspace_shape();
    let lambda = solve_shifted(coils, s, upstream, CTensor::zeros(upstream.dims())?, cfg)?.x;
    let a_lambda = forward_mc(coils, s, &lambda)?;
    let (vertical, horizontal) = if axes != LocationAxes::None {
        let residual = b.samples.sub(&forward_mc(coils, s, x)?);
        let (v1, h1) = location_grad_mc_axes(coils, s, &lambda, &residual, axes)?;
        let (v2, h2) = location_grad_mc_axes(coils, s, x, &a_lambda, axes)?;
        (
            v1.iter().zip(&v2).map(|(a, b)| *a - *b).collect(),
            h1.iter().zip(&h2).map(|(a, b)| *a - *b).collect(),
        )
    } else {
        (vec![T::zero(); mv], vec![T::zero(); mh])
    };
    Ok(DcCotangents {
        z: lambda,
        b: a_lambda,
        vertical,
        horizontal,
    })
}
