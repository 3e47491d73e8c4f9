//! Loss surface over a pair of sampling locations.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fourier::{wrap_location, Sampler1D, Sampler2D};
use crate::model::{loss_simulated, Example, ModelState};
use crate::mri::CoilSet;
use crate::sampling::Origin;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeConfig {
    /// Indices into the trainable locations (vertical axis first).
    pub i: usize,
    pub j: usize,
    /// Points per axis; offset index `n / 2` is the unperturbed location.
    pub n: usize,
    /// Largest offset in cycles.
    pub half_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapePoint {
    pub a: usize,
    pub b: usize,
    pub di: f64,
    pub dj: f64,
    pub ki: f64,
    pub kj: f64,
    pub mse: f64,
}

/// Offset of grid index `a`.
pub fn offset(a: usize, n: usize, half_range: f64) -> f64 {
    let c = (n / 2) as f64;
    (a as f64 - c) * half_range / c.max(1.0)
}

/// Realized row of trainable location `idx`: `(horizontal, row)`.
fn locate<T: Real>(state: &ModelState<T>, idx: usize) -> Result<(bool, usize)> {
    let realized = state.theta.realize()?;
    let nv = state.theta.vertical.free_raw.len();
    let (horizontal, free, origins) = if idx < nv {
        (false, idx, &realized.vertical_origin)
    } else if state.theta.horizontal.is_some() && idx < state.theta.num_trainable() {
        (true, idx - nv, &realized.horizontal_origin)
    } else {
        return Err(Error::InvalidArgument(format!(
            "location {idx} is not trainable ({} trainable locations; the fixed center is excluded)",
            state.theta.num_trainable()
        )));
    };
    let row = origins
        .iter()
        .position(|o| *o == Origin::Free(free))
        .expect("every free location is realized");
    Ok((horizontal, row))
}

fn moved<T: Real>(s: &Sampler2D<T>, at: (bool, usize), k: T) -> Result<Sampler2D<T>> {
    let axis = |a: &Sampler1D<T>| a.with_location(at.1, wrap_location(k));
    Ok(if at.0 {
        Sampler2D::new(s.vertical.clone(), axis(&s.horizontal)?)
    } else {
        Sampler2D::new(axis(&s.vertical)?, s.horizontal.clone())
    })
}

/// Mean test loss at every `(k_i + d_a, k_j + d_b)` with all else frozen; the
/// measurements are simulated with the perturbed pattern. Rows are ordered
/// with `a` outer and `b` inner.
pub fn scan<T: Real>(
    state: &ModelState<T>,
    coils: &CoilSet<T>,
    examples: &[Example<T>],
    cfg: &LandscapeConfig,
) -> Result<Vec<LandscapePoint>> {
    if cfg.n == 0 || !(cfg.half_range >= 0.0) {
        return Err(Error::InvalidArgument("landscape needs n >= 1 and half_range >= 0".into()));
    }
    if cfg.i == cfg.j {
        return Err(Error::InvalidArgument("landscape needs two distinct locations".into()));
    }
    let pi = locate(state, cfg.i)?;
    let pj = locate(state, cfg.j)?;
    let base = state.theta.realize()?.sampler;
    let loc = |p: (bool, usize)| {
        if p.0 {
            base.horizontal.locations()[p.1]
        } else {
            base.vertical.locations()[p.1]
        }
    };
    let (ki, kj) = (loc(pi), loc(pj));
    let mut out = Vec::with_capacity(cfg.n * cfg.n);
    for a in 0..cfg.n {
        let di = offset(a, cfg.n, cfg.half_range);
        let si = moved(&base, pi, ki + T::of(di))?;
        for b in 0..cfg.n {
            let dj = offset(b, cfg.n, cfg.half_range);
            let s = moved(&si, pj, kj + T::of(dj))?;
            let mse = loss_simulated(state, &s, coils, examples)?;
            out.push(LandscapePoint {
                a,
                b,
                di,
                dj,
                ki: wrap_location(ki + T::of(di)).as_f64(),
                kj: wrap_location(kj + T::of(dj)).as_f64(),
                mse: mse.as_f64(),
            });
        }
    }
    Ok(out)
}

pub fn write_csv(path: &Path, points: &[LandscapePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["a", "b", "offset_i", "offset_j", "k_i", "k_j", "mse"])
        .map_err(to_err)?;
    for p in points {
        w.write_record([
            p.a.to_string(),
            p.b.to_string(),
            p.di.to_string(),
            p.dj.to_string(),
            p.ki.to_string(),
            p.kj.to_string(),
            p.mse.to_string(),
        ])
        .map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    crate::io::write_atomic(path, &bytes)
}
