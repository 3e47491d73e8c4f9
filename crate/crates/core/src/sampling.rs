//! Trainable parametrization of the sampling pattern.
//!
//! Each trainable axis holds a block of fixed integer-bin locations around DC
//! (the fully sampled center) and free locations `sigmoid(raw)`, which keeps
//! every free location inside `(0, 1)` without projection. In 1-D mode only
//! the vertical (phase-encoding) axis is sampled and every line is read out on
//! the full horizontal grid; in 2-D mode both axes are sampled and the pattern
//! is their tensor product.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fourier::{Pattern, Sampler1D, Sampler2D};
use crate::io::{fmt_sig17, parse_key_values, write_atomic};
use crate::rng::Rng;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    OneD,
    TwoD,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisParams<T> {
    pub grid: usize,
    pub fixed: Vec<T>,
    pub free_raw: Vec<T>,
}

/// Where a realized location comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Fixed(usize),
    Free(usize),
}

/// Logistic function, clamped so saturated inputs stay strictly inside
/// `(0, 1)`.
pub fn sigmoid<T: Real>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    s.max(T::min_positive_value()).min(T::one() - T::epsilon())
}

pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

impl<T: Real> AxisParams<T> {
    pub fn free_locations(&self) -> Vec<T> {
        self.free_raw.iter().map(|&r| sigmoid(r)).collect()
    }

    pub fn len(&self) -> usize {
        self.fixed.len() + self.free_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fixed and free locations sorted ascending, with their origin.
    fn realize(&self) -> Result<(Sampler1D<T>, Vec<Origin>)> {
        let mut entries: Vec<(T, Origin)> = self
            .fixed
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, Origin::Fixed(i)))
            .chain(
                self.free_raw
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| (sigmoid(r), Origin::Free(i))),
            )
            .collect();
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let (locs, origins) = entries.into_iter().unzip();
        Ok((Sampler1D::new(locs, self.grid)?, origins))
    }

    /// Chain rule from realized-location gradients to raw-parameter gradients.
    fn raw_grad(&self, origins: &[Origin], loc_grad: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.free_raw.len()];
        for (o, &d) in origins.iter().zip(loc_grad) {
            if let Origin::Free(i) = *o {
                let s = sigmoid(self.free_raw[i]);
                g[i] += d * s * (T::one() - s);
            }
        }
        g
    }
}

/// Sampling parameters `Theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParams<T> {
    pub vertical: AxisParams<T>,
    /// `None` in 1-D mode: the horizontal readout is fully sampled.
    pub horizontal: Option<AxisParams<T>>,
    pub readout: usize,
}

/// A realized sampler plus the map from each row back to `Theta`.
#[derive(Debug, Clone)]
pub struct Realized<T> {
    pub sampler: Sampler2D<T>,
    pub vertical_origin: Vec<Origin>,
    pub horizontal_origin: Vec<Origin>,
}

/// Gradients with respect to the free raw parameters of each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrad<T> {
    pub vertical: Vec<T>,
    pub horizontal: Vec<T>,
}

impl<T: Real> ThetaGrad<T> {
    pub fn zeros_like(theta: &ThetaParams<T>) -> Self {
        Self {
            vertical: vec![T::zero(); theta.vertical.free_raw.len()],
            horizontal: vec![T::zero(); theta.horizontal.as_ref().map_or(0, |h| h.free_raw.len())],
        }
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.vertical.iter().chain(&self.horizontal).copied().collect()
    }

    pub fn accumulate(&mut self, other: &Self) {
        self.vertical.iter_mut().zip(&other.vertical).for_each(|(a, b)| *a += *b);
        self.horizontal.iter_mut().zip(&other.horizontal).for_each(|(a, b)| *a += *b);
    }

    pub fn scale(&mut self, a: T) {
        self.vertical.iter_mut().chain(self.horizontal.iter_mut()).for_each(|v| *v *= a);
    }
}

/// Integer bins `offset / grid` for a contiguous block of `count` bins around
/// DC, wrapped so negative offsets land near 1.
pub fn center_block<T: Real>(count: usize, grid: usize) -> Vec<T> {
    let half = (count / 2) as i64;
    (0..count as i64)
        .map(|i| {
            let off = (i - half).rem_euclid(grid as i64) as usize;
            T::of_usize(off) / T::of_usize(grid)
        })
        .collect()
}

/// `round(fraction * grid)`, halves rounded away from zero.
pub fn center_count(fraction: f64, grid: usize) -> usize {
    (fraction * grid as f64).round() as usize
}

/// Wrapped distance of a location from DC, in cycles (`<= 0.5`).
pub fn distance_from_dc<T: Real>(k: T) -> T {
    let w = crate::fourier::wrap_location(k);
    w.min(T::one() - w)
}

/// Variable-density draw shared by the initializer and pattern augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityConfig {
    pub center_fraction: f64,
    /// Std (in cycles) of the Gaussian density over wrapped frequency.
    pub width: f64,
    /// Move the center block into the trainable set.
    pub center_trainable: bool,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            center_fraction: 0.04,
            width: 0.15,
            center_trainable: false,
        }
    }
}

fn init_axis<T: Real>(rng: &mut Rng, count: usize, grid: usize, density: &DensityConfig) -> Result<AxisParams<T>> {
    if !(0.0..=0.2).contains(&density.center_fraction) {
        return Err(Error::InvalidArgument(format!(
            "center fraction {} outside [0, 0.2]",
            density.center_fraction
        )));
    }
    if count == 0 || count > grid {
        return Err(Error::InvalidArgument(format!(
            "{count} locations requested on a grid of {grid}"
        )));
    }
    let n_fixed = center_count(density.center_fraction, grid).min(count);
    let fixed: Vec<T> = center_block(n_fixed, grid);
    let mut taken = vec![false; grid];
    for &k in &fixed {
        taken[(k.as_f64() * grid as f64).round() as usize % grid] = true;
    }
    // DC cannot be expressed as sigmoid(raw); it is only ever a fixed bin.
    taken[0] = true;
    let available = taken.iter().filter(|t| !**t).count();
    let n_free = count - n_fixed;
    if n_free > available {
        return Err(Error::InvalidArgument(format!(
            "{n_free} free locations do not fit in {available} free bins"
        )));
    }
    let mut free = Vec::with_capacity(n_free);
    while free.len() < n_free {
        let bin = rng.below(grid);
        if taken[bin] {
            continue;
        }
        let d = distance_from_dc(bin as f64 / grid as f64);
        let accept = (-(d * d) / (2.0 * density.width * density.width)).exp();
        if rng.uniform() < accept {
            taken[bin] = true;
            free.push(T::of(bin as f64 / grid as f64));
        }
    }
    let mut axis = AxisParams {
        grid,
        fixed,
        free_raw: free.into_iter().map(logit).collect(),
    };
    if density.center_trainable {
        let eps = T::of(1e-6);
        let moved: Vec<T> = axis
            .fixed
            .drain(..)
            .map(|k| logit(k.max(eps).min(T::one() - eps)))
            .collect();
        axis.free_raw.extend(moved);
    }
    Ok(axis)
}

impl<T: Real> ThetaParams<T> {
    /// Variable-density random pattern with a fixed center block.
    ///
    /// `counts` is `(m_v, m_h)`; `m_h` is ignored in 1-D mode. `grid` is the
    /// image shape `(P, Q)`.
    pub fn init_variable_density(
        rng: &mut Rng,
        mode: SamplingMode,
        counts: (usize, usize),
        grid: (usize, usize),
        density: &DensityConfig,
    ) -> Result<Self> {
        let vertical = init_axis(rng, counts.0, grid.0, density)?;
        let horizontal = match mode {
            SamplingMode::OneD => None,
            SamplingMode::TwoD => Some(init_axis(rng, counts.1, grid.1, density)?),
        };
        Ok(Self {
            vertical,
            horizontal,
            readout: grid.1,
        })
    }

    pub fn mode(&self) -> SamplingMode {
        if self.horizontal.is_some() {
            SamplingMode::TwoD
        } else {
            SamplingMode::OneD
        }
    }

    pub fn num_trainable(&self) -> usize {
        self.vertical.free_raw.len() + self.horizontal.as_ref().map_or(0, |h| h.free_raw.len())
    }

    pub fn realize(&self) -> Result<Realized<T>> {
        let (v, vertical_origin) = self.vertical.realize()?;
        let (sampler, horizontal_origin) = match &self.horizontal {
            Some(h) => {
                let (hs, ho) = h.realize()?;
                (Sampler2D::new(v, hs), ho)
            }
            None => {
                let n = self.readout;
                (Sampler2D::lines(v, n)?, vec![Origin::Fixed(0); n])
            }
        };
        Ok(Realized {
            sampler,
            vertical_origin,
            horizontal_origin,
        })
    }

    /// Maps gradients over realized rows to gradients over the free raw
    /// parameters (`d/d raw = d/d location * sigmoid'(raw)`).
    pub fn raw_grad(&self, realized: &Realized<T>, vertical: &[T], horizontal: &[T]) -> Result<ThetaGrad<T>> {
        if vertical.len() != realized.vertical_origin.len()
            || horizontal.len() != realized.horizontal_origin.len()
        {
            return Err(Error::Shape("location gradient does not match realized pattern".into()));
        }
        Ok(ThetaGrad {
            vertical: self.vertical.raw_grad(&realized.vertical_origin, vertical),
            horizontal: match &self.horizontal {
                Some(h) => h.raw_grad(&realized.horizontal_origin, horizontal),
                None => Vec::new(),
            },
        })
    }

    pub fn raw_flat(&self) -> Vec<T> {
        let mut out = self.vertical.free_raw.clone();
        if let Some(h) = &self.horizontal {
            out.extend_from_slice(&h.free_raw);
        }
        out
    }

    pub fn set_raw_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_trainable() {
            return Err(Error::Shape(format!(
                "{} raw values for {} trainable locations",
                flat.len(),
                self.num_trainable()
            )));
        }
        let nv = self.vertical.free_raw.len();
        self.vertical.free_raw.copy_from_slice(&flat[..nv]);
        if let Some(h) = &mut self.horizontal {
            h.free_raw.copy_from_slice(&flat[nv..]);
        }
        Ok(())
    }

    /// All free (trainable) locations of every axis.
    pub fn free_locations(&self) -> Vec<T> {
        let mut out = self.vertical.free_locations();
        if let Some(h) = &self.horizontal {
            out.extend(h.free_locations());
        }
        out
    }

    /// Mean wrapped distance of the free locations from DC.
    pub fn mean_free_distance_from_dc(&self) -> T {
        let locs = self.free_locations();
        if locs.is_empty() {
            return T::zero();
        }
        locs.iter().map(|&k| distance_from_dc(k)).sum::<T>() / T::of_usize(locs.len())
    }

    /// Binary `rows x cols` mask (0 or 255) with every location rounded to its
    /// nearest grid bin.
    pub fn mask(&self) -> Result<(usize, usize, Vec<u8>)> {
        let realized = self.realize()?;
        let bins = |s: &Sampler1D<T>| {
            let n = s.grid_size();
            let mut on = vec![false; n];
            for &k in s.locations() {
                on[(k.as_f64() * n as f64).round() as usize % n] = true;
            }
            on
        };
        let rows = bins(&realized.sampler.vertical);
        let cols = bins(&realized.sampler.horizontal);
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &r in &rows {
            out.extend(cols.iter().map(|&c| if r && c { 255u8 } else { 0 }));
        }
        Ok((rows.len(), cols.len(), out))
    }

    /// Pattern file plus a raw-parameter sidecar for exact resumption.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let realized = self.realize()?;
        let pattern = match self.mode() {
            SamplingMode::OneD => Pattern::from_sampler1d(&realized.sampler.vertical),
            SamplingMode::TwoD => Pattern::from_sampler2d(&realized.sampler),
        };
        pattern.write(dir.join(format!("{stem}.txt")))?;
        let join = |v: &[T]| {
            v.iter()
                .map(|x| fmt_sig17(x.as_f64()))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut pairs = vec![
            ("readout", self.readout.to_string()),
            ("v_grid", self.vertical.grid.to_string()),
            ("v_fixed", join(&self.vertical.fixed)),
            ("v_raw", join(&self.vertical.free_raw)),
        ];
        if let Some(h) = &self.horizontal {
            pairs.push(("h_grid", h.grid.to_string()));
            pairs.push(("h_fixed", join(&h.fixed)));
            pairs.push(("h_raw", join(&h.free_raw)));
        }
        let text = crate::io::render_key_values(&pairs);
        write_atomic(&dir.join(format!("{stem}.raw")), text.as_bytes())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.raw"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let list = |v: &str| -> Result<Vec<T>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map(T::of)
                        .map_err(|_| Error::format(&path, format!("bad number `{s}`")))
                })
                .collect()
        };
        let uint = |v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::format(&path, format!("bad integer `{v}`")))
        };
        let mut readout = None;
        let mut v = AxisParams { grid: 0, fixed: Vec::new(), free_raw: Vec::new() };
        let mut h = AxisParams { grid: 0, fixed: Vec::new(), free_raw: Vec::new() };
        let mut has_h = false;
        for (k, val) in parse_key_values(&text, &path)? {
            match k.as_str() {
                "readout" => readout = Some(uint(&val)?),
                "v_grid" => v.grid = uint(&val)?,
                "v_fixed" => v.fixed = list(&val)?,
                "v_raw" => v.free_raw = list(&val)?,
                "h_grid" => {
                    h.grid = uint(&val)?;
                    has_h = true;
                }
                "h_fixed" => h.fixed = list(&val)?,
                "h_raw" => h.free_raw = list(&val)?,
                _ => return Err(Error::format(&path, format!("unknown key `{k}`"))),
            }
        }
        let theta = Self {
            vertical: v,
            horizontal: has_h.then_some(h),
            readout: readout.ok_or_else(|| Error::format(&path, "missing readout"))?,
        };
        theta.realize().map_err(|e| Error::format(&path, e.to_string()))?;
        Ok(theta)
    }
}
